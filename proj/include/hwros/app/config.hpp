#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "hwros/core.hpp"

namespace hwros::app {

enum class DeclKind {
  RosNode,
  RosMsg,
  RosSrvMsg,
  RosActMsg,
  RosSub,
  RosPub,
  RosSrvs,
  RosSrvc,
  RosActs,
  RosActc,
};

inline const char* to_string(DeclKind k) {
  switch (k) {
    case DeclKind::RosNode: return "rosnode";
    case DeclKind::RosMsg: return "rosmsg";
    case DeclKind::RosSrvMsg: return "rossrvmsg";
    case DeclKind::RosActMsg: return "rosactmsg";
    case DeclKind::RosSub: return "rossub";
    case DeclKind::RosPub: return "rospub";
    case DeclKind::RosSrvs: return "rossrvs";
    case DeclKind::RosSrvc: return "rossrvc";
    case DeclKind::RosActs: return "rosacts";
    case DeclKind::RosActc: return "rosactc";
  }
  return "?";
}

inline std::optional<DeclKind> decl_kind_from(const std::string& tok) {
  static const std::pair<const char*, DeclKind> table[] = {
      {"rosnode", DeclKind::RosNode}, {"rosmsg", DeclKind::RosMsg},
      {"rossrvmsg", DeclKind::RosSrvMsg}, {"rosactmsg", DeclKind::RosActMsg},
      {"rossub", DeclKind::RosSub}, {"rospub", DeclKind::RosPub},
      {"rossrvs", DeclKind::RosSrvs}, {"rossrvc", DeclKind::RosSrvc},
      {"rosacts", DeclKind::RosActs}, {"rosactc", DeclKind::RosActc}};
  for (const auto& [name, kind] : table)
    if (tok == name) return kind;
  return std::nullopt;
}

/// One `name = kind, args...` line. Args are kept verbatim (including
/// quotes) so a rendered config re-parses to an equal one.
struct ResourceDecl {
  std::string name;
  DeclKind kind = DeclKind::RosNode;
  std::vector<std::string> args;
  bool operator==(const ResourceDecl&) const = default;
};

struct ResourceGroup {
  std::string name;
  std::vector<ResourceDecl> decls;
  bool operator==(const ResourceGroup&) const = default;

  const ResourceDecl* find(const std::string& decl_name) const {
    for (const auto& d : decls)
      if (d.name == decl_name) return &d;
    return nullptr;
  }
};

enum class MappingChoice { Software, Hardware };

struct NodeSettings {
  MappingChoice mapping = MappingChoice::Software;
  std::optional<u32> slot;
  std::string behavior;
  bool operator==(const NodeSettings&) const = default;
};

struct ProjectConfig {
  std::vector<ResourceGroup> groups;
  u32 slot_count = 2;
  u32 arena_mib = 64;
  u32 max_message_mib = 8;
  std::string bind;  // "host:port", empty = no transport listener
  std::vector<std::string> peers;
  std::map<std::string, NodeSettings> nodes;  // keyed by the node's quoted display name
  std::string message_defs;                   // raw [messages] section text
  std::vector<std::string> bench_sizes = {"4B", "8KiB", "1MiB", "6MiB"};
  u32 bench_iterations = 50;
  bool operator==(const ProjectConfig&) const = default;
};

inline std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Splits on commas outside quotes.
inline std::vector<std::string> split_args(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : s) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

inline u32 parse_unsigned(const std::string& s, const std::string& what, long long min) {
  try {
    const long long v = std::stoll(s);
    if (v < min || v > 0xffffffffll)
      throw ConfigError(what + " must be an integer >= " + std::to_string(min));
    return static_cast<u32>(v);
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    throw ConfigError(what + " must be an integer, got '" + s + "'");
  }
}

inline u32 parse_positive(const std::string& s, const std::string& what) {
  return parse_unsigned(s, what, 1);
}

inline std::size_t expected_arity(DeclKind k) {
  switch (k) {
    case DeclKind::RosNode: return 1;   // "DisplayName"
    case DeclKind::RosMsg:
    case DeclKind::RosSrvMsg:
    case DeclKind::RosActMsg: return 3; // group, comm-type, TypeName
    case DeclKind::RosPub: return 3;    // node, msg, "topic"
    case DeclKind::RosSub:
    case DeclKind::RosSrvs:
    case DeclKind::RosSrvc:
    case DeclKind::RosActs:
    case DeclKind::RosActc: return 4;   // node, msg, "name", polling
  }
  return 0;
}

inline void validate_group(const ResourceGroup& g) {
  std::map<std::string, const ResourceDecl*> names;
  for (const auto& d : g.decls) {
    if (names.count(d.name))
      throw ConfigError("duplicate name '" + d.name + "' in group " + g.name);
    names[d.name] = &d;
    if (d.args.size() != expected_arity(d.kind))
      throw ConfigError("arity mismatch for '" + d.name + "' (" + to_string(d.kind) +
                        " takes " + std::to_string(expected_arity(d.kind)) + " args)");
  }
  auto check_ref = [&](const std::string& ref, DeclKind want_a,
                       std::optional<DeclKind> want_b = {}) {
    auto it = names.find(ref);
    if (it == names.end())
      throw ConfigError("unresolved reference '" + ref + "' in group " + g.name);
    if (it->second->kind != want_a && (!want_b || it->second->kind != *want_b))
      throw ConfigError("reference '" + ref + "' in group " + g.name + " has wrong kind");
  };
  for (const auto& d : g.decls) {
    switch (d.kind) {
      case DeclKind::RosSub:
      case DeclKind::RosPub:
        check_ref(d.args[0], DeclKind::RosNode);
        check_ref(d.args[1], DeclKind::RosMsg);
        break;
      case DeclKind::RosSrvs:
      case DeclKind::RosSrvc:
        check_ref(d.args[0], DeclKind::RosNode);
        check_ref(d.args[1], DeclKind::RosSrvMsg);
        break;
      case DeclKind::RosActs:
      case DeclKind::RosActc:
        check_ref(d.args[0], DeclKind::RosNode);
        check_ref(d.args[1], DeclKind::RosActMsg);
        break;
      default:
        break;
    }
    if (d.kind == DeclKind::RosSub || d.kind == DeclKind::RosSrvs ||
        d.kind == DeclKind::RosSrvc || d.kind == DeclKind::RosActs ||
        d.kind == DeclKind::RosActc)
      parse_positive(d.args[3], "polling period of '" + d.name + "'");
  }
}

}  // namespace detail

/// Parses the project configuration: INI-like sections. `[ResourceGroup@X]`
/// opens a resource group of `name = kind, args...` lines; `[system]` holds
/// slots/arena/transport/mapping settings; `[messages]` holds message
/// definition text verbatim.
inline ProjectConfig parse_config(const std::string& text) {
  ProjectConfig cfg;
  cfg.bench_sizes.clear();
  ResourceGroup* group = nullptr;
  enum class Section { None, Group, System, Messages } section = Section::None;

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  bool sizes_set = false;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::trim(raw);
    if (section == Section::Messages && !(line.size() > 1 && line.front() == '[')) {
      cfg.message_defs += raw + "\n";
      continue;
    }
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section");
      const std::string name = line.substr(1, line.size() - 2);
      if (name.rfind("ResourceGroup@", 0) == 0) {
        cfg.groups.push_back(ResourceGroup{name.substr(std::string("ResourceGroup@").size()), {}});
        group = &cfg.groups.back();
        section = Section::Group;
      } else if (name == "system") {
        section = Section::System;
      } else if (name == "messages") {
        section = Section::Messages;
      } else {
        throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + name + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'name = ...'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section == Section::Group) {
      auto args = detail::split_args(value);
      if (args.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty declaration");
      auto kind = decl_kind_from(args[0]);
      if (!kind)
        throw ConfigError("line " + std::to_string(lineno) + ": unknown kind '" + args[0] + "'");
      group->decls.push_back(ResourceDecl{key, *kind, {args.begin() + 1, args.end()}});
    } else if (section == Section::System) {
      if (key == "slots") {
        cfg.slot_count = detail::parse_positive(value, "slots");
      } else if (key == "arena_mib") {
        cfg.arena_mib = detail::parse_positive(value, "arena_mib");
      } else if (key == "max_message_mib") {
        cfg.max_message_mib = detail::parse_positive(value, "max_message_mib");
      } else if (key == "bind") {
        cfg.bind = value;
      } else if (key == "peer") {
        cfg.peers.push_back(value);
      } else if (key == "map") {
        auto args = detail::split_args(value);
        if (args.size() < 2) throw ConfigError("map takes: node, sw|hw[, slot]");
        auto& ns = cfg.nodes[unquote(args[0])];
        if (args[1] == "sw") {
          ns.mapping = MappingChoice::Software;
        } else if (args[1] == "hw") {
          ns.mapping = MappingChoice::Hardware;
          if (args.size() >= 3) ns.slot = detail::parse_unsigned(args[2], "slot", 0);
        } else {
          throw ConfigError("map: mapping must be sw or hw");
        }
      } else if (key == "behavior") {
        auto args = detail::split_args(value);
        if (args.size() != 2) throw ConfigError("behavior takes: node, workload-name");
        cfg.nodes[unquote(args[0])].behavior = args[1];
      } else if (key == "bench_sizes") {
        cfg.bench_sizes = detail::split_args(value);
        sizes_set = true;
      } else if (key == "bench_iters") {
        cfg.bench_iterations = detail::parse_positive(value, "bench_iters");
      } else {
        throw ConfigError("line " + std::to_string(lineno) + ": unknown system key '" + key + "'");
      }
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": declaration outside a section");
    }
  }
  if (!sizes_set) cfg.bench_sizes = {"4B", "8KiB", "1MiB", "6MiB"};

  for (const auto& g : cfg.groups) detail::validate_group(g);

  // Hardware-mapped nodes need distinct, in-range slots.
  std::map<u32, std::string> slot_users;
  for (const auto& [node, ns] : cfg.nodes) {
    if (ns.mapping != MappingChoice::Hardware) continue;
    if (ns.slot && *ns.slot >= cfg.slot_count)
      throw ConfigError("node '" + node + "' mapped to slot " + std::to_string(*ns.slot) +
                        " but only " + std::to_string(cfg.slot_count) + " slots exist");
    if (ns.slot) {
      auto [it, inserted] = slot_users.emplace(*ns.slot, node);
      if (!inserted)
        throw ConfigError("slot conflict: '" + node + "' and '" + it->second + "' both use slot " +
                          std::to_string(*ns.slot));
    }
  }
  return cfg;
}

inline std::string render_config(const ProjectConfig& cfg) {
  std::ostringstream os;
  for (const auto& g : cfg.groups) {
    os << "[ResourceGroup@" << g.name << "]\n";
    for (const auto& d : g.decls) {
      os << d.name << " = " << to_string(d.kind);
      for (const auto& a : d.args) os << ", " << a;
      os << "\n";
    }
    os << "\n";
  }
  os << "[system]\n";
  os << "slots = " << cfg.slot_count << "\n";
  os << "arena_mib = " << cfg.arena_mib << "\n";
  os << "max_message_mib = " << cfg.max_message_mib << "\n";
  if (!cfg.bind.empty()) os << "bind = " << cfg.bind << "\n";
  for (const auto& p : cfg.peers) os << "peer = " << p << "\n";
  for (const auto& [node, ns] : cfg.nodes) {
    os << "map = " << node << ", " << (ns.mapping == MappingChoice::Hardware ? "hw" : "sw");
    if (ns.slot) os << ", " << *ns.slot;
    os << "\n";
    if (!ns.behavior.empty()) os << "behavior = " << node << ", " << ns.behavior << "\n";
  }
  if (!cfg.bench_sizes.empty()) {
    os << "bench_sizes = ";
    for (std::size_t i = 0; i < cfg.bench_sizes.size(); ++i)
      os << (i ? ", " : "") << cfg.bench_sizes[i];
    os << "\n";
  }
  os << "bench_iters = " << cfg.bench_iterations << "\n";
  if (!cfg.message_defs.empty()) {
    os << "\n[messages]\n" << cfg.message_defs;
  }
  return os.str();
}

}  // namespace hwros::app
