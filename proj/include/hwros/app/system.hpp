#pragma once

#include "hwros/app/config.hpp"
#include "hwros/app/msgtext.hpp"
#include "hwros/app/workloads.hpp"
#include "hwros/hw/runtime.hpp"
#include "hwros/net/transport.hpp"

namespace hwros::app {

namespace detail {

inline net::PeerConfig peer_config(const ProjectConfig& cfg) {
  net::PeerConfig pc;
  const auto colon = cfg.bind.rfind(':');
  if (colon == std::string::npos) throw ConfigError("bind must be host:port, got " + cfg.bind);
  pc.bind_host = cfg.bind.substr(0, colon);
  pc.bind_port = static_cast<u16>(parse_unsigned(cfg.bind.substr(colon + 1), "bind port", 0));
  pc.peers = cfg.peers;
  return pc;
}

}  // namespace detail

/// A running (or runnable) system built from a parsed configuration: the
/// type registry, arena, node graph, endpoints, optional transport, and the
/// runtime hosting one execution context per node with a behavior.
class System {
 public:
  struct NodeRec {
    std::shared_ptr<mw::Node> node;
    std::vector<hw::EndpointRef> endpoints;        // in declaration order
    std::map<std::string, u32> res_index;          // decl name -> endpoint index
    MappingChoice mapping = MappingChoice::Software;
    std::optional<u32> slot;
    std::string behavior;
    std::optional<u32> thread_id;                  // set once started
  };

  explicit System(ProjectConfig cfg,
                  const WorkloadRegistry& workloads = WorkloadRegistry::builtin())
      : cfg_(std::move(cfg)),
        workloads_(workloads),
        arena_(u64(cfg_.arena_mib) << 20),
        graph_(arena_, reg_, cfg_.max_message_mib << 20),
        runtime_(graph_, cfg_.slot_count) {
    register_builtin_types(reg_);
    if (!cfg_.message_defs.empty()) parse_message_defs(cfg_.message_defs, reg_);
    for (const auto& g : cfg_.groups) instantiate_group(g);
    apply_node_settings();
    if (!cfg_.bind.empty() || !cfg_.peers.empty())
      transport_.emplace(detail::peer_config(cfg_), graph_);
  }

  ~System() { stop(); }

  /// Starts the transport (if configured) and every node that has a behavior.
  void start() {
    if (transport_) transport_->start();
    for (auto& [name, rec] : nodes_) {
      if (rec.behavior.empty()) continue;
      NodeContext ctx{arena_, reg_, graph_, name, rec.endpoints};
      hw::Behavior behavior = workloads_.find(rec.behavior)(ctx);
      start_node(rec, std::move(behavior));
    }
  }

  /// Starts one node with an externally supplied behavior (test harnesses).
  u32 start_node(const std::string& node_name, hw::Behavior behavior) {
    return start_node(node(node_name), std::move(behavior));
  }

  void stop() {
    runtime_.stop_all();
    if (transport_) transport_->stop();
  }

  mem::Arena& arena() { return arena_; }
  TypeRegistry& registry() { return reg_; }
  mw::Graph& graph() { return graph_; }
  hw::Runtime& runtime() { return runtime_; }
  net::Transport* transport() { return transport_ ? &*transport_ : nullptr; }
  const ProjectConfig& config() const { return cfg_; }

  NodeRec& node(const std::string& display_name) {
    auto it = nodes_.find(display_name);
    if (it == nodes_.end()) throw ConfigError("unknown node '" + display_name + "'");
    return it->second;
  }

  const std::map<std::string, NodeRec>& nodes() const { return nodes_; }

  /// Endpoint handle by group-local declaration name ("Group.decl").
  template <typename T>
  std::shared_ptr<T> endpoint(const std::string& node_name, const std::string& decl) {
    NodeRec& rec = node(node_name);
    auto it = rec.res_index.find(decl);
    if (it == rec.res_index.end())
      throw ConfigError("node '" + node_name + "' has no endpoint '" + decl + "'");
    return std::get<std::shared_ptr<T>>(rec.endpoints[it->second]);
  }

 private:
  struct TypeSet {
    // rosmsg fills a; rossrvmsg fills a=request, b=response;
    // rosactmsg fills a=goal, b=feedback, c=result.
    DeclKind kind = DeclKind::RosMsg;
    msg::TypeHandle a, b, c;
  };

  void instantiate_group(const ResourceGroup& g) {
    std::map<std::string, std::string> node_display;  // decl name -> display name
    std::map<std::string, TypeSet> types;
    for (const auto& d : g.decls) {
      switch (d.kind) {
        case DeclKind::RosNode: {
          const std::string display = unquote(d.args[0]);
          auto [it, inserted] = nodes_.emplace(display, NodeRec{});
          if (!inserted) throw ConfigError("duplicate node '" + display + "'");
          it->second.node = graph_.create_node(display);
          node_display[d.name] = display;
          break;
        }
        case DeclKind::RosMsg:
          types[d.name] = TypeSet{d.kind, lookup(d, msg::TypeKind::Msg), {}, {}};
          break;
        case DeclKind::RosSrvMsg:
          types[d.name] = TypeSet{d.kind, lookup(d, msg::TypeKind::SrvRequest),
                                  lookup(d, msg::TypeKind::SrvResponse), {}};
          break;
        case DeclKind::RosActMsg:
          types[d.name] = TypeSet{d.kind, lookup(d, msg::TypeKind::ActionGoal),
                                  lookup(d, msg::TypeKind::ActionFeedback),
                                  lookup(d, msg::TypeKind::ActionResult)};
          break;
        default: {
          NodeRec& rec = nodes_.at(node_display.at(d.args[0]));
          const TypeSet& ts = type_set(types, d, g.name);
          const std::string target = unquote(d.args[2]);
          hw::EndpointRef ep = make_endpoint(rec, ts, d, target);
          rec.res_index[d.name] = static_cast<u32>(rec.endpoints.size());
          rec.endpoints.push_back(std::move(ep));
          break;
        }
      }
    }
  }

  msg::TypeHandle lookup(const ResourceDecl& d, msg::TypeKind kind) const {
    const std::string group = unquote(d.args[0]);
    const std::string name = unquote(d.args[2]);
    auto h = reg_.find(group, kind, name);
    if (!h)
      throw ConfigError("message type " + group + "/" + to_string(kind) + "/" + name +
                        " is not defined");
    return *h;
  }

  static const TypeSet& type_set(const std::map<std::string, TypeSet>& types,
                                 const ResourceDecl& d, const std::string& group) {
    const TypeSet& ts = types.at(d.args[1]);
    const bool want_srv = d.kind == DeclKind::RosSrvs || d.kind == DeclKind::RosSrvc;
    const bool want_act = d.kind == DeclKind::RosActs || d.kind == DeclKind::RosActc;
    if ((want_srv && ts.kind != DeclKind::RosSrvMsg) ||
        (want_act && ts.kind != DeclKind::RosActMsg) ||
        (!want_srv && !want_act && ts.kind != DeclKind::RosMsg))
      throw ConfigError("'" + d.name + "' in group " + group +
                        " references the wrong message declaration kind");
    return ts;
  }

  hw::EndpointRef make_endpoint(NodeRec& rec, const TypeSet& ts, const ResourceDecl& d,
                                const std::string& target) {
    switch (d.kind) {
      case DeclKind::RosPub:
        return graph_.create_publisher(rec.node, target, ts.a);
      case DeclKind::RosSub:
        return graph_.create_subscriber(rec.node, target, ts.a, 8, polling(d));
      case DeclKind::RosSrvs:
        return graph_.create_service_server(rec.node, target, ts.a, ts.b, polling(d));
      case DeclKind::RosSrvc:
        return graph_.create_service_client(rec.node, target, ts.a, ts.b, polling(d));
      case DeclKind::RosActs:
        return graph_.create_action_server(rec.node, target, ts.a, ts.b, ts.c, polling(d));
      case DeclKind::RosActc:
        return graph_.create_action_client(rec.node, target, ts.a, ts.b, ts.c, polling(d));
      default:
        throw ConfigError("not an endpoint declaration: " + d.name);
    }
  }

  static u64 polling(const ResourceDecl& d) {
    return detail::parse_positive(d.args[3], "polling period of '" + d.name + "'");
  }

  void apply_node_settings() {
    for (const auto& [name, ns] : cfg_.nodes) {
      NodeRec& rec = node(name);
      rec.mapping = ns.mapping;
      rec.slot = ns.slot;
      if (ns.slot) used_slots_.insert(*ns.slot);
      rec.behavior = ns.behavior;
      rec.node->set_mapping(ns.mapping == MappingChoice::Hardware ? mw::Mapping::Hardware
                                                                  : mw::Mapping::Software);
    }
  }

  u32 start_node(NodeRec& rec, hw::Behavior behavior) {
    u32 id;
    if (rec.mapping == MappingChoice::Hardware) {
      const u32 slot = rec.slot ? *rec.slot : alloc_slot();
      id = runtime_.start_hardware_thread(slot, rec.node->name(), rec.endpoints,
                                          std::move(behavior));
    } else {
      id = runtime_.run_software_node(rec.node->name(), rec.endpoints, std::move(behavior));
    }
    rec.thread_id = id;
    return id;
  }

  u32 alloc_slot() {
    for (u32 s = 0; s < cfg_.slot_count; ++s) {
      if (used_slots_.insert(s).second) return s;
    }
    throw ConfigError("no free slot for a hardware-mapped node");
  }

  ProjectConfig cfg_;
  const WorkloadRegistry& workloads_;
  TypeRegistry reg_;
  mem::Arena arena_;
  mw::Graph graph_;
  hw::Runtime runtime_;
  std::optional<net::Transport> transport_;
  std::map<std::string, NodeRec> nodes_;
  std::set<u32> used_slots_;
};

}  // namespace hwros::app
