#pragma once

#include <cctype>
#include <sstream>

#include "hwros/msg/types.hpp"

namespace hwros::app {

using msg::FieldType;
using msg::MessageTypeDef;
using msg::TypeHandle;
using msg::TypeKind;
using msg::TypeRegistry;

namespace detail {

inline std::optional<TypeKind> kind_from_token(const std::string& tok) {
  if (tok == "msg") return TypeKind::Msg;
  if (tok == "srv-request") return TypeKind::SrvRequest;
  if (tok == "srv-response") return TypeKind::SrvResponse;
  if (tok == "action-goal") return TypeKind::ActionGoal;
  if (tok == "action-feedback") return TypeKind::ActionFeedback;
  if (tok == "action-result") return TypeKind::ActionResult;
  return std::nullopt;
}

struct MsgTextScanner {
  const std::string& s;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < s.size()) {
      if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      } else if (s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  bool eof() {
    skip_ws();
    return pos >= s.size();
  }

  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }

  void expect(char c) {
    skip_ws();
    if (pos >= s.size() || s[pos] != c)
      throw ConfigError(std::string("message definitions: expected '") + c + "'");
    ++pos;
  }

  std::string ident() {
    skip_ws();
    std::size_t start = pos;
    while (pos < s.size() &&
           (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_' || s[pos] == '-' ||
            s[pos] == '/'))
      ++pos;
    if (pos == start) throw ConfigError("message definitions: identifier expected");
    return s.substr(start, pos - start);
  }
};

inline FieldType parse_field_type(MsgTextScanner& sc, TypeRegistry& reg,
                                  const std::string& group) {
  const std::string tok = sc.ident();
  if (tok == "u8") return FieldType::scalar(FieldType::Kind::U8);
  if (tok == "u16") return FieldType::scalar(FieldType::Kind::U16);
  if (tok == "u32") return FieldType::scalar(FieldType::Kind::U32);
  if (tok == "i32") return FieldType::scalar(FieldType::Kind::I32);
  if (tok == "f32") return FieldType::scalar(FieldType::Kind::F32);
  if (tok == "string") return FieldType::scalar(FieldType::Kind::String);
  if (tok == "sequence") {
    sc.expect('<');
    FieldType elem = parse_field_type(sc, reg, group);
    sc.expect('>');
    return FieldType::sequence(std::move(elem));
  }
  // Nested type reference: "Name" (same group, msg kind) or "group/Name".
  std::string g = group, name = tok;
  if (auto slash = tok.find('/'); slash != std::string::npos) {
    g = tok.substr(0, slash);
    name = tok.substr(slash + 1);
  }
  auto h = reg.find(g, TypeKind::Msg, name);
  if (!h) throw ConfigError("message definitions: unknown nested type " + tok);
  return FieldType::nested_type(*h);
}

}  // namespace detail

/// Parses message definition text, one definition per block:
///   group kind TypeName { fieldname: fieldtype; ... }
/// and registers each definition. Nested references must be defined (or
/// registered) before use.
inline std::vector<TypeHandle> parse_message_defs(const std::string& text, TypeRegistry& reg) {
  detail::MsgTextScanner sc{text};
  std::vector<TypeHandle> handles;
  while (!sc.eof()) {
    MessageTypeDef def;
    def.group = sc.ident();
    const std::string kind_tok = sc.ident();
    auto kind = detail::kind_from_token(kind_tok);
    if (!kind) throw ConfigError("message definitions: unknown kind '" + kind_tok + "'");
    def.kind = *kind;
    def.name = sc.ident();
    sc.expect('{');
    while (sc.peek() != '}') {
      const std::string fname = sc.ident();
      sc.expect(':');
      FieldType ft = detail::parse_field_type(sc, reg, def.group);
      sc.expect(';');
      def.fields.emplace_back(fname, std::move(ft));
    }
    sc.expect('}');
    handles.push_back(reg.register_type(std::move(def)));
  }
  return handles;
}

/// Message types every system knows about: the image pipeline types, the
/// ping-pong blob and the two small workload carriers.
inline void register_builtin_types(TypeRegistry& reg) {
  if (reg.find("sensor_msgs", TypeKind::Msg, "Image")) return;  // already done
  parse_message_defs(
      "sensor_msgs msg Image { height: u32; width: u32; step: u32; data: sequence<u8>; }\n"
      "application_msgs srv-request SobelSrv { img: sensor_msgs/Image; }\n"
      "application_msgs srv-response SobelSrv { img: sensor_msgs/Image; }\n"
      "bench_msgs msg Blob { seq: u32; data: sequence<u8>; }\n"
      "sort_msgs msg UintArray { data: sequence<u32>; }\n"
      "ik_msgs msg Packed { value: u32; }\n",
      reg);
}

}  // namespace hwros::app
