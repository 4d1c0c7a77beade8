#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hwros/core.hpp"

namespace hwros::msg {

/// Handle to a registered message type. Index into the registry.
struct TypeHandle {
  u32 index = 0;
  bool operator==(const TypeHandle&) const = default;
};

enum class TypeKind { Msg, SrvRequest, SrvResponse, ActionGoal, ActionFeedback, ActionResult };

inline const char* to_string(TypeKind k) {
  switch (k) {
    case TypeKind::Msg: return "msg";
    case TypeKind::SrvRequest: return "srv-request";
    case TypeKind::SrvResponse: return "srv-response";
    case TypeKind::ActionGoal: return "action-goal";
    case TypeKind::ActionFeedback: return "action-feedback";
    case TypeKind::ActionResult: return "action-result";
  }
  return "?";
}

struct FieldType {
  enum class Kind { U8, U16, U32, I32, F32, String, Sequence, Nested };
  Kind kind = Kind::U32;
  std::shared_ptr<FieldType> elem;  // Sequence only
  TypeHandle nested;                // Nested only

  static FieldType scalar(Kind k) { return FieldType{k, nullptr, {}}; }
  static FieldType sequence(FieldType e) {
    return FieldType{Kind::Sequence, std::make_shared<FieldType>(std::move(e)), {}};
  }
  static FieldType nested_type(TypeHandle h) { return FieldType{Kind::Nested, nullptr, h}; }

  bool is_scalar() const {
    return kind != Kind::Sequence && kind != Kind::Nested && kind != Kind::String;
  }
};

struct MessageTypeDef {
  std::string group;
  TypeKind kind = TypeKind::Msg;
  std::string name;
  std::vector<std::pair<std::string, FieldType>> fields;
};

/// Deterministic in-arena layout of a message type. Scalars are aligned to
/// their size; a sequence (and a string, which is a sequence of u8) occupies
/// 12 inline bytes: data address, size, capacity, each a u32, payload
/// out-of-line.
struct MessageLayout {
  u32 size = 0;
  u32 align = 1;
};

constexpr u32 kSeqInlineSize = 12;
constexpr u32 kSeqDataOffset = 0;
constexpr u32 kSeqSizeOffset = 4;
constexpr u32 kSeqCapOffset = 8;
constexpr u32 kMaxNestingDepth = 8;

/// What a resolved field path points at.
struct ResolvedField {
  u32 offset = 0;
  FieldType type;        // String fields resolve as Sequence-of-u8
  bool seq_word = false; // path named one of the sequence header words
};

class TypeRegistry {
 public:
  TypeHandle register_type(MessageTypeDef def) {
    std::lock_guard lock(mu_);
    const std::string key = full_name(def);
    if (by_name_.count(key)) throw TypeError("duplicate type registration: " + key);
    check_fields(def, 1);
    Entry e;
    e.def = std::move(def);
    e.layout = compute_layout_locked(e.def);
    e.canonical = render_canonical_locked(e.def);
    e.fingerprint = fnv1a64(e.canonical);
    entries_.push_back(std::move(e));
    TypeHandle h{static_cast<u32>(entries_.size() - 1)};
    by_name_[key] = h;
    return h;
  }

  std::optional<TypeHandle> find(const std::string& group, TypeKind kind,
                                 const std::string& name) const {
    std::lock_guard lock(mu_);
    auto it = by_name_.find(group + "/" + to_string(kind) + "/" + name);
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  const MessageTypeDef& def(TypeHandle h) const { return entry(h).def; }
  const MessageLayout& layout(TypeHandle h) const { return entry(h).layout; }
  u64 fingerprint(TypeHandle h) const { return entry(h).fingerprint; }
  const std::string& canonical_text(TypeHandle h) const { return entry(h).canonical; }

  static std::string full_name(const MessageTypeDef& d) {
    return d.group + "/" + to_string(d.kind) + "/" + d.name;
  }

  u32 inline_size(const FieldType& f) const {
    std::lock_guard lock(mu_);
    return inline_size_locked(f);
  }

  /// Inline byte offset of a dotted field path relative to the message root.
  /// A path may end at a field of any kind; the pseudo-fields "data", "size"
  /// and "capacity" address the three words of a sequence header.
  u32 offset_of(TypeHandle h, const std::string& path) const {
    return resolve(h, path).offset;
  }

  struct FieldSlot {
    std::string name;
    u32 offset = 0;
    FieldType type;
  };

  /// Top-level fields with their inline offsets, in declaration order.
  /// Strings are reported as sequence<u8>.
  std::vector<FieldSlot> fields_of(TypeHandle h) const {
    std::lock_guard lock(mu_);
    const MessageTypeDef& d = entries_[h.index].def;
    std::vector<FieldSlot> out;
    u32 off = 0;
    for (const auto& [name, ft] : d.fields) {
      off = align_up(off, inline_align_locked(ft));
      FieldType t = ft;
      if (t.kind == FieldType::Kind::String)
        t = FieldType::sequence(FieldType::scalar(FieldType::Kind::U8));
      out.push_back(FieldSlot{name, off, t});
      off += inline_size_locked(ft);
    }
    return out;
  }

  ResolvedField resolve(TypeHandle h, const std::string& path) const {
    std::lock_guard lock(mu_);
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path) {
      if (c == '.') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    parts.push_back(cur);
    return resolve_locked(h, parts, 0, 0, path);
  }

 private:
  struct Entry {
    MessageTypeDef def;
    MessageLayout layout;
    std::string canonical;
    u64 fingerprint = 0;
  };

  const Entry& entry(TypeHandle h) const {
    std::lock_guard lock(mu_);
    if (h.index >= entries_.size()) throw TypeError("invalid type handle");
    return entries_[h.index];
  }

  void check_fields(const MessageTypeDef& def, u32 depth) const {
    if (depth > kMaxNestingDepth) throw TypeError("nesting depth limit exceeded");
    std::map<std::string, int> seen;
    for (const auto& [name, ft] : def.fields) {
      if (name.empty()) throw TypeError("empty field name in " + def.name);
      if (seen.count(name)) throw TypeError("duplicate field name: " + name);
      seen[name] = 1;
      check_field_type(ft, depth);
    }
  }

  void check_field_type(const FieldType& ft, u32 depth) const {
    if (depth > kMaxNestingDepth) throw TypeError("nesting depth limit exceeded");
    switch (ft.kind) {
      case FieldType::Kind::Sequence:
        check_field_type(*ft.elem, depth + 1);
        break;
      case FieldType::Kind::Nested: {
        if (ft.nested.index >= entries_.size()) throw TypeError("nested type not registered");
        check_fields(entries_[ft.nested.index].def, depth + 1);
        break;
      }
      default:
        break;
    }
  }

  u32 scalar_size(FieldType::Kind k) const {
    switch (k) {
      case FieldType::Kind::U8: return 1;
      case FieldType::Kind::U16: return 2;
      case FieldType::Kind::U32:
      case FieldType::Kind::I32:
      case FieldType::Kind::F32: return 4;
      default: return 0;
    }
  }

  u32 inline_size_locked(const FieldType& f) const {
    switch (f.kind) {
      case FieldType::Kind::String:
      case FieldType::Kind::Sequence: return kSeqInlineSize;
      case FieldType::Kind::Nested: return entries_[f.nested.index].layout.size;
      default: return scalar_size(f.kind);
    }
  }

  u32 inline_align_locked(const FieldType& f) const {
    switch (f.kind) {
      case FieldType::Kind::String:
      case FieldType::Kind::Sequence: return 4;
      case FieldType::Kind::Nested: return entries_[f.nested.index].layout.align;
      default: return scalar_size(f.kind);
    }
  }

  MessageLayout compute_layout_locked(const MessageTypeDef& def) const {
    MessageLayout l;
    u32 off = 0;
    for (const auto& [name, ft] : def.fields) {
      const u32 a = inline_align_locked(ft);
      l.align = std::max(l.align, a);
      off = align_up(off, a);
      off += inline_size_locked(ft);
    }
    l.size = align_up(off, l.align);
    return l;
  }

  u32 field_offset_locked(const MessageTypeDef& def, const std::string& field,
                          const FieldType** out_type) const {
    u32 off = 0;
    for (const auto& [name, ft] : def.fields) {
      off = align_up(off, inline_align_locked(ft));
      if (name == field) {
        *out_type = &ft;
        return off;
      }
      off += inline_size_locked(ft);
    }
    throw TypeError("unknown field '" + field + "' in " + def.name);
  }

  ResolvedField resolve_locked(TypeHandle h, const std::vector<std::string>& parts,
                               std::size_t i, u32 base, const std::string& full) const {
    const MessageTypeDef& def = entries_[h.index].def;
    const FieldType* ft = nullptr;
    const u32 off = base + field_offset_locked(def, parts[i], &ft);
    FieldType t = *ft;
    if (t.kind == FieldType::Kind::String) t = FieldType::sequence(FieldType::scalar(FieldType::Kind::U8));
    if (i + 1 == parts.size()) return ResolvedField{off, t, false};
    // Descend.
    if (t.kind == FieldType::Kind::Nested)
      return resolve_locked(t.nested, parts, i + 1, off, full);
    if (t.kind == FieldType::Kind::Sequence) {
      const std::string& w = parts[i + 1];
      if (i + 2 != parts.size())
        throw TypeError("path continues past sequence word in '" + full + "'");
      u32 word_off;
      if (w == "data") word_off = kSeqDataOffset;
      else if (w == "size") word_off = kSeqSizeOffset;
      else if (w == "capacity") word_off = kSeqCapOffset;
      else throw TypeError("unknown sequence word '" + w + "' in '" + full + "'");
      return ResolvedField{off + word_off, FieldType::scalar(FieldType::Kind::U32), true};
    }
    throw TypeError("path '" + full + "' descends through a scalar field");
  }

  std::string render_field_locked(const FieldType& f) const {
    switch (f.kind) {
      case FieldType::Kind::U8: return "u8";
      case FieldType::Kind::U16: return "u16";
      case FieldType::Kind::U32: return "u32";
      case FieldType::Kind::I32: return "i32";
      case FieldType::Kind::F32: return "f32";
      case FieldType::Kind::String: return "string";
      case FieldType::Kind::Sequence: return "sequence<" + render_field_locked(*f.elem) + ">";
      case FieldType::Kind::Nested: {
        // Inline the nested structure so the fingerprint captures it.
        const Entry& e = entries_[f.nested.index];
        return e.def.name + e.canonical.substr(e.canonical.find('{'));
      }
    }
    return "?";
  }

  std::string render_canonical_locked(const MessageTypeDef& def) const {
    std::ostringstream os;
    os << def.group << " " << to_string(def.kind) << " " << def.name << " { ";
    for (const auto& [name, ft] : def.fields) os << name << ": " << render_field_locked(ft) << "; ";
    os << "}";
    return os.str();
  }

  mutable std::mutex mu_;
  std::vector<Entry> entries_;
  std::map<std::string, TypeHandle> by_name_;
};

}  // namespace hwros::msg
