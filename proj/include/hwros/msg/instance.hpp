#pragma once

#include <map>

#include "hwros/mem/arena.hpp"
#include "hwros/msg/types.hpp"

namespace hwros::msg {

constexpr u32 kDefaultMaxMessageSize = 8u << 20;

/// A message materialized in the arena: the root block plus the out-of-line
/// sequence payload blocks it owns. Owned by exactly one thread at a time.
struct MessageInstance {
  TypeHandle type;
  Addr root = 0;
  std::vector<Addr> allocations;  // includes root when root != 0
};

namespace detail {

inline u32 elem_stride(const TypeRegistry& reg, const FieldType& t) {
  return reg.inline_size(t);
}

inline void alloc_sequences(mem::Arena& arena, const TypeRegistry& reg, const FieldType& t,
                            Addr at, const std::string& path,
                            const std::map<std::string, u32>& caps,
                            std::vector<Addr>& allocs) {
  switch (t.kind) {
    case FieldType::Kind::Nested:
      for (const auto& slot : reg.fields_of(t.nested))
        alloc_sequences(arena, reg, slot.type, at + slot.offset,
                        path.empty() ? slot.name : path + "." + slot.name, caps, allocs);
      break;
    case FieldType::Kind::String:
    case FieldType::Kind::Sequence: {
      const FieldType elem = t.kind == FieldType::Kind::String
                                 ? FieldType::scalar(FieldType::Kind::U8)
                                 : *t.elem;
      u32 cap = 0;
      if (auto it = caps.find(path); it != caps.end()) cap = it->second;
      Addr payload = 0;
      if (cap > 0) {
        payload = arena.alloc(cap * elem_stride(reg, elem));
        allocs.push_back(payload);
      }
      arena.poke_u32(at + kSeqDataOffset, payload);
      arena.poke_u32(at + kSeqSizeOffset, 0);
      arena.poke_u32(at + kSeqCapOffset, cap);
      break;
    }
    default:
      break;
  }
}

inline void serialize_value(const mem::Arena& arena, const TypeRegistry& reg,
                            const FieldType& t, Addr at, Bytes& out) {
  switch (t.kind) {
    case FieldType::Kind::U8: {
      u8 v;
      arena.peek(at, &v, 1);
      out.push_back(v);
      break;
    }
    case FieldType::Kind::U16: {
      u8 v[2];
      arena.peek(at, v, 2);
      out.push_back(v[0]);
      out.push_back(v[1]);
      break;
    }
    case FieldType::Kind::U32:
    case FieldType::Kind::I32:
    case FieldType::Kind::F32: {
      u8 v[4];
      arena.peek(at, v, 4);
      out.insert(out.end(), v, v + 4);
      break;
    }
    case FieldType::Kind::String:
    case FieldType::Kind::Sequence: {
      const FieldType elem = t.kind == FieldType::Kind::String
                                 ? FieldType::scalar(FieldType::Kind::U8)
                                 : *t.elem;
      const u32 n = arena.peek_u32(at + kSeqSizeOffset);
      const Addr data = arena.peek_u32(at + kSeqDataOffset);
      put_u32(out, n);
      const u32 stride = elem_stride(reg, elem);
      for (u32 i = 0; i < n; ++i) serialize_value(arena, reg, elem, data + i * stride, out);
      break;
    }
    case FieldType::Kind::Nested:
      for (const auto& slot : reg.fields_of(t.nested))
        serialize_value(arena, reg, slot.type, at + slot.offset, out);
      break;
  }
}

struct ByteReader {
  const Bytes& buf;
  std::size_t pos = 0;
  const u8* take(std::size_t n) {
    if (pos + n > buf.size()) throw Error("deserialize: truncated input");
    const u8* p = buf.data() + pos;
    pos += n;
    return p;
  }
};

inline void deserialize_value(mem::Arena& arena, const TypeRegistry& reg, const FieldType& t,
                              Addr at, ByteReader& r, u32 max_size,
                              std::vector<Addr>& allocs) {
  switch (t.kind) {
    case FieldType::Kind::U8:
      arena.poke(at, r.take(1), 1);
      break;
    case FieldType::Kind::U16:
      arena.poke(at, r.take(2), 2);
      break;
    case FieldType::Kind::U32:
    case FieldType::Kind::I32:
    case FieldType::Kind::F32:
      arena.poke(at, r.take(4), 4);
      break;
    case FieldType::Kind::String:
    case FieldType::Kind::Sequence: {
      const FieldType elem = t.kind == FieldType::Kind::String
                                 ? FieldType::scalar(FieldType::Kind::U8)
                                 : *t.elem;
      const u32 n = get_u32(r.take(4));
      if (n > max_size) throw Error("deserialize: sequence count exceeds max message size");
      Addr payload = 0;
      const u32 stride = elem_stride(reg, elem);
      if (n > 0) {
        payload = arena.alloc(n * stride);
        allocs.push_back(payload);
        for (u32 i = 0; i < n; ++i)
          deserialize_value(arena, reg, elem, payload + i * stride, r, max_size, allocs);
      }
      arena.poke_u32(at + kSeqDataOffset, payload);
      arena.poke_u32(at + kSeqSizeOffset, n);
      arena.poke_u32(at + kSeqCapOffset, n);
      break;
    }
    case FieldType::Kind::Nested:
      for (const auto& slot : reg.fields_of(t.nested))
        deserialize_value(arena, reg, slot.type, at + slot.offset, r, max_size, allocs);
      break;
  }
}

}  // namespace detail

/// Allocates a zeroed message with out-of-line payload blocks for the
/// sequence paths named in `capacities` (count of elements each). Sequence
/// headers come up initialized with size 0.
inline MessageInstance alloc_message(mem::Arena& arena, const TypeRegistry& reg, TypeHandle h,
                                     const std::map<std::string, u32>& capacities = {}) {
  MessageInstance inst;
  inst.type = h;
  const u32 size = reg.layout(h).size;
  if (size == 0) return inst;
  inst.root = arena.alloc(size);
  inst.allocations.push_back(inst.root);
  try {
    detail::alloc_sequences(arena, reg, FieldType::nested_type(h), inst.root, "", capacities,
                            inst.allocations);
  } catch (...) {
    for (Addr a : inst.allocations) arena.free(a);
    throw;
  }
  return inst;
}

inline void free_message(mem::Arena& arena, MessageInstance& inst) {
  for (Addr a : inst.allocations) arena.free(a);
  inst.allocations.clear();
  inst.root = 0;
}

/// Little-endian, depth-first wire encoding; sequences as u32 count followed
/// by the elements.
inline Bytes serialize(const mem::Arena& arena, const TypeRegistry& reg, TypeHandle h,
                       Addr root) {
  Bytes out;
  if (reg.layout(h).size == 0) return out;
  detail::serialize_value(arena, reg, FieldType::nested_type(h), root, out);
  return out;
}

inline Bytes serialize(const mem::Arena& arena, const TypeRegistry& reg,
                       const MessageInstance& inst) {
  return serialize(arena, reg, inst.type, inst.root);
}

inline MessageInstance deserialize(mem::Arena& arena, const TypeRegistry& reg, TypeHandle h,
                                   const Bytes& bytes, u32 max_size = kDefaultMaxMessageSize) {
  if (bytes.size() > max_size) throw Error("deserialize: message exceeds max size");
  MessageInstance inst;
  inst.type = h;
  const u32 size = reg.layout(h).size;
  if (size == 0) {
    if (!bytes.empty()) throw Error("deserialize: trailing bytes");
    return inst;
  }
  inst.root = arena.alloc(size);
  inst.allocations.push_back(inst.root);
  detail::ByteReader r{bytes};
  try {
    detail::deserialize_value(arena, reg, FieldType::nested_type(h), inst.root, r, max_size,
                              inst.allocations);
    if (r.pos != bytes.size()) throw Error("deserialize: trailing bytes");
  } catch (...) {
    for (Addr a : inst.allocations) arena.free(a);
    throw;
  }
  return inst;
}

/// Deep copy with fresh arena allocations.
inline MessageInstance clone_message(mem::Arena& arena, const TypeRegistry& reg,
                                     const MessageInstance& inst,
                                     u32 max_size = kDefaultMaxMessageSize) {
  return deserialize(arena, reg, inst.type, serialize(arena, reg, inst), max_size);
}

/// Field-wise equality.
inline bool messages_equal(const mem::Arena& arena, const TypeRegistry& reg,
                           const MessageInstance& a, const MessageInstance& b) {
  return a.type == b.type && serialize(arena, reg, a) == serialize(arena, reg, b);
}

}  // namespace hwros::msg
