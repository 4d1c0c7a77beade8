#pragma once

#include <map>
#include <mutex>

#include "hwros/core.hpp"

namespace hwros::mem {

/// Simulated 32-bit application address space shared by all nodes in one
/// process. Backs message payloads and serves word-oriented read/write
/// transactions issued by hardware threads.
///
/// Address 0 is null; the range [0, 16) is reserved and never allocated.
/// All allocations are 4-byte aligned and zero-initialized. Every public
/// operation is atomic with respect to the others (single lock), which gives
/// the linearizable transaction order the hardware-thread model relies on.
class Arena {
 public:
  static constexpr Addr kReservedBase = 16;

  explicit Arena(u32 size_bytes = 64u << 20) : store_(size_bytes, 0) {
    if (size_bytes < kReservedBase || (size_bytes & (size_bytes - 1)) != 0)
      throw Error("arena size must be a power of two >= 16");
    free_[kReservedBase] = size_bytes - kReservedBase;
  }

  u32 size() const { return static_cast<u32>(store_.size()); }

  Addr alloc(u32 length) {
    if (length == 0) throw Error("arena: zero-length allocation");
    const u32 need = align_up(length, 4);
    std::lock_guard lock(mu_);
    for (auto it = free_.begin(); it != free_.end(); ++it) {
      if (it->second >= need) {
        const Addr addr = it->first;
        const u32 left = it->second - need;
        free_.erase(it);
        if (left > 0) free_[addr + need] = left;
        live_[addr] = need;
        std::memset(store_.data() + addr, 0, need);
        return addr;
      }
    }
    throw OutOfMemoryError("arena: out of memory allocating " + std::to_string(length) +
                           " bytes");
  }

  void free(Addr addr) {
    std::lock_guard lock(mu_);
    auto it = live_.find(addr);
    if (it == live_.end())
      throw Error("arena: free of unknown address " + std::to_string(addr));
    u32 len = it->second;
    live_.erase(it);
    // Coalesce with neighbors.
    auto next = free_.upper_bound(addr);
    if (next != free_.end() && addr + len == next->first) {
      len += next->second;
      next = free_.erase(next);
    }
    if (next != free_.begin()) {
      auto prev = std::prev(next);
      if (prev->first + prev->second == addr) {
        prev->second += len;
        return;
      }
    }
    free_[addr] = len;
  }

  /// MEMIF read transaction. Address must be word-aligned and the whole
  /// range inside [16, size).
  void mem_read(Addr addr, void* out, u32 length) const {
    check_txn(addr, length);
    std::lock_guard lock(mu_);
    std::memcpy(out, store_.data() + addr, length);
  }

  Bytes mem_read(Addr addr, u32 length) const {
    Bytes out(length);
    mem_read(addr, out.data(), length);
    return out;
  }

  /// MEMIF write transaction; atomic as a whole.
  void mem_write(Addr addr, const void* data, u32 length) {
    check_txn(addr, length);
    std::lock_guard lock(mu_);
    std::memcpy(store_.data() + addr, data, length);
  }

  void mem_write(Addr addr, const Bytes& data) {
    mem_write(addr, data.data(), static_cast<u32>(data.size()));
  }

  u32 read_u32(Addr addr) const {
    u8 buf[4];
    mem_read(addr, buf, 4);
    return get_u32(buf);
  }

  void write_u32(Addr addr, u32 v) {
    u8 buf[4] = {static_cast<u8>(v), static_cast<u8>(v >> 8), static_cast<u8>(v >> 16),
                 static_cast<u8>(v >> 24)};
    mem_write(addr, buf, 4);
  }

  /// Middleware-side raw access: bounds-checked but free of the MEMIF
  /// word-alignment rule. Hardware threads never use these.
  void peek(Addr addr, void* out, u32 length) const {
    check_range(addr, length);
    std::lock_guard lock(mu_);
    std::memcpy(out, store_.data() + addr, length);
  }

  void poke(Addr addr, const void* data, u32 length) {
    check_range(addr, length);
    std::lock_guard lock(mu_);
    std::memcpy(store_.data() + addr, data, length);
  }

  u32 peek_u32(Addr addr) const {
    u8 buf[4];
    peek(addr, buf, 4);
    return get_u32(buf);
  }

  void poke_u32(Addr addr, u32 v) {
    u8 buf[4] = {static_cast<u8>(v), static_cast<u8>(v >> 8), static_cast<u8>(v >> 16),
                 static_cast<u8>(v >> 24)};
    poke(addr, buf, 4);
  }

  u32 live_blocks() const {
    std::lock_guard lock(mu_);
    return static_cast<u32>(live_.size());
  }

 private:
  void check_range(Addr addr, u32 length) const {
    if (length < 1) throw Error("arena: zero-length access");
    if (addr < kReservedBase || static_cast<u64>(addr) + length > store_.size())
      throw Error("arena: out-of-bounds access at " + std::to_string(addr) + "+" +
                  std::to_string(length));
  }

  void check_txn(Addr addr, u32 length) const {
    if (addr % 4 != 0) throw Error("arena: unaligned address " + std::to_string(addr));
    check_range(addr, length);
  }

  mutable std::mutex mu_;
  Bytes store_;
  std::map<Addr, u32> free_;  // addr -> length, coalesced
  std::map<Addr, u32> live_;  // addr -> length
};

}  // namespace hwros::mem
