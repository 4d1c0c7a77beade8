#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "hwros/mem/arena.hpp"

using namespace hwros;

TEST_CASE("construction rules") {
  CHECK_THROWS(mem::Arena(100));       // not a power of two
  mem::Arena a(1u << 20);
  CHECK(a.size() == 1u << 20);
}

TEST_CASE("allocations are aligned, zeroed, and never in the reserved range") {
  mem::Arena a(1u << 20);
  std::vector<Addr> blocks;
  for (u32 len : {1u, 3u, 4u, 5u, 100u, 4096u}) {
    const Addr p = a.alloc(len);
    CHECK(p % 4 == 0);
    CHECK(p >= mem::Arena::kReservedBase);
    Bytes buf = a.mem_read(p, align_up(len, 4));
    for (u8 b : buf) CHECK(b == 0);
    blocks.push_back(p);
  }
  for (Addr p : blocks) a.free(p);
  CHECK(a.live_blocks() == 0);
}

TEST_CASE("a 6 MiB block fits in the default 64 MiB space") {
  mem::Arena a;
  const Addr p = a.alloc(6u << 20);
  a.mem_write(p, Bytes(6u << 20, 0x5A));
  CHECK(a.mem_read(p + (6u << 20) - 4, 4) == Bytes(4, 0x5A));
  a.free(p);
}

TEST_CASE("free error cases") {
  mem::Arena a(1u << 16);
  CHECK_THROWS(a.free(0));
  CHECK_THROWS(a.free(16));
  const Addr p = a.alloc(8);
  a.free(p);
  CHECK_THROWS(a.free(p));  // double free
}

TEST_CASE("transaction access rules") {
  mem::Arena a(1u << 16);
  const Addr p = a.alloc(64);
  u8 buf[8];
  CHECK_THROWS(a.mem_read(p + 1, buf, 4));     // unaligned
  CHECK_THROWS(a.mem_read(2, buf, 4));         // reserved range
  CHECK_THROWS(a.mem_read(a.size() - 4, buf, 8));  // past the end
  CHECK_THROWS(a.mem_write(p, buf, 0));        // zero length
  a.mem_write(p, buf, 5);                      // odd length is fine if aligned start
  // Unaligned middleware-side access works.
  a.poke(p + 1, buf, 3);
  a.peek(p + 1, buf, 3);
  a.free(p);
}

TEST_CASE("word helpers are little-endian") {
  mem::Arena a(1u << 16);
  const Addr p = a.alloc(8);
  a.write_u32(p, 0x01020304);
  CHECK(a.mem_read(p, 4) == Bytes{0x04, 0x03, 0x02, 0x01});
  CHECK(a.read_u32(p) == 0x01020304);
  a.free(p);
}

TEST_CASE("randomized alloc/free against an interval oracle") {
  mem::Arena a(1u << 20);
  std::mt19937 rng(4242);
  // Oracle: the set of live [addr, addr+len) intervals must never overlap
  // and data written to a block must persist until it is freed.
  struct Block {
    Addr addr;
    u32 len;      // padded length actually reserved
    u32 written;  // bytes we filled
    u8 fill;
  };
  std::vector<Block> live;
  u32 failed_allocs = 0;
  for (int step = 0; step < 4000; ++step) {
    if (live.empty() || rng() % 2 == 0) {
      const u32 len = 1 + rng() % 3000;
      try {
        const Addr p = a.alloc(len);
        const u8 fill = static_cast<u8>(rng());
        a.mem_write(p, Bytes(len, fill));
        bool overlap = false;
        for (const auto& b : live)
          overlap |= !(p + align_up(len, 4) <= b.addr || b.addr + b.len <= p);
        REQUIRE_FALSE(overlap);
        live.push_back({p, align_up(len, 4), len, fill});
      } catch (const OutOfMemoryError&) {
        ++failed_allocs;
      }
    } else {
      const std::size_t i = rng() % live.size();
      Bytes got = a.mem_read(live[i].addr, live[i].written);
      REQUIRE(got == Bytes(live[i].written, live[i].fill));
      a.free(live[i].addr);
      live[i] = live.back();
      live.pop_back();
    }
  }
  for (const auto& b : live) a.free(b.addr);
  CHECK(a.live_blocks() == 0);
  // After freeing everything the full space must be usable again (coalescing).
  const Addr big = a.alloc((1u << 20) - mem::Arena::kReservedBase);
  a.free(big);
}

TEST_CASE("exhaustion raises out-of-memory, later frees recover") {
  mem::Arena a(1u << 16);
  std::vector<Addr> ps;
  CHECK_THROWS_AS(
      [&] {
        for (;;) ps.push_back(a.alloc(4096));
      }(),
      OutOfMemoryError);
  CHECK(!ps.empty());
  a.free(ps.back());
  CHECK_NOTHROW(a.alloc(4096));
}
