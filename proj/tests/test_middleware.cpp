#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <thread>

#include "hwros/app/msgtext.hpp"
#include "hwros/mw/action.hpp"

using namespace hwros;
using mw::Micros;

namespace {

struct Fixture {
  msg::TypeRegistry reg;
  mem::Arena arena{64u << 20};
  mw::Graph graph{arena, reg};
  msg::TypeHandle word;

  Fixture() {
    app::register_builtin_types(reg);
    word = app::parse_message_defs("t msg Word { v: u32; }", reg).at(0);
  }

  msg::MessageInstance make_word(u32 v) {
    auto inst = msg::alloc_message(arena, reg, word);
    arena.poke_u32(inst.root, v);
    return inst;
  }

  u32 word_value(const msg::MessageInstance& inst) { return arena.peek_u32(inst.root); }
};

}  // namespace

TEST_CASE("node and endpoint creation rules") {
  Fixture f;
  auto n = f.graph.create_node("a");
  CHECK_THROWS(f.graph.create_node("a"));
  auto pub = f.graph.create_publisher(n, "/t", f.word);
  auto img = *f.reg.find("sensor_msgs", msg::TypeKind::Msg, "Image");
  CHECK_THROWS_AS(f.graph.create_subscriber(n, "/t", img), TypeError);  // topic type bound
  auto srv = f.graph.create_service_server(n, "s", f.word, f.word);
  CHECK_THROWS(f.graph.create_service_server(n, "s", f.word, f.word));  // one server only
  CHECK_THROWS_AS(f.graph.create_service_client(n, "s", img, f.word), TypeError);
}

TEST_CASE("publish delivers per-subscriber deep copies") {
  Fixture f;
  auto n = f.graph.create_node("a");
  auto pub = f.graph.create_publisher(n, "/t", f.word);
  auto s1 = f.graph.create_subscriber(n, "/t", f.word);
  auto s2 = f.graph.create_subscriber(n, "/t", f.word);
  auto m = f.make_word(7);
  f.graph.publish(*pub, m);
  // Mutating the original after publishing must not affect the copies.
  f.arena.poke_u32(m.root, 999);
  auto a = s1->take(Micros(100000));
  auto b = s2->take(Micros(100000));
  REQUIRE(a);
  REQUIRE(b);
  CHECK(f.word_value(*a) == 7);
  CHECK(f.word_value(*b) == 7);
  CHECK(a->root != b->root);
  CHECK(a->root != m.root);
  // Mutating one copy leaves the other alone.
  f.arena.poke_u32(a->root, 123);
  CHECK(f.word_value(*b) == 7);
  msg::free_message(f.arena, *a);
  msg::free_message(f.arena, *b);
  msg::free_message(f.arena, m);
  CHECK(f.arena.live_blocks() == 0);
}

TEST_CASE("take times out when nothing is queued") {
  Fixture f;
  auto n = f.graph.create_node("a");
  auto sub = f.graph.create_subscriber(n, "/t", f.word);
  const u64 t0 = now_us();
  CHECK(!sub->take(Micros(30000)).has_value());
  CHECK(now_us() - t0 >= 25000);
}

TEST_CASE("queue keeps the newest N messages, dropping the oldest") {
  Fixture f;
  auto n = f.graph.create_node("a");
  auto pub = f.graph.create_publisher(n, "/t", f.word);

  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const u32 depth = 1 + rng() % 12;
    auto sub = f.graph.create_subscriber(n, "/t", f.word, depth);
    const u32 total = depth + rng() % 30;
    for (u32 i = 0; i < total; ++i) {
      auto m = f.make_word(i);
      f.graph.publish(*pub, m);
      msg::free_message(f.arena, m);
    }
    // Oracle: with T publishes into a keep-last(depth) queue, the receiver
    // must see exactly the interval [T-depth, T) in order.
    const u32 expect_first = total > depth ? total - depth : 0;
    for (u32 v = expect_first; v < total; ++v) {
      auto m = sub->take(Micros(100000));
      REQUIRE(m);
      CHECK(f.word_value(*m) == v);
      msg::free_message(f.arena, *m);
    }
    CHECK(!sub->take(Micros(1000)).has_value());
  }
}

TEST_CASE("concurrent pub/sub keeps per-publisher FIFO order") {
  Fixture f;
  auto n = f.graph.create_node("a");
  auto pub = f.graph.create_publisher(n, "/t", f.word);
  auto sub = f.graph.create_subscriber(n, "/t", f.word, 4096);
  constexpr u32 kCount = 2000;
  std::thread producer([&] {
    for (u32 i = 0; i < kCount; ++i) {
      auto m = f.make_word(i);
      f.graph.publish(*pub, m);
      msg::free_message(f.arena, m);
    }
  });
  for (u32 i = 0; i < kCount; ++i) {
    auto m = sub->take(Micros(1000000));
    REQUIRE(m);
    REQUIRE(f.word_value(*m) == i);
    msg::free_message(f.arena, *m);
  }
  producer.join();
  CHECK(f.arena.live_blocks() == 0);
}

TEST_CASE("service responses reach the matching request, in every interleaving") {
  Fixture f;
  auto n = f.graph.create_node("a");
  auto server = f.graph.create_service_server(n, "s", f.word, f.word);
  auto c1 = f.graph.create_service_client(n, "s", f.word, f.word);
  auto c2 = f.graph.create_service_client(n, "s", f.word, f.word);

  auto q1 = f.make_word(100);
  auto q2 = f.make_word(200);
  const u64 corr1 = f.graph.send_request(*c1, q1);
  const u64 corr2 = f.graph.send_request(*c2, q2);
  CHECK(corr1 != corr2);

  auto r1 = server->take_request(Micros(100000));
  auto r2 = server->take_request(Micros(100000));
  REQUIRE(r1);
  REQUIRE(r2);

  // Answer in reverse order; each client still gets its own response.
  for (auto* r : {&*r2, &*r1}) {
    auto resp = f.make_word(f.arena.peek_u32(r->second.root) + 1);
    f.graph.send_response(*server, r->first, resp);
    msg::free_message(f.arena, resp);
  }
  auto a1 = c1->take_response(corr1, Micros(100000));
  auto a2 = c2->take_response(corr2, Micros(100000));
  REQUIRE(a1);
  REQUIRE(a2);
  CHECK(f.word_value(*a1) == 101);
  CHECK(f.word_value(*a2) == 201);

  // Exactly-once: answering the same correlation id again is an error, as is
  // answering an id that never existed.
  auto extra = f.make_word(0);
  CHECK_THROWS(f.graph.send_response(*server, r1->first, extra));
  CHECK_THROWS(f.graph.send_response(*server, 0xdeadbeef, extra));
  msg::free_message(f.arena, extra);

  for (auto* m : {&q1, &q2, &*a1, &*a2, &r1->second, &r2->second})
    msg::free_message(f.arena, *m);
  CHECK(f.arena.live_blocks() == 0);
}

TEST_CASE("request without a server fails fast") {
  Fixture f;
  auto n = f.graph.create_node("a");
  auto cli = f.graph.create_service_client(n, "nobody", f.word, f.word);
  auto q = f.make_word(1);
  CHECK_THROWS(f.graph.send_request(*cli, q));
  msg::free_message(f.arena, q);
}

TEST_CASE("action: goal, feedback stream, result") {
  Fixture f;
  auto n = f.graph.create_node("a");
  auto server = f.graph.create_action_server(n, "act", f.word, f.word, f.word);
  auto client = f.graph.create_action_client(n, "act", f.word, f.word, f.word);
  // A plain subscriber on the feedback topic sees the same stream.
  auto watcher = f.graph.create_subscriber(n, "act/feedback", f.word, 16);

  auto goal = f.make_word(5);
  const u64 gid = client->send_goal(goal);
  msg::free_message(f.arena, goal);

  std::thread server_thread([&] {
    auto g = server->take_goal(Micros(1000000));
    REQUIRE(g);
    const u32 target = f.arena.peek_u32(g->second.root);
    for (u32 i = 1; i <= 3; ++i) {
      auto fb = f.make_word(i);
      server->publish_feedback(g->first, fb);
      msg::free_message(f.arena, fb);
    }
    auto res = f.make_word(target * 10);
    server->send_result(g->first, res);
    msg::free_message(f.arena, res);
    msg::free_message(f.arena, g->second);
  });

  for (u32 i = 1; i <= 3; ++i) {
    auto fb = client->take_feedback(gid, Micros(1000000));
    REQUIRE(fb);
    CHECK(f.word_value(*fb) == i);
    msg::free_message(f.arena, *fb);
  }
  auto res = client->take_result(gid, Micros(2000000));
  REQUIRE(res);
  CHECK(f.word_value(*res) == 50);
  msg::free_message(f.arena, *res);
  server_thread.join();

  for (u32 i = 1; i <= 3; ++i) {
    auto fb = watcher->take(Micros(100000));
    REQUIRE(fb);
    CHECK(f.word_value(*fb) == i);
    msg::free_message(f.arena, *fb);
  }

  // Error paths: unknown goal ids and feedback after the result.
  auto junk = f.make_word(0);
  CHECK_THROWS(server->publish_feedback(0x1234, junk));
  CHECK_THROWS(server->send_result(0x1234, junk));
  CHECK_THROWS(server->publish_feedback(gid, junk));  // result already sent
  CHECK_THROWS(client->take_result(0x9999, Micros(1000)));
  msg::free_message(f.arena, junk);
}

TEST_CASE("correlation ids are unique and carry the process nonce") {
  Fixture f;
  std::set<u64> seen;
  const u64 hi = f.graph.next_corr() >> 32;
  CHECK(hi != 0);
  for (int i = 0; i < 10000; ++i) {
    const u64 c = f.graph.next_corr();
    CHECK((c >> 32) == hi);
    REQUIRE(seen.insert(c).second);
  }
}
