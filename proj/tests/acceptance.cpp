// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any criterion fails.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include <json.hpp>

#include "hwros/app/system.hpp"

using namespace hwros;
using msg::TypeRegistry;
using Clock = std::chrono::steady_clock;

namespace {

// ---------------------------------------------------------------------------
// Shared helpers

msg::TypeHandle find_type(TypeRegistry& reg, const std::string& group, const std::string& name) {
  auto h = reg.find(group, msg::TypeKind::Msg, name);
  if (!h) throw Error("type not registered: " + group + "/" + name);
  return *h;
}

u32 pack_angles_q86(i32 ax_q86, i32 ay_q86) {
  return (static_cast<u32>(static_cast<u16>(ax_q86)) << 16) | static_cast<u16>(ay_q86);
}

// ---------------------------------------------------------------------------
// Criterion 1: the same behavior produces byte-identical outputs whether the
// node runs software-mapped or hardware-mapped.

msg::MessageInstance make_input(mem::Arena& arena, TypeRegistry& reg, msg::TypeHandle type,
                                const std::string& workload, std::mt19937& rng, u32 index) {
  if (workload == "copy") {
    const u32 n = index == 0 ? 0 : rng() % 65536;
    auto inst = msg::alloc_message(arena, reg, type, {{"data", n}});
    arena.poke_u32(inst.root + reg.offset_of(type, "seq"), index);
    Bytes p(n);
    for (auto& b : p) b = static_cast<u8>(rng());
    const Addr data = arena.peek_u32(inst.root + reg.offset_of(type, "data.data"));
    if (n) arena.poke(data, p.data(), n);
    arena.poke_u32(inst.root + reg.offset_of(type, "data.size"), n);
    return inst;
  }
  if (workload == "sort") {
    auto inst = msg::alloc_message(arena, reg, type, {{"data", app::kSortLength}});
    std::vector<u32> words(app::kSortLength);
    for (auto& w : words) w = rng();
    const Addr data = arena.peek_u32(inst.root + reg.offset_of(type, "data.data"));
    arena.poke(data, words.data(), words.size() * 4);
    arena.poke_u32(inst.root + reg.offset_of(type, "data.size"), app::kSortLength);
    return inst;
  }
  if (workload == "inverse_kinematics") {
    auto inst = msg::alloc_message(arena, reg, type);
    std::uniform_int_distribution<i32> dist(-app::kIkAngleLimitQ86, app::kIkAngleLimitQ86);
    arena.poke_u32(inst.root + reg.offset_of(type, "value"),
                   pack_angles_q86(dist(rng), dist(rng)));
    return inst;
  }
  if (workload == "sobel") {
    const u32 n = app::kMaxImageBytes;
    auto inst = msg::alloc_message(arena, reg, type, {{"data", n}});
    arena.poke_u32(inst.root + reg.offset_of(type, "height"), app::kImageHeight);
    arena.poke_u32(inst.root + reg.offset_of(type, "width"), app::kImageWidth);
    arena.poke_u32(inst.root + reg.offset_of(type, "step"), app::kImageWidth * 3);
    Bytes p(n);
    for (auto& b : p) b = static_cast<u8>(rng());
    arena.poke(arena.peek_u32(inst.root + reg.offset_of(type, "data.data")), p.data(), n);
    arena.poke_u32(inst.root + reg.offset_of(type, "data.size"), n);
    return inst;
  }
  throw Error("unknown workload " + workload);
}

std::vector<Bytes> run_workload_stream(const std::string& workload, bool hardware, u32 seed,
                                       u32 count) {
  TypeRegistry reg;
  app::register_builtin_types(reg);
  mem::Arena arena(64ull << 20);
  mw::Graph graph(arena, reg);
  hw::Runtime runtime(graph, 2);

  std::string group = "bench_msgs", name = "Blob";
  if (workload == "sort") group = "sort_msgs", name = "UintArray";
  if (workload == "inverse_kinematics") group = "ik_msgs", name = "Packed";
  if (workload == "sobel") group = "sensor_msgs", name = "Image";
  const auto type = find_type(reg, group, name);

  auto worker = graph.create_node("worker");
  auto wsub = graph.create_subscriber(worker, "/in", type, 8, 200);
  auto wpub = graph.create_publisher(worker, "/out", type);
  auto driver = graph.create_node("driver");
  auto dpub = graph.create_publisher(driver, "/in", type);
  auto dsub = graph.create_subscriber(driver, "/out", type, 8, 200);

  std::vector<hw::EndpointRef> eps{wsub, wpub};
  app::NodeContext ctx{arena, reg, graph, "worker", eps};
  hw::Behavior behavior = app::WorkloadRegistry::builtin().find(workload)(ctx);
  const u32 id = hardware
                     ? runtime.start_hardware_thread(0, "worker", eps, std::move(behavior))
                     : runtime.run_software_node("worker", eps, std::move(behavior));

  std::mt19937 rng(seed);
  std::vector<Bytes> outputs;
  for (u32 i = 0; i < count; ++i) {
    auto in = make_input(arena, reg, type, workload, rng, i);
    graph.publish(*dpub, in);
    msg::free_message(arena, in);
    const auto deadline = Clock::now() + std::chrono::seconds(30);
    std::optional<msg::MessageInstance> got;
    while (!got && Clock::now() < deadline) {
      if (runtime.faulted(id) || runtime.finished(id))
        throw Error("worker stopped unexpectedly: " + runtime.error_of(id));
      got = dsub->take(mw::Micros(50000));
    }
    if (!got) throw Error(workload + ": no output for input " + std::to_string(i));
    outputs.push_back(msg::serialize(arena, reg, *got));
    msg::free_message(arena, *got);
  }
  runtime.stop_all();
  return outputs;
}

bool criterion_mapping_invariance(std::string& why) {
  const auto t0 = Clock::now();
  for (const std::string workload : {"copy", "sort", "inverse_kinematics", "sobel"}) {
    const u32 count = 100;
    const u32 seed = 7001 + static_cast<u32>(workload.size());
    auto sw = run_workload_stream(workload, false, seed, count);
    auto hw = run_workload_stream(workload, true, seed, count);
    if (sw.size() != count || hw.size() != count) {
      why = workload + ": incomplete output stream";
      return false;
    }
    for (u32 i = 0; i < count; ++i) {
      if (sw[i] != hw[i]) {
        why = workload + ": output " + std::to_string(i) + " differs between mappings";
        return false;
      }
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (secs > 120) {
    why = "exceeded the 2-minute budget (" + std::to_string(secs) + "s)";
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 2: every hardware-thread take follows the six-step protocol:
// command sent, delegate dispatch, arena store, delegate unblock, address
// response, memory-interface read — in that order, with a consistent address.

bool criterion_take_protocol(std::string& why) {
  TypeRegistry reg;
  app::register_builtin_types(reg);
  mem::Arena arena(64ull << 20);
  mw::Graph graph(arena, reg);
  hw::Runtime runtime(graph, 1);
  const auto type = find_type(reg, "ik_msgs", "Packed");

  auto worker = graph.create_node("worker");
  auto sub = graph.create_subscriber(worker, "/t", type, 8, 200);
  auto driver = graph.create_node("driver");
  auto pub = graph.create_publisher(driver, "/t", type);

  TraceLog log;
  log.attach(graph.tracer());
  runtime.start_hardware_thread(0, "worker", std::vector<hw::EndpointRef>{sub},
                                [](hw::NodeApi& api) {
    for (;;) {
      const Addr a = api.sub_take(0);
      u32 v;
      api.mem_read(a, &v, 4);
    }
  });

  using Kind = TraceEvent::Kind;
  auto count_kind = [&](Kind k) {
    u32 n = 0;
    for (const auto& ev : log.snapshot())
      if (ev.kind == k) ++n;
    return n;
  };
  auto wait_for = [&](auto pred) {
    const auto deadline = Clock::now() + std::chrono::seconds(20);
    while (!pred()) {
      if (Clock::now() > deadline) return false;
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    return true;
  };

  const u32 kMessages = 1000;
  auto in = msg::alloc_message(arena, reg, type);
  for (u32 i = 0; i < kMessages; ++i) {
    // Publish only while the thread is parked inside its take: the command
    // is sent and the delegate has dispatched it.
    if (!wait_for([&] {
          return count_kind(Kind::CommandSent) >= i + 1 &&
                 count_kind(Kind::DelegateDispatch) >= i + 1;
        })) {
      why = "thread never issued take command " + std::to_string(i + 1);
      return false;
    }
    std::mt19937 rng(i);
    arena.poke_u32(in.root, rng());
    graph.publish(*pub, in);
    if (!wait_for([&] { return count_kind(Kind::MemifRead) >= i + 1; })) {
      why = "cycle " + std::to_string(i) + " did not complete";
      return false;
    }
  }
  msg::free_message(arena, in);
  runtime.stop_all();
  graph.tracer().set_sink({});

  const auto evs = log.snapshot();
  static const Kind kPattern[6] = {Kind::CommandSent,    Kind::DelegateDispatch,
                                   Kind::ArenaStore,     Kind::DelegateUnblock,
                                   Kind::AddressResponse, Kind::MemifRead};
  u32 violations = 0;
  std::size_t idx = 0;
  for (u32 cycle = 0; cycle < kMessages; ++cycle) {
    Addr addr = 0;
    for (int step = 0; step < 6; ++step, ++idx) {
      if (idx >= evs.size() || evs[idx].kind != kPattern[step]) {
        ++violations;
        break;
      }
      if (step == 2) addr = evs[idx].addr;  // arena store defines the address
      if ((step == 3 || step == 4 || step == 5) && evs[idx].addr != addr) ++violations;
    }
  }
  // After the last completed cycle the thread may have issued (and the
  // delegate dispatched) one more take that never unblocked before shutdown.
  for (; idx < evs.size(); ++idx) {
    if (evs[idx].kind != Kind::CommandSent && evs[idx].kind != Kind::DelegateDispatch)
      ++violations;
  }
  if (violations != 0) {
    why = std::to_string(violations) + " protocol order violation(s) in " +
          std::to_string(evs.size()) + " events";
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 3: the compute kernels agree with independent reference
// implementations.

std::vector<u8> sobel_reference(const std::vector<u8>& in, u32 h, u32 w, u32 step) {
  std::vector<u8> out(in.size(), 0);
  const int gx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  const int gy[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  for (u32 y = 1; y + 1 < h; ++y) {
    for (u32 x = 1; x + 1 < w; ++x) {
      for (u32 c = 0; c < 3; ++c) {
        long sx = 0, sy = 0;
        int k = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx, ++k) {
            const u8 v = in[(y + dy) * step + (x + dx) * 3 + c];
            sx += gx[k] * long(v);
            sy += gy[k] * long(v);
          }
        const long m = std::labs(sx) + std::labs(sy);
        out[y * step + x * 3 + c] = static_cast<u8>(m > 255 ? 255 : m);
      }
    }
  }
  return out;
}

bool criterion_kernel_oracles(std::string& why) {
  const auto t0 = Clock::now();
  // Edge filter: pixel-exact against a brute-force convolution on 20 random
  // full-size images.
  std::mt19937 rng(9001);
  const u32 h = app::kImageHeight, w = app::kImageWidth, step = w * 3;
  for (int t = 0; t < 20; ++t) {
    std::vector<u8> in(std::size_t(h) * step);
    for (auto& b : in) b = static_cast<u8>(rng());
    std::vector<u8> out(in.size());
    app::sobel_filter_rgb(in.data(), out.data(), h, w, step);
    if (out != sobel_reference(in, h, w, step)) {
      why = "edge filter diverged from the convolution reference (image " + std::to_string(t) + ")";
      return false;
    }
  }
  // Sorter: 100 random arrays against std::sort.
  for (int t = 0; t < 100; ++t) {
    std::vector<u32> a(app::kSortLength);
    for (auto& x : a) x = rng();
    auto expect = a;
    std::sort(expect.begin(), expect.end());
    app::odd_even_transposition_sort(a);
    if (a != expect) {
      why = "sorter diverged from std::sort (array " + std::to_string(t) + ")";
      return false;
    }
  }
  // Fixed-point arctan: within one Q8.6 LSB of the double-precision oracle
  // over a 1-degree input grid.
  for (int ax = -45; ax <= 45; ++ax) {
    for (int ay = -45; ay <= 45; ++ay) {
      const u32 packed = pack_angles_q86(ax * 64, ay * 64);
      const u32 got = app::ik_transform(packed);
      const double r = (ax + ay) / 90.0;
      const double theta = std::atan(r) * 180.0 / M_PI;
      const long pwm = std::lround(512.0 + theta / 90.0 * 511.0);
      const u32 expect = static_cast<u32>(std::clamp(pwm, 0l, 1023l));
      if (std::abs(int(got) - int(expect)) > 1) {
        why = "angle transform off by more than 1 LSB at (" + std::to_string(ax) + "," +
              std::to_string(ay) + ")";
        return false;
      }
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (secs > 60) {
    why = "exceeded the 1-minute budget (" + std::to_string(secs) + "s)";
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 4: concurrent service clients each get exactly their own
// responses; an action delivers its feedback stream (observable as plain
// topic traffic) and then its result.

bool criterion_service_action(std::string& why) {
  TypeRegistry reg;
  app::register_builtin_types(reg);
  mem::Arena arena(64ull << 20);
  mw::Graph graph(arena, reg);
  const auto word = find_type(reg, "ik_msgs", "Packed");

  // --- services: 4 clients x 100 requests against one server ---
  auto server_node = graph.create_node("server");
  auto server = graph.create_service_server(server_node, "calc", word, word, 1000);
  constexpr u32 kClients = 4, kPerClient = 100, kTotal = kClients * kPerClient;

  std::atomic<u32> served{0};
  std::thread server_thread([&] {
    auto resp = msg::alloc_message(arena, reg, word);
    while (served.load() < kTotal) {
      auto req = server->take_request(mw::Micros(5000));
      if (!req) continue;
      const u32 v = arena.peek_u32(req->second.root);
      msg::free_message(arena, req->second);
      arena.poke_u32(resp.root, v * 2 + 1);
      graph.send_response(*server, req->first, resp);
      served.fetch_add(1);
    }
    msg::free_message(arena, resp);
  });

  std::atomic<u32> responses{0}, mismatches{0};
  std::vector<std::thread> clients;
  for (u32 cid = 0; cid < kClients; ++cid) {
    clients.emplace_back([&, cid] {
      auto node = graph.create_node("client" + std::to_string(cid));
      auto cli = graph.create_service_client(node, "calc", word, word, 1000);
      auto req = msg::alloc_message(arena, reg, word);
      for (u32 i = 0; i < kPerClient; ++i) {
        const u32 v = cid * 1000 + i;
        arena.poke_u32(req.root, v);
        const u64 corr = graph.send_request(*cli, req);
        auto resp = cli->take_response(corr, mw::Micros(10u * 1000 * 1000));
        if (!resp) {
          mismatches.fetch_add(1);
          continue;
        }
        if (arena.peek_u32(resp->root) != v * 2 + 1) mismatches.fetch_add(1);
        msg::free_message(arena, *resp);
        responses.fetch_add(1);
      }
      msg::free_message(arena, req);
    });
  }
  for (auto& t : clients) t.join();
  server_thread.join();
  if (responses.load() != kTotal || mismatches.load() != 0) {
    why = "got " + std::to_string(responses.load()) + "/400 responses, " +
          std::to_string(mismatches.load()) + " mismatch(es)";
    return false;
  }

  // --- action: one goal, exactly three feedbacks, then the result; the
  // feedback is also visible to an ordinary subscriber on the topic ---
  auto act_server_node = graph.create_node("act_server");
  auto act_client_node = graph.create_node("act_client");
  auto watcher_node = graph.create_node("watcher");
  auto act_server = graph.create_action_server(act_server_node, "work", word, word, word, 1000);
  auto act_client = graph.create_action_client(act_client_node, "work", word, word, word, 1000);
  auto watcher = graph.create_subscriber(watcher_node, "work/feedback", word, 16, 1000);

  std::string client_err;
  u64 goal_id_holder = 0;
  std::thread client_thread([&] {
    try {
      auto goal = msg::alloc_message(arena, reg, word);
      arena.poke_u32(goal.root, 7);
      const u64 gid = act_client->send_goal(goal);
      goal_id_holder = gid;
      msg::free_message(arena, goal);
      for (u32 k = 1; k <= 3; ++k) {
        auto fb = act_client->take_feedback(gid, mw::Micros(10u * 1000 * 1000));
        if (!fb) throw Error("feedback " + std::to_string(k) + " never arrived");
        if (arena.peek_u32(fb->root) != k)
          throw Error("feedback " + std::to_string(k) + " carried the wrong payload");
        msg::free_message(arena, *fb);
      }
      auto res = act_client->take_result(gid, mw::Micros(10u * 1000 * 1000));
      if (!res) throw Error("result never arrived");
      if (arena.peek_u32(res->root) != 99) throw Error("result carried the wrong payload");
      msg::free_message(arena, *res);
      if (auto extra = act_client->take_feedback(gid, mw::Micros(100000))) {
        msg::free_message(arena, *extra);
        throw Error("more than three feedbacks delivered");
      }
    } catch (const std::exception& e) {
      client_err = e.what();
    }
  });

  auto goal = act_server->take_goal(mw::Micros(10u * 1000 * 1000));
  if (!goal) {
    client_thread.join();
    why = "server never received the goal";
    return false;
  }
  msg::free_message(arena, goal->second);
  auto fb = msg::alloc_message(arena, reg, word);
  for (u32 k = 1; k <= 3; ++k) {
    arena.poke_u32(fb.root, k);
    act_server->publish_feedback(goal->first, fb);
  }
  arena.poke_u32(fb.root, 99);
  act_server->send_result(goal->first, fb);
  msg::free_message(arena, fb);
  client_thread.join();
  if (!client_err.empty()) {
    why = client_err;
    return false;
  }

  // The watcher is a plain subscriber: it must have seen exactly the three
  // feedback messages, tagged with the goal id.
  u32 seen = 0;
  while (auto env = watcher->take_envelope(mw::Micros(200000))) {
    ++seen;
    if (env->corr != goal_id_holder || arena.peek_u32(env->inst.root) != seen) {
      msg::free_message(arena, env->inst);
      why = "feedback topic carried unexpected traffic";
      return false;
    }
    msg::free_message(arena, env->inst);
  }
  if (seen != 3) {
    why = "feedback topic saw " + std::to_string(seen) + " message(s), expected 3";
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 5: two OS processes over loopback TCP play ping-pong across four
// payload sizes; zero loss, FIFO order, and round-trip medians that do not
// decrease as the payload grows.

u16 free_tcp_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ) {
    ::close(fd);
    throw Error("bind() failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const u16 port = ntohs(addr.sin_port);
  ::close(fd);
  return port;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path);
}

pid_t spawn(const std::vector<std::string>& argv, const std::string& stdout_path,
            const std::string& stderr_path) {
  const pid_t pid = ::fork();
  if (pid < 0) throw Error("fork() failed");
  if (pid == 0) {
    const int out = ::open(stdout_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    const int err = ::open(stderr_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (out >= 0) ::dup2(out, 1);
    if (err >= 0) ::dup2(err, 2);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execv(args[0], args.data());
    _exit(127);
  }
  return pid;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool criterion_two_process_roundtrip(std::string& why) {
  const auto t0 = Clock::now();
  const std::string cli = HWROS_CLI_PATH;
  const u16 port_echo = free_tcp_port();
  u16 port_probe = free_tcp_port();
  while (port_probe == port_echo) port_probe = free_tcp_port();

  const std::string echo_cfg = "/tmp/hwros_acc_echo.cfg";
  const std::string probe_cfg = "/tmp/hwros_acc_probe.cfg";
  write_file(echo_cfg,
             "[ResourceGroup@Echo]\n"
             "n = rosnode, \"echo\"\n"
             "m = rosmsg, bench_msgs, msg, Blob\n"
             "s = rossub, n, m, \"/send\", 200\n"
             "p = rospub, n, m, \"/recv\"\n"
             "\n"
             "[system]\n"
             "bind = 127.0.0.1:" + std::to_string(port_echo) + "\n"
             "behavior = echo, copy\n");
  write_file(probe_cfg,
             "[system]\n"
             "bind = 127.0.0.1:" + std::to_string(port_probe) + "\n"
             "peer = 127.0.0.1:" + std::to_string(port_echo) + "\n");

  const pid_t echo_pid = spawn({cli, "run", echo_cfg, "--duration", "240"},
                               "/tmp/hwros_acc_echo.out", "/tmp/hwros_acc_echo.err");
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  const pid_t probe_pid =
      spawn({cli, "bench", probe_cfg, "--json", "--iters", "50", "--sizes", "4B,8KiB,1MiB,6MiB"},
            "/tmp/hwros_acc_bench.json", "/tmp/hwros_acc_bench.err");

  int status = 0;
  ::waitpid(probe_pid, &status, 0);
  ::kill(echo_pid, SIGTERM);
  int echo_status = 0;
  ::waitpid(echo_pid, &echo_status, 0);

  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    why = "benchmark process failed: " + slurp("/tmp/hwros_acc_bench.err");
    return false;
  }
  nlohmann::json report;
  try {
    report = nlohmann::json::parse(slurp("/tmp/hwros_acc_bench.json"));
  } catch (const std::exception& e) {
    why = std::string("benchmark report is not valid JSON: ") + e.what();
    return false;
  }
  if (report.value("timed_out", true)) {
    why = "benchmark timed out";
    return false;
  }
  const auto& rows = report.at("rows");
  const std::vector<std::string> expect_sizes = {"4B", "8KiB", "1MiB", "6MiB"};
  if (rows.size() != 4) {
    why = "expected 4 report rows, got " + std::to_string(rows.size());
    return false;
  }
  double prev_median = 0;
  std::cout << "  size        iters    median [us]\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.at("size") != expect_sizes[i]) {
      why = "unexpected row order in the report";
      return false;
    }
    if (row.at("samples_us").size() != 50) {
      why = row.at("size").get<std::string>() + ": expected 50 samples, got " +
            std::to_string(row.at("samples_us").size());
      return false;
    }
    const double median = row.at("median_us").get<double>();
    std::cout << "  " << std::left << std::setw(12) << row.at("size").get<std::string>()
              << std::setw(9) << 50 << median << "\n";
    // Medians must not decrease with payload size, with generous slack for
    // scheduler jitter at the small end.
    if (median < prev_median * 0.5) {
      why = row.at("size").get<std::string>() + ": median decreased with payload size";
      return false;
    }
    prev_median = std::max(prev_median, median);
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (secs > 180) {
    why = "exceeded the 3-minute budget (" + std::to_string(secs) + "s)";
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 6: the reference configuration text parses to the exact object
// graph and survives a render/parse round trip unchanged.

const char* kGoldenConfig = R"(
[ResourceGroup@ResourceGroupSobel]
node_3 = rosnode, "Sobel"
filter_service_msg = rossrvmsg, application_msgs, srv, SobelSrv
filter_server = rossrvs, node_3, filter_service_msg, "sobelservice", 10000

[ResourceGroup@ResourceGroupDIP]
node_2 = rosnode, "DIP"
filter_service_msg = rossrvmsg, application_msgs, srv, SobelSrv
filter_client = rossrvc, node_2, filter_service_msg, "sobelservice", 10000
image_msg = rosmsg, sensor_msgs, msg, Image
sub = rossub, node_2, image_msg, "/image_raw", 10000
pub = rospub, node_2, image_msg, "/image_filtered"
)";

bool criterion_config_golden(std::string& why) {
  using app::DeclKind;
  using app::ResourceDecl;
  auto cfg = app::parse_config(kGoldenConfig);
  if (cfg.groups.size() != 2) {
    why = "expected 2 resource groups";
    return false;
  }
  const auto& sobel = cfg.groups[0];
  const auto& dip = cfg.groups[1];
  const std::vector<ResourceDecl> expect_sobel = {
      {"node_3", DeclKind::RosNode, {"\"Sobel\""}},
      {"filter_service_msg", DeclKind::RosSrvMsg, {"application_msgs", "srv", "SobelSrv"}},
      {"filter_server", DeclKind::RosSrvs,
       {"node_3", "filter_service_msg", "\"sobelservice\"", "10000"}},
  };
  const std::vector<ResourceDecl> expect_dip = {
      {"node_2", DeclKind::RosNode, {"\"DIP\""}},
      {"filter_service_msg", DeclKind::RosSrvMsg, {"application_msgs", "srv", "SobelSrv"}},
      {"filter_client", DeclKind::RosSrvc,
       {"node_2", "filter_service_msg", "\"sobelservice\"", "10000"}},
      {"image_msg", DeclKind::RosMsg, {"sensor_msgs", "msg", "Image"}},
      {"sub", DeclKind::RosSub, {"node_2", "image_msg", "\"/image_raw\"", "10000"}},
      {"pub", DeclKind::RosPub, {"node_2", "image_msg", "\"/image_filtered\""}},
  };
  if (sobel.name != "ResourceGroupSobel" || sobel.decls != expect_sobel) {
    why = "first group did not parse to the expected declarations";
    return false;
  }
  if (dip.name != "ResourceGroupDIP" || dip.decls != expect_dip) {
    why = "second group did not parse to the expected declarations";
    return false;
  }
  const std::string rendered = app::render_config(cfg);
  auto reparsed = app::parse_config(rendered);
  if (!(reparsed == cfg) || app::render_config(reparsed) != rendered) {
    why = "render/parse round trip is not stable";
    return false;
  }
  // The text must also instantiate: two nodes, one server endpoint and a
  // client + sub + pub, service endpoints sharing their types.
  app::System sys(std::move(cfg));
  if (sys.nodes().size() != 2 || sys.node("Sobel").endpoints.size() != 1 ||
      sys.node("DIP").endpoints.size() != 3) {
    why = "instantiated object graph has the wrong shape";
    return false;
  }
  auto server = sys.endpoint<mw::ServiceServer>("Sobel", "filter_server");
  auto client = sys.endpoint<mw::ServiceClient>("DIP", "filter_client");
  if (server->service() != "sobelservice" || client->service() != "sobelservice" ||
      !(server->request_type() == client->request_type())) {
    why = "service endpoints did not bind to the same service and types";
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 7: subscriber queues keep the newest N messages (drop-oldest),
// and a command-protocol violation faults only the offending thread.

bool criterion_queue_and_fault(std::string& why) {
  // --- keep-last queue vs. an interval oracle ---
  {
    TypeRegistry reg;
    app::register_builtin_types(reg);
    mem::Arena arena(64ull << 20);
    mw::Graph graph(arena, reg);
    const auto word = find_type(reg, "ik_msgs", "Packed");
    auto node = graph.create_node("n");
    std::mt19937 rng(77);
    for (int trial = 0; trial < 30; ++trial) {
      const u32 depth = 1 + rng() % 12;
      auto sub = graph.create_subscriber(node, "/q" + std::to_string(trial), word, depth, 500);
      auto p = graph.create_publisher(node, "/q" + std::to_string(trial), word);
      const u32 total = depth + rng() % 20;
      auto inst = msg::alloc_message(arena, reg, word);
      for (u32 v = 0; v < total; ++v) {
        arena.poke_u32(inst.root, v);
        graph.publish(*p, inst);
      }
      msg::free_message(arena, inst);
      // Oracle: with keep-last(depth) and no taker, exactly the final window
      // [total - depth, total) survives, oldest first.
      const u32 first_kept = total > depth ? total - depth : 0;
      for (u32 v = first_kept; v < total; ++v) {
        auto got = sub->take(mw::Micros(100000));
        if (!got || arena.peek_u32(got->root) != v) {
          if (got) msg::free_message(arena, *got);
          why = "queue contents diverged from the keep-last oracle";
          return false;
        }
        msg::free_message(arena, *got);
      }
      if (auto extra = sub->take(mw::Micros(20000))) {
        msg::free_message(arena, *extra);
        why = "queue held more than its depth";
        return false;
      }
    }
  }

  // --- protocol violation faults the thread, not the process ---
  TypeRegistry reg;
  app::register_builtin_types(reg);
  mem::Arena arena(64ull << 20);
  mw::Graph graph(arena, reg);
  hw::Runtime runtime(graph, 2);
  const auto word = find_type(reg, "ik_msgs", "Packed");

  auto bad_node = graph.create_node("bad");
  auto bad_pub = graph.create_publisher(bad_node, "/void", word);
  auto bad_msg = msg::alloc_message(arena, reg, word);
  const Addr bad_root = bad_msg.root;
  const u32 bad_id = runtime.start_hardware_thread(
      0, "bad", std::vector<hw::EndpointRef>{bad_pub}, [bad_root](hw::NodeApi& api) {
        api.pub_publish(0, bad_root);  // one well-formed command
        auto* port = dynamic_cast<hw::HwPort*>(&api);
        if (!port) throw Error("expected a hardware port");
        // Issue a command without collecting its response, then attempt a
        // second one: the one-outstanding-command rule must fault this thread.
        port->send_command_nowait(hw::OsifOp::Publish, 0, {bad_root});
        api.pub_publish(0, bad_root);
        throw Error("survived a command-protocol violation");
      });

  auto good_node = graph.create_node("good");
  auto gsub = graph.create_subscriber(good_node, "/a", word, 8, 200);
  auto gpub = graph.create_publisher(good_node, "/b", word);
  const u32 good_id = runtime.start_hardware_thread(
      1, "good", std::vector<hw::EndpointRef>{gsub, gpub}, [](hw::NodeApi& api) {
        for (;;) {
          const Addr in = api.sub_take(0);
          u32 v;
          api.mem_read(in, &v, 4);
          ++v;
          api.mem_write(in, &v, 4);
          api.pub_publish(1, in);
        }
      });

  const auto deadline = Clock::now() + std::chrono::seconds(10);
  while (!runtime.finished(bad_id)) {
    if (Clock::now() > deadline) {
      why = "offending thread never halted";
      return false;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (!runtime.faulted(bad_id) || runtime.error_of(bad_id).empty()) {
    why = "violation did not register as a thread fault: " + runtime.error_of(bad_id);
    return false;
  }

  // The process and the other thread keep working after the fault.
  auto driver = graph.create_node("driver");
  auto dpub = graph.create_publisher(driver, "/a", word);
  auto dsub = graph.create_subscriber(driver, "/b", word, 8, 200);
  auto m = msg::alloc_message(arena, reg, word);
  arena.poke_u32(m.root, 41);
  graph.publish(*dpub, m);
  msg::free_message(arena, m);
  auto got = dsub->take(mw::Micros(5u * 1000 * 1000));
  if (!got || arena.peek_u32(got->root) != 42 || runtime.faulted(good_id)) {
    if (got) msg::free_message(arena, *got);
    why = "healthy thread stopped working after the fault";
    return false;
  }
  msg::free_message(arena, *got);
  msg::free_message(arena, bad_msg);
  runtime.stop_all();
  return true;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    bool (*fn)(std::string&);
  };
  const Criterion criteria[] = {
      {"mapping-invariance", criterion_mapping_invariance},
      {"hardware-take-protocol-order", criterion_take_protocol},
      {"kernel-oracle-equivalence", criterion_kernel_oracles},
      {"service-and-action-semantics", criterion_service_action},
      {"two-process-round-trip", criterion_two_process_roundtrip},
      {"config-golden-roundtrip", criterion_config_golden},
      {"queue-policy-and-fault-isolation", criterion_queue_and_fault},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    std::string why;
    bool ok = false;
    try {
      ok = c.fn(why);
    } catch (const std::exception& e) {
      why = e.what();
    }
    std::cout << (ok ? "PASS" : "FAIL") << " " << c.name;
    if (!ok && !why.empty()) std::cout << ": " << why;
    std::cout << std::endl;
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
