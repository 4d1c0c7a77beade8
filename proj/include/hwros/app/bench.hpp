#pragma once

#include <algorithm>
#include <iomanip>
#include <random>

#include <json.hpp>

#include "hwros/app/system.hpp"

namespace hwros::app {

using mw::Micros;

/// "4B", "8KiB", "1MiB", "512" (plain bytes) -> byte count.
inline u64 parse_size(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == 0) throw ConfigError("bad size '" + s + "'");
  const u64 n = std::stoull(s.substr(0, i));
  const std::string unit = s.substr(i);
  if (unit.empty() || unit == "B") return n;
  if (unit == "KiB") return n << 10;
  if (unit == "MiB") return n << 20;
  if (unit == "GiB") return n << 30;
  throw ConfigError("bad size unit '" + unit + "' in '" + s + "'");
}

struct BenchRow {
  std::string size_label;
  u64 size_bytes = 0;
  std::vector<double> samples_us;  // per-iteration round-trip times
  double median_us = 0;
  std::optional<double> speedup;  // round-trip time ratio vs a baseline run
};

struct BenchReport {
  std::vector<BenchRow> rows;
  bool timed_out = false;

  std::string table() const {
    std::ostringstream os;
    os << std::left << std::setw(10) << "size" << std::right << std::setw(8) << "iters"
       << std::setw(16) << "median [us]";
    const bool have_speedup =
        std::any_of(rows.begin(), rows.end(), [](const BenchRow& r) { return r.speedup.has_value(); });
    if (have_speedup) os << std::setw(10) << "S_round";
    os << "\n";
    for (const auto& r : rows) {
      os << std::left << std::setw(10) << r.size_label << std::right << std::setw(8)
         << r.samples_us.size() << std::setw(16) << std::fixed << std::setprecision(1)
         << r.median_us;
      if (have_speedup) {
        if (r.speedup)
          os << std::setw(10) << std::setprecision(2) << *r.speedup;
        else
          os << std::setw(10) << "-";
      }
      os << "\n";
    }
    if (timed_out) os << "(benchmark timed out; partial results)\n";
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json row{{"size", r.size_label},
                         {"samples_us", r.samples_us},
                         {"median_us", r.median_us}};
      if (r.speedup) row["speedup"] = *r.speedup;
      out.push_back(std::move(row));
    }
    return nlohmann::json{{"rows", out}, {"timed_out", timed_out}};
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

struct BenchOptions {
  std::vector<std::string> sizes = {"4B", "8KiB", "1MiB", "6MiB"};
  u32 iters = 50;
  Micros per_size_timeout = Micros(120u * 1000 * 1000);
  std::string send_topic = "/send";
  std::string recv_topic = "/recv";
};

/// Round-trip benchmark: a probe node publishes a blob on the send topic and
/// waits for the echoed blob on the receive topic; some node (local or on a
/// peer process) must republish byte-identically. Verifies zero loss, FIFO
/// order and payload integrity while timing each round trip.
inline BenchReport run_benchmark(System& sys, const BenchOptions& opt) {
  auto& graph = sys.graph();
  auto& reg = sys.registry();
  auto& arena = sys.arena();
  const auto blob = reg.find("bench_msgs", msg::TypeKind::Msg, "Blob");
  if (!blob) throw ConfigError("bench blob type is not registered");
  const u32 seq_off = reg.offset_of(*blob, "seq");
  const u32 data_off = reg.offset_of(*blob, "data");

  auto node = graph.create_node("bench_probe");
  auto pub = graph.create_publisher(node, opt.send_topic, *blob);
  auto sub = graph.create_subscriber(node, opt.recv_topic, *blob, 8, 200);
  if (auto* t = sys.transport()) t->reannounce();

  // Wait for the echo path: someone must be subscribed to the send topic.
  const auto wait_deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
  while (graph.local_subscriber_count(opt.send_topic) == 0 &&
         !graph.topic_has_remote_subscriber(opt.send_topic)) {
    if (std::chrono::steady_clock::now() > wait_deadline)
      throw Error("bench: no subscriber appeared on " + opt.send_topic);
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }

  std::mt19937 rng(12345);
  BenchReport report;
  u32 seq = 1;
  for (const auto& label : opt.sizes) {
    BenchRow row;
    row.size_label = label;
    row.size_bytes = parse_size(label);
    if (row.size_bytes + 64 > graph.max_message_size())
      throw ConfigError("bench size " + label + " exceeds the message size limit");
    auto out = msg::alloc_message(arena, reg, *blob,
                                  {{"data", static_cast<u32>(row.size_bytes)}});
    Bytes payload(row.size_bytes);
    const Addr out_data = arena.peek_u32(out.root + data_off + msg::kSeqDataOffset);
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::microseconds(opt.per_size_timeout.count());
    for (u32 it = 0; it < opt.iters; ++it, ++seq) {
      for (auto& b : payload) b = static_cast<u8>(rng());
      arena.poke_u32(out.root + seq_off, seq);
      if (!payload.empty()) arena.poke(out_data, payload.data(), payload.size());
      arena.poke_u32(out.root + data_off + msg::kSeqSizeOffset,
                     static_cast<u32>(payload.size()));
      const u64 t0 = now_us();
      graph.publish(*pub, out);
      std::optional<msg::MessageInstance> echoed;
      while (!echoed) {
        if (std::chrono::steady_clock::now() > deadline) break;
        echoed = sub->take(Micros(100000));
      }
      if (!echoed) {
        report.timed_out = true;
        break;
      }
      row.samples_us.push_back(static_cast<double>(now_us() - t0));
      // Zero loss + FIFO: the echo must carry exactly this iteration's
      // counter; integrity: the payload must be byte-identical.
      const u32 got_seq = arena.peek_u32(echoed->root + seq_off);
      const u32 got_n = arena.peek_u32(echoed->root + data_off + msg::kSeqSizeOffset);
      Bytes got(got_n);
      if (got_n)
        arena.peek(arena.peek_u32(echoed->root + data_off + msg::kSeqDataOffset), got.data(),
                   got_n);
      msg::free_message(arena, *echoed);
      if (got_seq != seq) throw Error("bench: echo out of order or lost (seq mismatch)");
      if (got != payload) throw Error("bench: echo payload corrupted");
    }
    msg::free_message(arena, out);
    row.median_us = median_of(row.samples_us);
    report.rows.push_back(std::move(row));
    if (report.timed_out) break;
  }
  return report;
}

/// Attaches round-trip speedup columns: baseline median / this median.
inline void apply_baseline(BenchReport& report, const BenchReport& baseline) {
  for (auto& row : report.rows) {
    for (const auto& b : baseline.rows) {
      if (b.size_label == row.size_label && row.median_us > 0)
        row.speedup = b.median_us / row.median_us;
    }
  }
}

}  // namespace hwros::app
