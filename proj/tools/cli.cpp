// Command-line front end: validate a config, run a system, or benchmark
// round-trip latency. Exit codes: 0 success, 1 configuration error,
// 2 runtime fault, 3 benchmark timeout.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "hwros/app/bench.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted.store(true); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw hwros::ConfigError("cannot open config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// "node=sw", "node=hw" or "node=hw:3"
void apply_map_override(hwros::app::ProjectConfig& cfg, const std::string& spec) {
  const auto eq = spec.rfind('=');
  if (eq == std::string::npos) throw hwros::ConfigError("--map expects node=sw|hw[:slot]");
  const std::string node = spec.substr(0, eq);
  std::string rhs = spec.substr(eq + 1);
  auto& ns = cfg.nodes[node];
  std::optional<hwros::u32> slot;
  if (const auto colon = rhs.find(':'); colon != std::string::npos) {
    slot = static_cast<hwros::u32>(std::stoul(rhs.substr(colon + 1)));
    rhs = rhs.substr(0, colon);
  }
  if (rhs == "sw") {
    ns.mapping = hwros::app::MappingChoice::Software;
    ns.slot.reset();
  } else if (rhs == "hw") {
    ns.mapping = hwros::app::MappingChoice::Hardware;
    ns.slot = slot;
  } else {
    throw hwros::ConfigError("--map mapping must be sw or hw");
  }
}

int cmd_check(const std::string& config_path) {
  auto cfg = hwros::app::parse_config(read_file(config_path));
  hwros::app::System sys(std::move(cfg));
  std::cout << "config ok: " << sys.nodes().size() << " node(s), "
            << sys.config().groups.size() << " resource group(s)\n";
  for (const auto& [name, rec] : sys.nodes()) {
    std::cout << "  node " << name << " ["
              << (rec.mapping == hwros::app::MappingChoice::Hardware ? "hw" : "sw") << "] "
              << rec.endpoints.size() << " endpoint(s)";
    if (!rec.behavior.empty()) std::cout << " behavior=" << rec.behavior;
    std::cout << "\n";
  }
  return 0;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& maps,
            double duration_s) {
  auto cfg = hwros::app::parse_config(read_file(config_path));
  for (const auto& m : maps) apply_map_override(cfg, m);
  hwros::app::System sys(std::move(cfg));
  sys.start();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto start = std::chrono::steady_clock::now();
  for (;;) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (g_interrupted.load()) break;
    if (sys.runtime().any_fault()) {
      sys.stop();
      std::cerr << "runtime fault detected\n";
      return 2;
    }
    if (duration_s > 0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >=
            duration_s)
      break;
  }
  sys.stop();
  return sys.runtime().any_fault() ? 2 : 0;
}

int cmd_bench(const std::string& config_path, const std::vector<std::string>& sizes,
              hwros::u32 iters, bool as_json, double timeout_s) {
  auto cfg = hwros::app::parse_config(read_file(config_path));
  hwros::app::BenchOptions opt;
  opt.sizes = sizes.empty() ? cfg.bench_sizes : sizes;
  opt.iters = iters ? iters : cfg.bench_iterations;
  if (timeout_s > 0)
    opt.per_size_timeout = hwros::mw::Micros(static_cast<hwros::i64>(timeout_s * 1e6));
  hwros::app::System sys(std::move(cfg));
  sys.start();
  auto report = hwros::app::run_benchmark(sys, opt);
  sys.stop();
  if (as_json)
    std::cout << report.to_json().dump(2) << "\n";
  else
    std::cout << report.table();
  return report.timed_out ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reconfigurable node-graph middleware runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> maps;
  double duration_s = 0;

  auto* check = app.add_subcommand("check", "validate a configuration file");
  check->add_option("config", config_path)->required();

  auto* run = app.add_subcommand("run", "instantiate and run a system");
  run->add_option("config", config_path)->required();
  run->add_option("--map", maps, "override a node mapping: node=sw|hw[:slot]");
  run->add_option("--duration", duration_s, "seconds to run (0 = until interrupted)");

  std::string sizes_csv;
  hwros::u32 iters = 0;
  bool as_json = false;
  double bench_timeout_s = 0;
  auto* bench = app.add_subcommand("bench", "round-trip latency benchmark");
  bench->add_option("config", config_path)->required();
  bench->add_option("--sizes", sizes_csv, "comma-separated payload sizes, e.g. 4B,8KiB,1MiB,6MiB");
  bench->add_option("--iters", iters, "iterations per size");
  bench->add_option("--timeout", bench_timeout_s, "per-size timeout in seconds");
  bench->add_flag("--json", as_json, "emit the report as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (check->parsed()) return cmd_check(config_path);
    if (run->parsed()) return cmd_run(config_path, maps, duration_s);
    std::vector<std::string> sizes;
    if (!sizes_csv.empty()) {
      std::istringstream ss(sizes_csv);
      std::string tok;
      while (std::getline(ss, tok, ',')) sizes.push_back(tok);
    }
    return cmd_bench(config_path, sizes, iters, as_json, bench_timeout_s);
  } catch (const hwros::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
