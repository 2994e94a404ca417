// Command-line front end: run, compare, observability, sweep.
// Exit codes: 0 success, 1 other error, 2 configuration error, 3 divergence.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "rvio/errors.hpp"
#include "rvio/runner.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kDiverged = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c, bool with_mode) {
  cmd->add_option("--config", c.config, "scenario JSON")->required();
  cmd->add_option("--seed", c.seed, "override the scenario seed");
  if (with_mode) {
    cmd->add_option("--mode", c.mode, "vio or range_vio")
        ->check(CLI::IsMember({"vio", "range_vio"}));
  }
  cmd->add_option("--out", c.out, "output directory");
}

rvio::ScenarioConfig resolve(const Common& c) {
  rvio::ScenarioConfig cfg = rvio::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.mode) cfg.mode = rvio::mode_from_string(*c.mode);
  if (c.out) cfg.output_dir = *c.out;
  rvio::validate(cfg);
  return cfg;
}

void print_summary(const rvio::RunMetrics& m) {
  std::printf("%-9s max %.4f m (%.3f%%)  final %.4f m  %s\n", rvio::to_string(m.mode),
              m.max_position_error, m.max_error_percent, m.final_position_error,
              m.diverged ? ("DIVERGED: " + m.failure).c_str() : "ok");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Range-aided visual-inertial odometry simulator and analysis harness"};
  app.require_subcommand(1);

  Common run_c, cmp_c, obs_c, sw_c;
  bool run_logs = false;
  std::optional<std::string> run_replay, cmp_replay;
  bool cmp_logs = false;
  std::size_t sw_count = 10;
  std::size_t sw_threads = std::max(1u, std::thread::hardware_concurrency());

  auto* run = app.add_subcommand("run", "run one scenario in the configured mode");
  add_common(run, run_c, true);
  run->add_flag("--sensor-logs", run_logs, "also write the sensor streams as CSV");
  run->add_option("--replay", run_replay, "read sensor streams from this directory");

  auto* cmp = app.add_subcommand("compare", "run VIO and range-VIO on identical streams");
  add_common(cmp, cmp_c, false);
  cmp->add_flag("--sensor-logs", cmp_logs, "also write the sensor streams as CSV");
  cmp->add_option("--replay", cmp_replay, "read sensor streams from this directory");

  auto* obs = app.add_subcommand("observability", "nullspace analysis of the configured trajectory");
  add_common(obs, obs_c, true);

  auto* sw = app.add_subcommand("sweep", "Monte-Carlo seed sweep");
  add_common(sw, sw_c, true);
  sw->add_option("--count", sw_count, "number of consecutive seeds")->check(CLI::PositiveNumber);
  sw->add_option("--threads", sw_threads, "worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      const rvio::ScenarioConfig cfg = resolve(run_c);
      rvio::RunOptions opts;
      opts.write_sensor_logs = run_logs;
      if (run_replay) opts.replay_dir = *run_replay;
      const rvio::RunMetrics m = rvio::run_scenario(cfg, opts);
      print_summary(m);
      return m.diverged ? kDiverged : kOk;
    }
    if (*cmp) {
      const rvio::ScenarioConfig cfg = resolve(cmp_c);
      rvio::RunOptions opts;
      opts.write_sensor_logs = cmp_logs;
      if (cmp_replay) opts.replay_dir = *cmp_replay;
      const rvio::Comparison c = rvio::compare_modes(cfg, opts);
      std::printf("stream checksum %08x (both modes)\n", c.vio.stream_checksum);
      print_summary(c.vio);
      print_summary(c.range_vio);
      std::printf("ratio vio/range_vio: %.3f\n", c.ratio);
      return c.vio.diverged || c.range_vio.diverged ? kDiverged : kOk;
    }
    if (*obs) {
      const rvio::ScenarioConfig cfg = resolve(obs_c);
      const rvio::ObservabilityResult r = rvio::run_observability(cfg);
      std::cout << r.text;
      return kOk;
    }
    if (*sw) {
      const rvio::ScenarioConfig cfg = resolve(sw_c);
      std::vector<rvio::Mode> modes{rvio::Mode::kVio, rvio::Mode::kRangeVio};
      if (sw_c.mode) modes = {cfg.mode};
      const auto entries = rvio::sweep(cfg, sw_count, sw_threads, modes);
      bool diverged = false;
      for (const auto& e : entries) {
        std::printf("seed %llu\n", static_cast<unsigned long long>(e.seed));
        for (const auto* m : {&e.vio, &e.range_vio}) {
          if (!*m) continue;
          std::printf("  ");
          print_summary(**m);
          diverged = diverged || (*m)->diverged;
        }
      }
      return diverged ? kDiverged : kOk;
    }
  } catch (const rvio::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const rvio::Divergence& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
