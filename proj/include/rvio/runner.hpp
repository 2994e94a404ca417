#pragma once

// Scenario runner: simulation -> filter -> metrics -> CSV artifacts.
//
// Output directory of a run:
//   config.json   full configuration echo
//   truth.csv     t, p_x..z, v_x..z, q_w..z                       (one row per image)
//   estimate.csv  t, p_x..z, v_x..z, q_w..z, bg_x..z, ba_x..z, sigma_p_x..z
//   errors.csv    t, ep_x..z, ev_x..z, eth_x..z, ep_norm          (traverse-aligned frame)
//   metrics.csv   metric, value                                   (summary)
//   gates.csv     stamp, measured, true_range, outlier, verdict, predicted, innovation,
//                 innovation_variance, normalized_sq
//   report.txt    human-readable summary
//   sensors/      imu.csv, frames.csv, tracks.csv, range.csv when requested

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rvio/config.hpp"
#include "rvio/estimator.hpp"
#include "rvio/observability.hpp"
#include "rvio/sensor_log.hpp"

namespace rvio {

struct ErrorSample {
  double t = 0.0;
  Vec3 position = Vec3::Zero();  // estimate - truth, X along the traverse
  Vec3 velocity = Vec3::Zero();
  Vec3 attitude = Vec3::Zero();  // Log(R_true R_est^T), same frame
};

struct GateRecord {
  double stamp = 0.0;
  double measured = 0.0;
  double true_range = 0.0;
  bool outlier = false;
  bool enabled = true;
  RangeUpdateResult result;
};

struct StateRecord {
  double t = 0.0;
  InertialState truth;
  InertialState estimate;
  Vec3 sigma_p = Vec3::Zero();
};

struct RunMetrics {
  std::string name;
  Mode mode = Mode::kRangeVio;
  std::uint64_t seed = 0;
  std::uint32_t stream_checksum = 0;
  std::vector<StateRecord> states;
  std::vector<ErrorSample> errors;
  std::vector<GateRecord> gates;
  double distance = 0.0;                 // truth path length over the logged rows
  double max_position_error = 0.0;
  double final_position_error = 0.0;
  double max_error_percent = 0.0;        // NaN when distance is zero
  double final_error_percent = 0.0;
  double max_visual_innovation = 0.0;    // largest |SLAM residual| component
  double max_range_innovation = 0.0;     // largest |innovation| of accepted range updates
  Diagnostics diagnostics;
  double runtime_s = 0.0;
  bool diverged = false;
  std::string failure;
  std::optional<InertialState> last_good;
};

/// Scene, IMU, tracks and LRF streams for the configuration and its seed.
SensorStreams generate_streams(const ScenarioConfig& config);

EstimatorOptions estimator_options(const ScenarioConfig& config, Mode mode);

/// Runs the filter over the given streams. Never throws on divergence: the
/// run is marked failed and keeps the last good state.
RunMetrics run_filter(const ScenarioConfig& config, const SensorStreams& streams, Mode mode);

struct RunOptions {
  bool write_outputs = true;
  bool write_sensor_logs = false;
  std::optional<std::filesystem::path> replay_dir;  // read streams instead of simulating
};

/// Generates (or replays) streams, runs the configured mode and writes the
/// run directory into config.output_dir.
RunMetrics run_scenario(const ScenarioConfig& config, const RunOptions& opts = {});

struct Comparison {
  RunMetrics vio;
  RunMetrics range_vio;
  double ratio = 0.0;  // VIO max error / range-VIO max error
};

/// Both modes over byte-identical streams (checked by CRC before filtering).
/// Outputs go to <out>/vio and <out>/range_vio plus <out>/compare.csv.
Comparison compare_modes(const ScenarioConfig& config, const RunOptions& opts = {});

struct ObservabilityResult {
  NullspaceReport report;
  std::size_t features = 0;
  std::size_t range_rows = 0;
  std::size_t visual_rows = 0;
  bool scale_defined = false;  // N_s exists only for constant body acceleration
  bool scale_observable = false;
  std::string text;
};

/// Noise-free analysis of the configured trajectory and scene: stacked
/// visual (and, in range mode, facet) rows, nullspace and named directions.
ObservabilityResult run_observability(const ScenarioConfig& config, bool write_outputs = true);

struct SweepEntry {
  std::uint64_t seed = 0;
  std::optional<RunMetrics> vio;
  std::optional<RunMetrics> range_vio;
};

/// Runs `count` consecutive seeds starting at config.seed on `threads`
/// workers. Each seed gets its own subdirectory; a summary goes to sweep.csv.
std::vector<SweepEntry> sweep(const ScenarioConfig& config, std::size_t count,
                              std::size_t threads, const std::vector<Mode>& modes,
                              bool write_outputs = true);

std::string metrics_csv(const RunMetrics& m);
std::string report_text(const RunMetrics& m);
void write_run(const std::filesystem::path& dir, const ScenarioConfig& config,
               const RunMetrics& m);

}  // namespace rvio
