#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rvio/config.hpp"
#include "rvio/runner.hpp"

using namespace rvio;

namespace {

ScenarioConfig flat(double duration) {
  ScenarioConfig c;
  c.name = "flat";
  c.trajectory.duration = duration;
  c.trajectory.start_position = Vec3(0, 0, 11);
  return c;
}

ScenarioConfig noiseless(ScenarioConfig c) {
  c.rig.imu_noise = NoiseModel{};
  c.rig.measurement = MeasurementNoise{0.0, 0.0};
  c.rig.outlier_probability = 0.0;
  c.filter.sample_initial_error = false;
  return c;
}

}  // namespace

TEST_CASE("noiseless range-VIO stays on the truth") {
  const ScenarioConfig c = noiseless(flat(10.0));
  const SensorStreams s = generate_streams(c);
  const RunMetrics m = run_filter(c, s, Mode::kRangeVio);
  REQUIRE_FALSE(m.diverged);
  CHECK(m.max_visual_innovation < 1e-7);
  CHECK(m.max_range_innovation < 1e-7);
  int accepted = 0;
  for (const auto& g : m.gates) {
    CHECK(g.result.verdict != GateVerdict::kRejected);
    if (g.result.verdict == GateVerdict::kAccepted) {
      ++accepted;
      CHECK(std::abs(g.result.innovation) < 1e-7);
    }
  }
  CHECK(accepted > 100);
  CHECK(m.final_position_error < 1e-4);
}

TEST_CASE("runs are deterministic") {
  const ScenarioConfig c = flat(4.0);
  const SensorStreams s = generate_streams(c);
  const RunMetrics a = run_filter(c, s, Mode::kRangeVio);
  const RunMetrics b = run_filter(c, s, Mode::kRangeVio);
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    CHECK(a.states[i].estimate.p_w_i == b.states[i].estimate.p_w_i);
  }
  CHECK(metrics_csv(a) == metrics_csv(b));
  CHECK(stream_checksum(generate_streams(c)) == stream_checksum(s));
}

TEST_CASE("range-VIO beats VIO at constant velocity") {
  ScenarioConfig c = flat(20.0);
  c.output_dir = (std::filesystem::temp_directory_path() / "rvio_compare").string();
  std::filesystem::remove_all(c.output_dir);
  const Comparison cmp = compare_modes(c);
  CHECK(cmp.vio.stream_checksum == cmp.range_vio.stream_checksum);
  CHECK_FALSE(cmp.vio.diverged);
  CHECK_FALSE(cmp.range_vio.diverged);
  CHECK(cmp.range_vio.max_position_error < cmp.vio.max_position_error);
  CHECK(cmp.vio.diagnostics.range_accepted == 0);
  CHECK(std::filesystem::exists(std::filesystem::path(c.output_dir) / "compare.csv"));
  for (const char* f : {"config.json", "truth.csv", "estimate.csv", "errors.csv", "metrics.csv",
                        "gates.csv", "report.txt"}) {
    CHECK(std::filesystem::exists(std::filesystem::path(c.output_dir) / "range_vio" / f));
  }
  std::filesystem::remove_all(c.output_dir);
}

TEST_CASE("sensor logs replay to the same run") {
  ScenarioConfig c = flat(3.0);
  const auto dir = std::filesystem::temp_directory_path() / "rvio_replay";
  std::filesystem::remove_all(dir);
  c.output_dir = (dir / "live").string();
  RunOptions live;
  live.write_sensor_logs = true;
  const RunMetrics a = run_scenario(c, live);
  c.output_dir = (dir / "replayed").string();
  RunOptions replay;
  replay.replay_dir = dir / "live" / "sensors";
  const RunMetrics b = run_scenario(c, replay);
  CHECK(a.stream_checksum == b.stream_checksum);
  CHECK(a.final_position_error == b.final_position_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("constant velocity with range reports an observable scale") {
  ScenarioConfig c = flat(10.0);
  c.trajectory.start_position = Vec3(0, 0, 11);
  const ObservabilityResult r = run_observability(c, false);
  REQUIRE(r.scale_defined);
  CHECK(r.scale_observable);
  CHECK(r.text.find("scale: observable") != std::string::npos);

  c.mode = Mode::kVio;
  const ObservabilityResult v = run_observability(c, false);
  REQUIRE(v.scale_defined);
  CHECK_FALSE(v.scale_observable);
  CHECK(v.text.find("scale: unobservable") != std::string::npos);
}
