#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "rvio/imu.hpp"
#include "rvio/scene.hpp"
#include "rvio/sensors.hpp"
#include "rvio/trajectory.hpp"
#include "rvio/visual.hpp"

namespace rvio {

enum class Mode { kVio, kRangeVio };

Mode mode_from_string(const std::string& s);
const char* to_string(Mode m);

/// 1-sigma initial uncertainty of the filter.
struct InitialUncertainty {
  double position = 1e-3;
  double velocity = 0.05;
  double attitude = 2e-3;
  double gyro_bias = 1e-3;
  double accel_bias = 1e-2;
};

struct FilterSettings {
  std::size_t max_clones = 4;
  std::size_t max_slam = 27;
  double gate_sigma = 2.0;
  double visual_gate_probability = 0.95;
  NoiseModel imu_noise{0.0013, 0.0083, 1.3e-5, 5.5e-5};
  MeasurementNoise measurement;
  InitialUncertainty initial;
  bool sample_initial_error = true;  // draw the initial velocity error from the prior
  double scale_init = 1.0;           // initial velocity multiplied by this factor
  double min_parallax_deg = 0.2;
  double semi_infinite_rho = 0.1;
  double semi_infinite_sigma_rho = 0.5;
  bool semi_infinite_init = true;    // allow depth-less SLAM initialization
  int tiles_x = 4;
  int tiles_y = 3;
  std::size_t min_msckf_length = 3;
  std::size_t min_slam_length = 4;
  double min_facet_angle_deg = 2.0;
};

struct ObservabilitySettings {
  std::size_t stride = 125;        // IMU steps between analysed rows
  std::size_t max_features = 60;   // landmarks kept in the analysis state
  std::size_t min_views = 3;       // analysed steps a landmark must be seen in
  double tolerance = 1e-8;
  double direction_tolerance = 1e-6;
};

struct ScenarioConfig {
  std::string name = "scenario";
  Mode mode = Mode::kRangeVio;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  SceneParams scene;
  TrajectoryProfile trajectory;
  SensorRig rig;
  FilterSettings filter;
  ObservabilitySettings observability;
};

/// Parses a JSON scenario. Unknown keys, wrong types and invariant
/// violations throw ConfigError.
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Full JSON echo including defaulted fields.
std::string config_to_json(const ScenarioConfig& config);

/// Throws ConfigError when the configuration is unusable.
void validate(const ScenarioConfig& config);

}  // namespace rvio
