#pragma once

#include <cstdint>
#include <vector>

#include "rvio/imu.hpp"
#include "rvio/ranged_facet.hpp"
#include "rvio/scene.hpp"
#include "rvio/trajectory.hpp"
#include "rvio/visual.hpp"

namespace rvio {

struct ScriptedSpike {
  double time = 0.0;       // the first LRF sample at or after this time is hit
  double magnitude = 7.0;  // meters added to the true range
};

/// Nadir-looking camera on a body with x forward, z up: camera x = -body y,
/// camera y = -body x, camera z = -body z.
CameraExtrinsics nadir_camera();

struct SensorRig {
  double imu_rate = 250.0;
  double camera_rate = 30.0;
  double lrf_rate = 25.0;
  NoiseModel imu_noise{0.0013, 0.0083, 1.3e-5, 5.5e-5};
  MeasurementNoise measurement;
  CameraExtrinsics camera = nadir_camera();
  LrfExtrinsics lrf;
  Vec2 fov_half{0.8, 0.6};
  double min_depth = 0.2;
  double max_depth = 60.0;
  double max_range = 40.0;
  double outlier_probability = 0.002;
  double outlier_min = 2.0;
  double outlier_max = 10.0;
  std::vector<ScriptedSpike> spikes;
  std::size_t max_track_length = 0;  // 0: tracks live while visible
  double track_outlier_probability = 0.0;
  Vec3 gyro_bias{0.0, 0.0, 0.0};
  Vec3 accel_bias{0.0, 0.0, 0.0};
  Vec3 gravity_w{0.0, 0.0, -9.81};
};

struct ImuTruth {
  double stamp = 0.0;
  TruthSample pose;
  Vec3 b_g = Vec3::Zero();
  Vec3 b_a = Vec3::Zero();
};

struct ImuStream {
  std::vector<ImuSample> samples;  // instantaneous readings at each stamp
  std::vector<ImuTruth> truth;     // same length and stamps
};

/// Specific force and rate from the analytic profile, plus bias random walk
/// and white noise from a seeded generator. Zero densities give exact data.
ImuStream synth_imu(const TrajectoryProfile& profile, const SensorRig& rig, std::uint64_t seed);

struct SimObservation {
  std::uint64_t track_id = 0;
  std::uint64_t landmark_id = 0;
  Vec2 uv = Vec2::Zero();
  double score = 0.0;
  bool outlier = false;
};

struct TrackFrame {
  double stamp = 0.0;
  std::vector<SimObservation> observations;
};

/// Camera-rate observations with frustum and occlusion checks. A landmark
/// keeps its track id while visible in consecutive frames (and, if set,
/// until max_track_length observations), otherwise it starts a new track.
std::vector<TrackFrame> synth_tracks(const TrajectoryProfile& profile, const Scene& scene,
                                     const SensorRig& rig, std::uint64_t seed);

struct RangeRecord {
  RangeSample sample;
  double true_range = 0.0;
  Vec3 hit = Vec3::Zero();
  bool outlier = false;
};

/// Nearest ray-mesh hit along the LRF axis plus noise and outliers. Samples
/// whose ray misses the mesh or exceeds max_range are dropped.
std::vector<RangeRecord> synth_range(const TrajectoryProfile& profile, const Scene& scene,
                                     const SensorRig& rig, std::uint64_t seed);

/// True camera pose at time t.
CameraPoseClone true_camera_pose(const TrajectoryProfile& profile, const SensorRig& rig, double t);

/// Number of samples of a stream at `rate` over the profile duration.
std::size_t sample_count(double duration, double rate);

}  // namespace rvio
