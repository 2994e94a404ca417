#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "rvio/errors.hpp"
#include "rvio/imu.hpp"
#include "rvio/ranged_facet.hpp"
#include "rvio/state.hpp"
#include "rvio/visual.hpp"

namespace rvio {

/// Thrown when the filter state stops being finite.
class Divergence : public Error {
 public:
  using Error::Error;
};

struct EstimatorOptions {
  bool use_range = true;
  std::size_t max_clones = 4;
  TrackManagerOptions tracks;
  VisualOptions visual;
  FacetOptions facet;
  MeasurementNoise noise;
  NoiseModel imu_noise;
  WorldConstants world;
  CameraExtrinsics camera;
  LrfExtrinsics lrf;
  bool semi_infinite_init = true;
};

struct FrameObservation {
  std::uint64_t track_id = 0;
  Vec2 uv = Vec2::Zero();
  double score = 0.0;
};

struct FrameReport {
  double stamp = 0.0;
  std::size_t slam_observed = 0;
  std::size_t slam_initialized = 0;
  std::size_t semi_infinite = 0;
  std::size_t msckf_used = 0;
  std::size_t features_removed = 0;
  double max_innovation = 0.0;  // largest |SLAM residual| component this frame
  double nis_sum = 0.0;         // sum of SLAM Mahalanobis distances (2 dof each)
  std::size_t nis_count = 0;
};

struct RangeReport {
  double stamp = 0.0;
  double measured = 0.0;
  RangeUpdateResult result;
};

/// Filter engine. IMU readings are instantaneous samples; each propagation
/// interval uses the mean of the readings at its two ends, linearly
/// interpolated when an image or range sample falls between IMU stamps.
///
/// Per image: propagate, clone, SLAM update, track bookkeeping, track
/// management, SLAM initialization, MSCKF update, removal of SLAM features
/// that were not observed.
class Estimator {
 public:
  Estimator(const EstimatorOptions& opts, const InertialState& initial, const MatX& initial_cov,
            const ImuSample& first_sample);

  /// Buffers the next IMU reading. Events up to its stamp may follow.
  void add_imu(const ImuSample& sample);
  /// Propagates to the newest buffered IMU reading.
  void catch_up();

  FrameReport process_frame(double stamp, std::span<const FrameObservation> observations);
  RangeReport process_range(const RangeSample& sample);

  const FilterState& state() const { return state_; }
  const Diagnostics& diagnostics() const { return diag_; }
  const EstimatorOptions& options() const { return opts_; }
  std::size_t live_tracks() const { return tracks_.size(); }

 private:
  void propagate_to(double t);
  ImuSample reading_at(double t) const;
  void check_finite(const char* where) const;

  EstimatorOptions opts_;
  FilterState state_;
  Diagnostics diag_;
  ImuSample last_raw_;
  std::optional<ImuSample> next_raw_;
  std::map<std::uint64_t, Track> tracks_;
};

}  // namespace rvio
