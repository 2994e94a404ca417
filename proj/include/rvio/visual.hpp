#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rvio/state.hpp"

namespace rvio {

/// One feature measurement on the normalized image plane (z = 1).
struct FeatureObservation {
  std::uint64_t track_id = 0;
  std::uint64_t clone_id = 0;  // stable id of the clone taken at the image time
  Vec2 uv = Vec2::Zero();
};

enum class TrackStatus { kCandidate, kSlam, kMsckf, kDead };

struct Track {
  std::uint64_t track_id = 0;
  std::vector<FeatureObservation> observations;
  TrackStatus status = TrackStatus::kCandidate;
  double score = 0.0;
};

struct MeasurementNoise {
  double sigma_v = 0.0025;  // normalized image plane
  double sigma_r = 0.025;   // meters
};

struct VisualOptions {
  double behind_epsilon = 1e-6;
  double slam_gate_probability = 0.95;
  double msckf_gate_probability = 0.95;
  double min_parallax_rad = 0.002;
  int gauss_newton_iterations = 10;
  double semi_infinite_rho = 0.1;
  double semi_infinite_sigma_rho = 0.5;
};

/// Pinhole projection onto z = 1. Throws BehindCamera when z <= epsilon.
Vec2 project(const Vec3& point_cam, double epsilon = 1e-6);
Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& point_cam);

/// Upper chi-square quantile used by the Mahalanobis gates.
double chi_square_quantile(double probability, int dof);

/// Predicted measurement and dense 2 x dim Jacobian of SLAM feature `j`
/// observed from clone `i`.
struct VisualPrediction {
  Vec2 uv;
  Eigen::Matrix<double, 2, Eigen::Dynamic> h;
};
VisualPrediction predict_slam_observation(const FilterState& state, std::size_t j,
                                          std::size_t i, const VisualOptions& opts = {});

struct FeatureInnovation {
  std::uint64_t track_id = 0;
  Vec2 residual = Vec2::Zero();
  double mahalanobis_sq = 0.0;
  bool accepted = false;
};

struct SlamUpdateResult {
  std::vector<FeatureInnovation> innovations;
  UpdateStatus status = UpdateStatus::kApplied;
};

/// Stacked EKF update for observations of features already in the state.
/// Each feature is gated separately before stacking.
SlamUpdateResult slam_update(FilterState& state, std::span<const FeatureObservation> observations,
                             const MeasurementNoise& noise, const VisualOptions& opts = {},
                             Diagnostics* diag = nullptr);

enum class TriangulationStatus { kOk, kInsufficientBaseline, kDiverged, kTooShort };

struct Triangulation3d {
  TriangulationStatus status = TriangulationStatus::kTooShort;
  Vec3 point_w = Vec3::Zero();
  InverseDepthFeature feature;  // anchored on the newest observing clone
  double parallax_rad = 0.0;
};

/// Linear least-squares initialization refined by Gauss-Newton over the
/// inverse-depth parameters anchored on the newest observing clone.
Triangulation3d triangulate_track(const FilterState& state, const Track& track,
                                  const VisualOptions& opts = {});

/// Residuals and Jacobians of all live observations of a track w.r.t. the
/// error state (h_x) and the anchored inverse-depth parameters (h_f).
struct TrackLinearization {
  VecX residual;
  MatX h_x;
  MatX h_f;
};
TrackLinearization linearize_track(const FilterState& state, const Track& track,
                                   const InverseDepthFeature& feature);

/// Projects residual and Jacobian onto the left nullspace of h_f.
struct NullspaceProjection {
  VecX residual;
  MatX h;
  MatX h_f_projected;  // ~0, kept for verification
};
NullspaceProjection project_left_nullspace(const TrackLinearization& lin);

struct MsckfResult {
  std::size_t used = 0;
  std::size_t skipped_baseline = 0;
  std::size_t discarded = 0;
  std::size_t gated = 0;
  UpdateStatus status = UpdateStatus::kApplied;
};

MsckfResult msckf_update(FilterState& state, std::span<const Track> tracks,
                         const MeasurementNoise& noise, const VisualOptions& opts = {},
                         Diagnostics* diag = nullptr);

/// Adds a SLAM feature from a triangulated track: the nullspace part of the
/// track updates the state and the remaining part becomes the feature prior.
/// Returns false if triangulation fails.
bool initialize_slam_from_track(FilterState& state, const Track& track,
                                const MeasurementNoise& noise, const VisualOptions& opts = {},
                                Diagnostics* diag = nullptr);

/// Adds a SLAM feature anchored on the newest clone with a semi-infinite
/// depth prior.
void initialize_slam_semi_infinite(FilterState& state, std::uint64_t track_id, const Vec2& uv,
                                   const MeasurementNoise& noise, const VisualOptions& opts = {});

struct TrackManagerOptions {
  std::size_t max_slam = 27;
  int tiles_x = 4;
  int tiles_y = 3;
  Vec2 fov_half{0.8, 0.6};
  std::size_t min_msckf_length = 3;
  std::size_t min_slam_length = 4;
  std::size_t window_size = 4;
};

struct TrackAssignments {
  std::vector<std::uint64_t> slam;
  std::vector<std::uint64_t> msckf;
  std::vector<std::uint64_t> discard;
};

int tile_of(const Vec2& uv, const TrackManagerOptions& opts);

/// Sorts tracker output into SLAM initializations, MSCKF updates and
/// discards. `current_clone_id` identifies the latest frame; `slam_uv` holds
/// the latest image positions of features already in the state.
TrackAssignments manage_tracks(std::span<const Track> tracks, std::span<const Vec2> slam_uv,
                               std::uint64_t current_clone_id, const TrackManagerOptions& opts);

}  // namespace rvio
