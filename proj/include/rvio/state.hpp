#pragma once

// Filter state layout, rotation conventions and covariance bookkeeping.
//
// Conventions used throughout the library:
//  * Quaternions are Hamilton, scalar first. A quaternion q_w_x stores the
//    rotation of frame x with respect to the world, so q.toRotationMatrix()
//    maps x-frame coordinates into the world. C(q) is its transpose and maps
//    world coordinates into frame x.
//  * Attitude errors are 3-vectors applied on the left in the world frame:
//    R_true = Exp(dtheta) * R_est.
//  * Error state = [dp dv dtheta dbg dba | (dp_c dtheta_c) x clones |
//    (dalpha dbeta drho) x features].

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "rvio/so3.hpp"

namespace rvio {

struct Diagnostics {
  int quaternion_normalizations = 0;
  int skipped_updates = 0;
  int gated_visual = 0;
  int msckf_skipped_baseline = 0;
  int msckf_discarded = 0;
  int range_accepted = 0;
  int range_rejected = 0;
  int range_no_facet = 0;
  int range_degenerate = 0;
  int range_negative = 0;
  int numerical_faults = 0;
};

/// C(q): world -> body rotation for a unit quaternion q_w_body.
/// A quaternion further than 1e-6 from unit norm is normalized first and the
/// event is counted in `diag`.
Mat3 quat_to_rotation(const Quaternion& q, Diagnostics* diag = nullptr);

struct InertialState {
  Vec3 p_w_i = Vec3::Zero();
  Vec3 v_w_i = Vec3::Zero();
  Quaternion q_w_i = Quaternion::Identity();
  Vec3 b_g = Vec3::Zero();
  Vec3 b_a = Vec3::Zero();
  double stamp = 0.0;

  Mat3 rot_body_to_world() const { return q_w_i.toRotationMatrix(); }
};

struct CameraPoseClone {
  Vec3 p_w_c = Vec3::Zero();
  Quaternion q_w_c = Quaternion::Identity();
  double stamp = 0.0;
  std::uint64_t id = 0;

  Mat3 rot_cam_to_world() const { return q_w_c.toRotationMatrix(); }
};

struct InverseDepthFeature {
  double alpha = 0.0;
  double beta = 0.0;
  double rho = 0.0;
  std::size_t anchor_index = 0;
  std::uint64_t track_id = 0;

  Vec3 params() const { return {alpha, beta, rho}; }
};

/// Camera pose in the IMU frame: R_i_c maps camera coordinates into the IMU
/// frame, p_i_c is the camera optical center in the IMU frame.
struct CameraExtrinsics {
  Quaternion q_i_c = Quaternion::Identity();
  Vec3 p_i_c = Vec3::Zero();
};

struct WorldConstants {
  Vec3 gravity_w{0.0, 0.0, -9.81};
  double dt = 1.0 / 250.0;
};

struct FilterState {
  static constexpr int kInertialDim = 15;
  static constexpr int kP = 0;
  static constexpr int kV = 3;
  static constexpr int kTheta = 6;
  static constexpr int kBg = 9;
  static constexpr int kBa = 12;
  static constexpr int kCloneDim = 6;
  static constexpr int kFeatureDim = 3;

  InertialState inertial;
  std::vector<CameraPoseClone> clones;
  std::vector<InverseDepthFeature> features;
  MatX cov = MatX::Identity(kInertialDim, kInertialDim);
  std::uint64_t next_clone_id = 0;

  int dim() const {
    return kInertialDim + kCloneDim * static_cast<int>(clones.size()) +
           kFeatureDim * static_cast<int>(features.size());
  }
  int clone_offset(std::size_t i) const {
    return kInertialDim + kCloneDim * static_cast<int>(i);
  }
  int feature_offset(std::size_t j) const {
    return kInertialDim + kCloneDim * static_cast<int>(clones.size()) +
           kFeatureDim * static_cast<int>(j);
  }
  std::optional<std::size_t> clone_index_by_id(std::uint64_t id) const;
  std::optional<std::size_t> feature_index_by_track(std::uint64_t track_id) const;
};

CameraPoseClone camera_pose(const InertialState& x, const CameraExtrinsics& ext);

/// World position of an inverse-depth feature expressed in its anchor frame.
Vec3 feature_world_position(const InverseDepthFeature& f, const CameraPoseClone& anchor,
                            double rho_epsilon = 1e-8);

/// Feature coordinates in the frame of `cam`:
///   C(q_w_c) * (p_w_a + C(q_w_a)^T [alpha beta 1]^T / rho - p_w_c)
/// Throws FeatureAtInfinity when |rho| < rho_epsilon.
Vec3 inverse_depth_to_cartesian(const InverseDepthFeature& f, const CameraPoseClone& anchor,
                                const CameraPoseClone& cam, double rho_epsilon = 1e-8);

struct CloneResult {
  std::optional<std::uint64_t> dropped_clone_id;
  std::size_t reanchored_features = 0;
  std::size_t removed_features = 0;  // could not be re-anchored
};

/// Appends a stochastic clone of the current camera pose and augments the
/// covariance with its Jacobian. When the window would exceed `max_clones`,
/// the oldest clone not anchoring a live feature is marginalized; if every
/// clone anchors a feature, features of the oldest clone are re-anchored on
/// the newest clone first (features that fail re-anchoring are removed). Throws StaleStamp if `stamp` is not strictly newer
/// than the newest clone.
CloneResult clone_pose(FilterState& state, double stamp, const CameraExtrinsics& ext,
                       std::size_t max_clones);

void marginalize_clone(FilterState& state, std::size_t index);
void remove_feature(FilterState& state, std::size_t index);

/// Re-expresses feature `j` relative to clone `new_anchor` with a
/// first-order covariance transform.
void reanchor_feature(FilterState& state, std::size_t j, std::size_t new_anchor);

/// Injects an error-state correction into the nominal state.
void apply_correction(FilterState& state, const VecX& dx);

/// cov <- (cov + cov^T)/2, diagonal floored at `floor`.
void enforce_symmetry(MatX& cov, double floor = 1e-12);

/// Inserts a new block of `rows` rows/cols at `offset` with the given cross
/// covariance and block covariance.
void insert_covariance_block(MatX& cov, int offset, const MatX& cross, const MatX& block);
void erase_covariance_block(MatX& cov, int offset, int size);

enum class UpdateStatus { kApplied, kGated, kSingular };

/// Standard EKF update with dense Jacobian H (rows x dim), residual r and
/// noise covariance R.
UpdateStatus ekf_update(FilterState& state, const MatX& h, const VecX& r, const MatX& noise);

}  // namespace rvio
