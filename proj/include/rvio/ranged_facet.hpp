#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "rvio/delaunay.hpp"
#include "rvio/state.hpp"
#include "rvio/visual.hpp"

namespace rvio {

struct RangeSample {
  double range_m = 0.0;
  double stamp = 0.0;
};

/// LRF optical axis in the camera frame. The LRF origin coincides with the
/// camera optical center.
struct LrfExtrinsics {
  Vec3 u_r_cam{0.0, 0.0, 1.0};
};

struct FacetOptions {
  double max_range = 40.0;
  double degeneracy_epsilon = 1e-6;
  double min_facet_angle_rad = 2.0 * 3.14159265358979323846 / 180.0;
  double gate_sigma = 2.0;
  Vec2 fov_half{0.8, 0.6};
  double behind_epsilon = 1e-6;
};

/// Three SLAM features bounding the LRF hit. f2 is the vertex with the
/// smallest track id; f1 and f3 follow in increasing id.
struct Facet {
  std::array<std::size_t, 3> feature_index{};  // F1, F2, F3 into FilterState::features
  std::array<std::uint64_t, 3> track_ids{};
  Vec3 p_f1 = Vec3::Zero();
  Vec3 p_f2 = Vec3::Zero();
  Vec3 p_f3 = Vec3::Zero();
  Vec3 n_w = Vec3::Zero();  // (p_F1 - p_F2) x (p_F3 - p_F2), not unit
  double a = 0.0;           // (p_F2 - p_c) . n
  double b = 0.0;           // u_r . n
};

/// n = (p1 - p2) x (p3 - p2)
Vec3 facet_normal(const Vec3& p1, const Vec3& p2, const Vec3& p3);

enum class RangeStatus { kOk, kNoFacet, kDegenerate, kNegative };

struct RangeGeometry {
  RangeStatus status = RangeStatus::kOk;
  double range = 0.0;
  double a = 0.0;
  double b = 0.0;
  Vec3 n_w = Vec3::Zero();
};

/// h_r = ((p_F2 - p_c) . n) / (u_r . n) for world-frame ray origin p_c and
/// unit direction u_w.
RangeGeometry facet_range(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p_c,
                          const Vec3& u_w, double epsilon = 1e-6);

/// Gradients of h_r with respect to the ray origin, the ray direction and the
/// three vertices.
struct RangeGradients {
  Eigen::RowVector3d d_origin;
  Eigen::RowVector3d d_direction;
  Eigen::RowVector3d d_f1;
  Eigen::RowVector3d d_f2;
  Eigen::RowVector3d d_f3;
};
RangeGradients facet_range_gradients(const Vec3& p1, const Vec3& p2, const Vec3& p3,
                                     const Vec3& p_c, const Vec3& u_w);

/// Builds a facet from three state features, ordering vertices by track id.
/// Vertex positions and a, b are evaluated at the current estimate.
Facet make_facet(const FilterState& state, std::array<std::size_t, 3> features,
                 const CameraExtrinsics& cam_ext, const LrfExtrinsics& lrf);

/// Image-space Delaunay over the visible SLAM features of the current camera
/// pose and the triangle containing the LRF ray.
struct FacetSearch {
  RangeStatus status = RangeStatus::kNoFacet;
  std::optional<Facet> facet;
  std::optional<Triangulation> triangulation;
  std::vector<std::size_t> vertex_features;  // triangulation vertex -> feature index
};
FacetSearch find_ranged_facet(const FilterState& state, const CameraExtrinsics& cam_ext,
                              const LrfExtrinsics& lrf, const FacetOptions& opts = {});

/// Predicted range for the facet from the current IMU-propagated camera pose.
RangeGeometry predict_range(const FilterState& state, const Facet& facet,
                            const CameraExtrinsics& cam_ext, const LrfExtrinsics& lrf,
                            const FacetOptions& opts = {});

/// 1 x dim Jacobian of the predicted range. Non-zero blocks: IMU position
/// and attitude, the three facet features and their anchor clones.
Eigen::RowVectorXd range_jacobian(const FilterState& state, const Facet& facet,
                                  const CameraExtrinsics& cam_ext, const LrfExtrinsics& lrf);

enum class GateVerdict { kAccepted, kRejected, kNoFacet, kDegenerate, kNegative, kNumerical };

const char* to_string(GateVerdict v);

struct RangeUpdateResult {
  GateVerdict verdict = GateVerdict::kNoFacet;
  double predicted = 0.0;
  double innovation = 0.0;
  double innovation_variance = 0.0;
  double normalized_sq = 0.0;  // innovation^2 / S
  std::array<std::uint64_t, 3> facet_tracks{};
};

/// Scalar EKF range update with a gamma-sigma Mahalanobis gate
/// (innovation^2 / S <= gamma^2 passes).
RangeUpdateResult range_update(FilterState& state, const RangeSample& sample,
                               const CameraExtrinsics& cam_ext, const LrfExtrinsics& lrf,
                               const MeasurementNoise& noise, const FacetOptions& opts = {},
                               Diagnostics* diag = nullptr);

}  // namespace rvio
