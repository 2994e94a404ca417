#include "rvio/ranged_facet.hpp"

#include <algorithm>
#include <cmath>

namespace rvio {

Vec3 facet_normal(const Vec3& p1, const Vec3& p2, const Vec3& p3) {
  return (p1 - p2).cross(p3 - p2);
}

RangeGeometry facet_range(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p_c,
                          const Vec3& u_w, double epsilon) {
  RangeGeometry g;
  g.n_w = facet_normal(p1, p2, p3);
  g.a = (p2 - p_c).dot(g.n_w);
  g.b = u_w.dot(g.n_w);
  if (std::abs(g.b) <= epsilon) {
    g.status = RangeStatus::kDegenerate;
    return g;
  }
  g.range = g.a / g.b;
  if (!(g.range > 0.0)) g.status = RangeStatus::kNegative;
  return g;
}

RangeGradients facet_range_gradients(const Vec3& p1, const Vec3& p2, const Vec3& p3,
                                     const Vec3& p_c, const Vec3& u_w) {
  const Vec3 n = facet_normal(p1, p2, p3);
  const double b = u_w.dot(n);
  const double h = (p2 - p_c).dot(n) / b;
  // Gradient through n is (p_F2 - I)^T / b, with I the ray-plane intersection.
  const Vec3 to_f2 = p2 - (p_c + h * u_w);
  RangeGradients g;
  g.d_origin = -n.transpose() / b;
  g.d_direction = -(h / b) * n.transpose();
  g.d_f1 = (skew(p3 - p2) * to_f2).transpose() / b;
  g.d_f2 = (n + skew(p1 - p3) * to_f2).transpose() / b;
  g.d_f3 = (skew(p2 - p1) * to_f2).transpose() / b;
  return g;
}

namespace {

struct CameraRay {
  Vec3 origin;
  Vec3 direction;
  Mat3 r_w_c;
};

CameraRay camera_ray(const InertialState& x, const CameraExtrinsics& cam_ext,
                     const LrfExtrinsics& lrf) {
  const CameraPoseClone cam = camera_pose(x, cam_ext);
  CameraRay ray;
  ray.r_w_c = cam.rot_cam_to_world();
  ray.origin = cam.p_w_c;
  ray.direction = ray.r_w_c * lrf.u_r_cam.normalized();
  return ray;
}

Vec3 feature_position(const FilterState& s, std::size_t j) {
  const auto& f = s.features[j];
  return feature_world_position(f, s.clones[f.anchor_index]);
}

double triangle_min_angle(const Vec3& a, const Vec3& b, const Vec3& c) {
  const std::array<Vec3, 3> p{a, b, c};
  double best = 3.14159265358979323846;
  for (int k = 0; k < 3; ++k) {
    const Vec3 u = p[(k + 1) % 3] - p[k];
    const Vec3 w = p[(k + 2) % 3] - p[k];
    best = std::min(best, std::atan2(u.cross(w).norm(), u.dot(w)));
  }
  return best;
}

}  // namespace

Facet make_facet(const FilterState& state, std::array<std::size_t, 3> features,
                 const CameraExtrinsics& cam_ext, const LrfExtrinsics& lrf) {
  std::sort(features.begin(), features.end(), [&](std::size_t l, std::size_t r) {
    return state.features[l].track_id < state.features[r].track_id;
  });
  Facet f;
  f.feature_index = {features[1], features[0], features[2]};
  for (int k = 0; k < 3; ++k) f.track_ids[k] = state.features[f.feature_index[k]].track_id;
  f.p_f1 = feature_position(state, f.feature_index[0]);
  f.p_f2 = feature_position(state, f.feature_index[1]);
  f.p_f3 = feature_position(state, f.feature_index[2]);
  const CameraRay ray = camera_ray(state.inertial, cam_ext, lrf);
  f.n_w = facet_normal(f.p_f1, f.p_f2, f.p_f3);
  f.a = (f.p_f2 - ray.origin).dot(f.n_w);
  f.b = ray.direction.dot(f.n_w);
  return f;
}

FacetSearch find_ranged_facet(const FilterState& state, const CameraExtrinsics& cam_ext,
                              const LrfExtrinsics& lrf, const FacetOptions& opts) {
  FacetSearch out;
  const CameraRay ray = camera_ray(state.inertial, cam_ext, lrf);
  const Vec3 u_c = lrf.u_r_cam.normalized();
  if (u_c.z() <= opts.behind_epsilon || state.features.size() < 3) return out;
  const Vec2 ray_uv = u_c.head<2>() / u_c.z();

  std::vector<Vec2> uv;
  for (std::size_t j = 0; j < state.features.size(); ++j) {
    if (std::abs(state.features[j].rho) < 1e-8) continue;
    const Vec3 p_cam = ray.r_w_c.transpose() * (feature_position(state, j) - ray.origin);
    if (p_cam.z() <= opts.behind_epsilon) continue;
    const Vec2 q = p_cam.head<2>() / p_cam.z();
    if (std::abs(q.x()) > opts.fov_half.x() || std::abs(q.y()) > opts.fov_half.y()) continue;
    uv.push_back(q);
    out.vertex_features.push_back(j);
  }
  out.triangulation = delaunay(uv);
  if (!out.triangulation) return out;
  const auto t = select_triangle(*out.triangulation, ray_uv);
  if (!t) return out;
  const auto& v = out.triangulation->triangles[*t];
  out.facet = make_facet(
      state, {out.vertex_features[v[0]], out.vertex_features[v[1]], out.vertex_features[v[2]]},
      cam_ext, lrf);
  const auto& f = *out.facet;
  if (triangle_min_angle(f.p_f1, f.p_f2, f.p_f3) < opts.min_facet_angle_rad) {
    out.status = RangeStatus::kDegenerate;
  } else {
    out.status = RangeStatus::kOk;
  }
  return out;
}

RangeGeometry predict_range(const FilterState& state, const Facet& facet,
                            const CameraExtrinsics& cam_ext, const LrfExtrinsics& lrf,
                            const FacetOptions& opts) {
  const CameraRay ray = camera_ray(state.inertial, cam_ext, lrf);
  return facet_range(feature_position(state, facet.feature_index[0]),
                     feature_position(state, facet.feature_index[1]),
                     feature_position(state, facet.feature_index[2]), ray.origin, ray.direction,
                     opts.degeneracy_epsilon);
}

Eigen::RowVectorXd range_jacobian(const FilterState& state, const Facet& facet,
                                  const CameraExtrinsics& cam_ext, const LrfExtrinsics& lrf) {
  const CameraRay ray = camera_ray(state.inertial, cam_ext, lrf);
  std::array<Vec3, 3> p;
  for (int k = 0; k < 3; ++k) p[k] = feature_position(state, facet.feature_index[k]);
  const RangeGradients g = facet_range_gradients(p[0], p[1], p[2], ray.origin, ray.direction);

  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(state.dim());
  const Vec3 lever = state.inertial.rot_body_to_world() * cam_ext.p_i_c;
  h.segment<3>(FilterState::kP) = g.d_origin;
  h.segment<3>(FilterState::kTheta) =
      -g.d_origin * skew(lever) - g.d_direction * skew(ray.direction);

  const std::array<Eigen::RowVector3d, 3> d_f{g.d_f1, g.d_f2, g.d_f3};
  for (int k = 0; k < 3; ++k) {
    const std::size_t j = facet.feature_index[k];
    const auto& f = state.features[j];
    const auto& anchor = state.clones[f.anchor_index];
    const Mat3 r_a = anchor.rot_cam_to_world();
    const Vec3 m(f.alpha, f.beta, 1.0);
    const Vec3 ray_a = r_a * m / f.rho;
    Mat3 d_p_d_f;
    d_p_d_f.col(0) = r_a.col(0) / f.rho;
    d_p_d_f.col(1) = r_a.col(1) / f.rho;
    d_p_d_f.col(2) = -ray_a / f.rho;
    const int ao = state.clone_offset(f.anchor_index);
    h.segment<3>(ao) += d_f[k];
    h.segment<3>(ao + 3) += -d_f[k] * skew(ray_a);
    h.segment<3>(state.feature_offset(j)) += d_f[k] * d_p_d_f;
  }
  return h;
}

const char* to_string(GateVerdict v) {
  switch (v) {
    case GateVerdict::kAccepted: return "accepted";
    case GateVerdict::kRejected: return "rejected";
    case GateVerdict::kNoFacet: return "no_facet";
    case GateVerdict::kDegenerate: return "degenerate";
    case GateVerdict::kNegative: return "negative";
    case GateVerdict::kNumerical: return "numerical";
  }
  return "unknown";
}

RangeUpdateResult range_update(FilterState& state, const RangeSample& sample,
                               const CameraExtrinsics& cam_ext, const LrfExtrinsics& lrf,
                               const MeasurementNoise& noise, const FacetOptions& opts,
                               Diagnostics* diag) {
  RangeUpdateResult result;
  const FacetSearch search = find_ranged_facet(state, cam_ext, lrf, opts);
  if (!search.facet) {
    result.verdict = GateVerdict::kNoFacet;
    if (diag != nullptr) ++diag->range_no_facet;
    return result;
  }
  result.facet_tracks = search.facet->track_ids;
  if (search.status == RangeStatus::kDegenerate) {
    result.verdict = GateVerdict::kDegenerate;
    if (diag != nullptr) ++diag->range_degenerate;
    return result;
  }
  const RangeGeometry g = predict_range(state, *search.facet, cam_ext, lrf, opts);
  if (g.status == RangeStatus::kDegenerate) {
    result.verdict = GateVerdict::kDegenerate;
    if (diag != nullptr) ++diag->range_degenerate;
    return result;
  }
  if (g.status == RangeStatus::kNegative) {
    result.verdict = GateVerdict::kNegative;
    if (diag != nullptr) ++diag->range_negative;
    return result;
  }
  const Eigen::RowVectorXd h = range_jacobian(state, *search.facet, cam_ext, lrf);
  result.predicted = g.range;
  result.innovation = sample.range_m - g.range;
  result.innovation_variance = h * state.cov * h.transpose() + noise.sigma_r * noise.sigma_r;
  if (!(result.innovation_variance > 0.0) || !std::isfinite(result.innovation_variance)) {
    result.verdict = GateVerdict::kNumerical;
    if (diag != nullptr) ++diag->numerical_faults;
    return result;
  }
  result.normalized_sq = result.innovation * result.innovation / result.innovation_variance;
  if (result.normalized_sq > opts.gate_sigma * opts.gate_sigma) {
    result.verdict = GateVerdict::kRejected;
    if (diag != nullptr) ++diag->range_rejected;
    return result;
  }
  VecX r(1);
  r(0) = result.innovation;
  const MatX noise_cov = MatX::Constant(1, 1, noise.sigma_r * noise.sigma_r);
  if (ekf_update(state, h, r, noise_cov) != UpdateStatus::kApplied) {
    result.verdict = GateVerdict::kNumerical;
    if (diag != nullptr) ++diag->numerical_faults;
    return result;
  }
  result.verdict = GateVerdict::kAccepted;
  if (diag != nullptr) ++diag->range_accepted;
  return result;
}

}  // namespace rvio
