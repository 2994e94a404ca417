#include "rvio/visual.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <boost/math/distributions/chi_squared.hpp>

#include "rvio/errors.hpp"

namespace rvio {

namespace {

struct AnchorTerms {
  Vec3 p_w;
  Mat3 d_p_d_anchor_theta;
  Mat3 d_p_d_f;
};

AnchorTerms anchor_terms(const InverseDepthFeature& f, const CameraPoseClone& anchor) {
  const Vec3 m(f.alpha, f.beta, 1.0);
  const Mat3 r_a = anchor.rot_cam_to_world();
  AnchorTerms t;
  const Vec3 ray = r_a * m / f.rho;
  t.p_w = anchor.p_w_c + ray;
  t.d_p_d_anchor_theta = -skew(ray);
  t.d_p_d_f.col(0) = r_a.col(0) / f.rho;
  t.d_p_d_f.col(1) = r_a.col(1) / f.rho;
  t.d_p_d_f.col(2) = -ray / f.rho;
  return t;
}

// Observations of `track` whose clone is still in the window, with their
// clone indices.
std::vector<std::pair<std::size_t, Vec2>> live_observations(const FilterState& state,
                                                            const Track& track) {
  std::vector<std::pair<std::size_t, Vec2>> out;
  for (const auto& obs : track.observations) {
    if (auto idx = state.clone_index_by_id(obs.clone_id)) {
      out.emplace_back(*idx, obs.uv);
    }
  }
  return out;
}

double gate_threshold(double probability, int dof) { return chi_square_quantile(probability, dof); }

}  // namespace

Vec2 project(const Vec3& point_cam, double epsilon) {
  if (!(point_cam.z() > epsilon)) {
    throw BehindCamera("point with depth " + std::to_string(point_cam.z()) +
                       " m is at or behind the camera");
  }
  return point_cam.head<2>() / point_cam.z();
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& p) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << iz, 0.0, -p.x() * iz * iz,
       0.0, iz, -p.y() * iz * iz;
  return j;
}

double chi_square_quantile(double probability, int dof) {
  static std::map<std::pair<double, int>, double> cache;
  const auto key = std::make_pair(probability, dof);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  boost::math::chi_squared dist(dof);
  const double q = boost::math::quantile(dist, probability);
  cache.emplace(key, q);
  return q;
}

VisualPrediction predict_slam_observation(const FilterState& state, std::size_t j, std::size_t i,
                                          const VisualOptions& opts) {
  const auto& f = state.features[j];
  const auto& anchor = state.clones[f.anchor_index];
  const auto& cam = state.clones[i];
  const AnchorTerms at = anchor_terms(f, anchor);
  const Mat3 r_c = cam.rot_cam_to_world();
  const Vec3 p_cam = r_c.transpose() * (at.p_w - cam.p_w_c);

  VisualPrediction out;
  out.uv = project(p_cam, opts.behind_epsilon);
  out.h = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, state.dim());
  const Eigen::Matrix<double, 2, 3> jp = projection_jacobian(p_cam);
  const Eigen::Matrix<double, 2, 3> jw = jp * r_c.transpose();
  const int co = state.clone_offset(i);
  const int ao = state.clone_offset(f.anchor_index);
  out.h.block<2, 3>(0, co) += -jw;
  out.h.block<2, 3>(0, co + 3) += jw * skew(at.p_w - cam.p_w_c);
  out.h.block<2, 3>(0, ao) += jw;
  out.h.block<2, 3>(0, ao + 3) += jw * at.d_p_d_anchor_theta;
  out.h.block<2, 3>(0, state.feature_offset(j)) = jw * at.d_p_d_f;
  return out;
}

SlamUpdateResult slam_update(FilterState& state, std::span<const FeatureObservation> observations,
                             const MeasurementNoise& noise, const VisualOptions& opts,
                             Diagnostics* diag) {
  SlamUpdateResult result;
  const double var = noise.sigma_v * noise.sigma_v;
  const double gate = gate_threshold(opts.slam_gate_probability, 2);

  std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>> rows;
  std::vector<Vec2> residuals;
  for (const auto& obs : observations) {
    const auto j = state.feature_index_by_track(obs.track_id);
    const auto i = state.clone_index_by_id(obs.clone_id);
    if (!j || !i) continue;
    VisualPrediction pred;
    try {
      pred = predict_slam_observation(state, *j, *i, opts);
    } catch (const Error&) {
      if (diag != nullptr) ++diag->skipped_updates;
      continue;
    }
    FeatureInnovation inn;
    inn.track_id = obs.track_id;
    inn.residual = obs.uv - pred.uv;
    const Eigen::Matrix2d s =
        pred.h * state.cov * pred.h.transpose() + var * Eigen::Matrix2d::Identity();
    inn.mahalanobis_sq = inn.residual.dot(s.ldlt().solve(inn.residual));
    inn.accepted = std::isfinite(inn.mahalanobis_sq) && inn.mahalanobis_sq <= gate;
    if (inn.accepted) {
      rows.push_back(pred.h);
      residuals.push_back(inn.residual);
    } else if (diag != nullptr) {
      ++diag->gated_visual;
    }
    result.innovations.push_back(inn);
  }
  if (rows.empty()) return result;

  const int m = static_cast<int>(rows.size()) * 2;
  MatX h(m, state.dim());
  VecX r(m);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    h.middleRows(2 * static_cast<int>(k), 2) = rows[k];
    r.segment<2>(2 * static_cast<int>(k)) = residuals[k];
  }
  result.status = ekf_update(state, h, r, var * MatX::Identity(m, m));
  if (result.status != UpdateStatus::kApplied && diag != nullptr) ++diag->numerical_faults;
  return result;
}

namespace {

struct RefineOutcome {
  bool ok = false;
  InverseDepthFeature feature;
};

RefineOutcome refine_inverse_depth(const FilterState& state,
                                   const std::vector<std::pair<std::size_t, Vec2>>& obs,
                                   InverseDepthFeature f, int iterations) {
  const auto& anchor = state.clones[f.anchor_index];
  RefineOutcome out;
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Vec3 jtr = Vec3::Zero();
    const AnchorTerms at = anchor_terms(f, anchor);
    for (const auto& [i, uv] : obs) {
      const auto& cam = state.clones[i];
      const Mat3 r_c = cam.rot_cam_to_world();
      const Vec3 p_cam = r_c.transpose() * (at.p_w - cam.p_w_c);
      if (p_cam.z() <= 1e-6) return out;
      const Vec2 res = uv - p_cam.head<2>() / p_cam.z();
      const Eigen::Matrix<double, 2, 3> j = projection_jacobian(p_cam) * r_c.transpose() * at.d_p_d_f;
      jtj += j.transpose() * j;
      jtr += j.transpose() * res;
    }
    const Vec3 step = jtj.ldlt().solve(jtr);
    if (!step.allFinite()) return out;
    f.alpha += step.x();
    f.beta += step.y();
    f.rho += step.z();
    if (f.rho <= 1e-8) return out;
    if (step.norm() < 1e-12 * (1.0 + f.params().norm())) break;
  }
  out.ok = true;
  out.feature = f;
  return out;
}

}  // namespace

Triangulation3d triangulate_track(const FilterState& state, const Track& track,
                                  const VisualOptions& opts) {
  Triangulation3d out;
  const auto obs = live_observations(state, track);
  if (obs.size() < 2) return out;

  std::vector<Vec3> bearings;
  Mat3 a = Mat3::Zero();
  Vec3 rhs = Vec3::Zero();
  for (const auto& [i, uv] : obs) {
    const auto& c = state.clones[i];
    const Vec3 b = (c.rot_cam_to_world() * Vec3(uv.x(), uv.y(), 1.0)).normalized();
    bearings.push_back(b);
    const Mat3 proj = Mat3::Identity() - b * b.transpose();
    a += proj;
    rhs += proj * c.p_w_c;
  }
  double parallax = 0.0;
  for (std::size_t p = 0; p < bearings.size(); ++p) {
    for (std::size_t q = p + 1; q < bearings.size(); ++q) {
      const double c = std::clamp(bearings[p].dot(bearings[q]), -1.0, 1.0);
      parallax = std::max(parallax, std::acos(c));
    }
  }
  out.parallax_rad = parallax;
  if (parallax < opts.min_parallax_rad) {
    out.status = TriangulationStatus::kInsufficientBaseline;
    return out;
  }

  const Vec3 p_lin = a.ldlt().solve(rhs);
  std::size_t anchor_idx = obs.front().first;
  for (const auto& o : obs) anchor_idx = std::max(anchor_idx, o.first);
  const auto& anchor = state.clones[anchor_idx];
  const Vec3 m = anchor.rot_cam_to_world().transpose() * (p_lin - anchor.p_w_c);
  out.status = TriangulationStatus::kDiverged;
  if (!p_lin.allFinite() || m.z() <= 1e-6) return out;

  InverseDepthFeature f;
  f.alpha = m.x() / m.z();
  f.beta = m.y() / m.z();
  f.rho = 1.0 / m.z();
  f.anchor_index = anchor_idx;
  f.track_id = track.track_id;

  const RefineOutcome refined = refine_inverse_depth(state, obs, f, opts.gauss_newton_iterations);
  if (!refined.ok) return out;
  out.feature = refined.feature;
  out.point_w = feature_world_position(out.feature, anchor);
  out.status = TriangulationStatus::kOk;
  return out;
}

TrackLinearization linearize_track(const FilterState& state, const Track& track,
                                   const InverseDepthFeature& f) {
  const auto obs = live_observations(state, track);
  const int m = 2 * static_cast<int>(obs.size());
  TrackLinearization lin;
  lin.residual = VecX::Zero(m);
  lin.h_x = MatX::Zero(m, state.dim());
  lin.h_f = MatX::Zero(m, 3);

  const auto& anchor = state.clones[f.anchor_index];
  const AnchorTerms at = anchor_terms(f, anchor);
  const int ao = state.clone_offset(f.anchor_index);
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const auto& [i, uv] = obs[k];
    const auto& cam = state.clones[i];
    const Mat3 r_c = cam.rot_cam_to_world();
    const Vec3 p_cam = r_c.transpose() * (at.p_w - cam.p_w_c);
    const int row = 2 * static_cast<int>(k);
    lin.residual.segment<2>(row) = uv - project(p_cam);
    const Eigen::Matrix<double, 2, 3> jw = projection_jacobian(p_cam) * r_c.transpose();
    const int co = state.clone_offset(i);
    lin.h_x.block<2, 3>(row, co) += -jw;
    lin.h_x.block<2, 3>(row, co + 3) += jw * skew(at.p_w - cam.p_w_c);
    lin.h_x.block<2, 3>(row, ao) += jw;
    lin.h_x.block<2, 3>(row, ao + 3) += jw * at.d_p_d_anchor_theta;
    lin.h_f.block<2, 3>(row, 0) = jw * at.d_p_d_f;
  }
  return lin;
}

NullspaceProjection project_left_nullspace(const TrackLinearization& lin) {
  const int m = static_cast<int>(lin.h_f.rows());
  NullspaceProjection out;
  if (m <= 3) {
    out.residual = VecX::Zero(0);
    out.h = MatX::Zero(0, lin.h_x.cols());
    out.h_f_projected = MatX::Zero(0, 3);
    return out;
  }
  Eigen::HouseholderQR<MatX> qr(lin.h_f);
  const MatX q = qr.householderQ();
  const MatX q2 = q.rightCols(m - 3);
  out.residual = q2.transpose() * lin.residual;
  out.h = q2.transpose() * lin.h_x;
  out.h_f_projected = q2.transpose() * lin.h_f;
  return out;
}

MsckfResult msckf_update(FilterState& state, std::span<const Track> tracks,
                         const MeasurementNoise& noise, const VisualOptions& opts,
                         Diagnostics* diag) {
  MsckfResult result;
  const double var = noise.sigma_v * noise.sigma_v;
  std::vector<MatX> hs;
  std::vector<VecX> rs;
  int rows = 0;
  for (const auto& track : tracks) {
    const Triangulation3d tri = triangulate_track(state, track, opts);
    if (tri.status == TriangulationStatus::kInsufficientBaseline) {
      ++result.skipped_baseline;
      if (diag != nullptr) ++diag->msckf_skipped_baseline;
      continue;
    }
    if (tri.status != TriangulationStatus::kOk) {
      ++result.discarded;
      if (diag != nullptr) ++diag->msckf_discarded;
      continue;
    }
    TrackLinearization lin;
    try {
      lin = linearize_track(state, track, tri.feature);
    } catch (const Error&) {
      ++result.discarded;
      if (diag != nullptr) ++diag->msckf_discarded;
      continue;
    }
    NullspaceProjection proj = project_left_nullspace(lin);
    const int m = static_cast<int>(proj.residual.size());
    if (m == 0) continue;
    const MatX s = proj.h * state.cov * proj.h.transpose() + var * MatX::Identity(m, m);
    const double d2 = proj.residual.dot(s.ldlt().solve(proj.residual));
    if (!std::isfinite(d2) || d2 > gate_threshold(opts.msckf_gate_probability, m)) {
      ++result.gated;
      if (diag != nullptr) ++diag->gated_visual;
      continue;
    }
    rows += m;
    hs.push_back(std::move(proj.h));
    rs.push_back(std::move(proj.residual));
    ++result.used;
  }
  if (rows == 0) return result;

  MatX h(rows, state.dim());
  VecX r(rows);
  int at = 0;
  for (std::size_t k = 0; k < hs.size(); ++k) {
    const int m = static_cast<int>(rs[k].size());
    h.middleRows(at, m) = hs[k];
    r.segment(at, m) = rs[k];
    at += m;
  }
  result.status = ekf_update(state, h, r, var * MatX::Identity(rows, rows));
  if (result.status != UpdateStatus::kApplied && diag != nullptr) ++diag->numerical_faults;
  return result;
}

bool initialize_slam_from_track(FilterState& state, const Track& track,
                                const MeasurementNoise& noise, const VisualOptions& opts,
                                Diagnostics* diag) {
  const Triangulation3d tri = triangulate_track(state, track, opts);
  if (tri.status != TriangulationStatus::kOk) return false;
  const double var = noise.sigma_v * noise.sigma_v;

  TrackLinearization lin = linearize_track(state, track, tri.feature);
  NullspaceProjection proj = project_left_nullspace(lin);
  const int m = static_cast<int>(proj.residual.size());
  if (m > 0) {
    const MatX s = proj.h * state.cov * proj.h.transpose() + var * MatX::Identity(m, m);
    const double d2 = proj.residual.dot(s.ldlt().solve(proj.residual));
    if (!std::isfinite(d2) || d2 > gate_threshold(opts.msckf_gate_probability, m)) {
      if (diag != nullptr) ++diag->gated_visual;
      return false;
    }
    if (ekf_update(state, proj.h, proj.residual, var * MatX::Identity(m, m)) !=
        UpdateStatus::kApplied) {
      if (diag != nullptr) ++diag->numerical_faults;
      return false;
    }
  }

  // Refine the feature against the corrected window and relinearize.
  const auto obs = live_observations(state, track);
  const RefineOutcome refined =
      refine_inverse_depth(state, obs, tri.feature, opts.gauss_newton_iterations);
  if (!refined.ok) return false;
  lin = linearize_track(state, track, refined.feature);

  Eigen::HouseholderQR<MatX> qr(lin.h_f);
  const MatX q1 = MatX(qr.householderQ()).leftCols(3);
  const Mat3 r1 = qr.matrixQR().topLeftCorner<3, 3>().triangularView<Eigen::Upper>();
  if (std::abs(r1.determinant()) < 1e-18) return false;
  const Mat3 r1_inv = r1.inverse();
  const MatX h1 = q1.transpose() * lin.h_x;
  const MatX h1p = h1 * state.cov;
  const MatX cross = -r1_inv * h1p;
  const Mat3 block =
      r1_inv * (h1p * h1.transpose() + var * Mat3::Identity()) * r1_inv.transpose();

  insert_covariance_block(state.cov, state.dim(), cross, block);
  InverseDepthFeature f = refined.feature;
  f.track_id = track.track_id;
  state.features.push_back(f);
  enforce_symmetry(state.cov);
  return true;
}

void initialize_slam_semi_infinite(FilterState& state, std::uint64_t track_id, const Vec2& uv,
                                   const MeasurementNoise& noise, const VisualOptions& opts) {
  if (state.clones.empty()) {
    throw DimensionMismatch("a SLAM feature needs an anchor clone");
  }
  InverseDepthFeature f;
  f.alpha = uv.x();
  f.beta = uv.y();
  f.rho = opts.semi_infinite_rho;
  f.anchor_index = state.clones.size() - 1;
  f.track_id = track_id;
  const double var = noise.sigma_v * noise.sigma_v;
  Mat3 block = Mat3::Zero();
  block.diagonal() << var, var, opts.semi_infinite_sigma_rho * opts.semi_infinite_sigma_rho;
  insert_covariance_block(state.cov, state.dim(), MatX::Zero(3, state.dim()), block);
  state.features.push_back(f);
}

int tile_of(const Vec2& uv, const TrackManagerOptions& opts) {
  const double fx = (uv.x() + opts.fov_half.x()) / (2.0 * opts.fov_half.x());
  const double fy = (uv.y() + opts.fov_half.y()) / (2.0 * opts.fov_half.y());
  const int tx = std::clamp(static_cast<int>(std::floor(fx * opts.tiles_x)), 0, opts.tiles_x - 1);
  const int ty = std::clamp(static_cast<int>(std::floor(fy * opts.tiles_y)), 0, opts.tiles_y - 1);
  return ty * opts.tiles_x + tx;
}

TrackAssignments manage_tracks(std::span<const Track> tracks, std::span<const Vec2> slam_uv,
                               std::uint64_t current_clone_id, const TrackManagerOptions& opts) {
  TrackAssignments out;
  std::vector<int> tile_count(static_cast<std::size_t>(opts.tiles_x * opts.tiles_y), 0);
  for (const auto& uv : slam_uv) ++tile_count[static_cast<std::size_t>(tile_of(uv, opts))];

  std::vector<const Track*> candidates;
  for (const auto& t : tracks) {
    if (t.status != TrackStatus::kCandidate || t.observations.empty()) continue;
    const bool seen_now = t.observations.back().clone_id == current_clone_id;
    if (!seen_now) {
      if (t.observations.size() >= opts.min_msckf_length) {
        out.msckf.push_back(t.track_id);
      } else {
        out.discard.push_back(t.track_id);
      }
      continue;
    }
    if (t.observations.size() >= opts.min_slam_length) candidates.push_back(&t);
  }

  // Longest tracks first, then detection score, then id for determinism.
  std::sort(candidates.begin(), candidates.end(), [](const Track* a, const Track* b) {
    if (a->observations.size() != b->observations.size()) {
      return a->observations.size() > b->observations.size();
    }
    if (a->score != b->score) return a->score > b->score;
    return a->track_id < b->track_id;
  });

  std::size_t free_slots =
      opts.max_slam > slam_uv.size() ? opts.max_slam - slam_uv.size() : 0;
  std::vector<bool> taken(candidates.size(), false);
  for (int level = 0; free_slots > 0; ++level) {
    bool any_left = false;
    for (std::size_t c = 0; c < candidates.size() && free_slots > 0; ++c) {
      if (taken[c]) continue;
      any_left = true;
      const auto tile = static_cast<std::size_t>(tile_of(candidates[c]->observations.back().uv, opts));
      if (tile_count[tile] <= level) {
        ++tile_count[tile];
        taken[c] = true;
        out.slam.push_back(candidates[c]->track_id);
        --free_slots;
      }
    }
    if (!any_left) break;
  }

  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (!taken[c] && candidates[c]->observations.size() >= opts.window_size) {
      out.msckf.push_back(candidates[c]->track_id);
    }
  }
  return out;
}

}  // namespace rvio
