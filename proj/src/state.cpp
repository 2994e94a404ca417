#include "rvio/state.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "rvio/errors.hpp"

namespace rvio {

Mat3 quat_to_rotation(const Quaternion& q, Diagnostics* diag) {
  Quaternion unit = q;
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    unit.normalize();
    if (diag != nullptr) {
      ++diag->quaternion_normalizations;
    }
  }
  return unit.toRotationMatrix().transpose();
}

std::optional<std::size_t> FilterState::clone_index_by_id(std::uint64_t id) const {
  for (std::size_t i = 0; i < clones.size(); ++i) {
    if (clones[i].id == id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> FilterState::feature_index_by_track(std::uint64_t track_id) const {
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (features[j].track_id == track_id) return j;
  }
  return std::nullopt;
}

CameraPoseClone camera_pose(const InertialState& x, const CameraExtrinsics& ext) {
  CameraPoseClone c;
  c.p_w_c = x.p_w_i + x.rot_body_to_world() * ext.p_i_c;
  c.q_w_c = (x.q_w_i * ext.q_i_c).normalized();
  c.stamp = x.stamp;
  return c;
}

Vec3 feature_world_position(const InverseDepthFeature& f, const CameraPoseClone& anchor,
                            double rho_epsilon) {
  if (std::abs(f.rho) < rho_epsilon) {
    throw FeatureAtInfinity("inverse depth " + std::to_string(f.rho) + " is below epsilon");
  }
  const Vec3 m(f.alpha, f.beta, 1.0);
  return anchor.p_w_c + anchor.rot_cam_to_world() * m / f.rho;
}

Vec3 inverse_depth_to_cartesian(const InverseDepthFeature& f, const CameraPoseClone& anchor,
                                const CameraPoseClone& cam, double rho_epsilon) {
  const Vec3 p_w = feature_world_position(f, anchor, rho_epsilon);
  return quat_to_rotation(cam.q_w_c) * (p_w - cam.p_w_c);
}

void insert_covariance_block(MatX& cov, int offset, const MatX& cross, const MatX& block) {
  const int n = static_cast<int>(cov.rows());
  const int k = static_cast<int>(block.rows());
  const int tail = n - offset;
  MatX out(n + k, n + k);
  out.topLeftCorner(offset, offset) = cov.topLeftCorner(offset, offset);
  out.topRightCorner(offset, tail) = cov.topRightCorner(offset, tail);
  out.bottomLeftCorner(tail, offset) = cov.bottomLeftCorner(tail, offset);
  out.bottomRightCorner(tail, tail) = cov.bottomRightCorner(tail, tail);

  // cross is k x n in the pre-insertion ordering.
  out.block(offset, 0, k, offset) = cross.leftCols(offset);
  out.block(offset, offset + k, k, tail) = cross.rightCols(tail);
  out.block(0, offset, offset, k) = cross.leftCols(offset).transpose();
  out.block(offset + k, offset, tail, k) = cross.rightCols(tail).transpose();
  out.block(offset, offset, k, k) = block;
  cov = std::move(out);
}

void erase_covariance_block(MatX& cov, int offset, int size) {
  const int n = static_cast<int>(cov.rows());
  const int tail = n - offset - size;
  MatX out(n - size, n - size);
  out.topLeftCorner(offset, offset) = cov.topLeftCorner(offset, offset);
  out.topRightCorner(offset, tail) = cov.topRightCorner(offset, tail);
  out.bottomLeftCorner(tail, offset) = cov.bottomLeftCorner(tail, offset);
  out.bottomRightCorner(tail, tail) = cov.bottomRightCorner(tail, tail);
  cov = std::move(out);
}

void enforce_symmetry(MatX& cov, double floor) {
  cov = 0.5 * (cov + cov.transpose()).eval();
  for (int i = 0; i < cov.rows(); ++i) {
    if (cov(i, i) < floor) cov(i, i) = floor;
  }
}

CloneResult clone_pose(FilterState& state, double stamp, const CameraExtrinsics& ext,
                       std::size_t max_clones) {
  if (!state.clones.empty() && !(stamp > state.clones.back().stamp)) {
    throw StaleStamp("clone stamp " + std::to_string(stamp) + " is not newer than " +
                     std::to_string(state.clones.back().stamp));
  }
  if (max_clones == 0) {
    throw DimensionMismatch("sliding window capacity must be positive");
  }

  CameraPoseClone clone = camera_pose(state.inertial, ext);
  clone.stamp = stamp;
  clone.id = state.next_clone_id++;

  // d(clone)/d(inertial error): dp_c = dp - [R p_ic]x dtheta, dtheta_c = dtheta.
  const int n = state.dim();
  Eigen::Matrix<double, 6, Eigen::Dynamic> jac = Eigen::MatrixXd::Zero(6, n);
  jac.block<3, 3>(0, FilterState::kP).setIdentity();
  jac.block<3, 3>(0, FilterState::kTheta) = -skew(state.inertial.rot_body_to_world() * ext.p_i_c);
  jac.block<3, 3>(3, FilterState::kTheta).setIdentity();

  const MatX cross = jac * state.cov;
  const MatX block = cross * jac.transpose();
  const int offset = state.clone_offset(state.clones.size());
  insert_covariance_block(state.cov, offset, cross, block);
  state.clones.push_back(clone);

  CloneResult result;
  if (state.clones.size() <= max_clones) {
    enforce_symmetry(state.cov);
    return result;
  }

  const std::size_t newest = state.clones.size() - 1;
  std::optional<std::size_t> drop;
  for (std::size_t i = 0; i < newest && !drop; ++i) {
    bool anchors = false;
    for (const auto& f : state.features) {
      if (f.anchor_index == i) {
        anchors = true;
        break;
      }
    }
    if (!anchors) drop = i;
  }
  if (!drop) {
    // A feature that cannot be expressed in the newest frame is dropped.
    for (std::size_t j = state.features.size(); j-- > 0;) {
      if (state.features[j].anchor_index != 0) continue;
      try {
        reanchor_feature(state, j, newest);
        ++result.reanchored_features;
      } catch (const Error&) {
        remove_feature(state, j);
        ++result.removed_features;
      }
    }
    drop = 0;
  }
  result.dropped_clone_id = state.clones[*drop].id;
  marginalize_clone(state, *drop);
  enforce_symmetry(state.cov);
  return result;
}

void marginalize_clone(FilterState& state, std::size_t index) {
  for (const auto& f : state.features) {
    if (f.anchor_index == index) {
      throw DimensionMismatch("cannot marginalize a clone that anchors a live feature");
    }
  }
  erase_covariance_block(state.cov, state.clone_offset(index), FilterState::kCloneDim);
  state.clones.erase(state.clones.begin() + static_cast<std::ptrdiff_t>(index));
  for (auto& f : state.features) {
    if (f.anchor_index > index) --f.anchor_index;
  }
}

void remove_feature(FilterState& state, std::size_t index) {
  erase_covariance_block(state.cov, state.feature_offset(index), FilterState::kFeatureDim);
  state.features.erase(state.features.begin() + static_cast<std::ptrdiff_t>(index));
}

void reanchor_feature(FilterState& state, std::size_t j, std::size_t new_anchor) {
  auto& f = state.features[j];
  if (f.anchor_index == new_anchor) return;
  const auto& old_c = state.clones[f.anchor_index];
  const auto& new_c = state.clones[new_anchor];

  const Vec3 m(f.alpha, f.beta, 1.0);
  const Mat3 r_old = old_c.rot_cam_to_world();
  const Mat3 r_new = new_c.rot_cam_to_world();
  const Vec3 p_w = old_c.p_w_c + r_old * m / f.rho;
  const Vec3 mp = r_new.transpose() * (p_w - new_c.p_w_c);
  if (mp.z() <= 1e-9) {
    throw BehindCamera("feature lies behind the new anchor during re-anchoring");
  }

  Mat3 d_new_d_mp;
  d_new_d_mp << 1.0 / mp.z(), 0.0, -mp.x() / (mp.z() * mp.z()),
                0.0, 1.0 / mp.z(), -mp.y() / (mp.z() * mp.z()),
                0.0, 0.0, -1.0 / (mp.z() * mp.z());

  Mat3 d_pw_d_f;
  d_pw_d_f.col(0) = r_old.col(0) / f.rho;
  d_pw_d_f.col(1) = r_old.col(1) / f.rho;
  d_pw_d_f.col(2) = -r_old * m / (f.rho * f.rho);

  const Mat3 a = d_new_d_mp * r_new.transpose();
  const int n = state.dim();
  MatX t = MatX::Identity(n, n);
  const int fo = state.feature_offset(j);
  const int oo = state.clone_offset(f.anchor_index);
  const int no = state.clone_offset(new_anchor);
  t.block(fo, fo, 3, 3) = a * d_pw_d_f;
  t.block(fo, oo, 3, 3) = a;
  t.block(fo, oo + 3, 3, 3) = -a * skew(r_old * m / f.rho);
  t.block(fo, no, 3, 3) = -a;
  t.block(fo, no + 3, 3, 3) = a * skew(p_w - new_c.p_w_c);

  // Only the feature rows change, so T P T^T can be formed from a thin block.
  const MatX rows = t.middleRows(fo, 3) * state.cov;
  state.cov.middleRows(fo, 3) = rows;
  state.cov.middleCols(fo, 3) = rows.transpose();
  state.cov.block(fo, fo, 3, 3) = rows * t.middleRows(fo, 3).transpose();

  f.alpha = mp.x() / mp.z();
  f.beta = mp.y() / mp.z();
  f.rho = 1.0 / mp.z();
  f.anchor_index = new_anchor;
}

void apply_correction(FilterState& state, const VecX& dx) {
  if (dx.size() != state.dim()) {
    throw DimensionMismatch("correction has dimension " + std::to_string(dx.size()) +
                            ", state has " + std::to_string(state.dim()));
  }
  auto& x = state.inertial;
  x.p_w_i += dx.segment<3>(FilterState::kP);
  x.v_w_i += dx.segment<3>(FilterState::kV);
  x.q_w_i = (quat_exp(dx.segment<3>(FilterState::kTheta)) * x.q_w_i).normalized();
  x.b_g += dx.segment<3>(FilterState::kBg);
  x.b_a += dx.segment<3>(FilterState::kBa);
  for (std::size_t i = 0; i < state.clones.size(); ++i) {
    const int o = state.clone_offset(i);
    auto& c = state.clones[i];
    c.p_w_c += dx.segment<3>(o);
    c.q_w_c = (quat_exp(dx.segment<3>(o + 3)) * c.q_w_c).normalized();
  }
  for (std::size_t j = 0; j < state.features.size(); ++j) {
    const int o = state.feature_offset(j);
    auto& f = state.features[j];
    f.alpha += dx(o);
    f.beta += dx(o + 1);
    f.rho += dx(o + 2);
  }
}

UpdateStatus ekf_update(FilterState& state, const MatX& h, const VecX& r, const MatX& noise) {
  if (h.cols() != state.dim() || h.rows() != r.size() || noise.rows() != r.size()) {
    throw DimensionMismatch("measurement Jacobian does not match the state layout");
  }
  if (r.size() == 0) return UpdateStatus::kApplied;
  const MatX ph = state.cov * h.transpose();
  MatX s = h * ph + noise;
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::LDLT<MatX> ldlt(s);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= std::numeric_limits<double>::min()) {
    return UpdateStatus::kSingular;
  }
  const MatX k = ldlt.solve(ph.transpose()).transpose();
  const VecX dx = k * r;
  state.cov.noalias() -= k * ph.transpose();
  enforce_symmetry(state.cov);
  apply_correction(state, dx);
  return UpdateStatus::kApplied;
}

}  // namespace rvio
