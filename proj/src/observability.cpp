#include "rvio/observability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "rvio/delaunay.hpp"
#include "rvio/errors.hpp"
#include "rvio/visual.hpp"

namespace rvio {

AnalysisTrajectory build_analysis_trajectory(const InertialState& initial,
                                             std::span<const ImuSample> samples, double dt,
                                             const Vec3& gravity_w) {
  AnalysisTrajectory t;
  t.dt = dt;
  t.gravity_w = gravity_w;
  t.samples.assign(samples.begin(), samples.end());
  t.states.reserve(samples.size() + 1);
  t.phi.reserve(samples.size() + 1);
  t.states.push_back(initial);
  t.phi.emplace_back();
  for (const ImuSample& s : samples) {
    const InertialState& x = t.states.back();
    TransitionBlocks step = error_transition(x, s, dt);
    TransitionBlocks acc;
    acc.phi = step.phi * t.phi.back().phi;
    t.phi.push_back(acc);
    t.states.push_back(propagate_nominal(x, s, dt, gravity_w));
  }
  return t;
}

Eigen::RowVectorXd ObservabilityRow::assembled() const {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(15 + 3 * static_cast<int>(num_features));
  row.segment<3>(FilterState::kP) = m_p;
  row.segment<3>(FilterState::kV) = m_v;
  row.segment<3>(FilterState::kTheta) = m_theta;
  row.segment<3>(FilterState::kBg) = m_bg;
  row.segment<3>(FilterState::kBa) = m_ba;
  const std::array<Eigen::RowVector3d, 3> f{m_p1, m_p2, m_p3};
  for (int i = 0; i < 3; ++i) row.segment<3>(15 + 3 * static_cast<int>(facet[i])) += f[i];
  return scale * row;
}

namespace {

void require_zero_lever(const AnalysisSensors& s) {
  if (s.camera.p_i_c.norm() != 0.0) {
    throw Error("observability analysis assumes zero camera-IMU translation");
  }
}

Vec3 ray_direction(const InertialState& x, const AnalysisSensors& s) {
  return x.rot_body_to_world() * s.camera.q_i_c.toRotationMatrix() * s.lrf.u_r_cam.normalized();
}

void check_step_index(const AnalysisTrajectory& traj, std::size_t k) {
  if (k < 1 || k > traj.steps()) {
    throw DimensionMismatch("step " + std::to_string(k) + " outside the trajectory");
  }
}

void check_facet(std::span<const Vec3> features, const std::array<std::size_t, 3>& facet) {
  for (std::size_t i : facet) {
    if (i >= features.size()) throw DimensionMismatch("facet feature index out of range");
  }
}

// Fourth-order central difference of a vector function along one coordinate.
VecX richardson(const std::function<VecX(double)>& f, double h) {
  return (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h);
}

// Error between two inertial states in the filter's error convention.
Eigen::Matrix<double, 15, 1> inertial_error(const InertialState& truth, const InertialState& est) {
  Eigen::Matrix<double, 15, 1> e;
  e.segment<3>(FilterState::kP) = truth.p_w_i - est.p_w_i;
  e.segment<3>(FilterState::kV) = truth.v_w_i - est.v_w_i;
  e.segment<3>(FilterState::kTheta) =
      so3_log(truth.rot_body_to_world() * est.rot_body_to_world().transpose());
  e.segment<3>(FilterState::kBg) = truth.b_g - est.b_g;
  e.segment<3>(FilterState::kBa) = truth.b_a - est.b_a;
  return e;
}

InertialState perturb(const InertialState& x, int coord, double eps) {
  InertialState y = x;
  const int block = coord / 3;
  const int axis = coord % 3;
  switch (block) {
    case 0: y.p_w_i[axis] += eps; break;
    case 1: y.v_w_i[axis] += eps; break;
    case 2: {
      Vec3 d = Vec3::Zero();
      d[axis] = eps;
      y.q_w_i = (quat_exp(d) * x.q_w_i).normalized();
      break;
    }
    case 3: y.b_g[axis] += eps; break;
    default: y.b_a[axis] += eps; break;
  }
  return y;
}

}  // namespace

ObservabilityRow build_row_analytic(const AnalysisTrajectory& traj, std::size_t k,
                                    std::span<const Vec3> features,
                                    const std::array<std::size_t, 3>& facet,
                                    const AnalysisSensors& sensors, double epsilon) {
  require_zero_lever(sensors);
  check_step_index(traj, k);
  check_facet(features, facet);
  const InertialState& x1 = traj.at(1);
  const InertialState& xk = traj.at(k);
  const TransitionBlocks& phi = traj.phi[k - 1];
  const Vec3& p1 = features[facet[0]];
  const Vec3& p2 = features[facet[1]];
  const Vec3& p3 = features[facet[2]];

  ObservabilityRow row;
  row.facet = facet;
  row.num_features = features.size();
  row.n_w = facet_normal(p1, p2, p3);
  const Vec3 u_w = ray_direction(xk, sensors);
  row.a = (p2 - xk.p_w_i).dot(row.n_w);
  row.b = u_w.dot(row.n_w);
  if (std::abs(row.b) <= epsilon) throw DegenerateFacet("ray parallel to the facet plane");
  row.scale = 1.0 / row.b;
  const double h = row.a / row.b;
  row.intersection = xk.p_w_i + h * u_w;

  const double t = static_cast<double>(k - 1) * traj.dt;
  const Eigen::RowVector3d n = row.n_w.transpose();
  const Vec3 drift = xk.p_w_i - x1.p_w_i - x1.v_w_i * t - 0.5 * traj.gravity_w * t * t;
  const Eigen::RowVector3d ray_term = h * n * skew(u_w);
  row.m_p = -n;
  row.m_v = -t * n;
  row.m_theta = n * skew(drift) + ray_term;
  row.m_bg = ray_term * phi.phi_12() - n * phi.phi_52();
  row.m_ba = -n * phi.phi_54();
  const Vec3 to_f2 = p2 - row.intersection;
  row.m_p1 = (skew(p3 - p2) * to_f2).transpose();
  row.m_p2 = (row.n_w + skew(p1 - p3) * to_f2).transpose();
  row.m_p3 = (skew(p2 - p1) * to_f2).transpose();
  return row;
}

ObservabilityRow build_row_numeric(const AnalysisTrajectory& traj, std::size_t k,
                                   std::span<const Vec3> features,
                                   const std::array<std::size_t, 3>& facet,
                                   const AnalysisSensors& sensors) {
  require_zero_lever(sensors);
  check_step_index(traj, k);
  check_facet(features, facet);
  const InertialState& xk = traj.at(k);
  std::array<Vec3, 3> pf{features[facet[0]], features[facet[1]], features[facet[2]]};

  auto range_at = [&](const InertialState& x, const std::array<Vec3, 3>& p) {
    const RangeGeometry g = facet_range(p[0], p[1], p[2], x.p_w_i, ray_direction(x, sensors), 0.0);
    VecX out(1);
    out(0) = g.range;
    return out;
  };

  // H_k over the inertial error state and the facet vertices.
  constexpr double kStep = 1e-4;
  Eigen::Matrix<double, 1, 15> h_inertial = Eigen::Matrix<double, 1, 15>::Zero();
  for (int c = 0; c < 9; ++c) {
    h_inertial(c) = richardson([&](double e) { return range_at(perturb(xk, c, e), pf); },
                               kStep)(0);
  }
  std::array<Eigen::RowVector3d, 3> h_feat;
  for (int v = 0; v < 3; ++v) {
    for (int c = 0; c < 3; ++c) {
      h_feat[v](c) = richardson(
          [&](double e) {
            auto q = pf;
            q[v][c] += e;
            return range_at(xk, q);
          },
          kStep)(0);
    }
  }

  // Phi(k,1) by re-propagating perturbed initial states along the same samples.
  Mat15 phi = Mat15::Identity();
  if (k > 1) {
    auto chain = [&](const InertialState& x0) {
      InertialState x = x0;
      for (std::size_t i = 0; i + 1 < k; ++i) {
        x = propagate_nominal(x, traj.samples[i], traj.dt, traj.gravity_w);
      }
      return x;
    };
    for (int c = 0; c < 15; ++c) {
      phi.col(c) = richardson(
          [&](double e) -> VecX { return inertial_error(chain(perturb(traj.at(1), c, e)), xk); },
          kStep);
    }
  }

  const Eigen::Matrix<double, 1, 15> m = h_inertial * phi;
  ObservabilityRow row;
  row.facet = facet;
  row.num_features = features.size();
  row.n_w = facet_normal(pf[0], pf[1], pf[2]);
  row.a = (pf[1] - xk.p_w_i).dot(row.n_w);
  row.b = ray_direction(xk, sensors).dot(row.n_w);
  row.scale = 1.0;
  row.m_p = m.segment<3>(FilterState::kP);
  row.m_v = m.segment<3>(FilterState::kV);
  row.m_theta = m.segment<3>(FilterState::kTheta);
  row.m_bg = m.segment<3>(FilterState::kBg);
  row.m_ba = m.segment<3>(FilterState::kBa);
  row.m_p1 = h_feat[0];
  row.m_p2 = h_feat[1];
  row.m_p3 = h_feat[2];
  return row;
}

MatX visual_rows(const AnalysisTrajectory& traj, std::size_t k, std::span<const Vec3> features,
                 std::size_t j, const AnalysisSensors& sensors) {
  require_zero_lever(sensors);
  check_step_index(traj, k);
  if (j >= features.size()) throw DimensionMismatch("feature index out of range");
  const InertialState& xk = traj.at(k);
  const Mat3 r_wc = xk.rot_body_to_world() * sensors.camera.q_i_c.toRotationMatrix();
  const Vec3 rel = features[j] - xk.p_w_i;
  const Vec3 p_cam = r_wc.transpose() * rel;
  const Eigen::Matrix<double, 2, 3> jp = projection_jacobian(p_cam);

  Eigen::Matrix<double, 2, 15> h = Eigen::Matrix<double, 2, 15>::Zero();
  h.block<2, 3>(0, FilterState::kP) = -jp * r_wc.transpose();
  h.block<2, 3>(0, FilterState::kTheta) = jp * r_wc.transpose() * skew(rel);

  MatX rows = MatX::Zero(2, 15 + 3 * static_cast<Eigen::Index>(features.size()));
  rows.leftCols<15>() = h * traj.phi[k - 1].phi;
  rows.block<2, 3>(0, 15 + 3 * static_cast<Eigen::Index>(j)) = jp * r_wc.transpose();
  return rows;
}

VecX scale_direction(const AnalysisState& initial, const Vec3& accel_body) {
  VecX n = VecX::Zero(initial.dim());
  n.segment<3>(FilterState::kP) = initial.inertial.p_w_i;
  n.segment<3>(FilterState::kV) = initial.inertial.v_w_i;
  n.segment<3>(FilterState::kBa) = -accel_body;
  for (std::size_t j = 0; j < initial.features_cartesian.size(); ++j) {
    n.segment<3>(15 + 3 * static_cast<Eigen::Index>(j)) = initial.features_cartesian[j];
  }
  return n;
}

std::vector<Vec3> body_accelerations(const AnalysisTrajectory& traj) {
  std::vector<Vec3> out;
  out.reserve(traj.samples.size());
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    const InertialState& x = traj.states[i];
    const ImuSample& s = traj.samples[i];
    const Vec3 omega = s.omega_m - x.b_g;
    const Mat3 r_mid = x.rot_body_to_world() * so3_exp(0.5 * traj.dt * omega);
    // Kinematic acceleration over the step, resolved in the mid-step body frame.
    out.push_back(s.accel_m - x.b_a + r_mid.transpose() * traj.gravity_w);
  }
  return out;
}

VecX scale_direction(const AnalysisTrajectory& traj, std::span<const Vec3> features,
                     double tolerance) {
  const std::vector<Vec3> acc = body_accelerations(traj);
  Vec3 a = acc.empty() ? Vec3::Zero() : acc.front();
  for (const Vec3& x : acc) {
    if ((x - a).norm() > tolerance * std::max(1.0, a.norm())) {
      throw Error("scale direction needs constant body-frame acceleration");
    }
  }
  AnalysisState s;
  s.inertial = traj.at(1);
  s.features_cartesian.assign(features.begin(), features.end());
  return scale_direction(s, a);
}

VecX hover_direction(std::span<const Vec3> features, std::span<const std::size_t> facet_features,
                     const Vec3& center) {
  VecX n = VecX::Zero(15 + 3 * static_cast<Eigen::Index>(features.size()));
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (std::find(facet_features.begin(), facet_features.end(), j) != facet_features.end()) {
      continue;
    }
    n.segment<3>(15 + 3 * static_cast<Eigen::Index>(j)) = features[j] - center;
  }
  return n;
}

VecX translation_direction(int axis, std::size_t num_features) {
  VecX n = VecX::Zero(15 + 3 * static_cast<Eigen::Index>(num_features));
  n(FilterState::kP + axis) = 1.0;
  for (std::size_t j = 0; j < num_features; ++j) n(15 + 3 * static_cast<Eigen::Index>(j) + axis) = 1.0;
  return n;
}

VecX yaw_direction(const AnalysisState& initial, const Vec3& gravity_w) {
  const Vec3 up = -gravity_w.normalized();
  VecX n = VecX::Zero(initial.dim());
  n.segment<3>(FilterState::kP) = up.cross(initial.inertial.p_w_i);
  n.segment<3>(FilterState::kV) = up.cross(initial.inertial.v_w_i);
  n.segment<3>(FilterState::kTheta) = up;
  for (std::size_t j = 0; j < initial.features_cartesian.size(); ++j) {
    n.segment<3>(15 + 3 * static_cast<Eigen::Index>(j)) = up.cross(initial.features_cartesian[j]);
  }
  return n;
}

std::vector<ScaleResidual> test_scale_observable(const AnalysisTrajectory& traj,
                                                 std::span<const Vec3> features,
                                                 std::span<const std::array<std::size_t, 3>> facets,
                                                 std::span<const std::size_t> steps,
                                                 const AnalysisSensors& sensors,
                                                 const VecX& n_s) {
  if (facets.size() != steps.size()) throw DimensionMismatch("one facet per step expected");
  std::vector<ScaleResidual> out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const ObservabilityRow row = build_row_analytic(traj, steps[i], features, facets[i], sensors);
    ScaleResidual r;
    r.k = steps[i];
    r.residual = row.assembled().dot(n_s);
    r.closed_form = row.scale * row.n_w.dot(features[facets[i][1]] - traj.at(steps[i]).p_w_i);
    const double denom = std::max(std::abs(r.closed_form), 1e-300);
    r.relative_error = std::abs(r.residual - r.closed_form) / denom;
    out.push_back(r);
  }
  return out;
}

double test_hover_nullspace(const AnalysisTrajectory& traj, std::span<const Vec3> features,
                            const std::array<std::size_t, 3>& facet,
                            std::span<const std::size_t> steps, const AnalysisSensors& sensors,
                            const VecX& n_h) {
  const double nh = n_h.norm();
  double worst = 0.0;
  if (nh == 0.0) return worst;
  for (std::size_t k : steps) {
    const Eigen::RowVectorXd m = build_row_analytic(traj, k, features, facet, sensors).assembled();
    worst = std::max(worst, std::abs(m.dot(n_h)) / (m.norm() * nh));
  }
  return worst;
}

ObservabilityStack::ObservabilityStack(int cols) : cols_(cols), r_(0, cols) {}

void ObservabilityStack::add_rows(const MatX& rows) {
  if (rows.cols() != cols_) throw DimensionMismatch("row width does not match the stack");
  for (Eigen::Index i = 0; i < rows.rows(); ++i) pending_.push_back(rows.row(i));
  total_rows_ += static_cast<std::size_t>(rows.rows());
  if (pending_.size() >= static_cast<std::size_t>(2 * cols_ + 64)) compress();
}

void ObservabilityStack::add_row(const Eigen::RowVectorXd& row) {
  add_rows(MatX(row));
}

void ObservabilityStack::compress() const {
  if (pending_.empty()) return;
  MatX m(r_.rows() + static_cast<Eigen::Index>(pending_.size()), cols_);
  m.topRows(r_.rows()) = r_;
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    m.row(r_.rows() + static_cast<Eigen::Index>(i)) = pending_[i];
  }
  pending_.clear();
  if (m.rows() <= cols_) {
    Eigen::HouseholderQR<MatX> qr(m);
    r_ = qr.matrixQR().triangularView<Eigen::Upper>();
    return;
  }
  Eigen::HouseholderQR<MatX> qr(m);
  r_ = qr.matrixQR().topRows(cols_).triangularView<Eigen::Upper>();
}

MatX ObservabilityStack::factor() const {
  compress();
  return r_;
}

NullspaceReport nullspace_report(const ObservabilityStack& stack,
                                 std::span<const NamedDirection> directions, double tolerance,
                                 double direction_tolerance) {
  const MatX r = stack.factor();
  const int n = stack.cols();
  NullspaceReport rep;
  rep.rows = stack.rows();

  VecX col_scale = VecX::Ones(n);
  for (int c = 0; c < n; ++c) {
    const double norm = r.col(c).norm();
    if (norm > 0.0) col_scale(c) = 1.0 / norm;
  }
  MatX a = MatX::Zero(std::max<Eigen::Index>(r.rows(), n), n);
  a.topRows(r.rows()) = r * col_scale.asDiagonal();

  Eigen::BDCSVD<MatX> svd(a, Eigen::ComputeFullV);
  rep.singular_values = svd.singularValues();
  rep.sigma_max = rep.singular_values.size() > 0 ? rep.singular_values(0) : 0.0;
  rep.sigma_min = rep.singular_values.size() > 0 ? rep.singular_values(n - 1) : 0.0;
  const double cutoff = tolerance * rep.sigma_max;

  std::vector<int> null_cols;
  rep.smallest_kept_ratio = 1.0;
  for (int i = 0; i < n; ++i) {
    const double ratio = rep.sigma_max > 0.0 ? rep.singular_values(i) / rep.sigma_max : 0.0;
    if (rep.singular_values(i) < cutoff || rep.sigma_max == 0.0) {
      null_cols.push_back(i);
      rep.largest_null_ratio = std::max(rep.largest_null_ratio, ratio);
    } else {
      rep.smallest_kept_ratio = std::min(rep.smallest_kept_ratio, ratio);
    }
  }
  rep.dimension = static_cast<int>(null_cols.size());

  if (rep.dimension > 0) {
    MatX v(n, rep.dimension);
    for (int i = 0; i < rep.dimension; ++i) v.col(i) = svd.matrixV().col(null_cols[i]);
    // Back to the original coordinates, then orthonormalize.
    const MatX b = col_scale.asDiagonal() * v;
    Eigen::HouseholderQR<MatX> qr(b);
    rep.basis = qr.householderQ() * MatX::Identity(n, rep.dimension);
  } else {
    rep.basis = MatX::Zero(n, 0);
  }

  for (const NamedDirection& d : directions) {
    DirectionCheck check;
    check.name = d.name;
    const double norm = d.direction.norm();
    if (d.direction.size() != n) throw DimensionMismatch("direction length mismatch");
    if (norm == 0.0) {
      check.residual = 0.0;
    } else {
      const VecX proj = rep.basis * (rep.basis.transpose() * d.direction);
      check.residual = (d.direction - proj).norm() / norm;
    }
    check.in_nullspace = check.residual < direction_tolerance;
    rep.directions.push_back(check);
  }
  return rep;
}

std::optional<std::array<std::size_t, 3>> facet_at_step(const AnalysisTrajectory& traj,
                                                        std::size_t k,
                                                        std::span<const Vec3> features,
                                                        const AnalysisSensors& sensors) {
  const InertialState& x = traj.at(k);
  const Mat3 r_wc = x.rot_body_to_world() * sensors.camera.q_i_c.toRotationMatrix();
  const Vec3 u = sensors.lrf.u_r_cam.normalized();
  if (u.z() <= 0.0) return std::nullopt;
  std::vector<Vec2> uv;
  std::vector<std::size_t> index;
  for (std::size_t j = 0; j < features.size(); ++j) {
    const Vec3 p = r_wc.transpose() * (features[j] - x.p_w_i);
    if (p.z() <= 1e-6) continue;
    const Vec2 q = p.head<2>() / p.z();
    if (std::abs(q.x()) > sensors.fov_half.x() || std::abs(q.y()) > sensors.fov_half.y()) continue;
    uv.push_back(q);
    index.push_back(j);
  }
  const auto tri = delaunay(uv);
  if (!tri) return std::nullopt;
  const auto t = select_triangle(*tri, u.head<2>() / u.z());
  if (!t) return std::nullopt;
  std::array<std::size_t, 3> v{index[tri->triangles[*t][0]], index[tri->triangles[*t][1]],
                               index[tri->triangles[*t][2]]};
  std::sort(v.begin(), v.end());
  return std::array<std::size_t, 3>{v[1], v[0], v[2]};
}

LabRows stack_rows(const AnalysisTrajectory& traj, std::span<const Vec3> features,
                   const AnalysisSensors& sensors, const LabOptions& opts) {
  const int cols = 15 + 3 * static_cast<int>(features.size());
  LabRows out{ObservabilityStack(cols), {}, 0};
  const std::size_t stride = std::max<std::size_t>(1, opts.stride);
  for (std::size_t k = std::max<std::size_t>(1, opts.first_step); k <= traj.steps(); k += stride) {
    const InertialState& x = traj.at(k);
    if (opts.use_visual) {
      const Mat3 r_wc = x.rot_body_to_world() * sensors.camera.q_i_c.toRotationMatrix();
      for (std::size_t j = 0; j < features.size(); ++j) {
        const Vec3 p = r_wc.transpose() * (features[j] - x.p_w_i);
        if (p.z() <= 1e-6) continue;
        const Vec2 q = p.head<2>() / p.z();
        if (std::abs(q.x()) > sensors.fov_half.x() || std::abs(q.y()) > sensors.fov_half.y()) {
          continue;
        }
        out.stack.add_rows(visual_rows(traj, k, features, j, sensors));
        out.visual_rows += 2;
      }
    }
    if (opts.use_range) {
      const auto facet = facet_at_step(traj, k, features, sensors);
      if (!facet) continue;
      try {
        const ObservabilityRow row = build_row_analytic(traj, k, features, *facet, sensors);
        const double range = row.a / row.b;
        if (!(range > 0.0) || range > opts.max_range) continue;
        out.stack.add_row(row.assembled());
        out.range_rows.push_back({k, *facet, row.b, range});
      } catch (const DegenerateFacet&) {
        continue;
      }
    }
  }
  return out;
}

}  // namespace rvio
