#include "rvio/imu.hpp"

#include <string>

#include "rvio/errors.hpp"

namespace rvio {

namespace {

struct StepTerms {
  Mat3 r0;
  Mat3 r_mid;
  Mat3 r1;
  Vec3 omega;
  Vec3 force;
  Vec3 accel_w;
};

StepTerms step_terms(const InertialState& x, const ImuSample& s, double dt, const Vec3& g) {
  StepTerms t;
  t.omega = s.omega_m - x.b_g;
  t.force = s.accel_m - x.b_a;
  t.r0 = x.rot_body_to_world();
  t.r_mid = t.r0 * so3_exp(0.5 * dt * t.omega);
  t.r1 = t.r0 * so3_exp(dt * t.omega);
  t.accel_w = t.r_mid * t.force + g;
  return t;
}

void check_step(double dt) {
  if (!(dt > 0.0) || dt > kMaxImuStep) {
    throw StreamGap("IMU step " + std::to_string(dt) + " s is outside (0, " +
                    std::to_string(kMaxImuStep) + "]");
  }
}

}  // namespace

InertialState propagate_nominal(const InertialState& x, const ImuSample& sample, double dt,
                                const Vec3& gravity_w) {
  const StepTerms t = step_terms(x, sample, dt, gravity_w);
  InertialState out = x;
  out.p_w_i = x.p_w_i + x.v_w_i * dt + 0.5 * dt * dt * t.accel_w;
  out.v_w_i = x.v_w_i + t.accel_w * dt;
  out.q_w_i = (x.q_w_i * quat_exp(dt * t.omega)).normalized();
  out.stamp = x.stamp + dt;
  return out;
}

TransitionBlocks error_transition(const InertialState& x, const ImuSample& sample, double dt) {
  // Gravity does not enter the error dynamics.
  const StepTerms t = step_terms(x, sample, dt, Vec3::Zero());
  using S = FilterState;

  const Mat3 d_acc_d_theta = -skew(t.r_mid * t.force);
  const Mat3 d_acc_d_bg =
      t.r_mid * skew(t.force) * so3_right_jacobian(0.5 * dt * t.omega) * (0.5 * dt);
  const Mat3 d_acc_d_ba = -t.r_mid;

  TransitionBlocks b;
  Mat15& f = b.phi;
  f.setIdentity();
  f.block<3, 3>(S::kP, S::kV) = Mat3::Identity() * dt;
  f.block<3, 3>(S::kP, S::kTheta) = 0.5 * dt * dt * d_acc_d_theta;
  f.block<3, 3>(S::kP, S::kBg) = 0.5 * dt * dt * d_acc_d_bg;
  f.block<3, 3>(S::kP, S::kBa) = 0.5 * dt * dt * d_acc_d_ba;
  f.block<3, 3>(S::kV, S::kTheta) = dt * d_acc_d_theta;
  f.block<3, 3>(S::kV, S::kBg) = dt * d_acc_d_bg;
  f.block<3, 3>(S::kV, S::kBa) = dt * d_acc_d_ba;
  f.block<3, 3>(S::kTheta, S::kBg) = -t.r1 * so3_right_jacobian(dt * t.omega) * dt;
  return b;
}

TransitionBlocks accumulate_transition(std::span<const TransitionBlocks> steps) {
  if (steps.empty()) {
    throw DimensionMismatch("cannot accumulate an empty transition list");
  }
  TransitionBlocks acc = steps.front();
  for (std::size_t i = 1; i < steps.size(); ++i) {
    acc.phi = (steps[i].phi * acc.phi).eval();
  }
  return acc;
}

Mat15 discrete_noise(const InertialState& x, const ImuSample& sample, double dt,
                     const NoiseModel& noise, const Mat15& phi) {
  using S = FilterState;
  const StepTerms t = step_terms(x, sample, dt, Vec3::Zero());
  // Continuous noise mapping G * Qc * G^T evaluated at mid-interval.
  Eigen::Matrix<double, 15, 12> g = Eigen::Matrix<double, 15, 12>::Zero();
  g.block<3, 3>(S::kV, 0) = -t.r_mid;
  g.block<3, 3>(S::kTheta, 3) = -t.r_mid;
  g.block<3, 3>(S::kBg, 6).setIdentity();
  g.block<3, 3>(S::kBa, 9).setIdentity();
  Eigen::Matrix<double, 12, 1> qc;
  qc << Vec3::Constant(noise.accel_noise_density * noise.accel_noise_density),
      Vec3::Constant(noise.gyro_noise_density * noise.gyro_noise_density),
      Vec3::Constant(noise.gyro_bias_walk * noise.gyro_bias_walk),
      Vec3::Constant(noise.accel_bias_walk * noise.accel_bias_walk);
  const Mat15 gqg = g * qc.asDiagonal() * g.transpose();
  Mat15 q = 0.5 * dt * (phi * gqg * phi.transpose() + gqg);
  return 0.5 * (q + q.transpose());
}

void propagate(FilterState& state, const ImuSample& sample, double dt, const NoiseModel& noise,
               const WorldConstants& world) {
  check_step(dt);
  if (!(sample.stamp > state.inertial.stamp)) {
    throw StaleStamp("IMU sample at " + std::to_string(sample.stamp) +
                     " s is not newer than the state at " +
                     std::to_string(state.inertial.stamp) + " s");
  }
  const TransitionBlocks b = error_transition(state.inertial, sample, dt);
  const Mat15 q = discrete_noise(state.inertial, sample, dt, noise, b.phi);

  constexpr int kI = FilterState::kInertialDim;
  const int rest = state.dim() - kI;
  MatX& p = state.cov;
  const Mat15 pii = b.phi * p.topLeftCorner<kI, kI>() * b.phi.transpose() + q;
  p.topLeftCorner<kI, kI>() = pii;
  if (rest > 0) {
    const MatX piv = b.phi * p.topRightCorner(kI, rest);
    p.topRightCorner(kI, rest) = piv;
    p.bottomLeftCorner(rest, kI) = piv.transpose();
  }
  enforce_symmetry(p);

  state.inertial = propagate_nominal(state.inertial, sample, dt, world.gravity_w);
  state.inertial.stamp = sample.stamp;
}

}  // namespace rvio
