#pragma once

#include <span>
#include <vector>

#include "rvio/state.hpp"

namespace rvio {

struct ImuSample {
  Vec3 omega_m = Vec3::Zero();
  Vec3 accel_m = Vec3::Zero();
  double stamp = 0.0;
};

/// Continuous-time densities: white noise in rad/s/sqrt(Hz) and m/s^2/sqrt(Hz),
/// bias random walks in rad/s^2/sqrt(Hz) and m/s^3/sqrt(Hz).
struct NoiseModel {
  double gyro_noise_density = 0.0;
  double accel_noise_density = 0.0;
  double gyro_bias_walk = 0.0;
  double accel_bias_walk = 0.0;
};

using Mat15 = Eigen::Matrix<double, 15, 15>;

/// Inertial error-state transition with its named couplings:
///  phi_12 = d(theta_k)/d(b_g,1), phi_52 = d(p_k)/d(b_g,1), phi_54 = d(p_k)/d(b_a,1).
struct TransitionBlocks {
  Mat15 phi = Mat15::Identity();

  Mat3 phi_12() const { return phi.block<3, 3>(FilterState::kTheta, FilterState::kBg); }
  Mat3 phi_52() const { return phi.block<3, 3>(FilterState::kP, FilterState::kBg); }
  Mat3 phi_54() const { return phi.block<3, 3>(FilterState::kP, FilterState::kBa); }
};

inline constexpr double kMaxImuStep = 0.1;

/// Midpoint strapdown step of the nominal inertial state. The sample is the
/// mean rate/specific force over the interval. No covariance work.
InertialState propagate_nominal(const InertialState& x, const ImuSample& sample, double dt,
                                const Vec3& gravity_w);

/// Single-step 15x15 error transition: the exact Jacobian of
/// propagate_nominal with respect to the inertial error state.
TransitionBlocks error_transition(const InertialState& x, const ImuSample& sample, double dt);

/// Ordered product Phi(k,1) = Phi(k,k-1) ... Phi(2,1).
TransitionBlocks accumulate_transition(std::span<const TransitionBlocks> steps);

/// Discrete process noise over the inertial error state (trapezoidal rule).
Mat15 discrete_noise(const InertialState& x, const ImuSample& sample, double dt,
                     const NoiseModel& noise, const Mat15& phi);

/// Propagates nominal state and covariance. Clone and feature blocks keep
/// their values; their cross terms with the inertial block follow Phi.
/// Throws StreamGap when dt is outside (0, kMaxImuStep] and StaleStamp when
/// the sample is not newer than the state.
void propagate(FilterState& state, const ImuSample& sample, double dt, const NoiseModel& noise,
               const WorldConstants& world);

}  // namespace rvio
