#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "rvio/errors.hpp"
#include "rvio/imu.hpp"
#include "rvio/sensors.hpp"
#include "test_util.hpp"

using namespace rvio;
using namespace rvio::testing;

namespace {

const Vec3 kGravity(0.0, 0.0, -9.81);

}  // namespace

TEST_CASE("exact hover leaves the nominal state unchanged") {
  InertialState x;
  x.p_w_i = Vec3(1, 2, 3);
  x.q_w_i = quat_exp(Vec3(0.1, 0.2, -0.3));
  x.b_g = Vec3(0.01, -0.02, 0.005);
  x.b_a = Vec3(0.05, 0.02, -0.01);
  ImuSample s;
  s.omega_m = x.b_g;
  s.accel_m = x.b_a - quat_to_rotation(x.q_w_i) * kGravity;
  InertialState y = x;
  for (int k = 0; k < 250; ++k) {
    s.stamp = y.stamp + 0.004;
    y = propagate_nominal(y, s, 0.004, kGravity);
  }
  CHECK((y.p_w_i - x.p_w_i).norm() < 1e-12);
  CHECK(y.v_w_i.norm() < 1e-12);
  CHECK(y.q_w_i.angularDistance(x.q_w_i) < 1e-12);
}

TEST_CASE("constant velocity advances 2 m in 1 s") {
  InertialState x;
  x.v_w_i = Vec3(2.0, 0.0, 0.0);
  ImuSample s;
  s.accel_m = -kGravity;
  for (int k = 0; k < 250; ++k) {
    s.stamp = x.stamp + 0.004;
    x = propagate_nominal(x, s, 0.004, kGravity);
  }
  CHECK((x.p_w_i - Vec3(2.0, 0.0, 0.0)).norm() < 1e-6);
}

TEST_CASE("smooth excited motion tracks the analytic trajectory") {
  // The oracle is the closed-form trajectory the readings were sampled from,
  // which is at least as accurate as an oversampled integrator.
  TrajectoryProfile p;
  p.kind = ProfileKind::kExcited;
  p.duration = 10.0;
  SensorRig rig;
  rig.imu_noise = NoiseModel{};
  const ImuStream imu = synth_imu(p, rig, 1);
  InertialState x;
  x.p_w_i = imu.truth[0].pose.p;
  x.v_w_i = imu.truth[0].pose.v;
  x.q_w_i = imu.truth[0].pose.q;
  for (std::size_t k = 1; k < imu.samples.size(); ++k) {
    const ImuSample& a = imu.samples[k - 1];
    const ImuSample& b = imu.samples[k];
    ImuSample mean;
    mean.stamp = b.stamp;
    mean.omega_m = 0.5 * (a.omega_m + b.omega_m);
    mean.accel_m = 0.5 * (a.accel_m + b.accel_m);
    x = propagate_nominal(x, mean, b.stamp - a.stamp, rig.gravity_w);
  }
  CHECK((x.p_w_i - imu.truth.back().pose.p).norm() < 1e-4);
}

TEST_CASE("single-step transition structure") {
  std::mt19937_64 rng(5);
  InertialState x;
  x.q_w_i = small_rotation(rng, 1.0);
  x.v_w_i = uniform3(rng, -2, 2);
  ImuSample s;
  s.omega_m = uniform3(rng, -0.5, 0.5);
  s.accel_m = uniform3(rng, -3, 3);

  const TransitionBlocks tiny = error_transition(x, s, 1e-12);
  CHECK((tiny.phi - Mat15::Identity()).cwiseAbs().maxCoeff() < 1e-8);

  const double dt = 0.004;
  const TransitionBlocks one = error_transition(x, s, dt);
  CHECK((one.phi.block<3, 3>(FilterState::kP, FilterState::kV) - dt * Mat3::Identity())
            .cwiseAbs()
            .maxCoeff() < 1e-9);
}

TEST_CASE("position-to-accelerometer-bias coupling under constant acceleration") {
  InertialState x;
  x.q_w_i = quat_exp(Vec3(0.0, 0.0, 0.4));
  x.v_w_i = Vec3(1.0, -0.5, 0.2);
  const Vec3 a_body(0.3, -0.2, 0.1);
  ImuSample s;
  s.accel_m = a_body - quat_to_rotation(x.q_w_i) * kGravity;
  const double dt = 0.004;
  std::vector<TransitionBlocks> steps;
  InertialState y = x;
  for (std::size_t k = 2; k <= 50; ++k) {
    steps.push_back(error_transition(y, s, dt));
    s.stamp = y.stamp + dt;
    y = propagate_nominal(y, s, dt, kGravity);
    const TransitionBlocks acc = accumulate_transition(steps);
    const Vec3 lhs = acc.phi_54() * a_body;
    const Vec3 rhs = -(y.p_w_i - x.p_w_i - static_cast<double>(k - 1) * dt * x.v_w_i);
    CHECK((lhs - rhs).norm() <= 1e-6 * rhs.norm());
  }
}

TEST_CASE("accumulated transitions") {
  std::mt19937_64 rng(6);
  InertialState x;
  ImuSample s;
  s.omega_m = uniform3(rng, -0.3, 0.3);
  s.accel_m = uniform3(rng, -2, 2);
  const TransitionBlocks one = error_transition(x, s, 0.004);
  const std::vector<TransitionBlocks> single{one};
  CHECK((accumulate_transition(single).phi - one.phi).cwiseAbs().maxCoeff() == 0.0);

  // Hover: velocity-to-position block of Phi(k,1) is (k-1) dt I.
  InertialState h;
  ImuSample hs;
  hs.accel_m = -kGravity;
  const std::vector<TransitionBlocks> hover(9, error_transition(h, hs, 0.004));
  const Mat3 pv = accumulate_transition(hover).phi.block<3, 3>(FilterState::kP, FilterState::kV);
  CHECK((pv - 9 * 0.004 * Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);

  std::vector<TransitionBlocks> steps;
  Mat15 oracle = Mat15::Identity();
  for (int k = 0; k < 50; ++k) {
    InertialState r;
    r.q_w_i = small_rotation(rng, 1.0);
    r.v_w_i = uniform3(rng, -2, 2);
    ImuSample rs;
    rs.omega_m = uniform3(rng, -0.5, 0.5);
    rs.accel_m = uniform3(rng, -3, 3);
    steps.push_back(error_transition(r, rs, 0.004));
    oracle = steps.back().phi * oracle;
  }
  const Mat15 acc = accumulate_transition(steps).phi;
  CHECK((acc - oracle).norm() <= 1e-9 * oracle.norm());
}

TEST_CASE("covariance propagation stays symmetric positive definite") {
  std::mt19937_64 rng(7);
  FilterState s = random_state(rng, 2, 2);
  ImuSample m;
  m.omega_m = Vec3(0.1, -0.05, 0.2);
  m.accel_m = Vec3(0.2, 0.1, 9.9);
  const NoiseModel noise{0.0013, 0.0083, 1.3e-5, 5.5e-5};
  const WorldConstants world;
  const MatX clone_block = s.cov.block(15, 15, s.dim() - 15, s.dim() - 15);
  for (int k = 0; k < 100; ++k) {
    m.stamp = s.inertial.stamp + 0.004;
    propagate(s, m, 0.004, noise, world);
  }
  CHECK((s.cov - s.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<MatX> es(s.cov);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  CHECK((s.cov.block(15, 15, s.dim() - 15, s.dim() - 15) - clone_block).cwiseAbs().maxCoeff() <
        1e-15);

  m.stamp = s.inertial.stamp + 0.5;
  CHECK_THROWS_AS(propagate(s, m, 0.5, noise, world), StreamGap);
}
