#include <doctest.h>

#include <random>

#include "rvio/observability.hpp"
#include "test_util.hpp"

using namespace rvio;
using namespace rvio::testing;

namespace {

constexpr double kPi = 3.14159265358979323846;
const Vec3 kGravity(0.0, 0.0, -9.81);
constexpr double kDt = 0.004;

// Camera (identity extrinsics) looking down; constant body acceleration and
// no rotation, so the world acceleration is constant too.
AnalysisTrajectory constant_accel(std::mt19937_64& rng, const Vec3& a_body, std::size_t steps,
                                  const Vec3& v0) {
  InertialState x;
  x.p_w_i = Vec3(0, 0, 5) + uniform3(rng, -0.5, 0.5);
  x.v_w_i = v0;
  x.q_w_i = Quaternion(Eigen::AngleAxisd(kPi, Vec3::UnitX())) * small_rotation(rng, 0.1);
  ImuSample s;
  s.accel_m = a_body - x.q_w_i.toRotationMatrix().transpose() * kGravity;
  std::vector<ImuSample> samples(steps - 1, s);
  return build_analysis_trajectory(x, samples, kDt, kGravity);
}

std::vector<Vec3> ground_features(std::mt19937_64& rng, std::size_t n) {
  std::vector<Vec3> f;
  for (std::size_t j = 0; j < n; ++j) f.push_back(Vec3(0, 0, 0) + uniform3(rng, -3, 3).cwiseProduct(Vec3(1, 1, 0.1)));
  return f;
}

}  // namespace

TEST_CASE("analytic facet rows match the numeric oracle") {
  std::mt19937_64 rng(61);
  const AnalysisSensors sensors;
  int checked = 0;
  for (int trial = 0; checked < 20 && trial < 200; ++trial) {
    const AnalysisTrajectory traj =
        constant_accel(rng, uniform3(rng, -0.5, 0.5), 60, uniform3(rng, -2, 2));
    const auto features = ground_features(rng, 6);
    const std::array<std::size_t, 3> facet{0, 1, 2};
    // Grazing rays make the finite-difference oracle itself inaccurate.
    const ObservabilityRow first = build_row_analytic(traj, 1, features, facet, sensors);
    if (std::abs(first.b) < 0.3 * first.n_w.norm()) continue;
    ++checked;
    for (std::size_t k : {1u, 7u, 30u, 60u}) {
      const ObservabilityRow a = build_row_analytic(traj, k, features, facet, sensors);
      const ObservabilityRow n = build_row_numeric(traj, k, features, facet, sensors);
      // The numeric row differentiates the range itself, 1/b included.
      const Eigen::RowVectorXd ra = a.assembled();
      const Eigen::RowVectorXd rn = n.assembled();
      CHECK((ra - rn).norm() <= 1e-8 * ra.norm());
    }
  }
  CHECK(checked == 20);
}

TEST_CASE("facet row structure") {
  std::mt19937_64 rng(62);
  const AnalysisSensors sensors;
  const AnalysisTrajectory traj = constant_accel(rng, Vec3(0.1, 0.0, 0.0), 20, Vec3(2, 0, 0));
  const auto features = ground_features(rng, 7);
  const std::array<std::size_t, 3> facet{0, 1, 2};
  const ObservabilityRow first = build_row_analytic(traj, 1, features, facet, sensors);
  CHECK(first.m_v.norm() == 0.0);
  for (std::size_t k : {1u, 5u, 20u}) {
    const ObservabilityRow r = build_row_analytic(traj, k, features, facet, sensors);
    CHECK((r.m_p + r.n_w.transpose()).norm() < 1e-12 * r.n_w.norm());
    const Eigen::RowVectorXd row = r.assembled();
    CHECK(row.size() == 15 + 3 * 7);
    CHECK(row.tail(3 * 4).norm() == 0.0);
  }
}

TEST_CASE("hover rows are proportional in the position block") {
  std::mt19937_64 rng(63);
  const AnalysisSensors sensors;
  const AnalysisTrajectory traj = constant_accel(rng, Vec3::Zero(), 50, Vec3::Zero());
  const auto features = ground_features(rng, 5);
  const std::array<std::size_t, 3> facet{0, 1, 2};
  const Eigen::RowVector3d p1 = build_row_analytic(traj, 1, features, facet, sensors).assembled().head<3>();
  for (std::size_t k : {2u, 25u, 50u}) {
    const Eigen::RowVector3d pk = build_row_analytic(traj, k, features, facet, sensors).assembled().head<3>();
    CHECK(pk.cross(p1).norm() < 1e-12 * pk.norm() * p1.norm());
  }
}

TEST_CASE("scale direction assembly") {
  AnalysisState s;
  s.inertial.p_w_i = Vec3(1, 2, 3);
  s.inertial.v_w_i = Vec3(2, 0, 0);
  s.features_cartesian = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)};
  const VecX n = scale_direction(s, Vec3::Zero());
  CHECK(n.size() == 15 + 3 * 4);
  CHECK(n.segment<3>(12).norm() == 0.0);
  CHECK(n.segment<3>(6).norm() == 0.0);
  CHECK(n.segment<3>(0) == s.inertial.p_w_i);
  CHECK(n.segment<3>(24) == Vec3(1, 1, 0));
}

TEST_CASE("scale residual closed form") {
  std::mt19937_64 rng(64);
  const AnalysisSensors sensors;
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 a_body = uniform3(rng, -0.5, 0.5);
    const AnalysisTrajectory traj = constant_accel(rng, a_body, 50, uniform3(rng, -2, 2));
    const auto features = ground_features(rng, 5);
    const std::array<std::size_t, 3> facet{0, 1, 2};
    VecX ns = VecX::Zero(15 + 3 * 5);
    ns.segment<3>(0) = traj.at(1).p_w_i;
    ns.segment<3>(3) = traj.at(1).v_w_i;
    ns.segment<3>(12) = -a_body;
    for (std::size_t j = 0; j < 5; ++j) ns.segment<3>(15 + 3 * j) = features[j];
    CHECK((scale_direction(traj, features, 1e-6) - ns).norm() < 1e-6 * ns.norm());
    for (std::size_t k : {2u, 10u, 50u}) {
      const Eigen::RowVectorXd m = build_row_analytic(traj, k, features, facet, sensors).assembled();
      const Vec3 n = facet_normal(features[0], features[1], features[2]);
      const Vec3 u = traj.at(k).rot_body_to_world() * sensors.camera.q_i_c.toRotationMatrix() *
                     sensors.lrf.u_r_cam;
      const double expected = n.dot(features[1] - traj.at(k).p_w_i) / u.dot(n);
      CHECK(m.dot(ns) == doctest::Approx(expected).epsilon(1e-6));
    }
  }
}

TEST_CASE("camera in the facet plane zeroes the scale residual") {
  std::mt19937_64 rng(65);
  const AnalysisSensors sensors;
  const AnalysisTrajectory traj = constant_accel(rng, Vec3::Zero(), 5, Vec3(1, 0, 0));
  const Vec3 p = traj.at(3).p_w_i;
  // Vertical facet through the camera position, hit by a tilted ray.
  std::vector<Vec3> features{p + Vec3(0, 1, -1), p + Vec3(0, -1, -1), p + Vec3(0, 0, -3)};
  const Vec3 n = facet_normal(features[0], features[1], features[2]);
  CHECK(std::abs(n.dot(features[1] - p)) < 1e-12);
}

TEST_CASE("out-of-facet depths are unobservable while hovering") {
  std::mt19937_64 rng(66);
  const AnalysisSensors sensors;
  const AnalysisTrajectory traj = constant_accel(rng, Vec3::Zero(), 100, Vec3::Zero());
  const auto features = ground_features(rng, 5);
  const std::array<std::size_t, 3> facet{0, 1, 2};
  const std::vector<std::size_t> facet_features{0, 1, 2};
  const VecX nh = hover_direction(features, facet_features, traj.at(1).p_w_i);
  const std::vector<std::size_t> steps{1, 10, 50, 100};
  CHECK(test_hover_nullspace(traj, features, facet, steps, sensors, nh) < 1e-8);

  const std::vector<Vec3> three(features.begin(), features.begin() + 3);
  CHECK(hover_direction(three, facet_features).norm() == 0.0);
}

TEST_CASE("VIO-only stacks keep the scale direction unobservable at constant velocity") {
  std::mt19937_64 rng(67);
  AnalysisSensors sensors;
  const AnalysisTrajectory traj = constant_accel(rng, Vec3::Zero(), 1001, Vec3(2, 0, 0));
  std::vector<Vec3> features;
  for (int j = 0; j < 20; ++j) features.push_back(Vec3(-1 + 0.4 * j, 0, 0) + uniform3(rng, -1.5, 1.5).cwiseProduct(Vec3(1, 1, 0.2)));
  const VecX ns = scale_direction(traj, features, 1e-6);
  const std::vector<NamedDirection> dirs{{"scale", ns}};

  LabOptions vio;
  vio.use_range = false;
  vio.stride = 100;
  const LabRows rows_vio = stack_rows(traj, features, sensors, vio);
  const NullspaceReport rep_vio = nullspace_report(rows_vio.stack, dirs);
  CHECK(rep_vio.directions[0].in_nullspace);
  CHECK(rep_vio.directions[0].residual < 1e-6);

  LabOptions rvio = vio;
  rvio.use_range = true;
  const LabRows rows = stack_rows(traj, features, sensors, rvio);
  REQUIRE_FALSE(rows.range_rows.empty());
  const NullspaceReport rep = nullspace_report(rows.stack, dirs);
  CHECK_FALSE(rep.directions[0].in_nullspace);
  CHECK(rep.directions[0].residual > 1e-3);
}

TEST_CASE("incremental stacking matches the dense factor") {
  std::mt19937_64 rng(68);
  ObservabilityStack st(10);
  MatX all(0, 10);
  for (int b = 0; b < 30; ++b) {
    const MatX rows = MatX::Random(3, 10);
    st.add_rows(rows);
    MatX grown(all.rows() + 3, 10);
    grown << all, rows;
    all = grown;
  }
  const MatX r = st.factor();
  CHECK((r.transpose() * r - all.transpose() * all).norm() < 1e-10 * (all.transpose() * all).norm());
  CHECK(st.rows() == 90);
}
