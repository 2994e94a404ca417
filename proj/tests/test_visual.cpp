#include <doctest.h>

#include <algorithm>
#include <map>

#include "rvio/errors.hpp"
#include "rvio/visual.hpp"
#include "test_util.hpp"

using namespace rvio;
using namespace rvio::testing;

namespace {

// Clones along +x looking down +z, with a small random attitude each.
FilterState strip_state(std::mt19937_64& rng, std::size_t clones, double spacing) {
  FilterState s = random_state(rng, clones, 0);
  for (std::size_t i = 0; i < clones; ++i) {
    s.clones[i].p_w_c = Vec3(spacing * static_cast<double>(i), 0.0, 0.0) + uniform3(rng, -0.02, 0.02);
    s.clones[i].q_w_c = small_rotation(rng, 0.02);
  }
  return s;
}

Track observe(const FilterState& s, std::uint64_t id, const Vec3& p_w, double noise,
              std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, noise);
  Track t;
  t.track_id = id;
  for (const auto& c : s.clones) {
    const Vec3 pc = c.rot_cam_to_world().transpose() * (p_w - c.p_w_c);
    Vec2 uv = project(pc);
    if (noise > 0.0) uv += Vec2(n(rng), n(rng));
    t.observations.push_back({id, c.id, uv});
  }
  return t;
}

Track candidate(std::uint64_t id, const Vec2& uv, std::size_t length, std::uint64_t last_clone,
                double score = 0.0) {
  Track t;
  t.track_id = id;
  t.score = score;
  for (std::size_t k = 0; k < length; ++k) {
    t.observations.push_back({id, last_clone + 1 - length + k, uv});
  }
  return t;
}

}  // namespace

TEST_CASE("pinhole projection") {
  CHECK((project(Vec3(0, 0, 2)) - Vec2(0, 0)).norm() < 1e-15);
  CHECK((project(Vec3(1, 2, 4)) - Vec2(0.25, 0.5)).norm() < 1e-15);
  CHECK_THROWS_AS(project(Vec3(0, 0, -1)), BehindCamera);
}

TEST_CASE("chi-square quantiles") {
  CHECK(chi_square_quantile(0.95, 1) == doctest::Approx(3.841458820694124).epsilon(1e-12));
  CHECK(chi_square_quantile(0.95, 2) == doctest::Approx(5.991464547107979).epsilon(1e-12));
}

TEST_CASE("exact SLAM observations give zero innovation and no correction") {
  std::mt19937_64 rng(31);
  FilterState s = random_state(rng, 4, 5);
  std::vector<FeatureObservation> obs;
  for (std::size_t j = 0; j < s.features.size(); ++j) {
    obs.push_back({s.features[j].track_id, s.clones[3].id, predict_slam_observation(s, j, 3).uv});
  }
  const Vec3 p_before = s.inertial.p_w_i;
  const SlamUpdateResult r = slam_update(s, obs, MeasurementNoise{});
  REQUIRE(r.innovations.size() == 5);
  for (const auto& inn : r.innovations) {
    CHECK(inn.residual.norm() < 1e-10);
    CHECK(inn.accepted);
  }
  CHECK((s.inertial.p_w_i - p_before).norm() < 1e-10);
}

TEST_CASE("a 10-sigma observation is gated out") {
  std::mt19937_64 rng(32);
  FilterState s = random_state(rng, 4, 2);
  const MeasurementNoise noise;
  const VisualPrediction pred = predict_slam_observation(s, 0, 2);
  const Eigen::Matrix2d cov =
      pred.h * s.cov * pred.h.transpose() + noise.sigma_v * noise.sigma_v * Eigen::Matrix2d::Identity();
  const Vec2 offset(10.0 * std::sqrt(cov(0, 0)), 0.0);
  const std::vector<FeatureObservation> obs{{s.features[0].track_id, s.clones[2].id, pred.uv + offset}};
  const FilterState before = s;
  Diagnostics d;
  const SlamUpdateResult r = slam_update(s, obs, noise, {}, &d);
  REQUIRE(r.innovations.size() == 1);
  CHECK_FALSE(r.innovations[0].accepted);
  CHECK(d.gated_visual == 1);
  CHECK(s.cov == before.cov);
  CHECK(s.inertial.p_w_i == before.inertial.p_w_i);
}

TEST_CASE("SLAM updates never increase the covariance trace") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> n(0.0, 0.0025);
  for (int trial = 0; trial < 50; ++trial) {
    FilterState s = random_state(rng, 4, 4);
    std::vector<FeatureObservation> obs;
    for (std::size_t j = 0; j < s.features.size(); ++j) {
      const Vec2 uv = predict_slam_observation(s, j, 1).uv + Vec2(n(rng), n(rng));
      obs.push_back({s.features[j].track_id, s.clones[1].id, uv});
    }
    const double before = s.cov.trace();
    slam_update(s, obs, MeasurementNoise{});
    CHECK(s.cov.trace() <= before + 1e-12);
  }
}

TEST_CASE("two-view triangulation recovers the depth") {
  FilterState s;
  CameraPoseClone a;
  a.id = 0;
  CameraPoseClone b;
  b.p_w_c = Vec3(1.0, 0.0, 0.0);
  b.stamp = 1.0;
  b.id = 1;
  s.clones = {a, b};
  s.cov = MatX::Identity(s.dim(), s.dim());
  const Vec3 p(0.3, -0.2, 5.0);
  std::mt19937_64 rng(0);
  const Track t = observe(s, 9, p, 0.0, rng);
  const Triangulation3d tri = triangulate_track(s, t);
  REQUIRE(tri.status == TriangulationStatus::kOk);
  CHECK((tri.point_w - p).norm() < 1e-6);
  CHECK(1.0 / tri.feature.rho == doctest::Approx(5.0).epsilon(1e-7));
  CHECK(tri.feature.anchor_index == 1);
}

TEST_CASE("pure rotation gives no baseline") {
  FilterState s;
  CameraPoseClone a;
  a.id = 0;
  CameraPoseClone b;
  b.q_w_c = quat_exp(Vec3(0.0, 0.05, 0.0));
  b.stamp = 1.0;
  b.id = 1;
  s.clones = {a, b};
  s.cov = MatX::Identity(s.dim(), s.dim());
  std::mt19937_64 rng(0);
  const Track t = observe(s, 9, Vec3(0.1, 0.1, 5.0), 0.0, rng);
  CHECK(triangulate_track(s, t).status == TriangulationStatus::kInsufficientBaseline);
}

TEST_CASE("left-nullspace projection removes the feature") {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    const FilterState s = strip_state(rng, 4, 0.3);
    const Track t = observe(s, 5, Vec3(0.5, 0.2, 6.0) + uniform3(rng, -1, 1), 0.0025, rng);
    const Triangulation3d tri = triangulate_track(s, t);
    REQUIRE(tri.status == TriangulationStatus::kOk);
    const NullspaceProjection p = project_left_nullspace(linearize_track(s, t, tri.feature));
    CHECK(p.residual.size() == 5);
    CHECK(p.h_f_projected.cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("MSCKF correction points the same way as a delayed SLAM update") {
  std::mt19937_64 rng(35);
  const MeasurementNoise noise{1e-4, 0.025};
  for (int trial = 0; trial < 10; ++trial) {
    const FilterState s = strip_state(rng, 4, 0.4);
    const Track t = observe(s, 5, Vec3(0.5, 0.2, 5.0) + uniform3(rng, -1, 1), 2e-4, rng);
    const Triangulation3d tri = triangulate_track(s, t);
    REQUIRE(tri.status == TriangulationStatus::kOk);

    FilterState m = s;
    const std::vector<Track> batch{t};
    REQUIRE(msckf_update(m, batch, noise).used == 1);

    // Same track with the feature in the state under an uninformative prior.
    FilterState d = s;
    const TrackLinearization lin = linearize_track(s, t, tri.feature);
    d.features.push_back(tri.feature);
    insert_covariance_block(d.cov, d.feature_offset(0), MatX::Zero(3, s.dim()),
                            1e6 * MatX::Identity(3, 3));
    MatX h(lin.h_x.rows(), d.dim());
    h << lin.h_x, lin.h_f;
    const int rows = static_cast<int>(lin.residual.size());
    REQUIRE(ekf_update(d, h, lin.residual, noise.sigma_v * noise.sigma_v * MatX::Identity(rows, rows)) ==
            UpdateStatus::kApplied);

    const auto additive = [&](const FilterState& x) {
      VecX v(9 + 3 * x.clones.size());
      v << x.inertial.p_w_i - s.inertial.p_w_i, x.inertial.v_w_i - s.inertial.v_w_i,
          x.inertial.b_a - s.inertial.b_a, VecX::Zero(3 * x.clones.size());
      for (std::size_t i = 0; i < x.clones.size(); ++i) {
        v.segment<3>(9 + 3 * i) = x.clones[i].p_w_c - s.clones[i].p_w_c;
      }
      return v;
    };
    const VecX dm = additive(m);
    const VecX dd = additive(d);
    REQUIRE(dm.norm() > 0.0);
    const double angle = std::acos(std::clamp(dm.dot(dd) / (dm.norm() * dd.norm()), -1.0, 1.0));
    CHECK(angle < 0.1);
  }
}

TEST_CASE("27 SLAM slots from 40 candidates are spread over the tiles") {
  TrackManagerOptions opts;
  std::vector<Track> tracks;
  for (std::uint64_t id = 0; id < 40; ++id) {
    const int tile = static_cast<int>(id % 12);
    const double u = -0.8 + 0.4 * (tile % 4) + 0.1 + 0.005 * static_cast<double>(id / 12);
    const double v = -0.6 + 0.4 * (tile / 4) + 0.2;
    tracks.push_back(candidate(id, Vec2(u, v), 4, 10, static_cast<double>(id)));
  }
  const TrackAssignments a = manage_tracks(tracks, {}, 10, opts);
  REQUIRE(a.slam.size() == 27);
  std::map<int, int> per_tile;
  for (auto id : a.slam) ++per_tile[tile_of(tracks[id].observations.back().uv, opts)];
  int lo = 100, hi = 0;
  for (int tile = 0; tile < 12; ++tile) {
    lo = std::min(lo, per_tile[tile]);
    hi = std::max(hi, per_tile[tile]);
  }
  CHECK(hi - lo <= 1);
  // The 13 full-window tracks left over go to the MSCKF.
  CHECK(a.msckf.size() == 13);
}

TEST_CASE("lost tracks: long enough ones go to the MSCKF, short ones are dropped") {
  TrackManagerOptions opts;
  // Seen in frames 8, 9 and 10 (two frame-to-frame baselines), absent at 11.
  const Track mature = candidate(1, Vec2(0.1, 0.1), 3, 10);
  const Track short_lived = candidate(2, Vec2(0.1, 0.1), 2, 10);
  const std::vector<Track> tracks{mature, short_lived};
  const TrackAssignments a = manage_tracks(tracks, {}, 11, opts);
  CHECK(a.msckf == std::vector<std::uint64_t>{1});
  CHECK(a.discard == std::vector<std::uint64_t>{2});
  CHECK(a.slam.empty());
}

TEST_CASE("a candidate in an occupied tile yields to another tile") {
  TrackManagerOptions opts;
  opts.max_slam = 2;
  const Vec2 tile0(-0.7, -0.5);
  const Vec2 tile5(-0.3, -0.1);
  const std::vector<Vec2> slam_uv{tile0};
  const std::vector<Track> tracks{candidate(1, tile0, 4, 10, 9.0), candidate(2, tile5, 4, 10, 1.0)};
  REQUIRE(tile_of(tile0, opts) == 0);
  REQUIRE(tile_of(tile5, opts) == 5);
  const TrackAssignments a = manage_tracks(tracks, slam_uv, 10, opts);
  CHECK(a.slam == std::vector<std::uint64_t>{2});
}
