#include <doctest.h>

#include <filesystem>
#include <random>

#include "rvio/errors.hpp"
#include "rvio/scene.hpp"
#include "rvio/sensor_log.hpp"
#include "rvio/sensors.hpp"

using namespace rvio;

namespace {

SensorRig quiet_rig() {
  SensorRig rig;
  rig.imu_noise = NoiseModel{};
  rig.measurement = MeasurementNoise{0.0, 0.0};
  rig.outlier_probability = 0.0;
  return rig;
}

void add_quad(Mesh& mesh, const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  mesh.add_solid({a, b, c, d}, {{0, 1, 2}, {0, 2, 3}});
}

Scene ground_with_landmark(const Vec3& lm) {
  Scene s;
  s.name = "custom";
  add_quad(s.mesh, Vec3(-50, -50, 0), Vec3(50, -50, 0), Vec3(50, 50, 0), Vec3(-50, 50, 0));
  Landmark l;
  l.id = 0;
  l.p_w = lm;
  l.face = 0;
  s.landmarks.push_back(l);
  return s;
}

}  // namespace

TEST_CASE("built-in scenes") {
  SceneParams flat;
  const Scene f = make_scene(flat);
  REQUIRE_FALSE(f.landmarks.empty());
  for (const auto& l : f.landmarks) CHECK(l.p_w.z() == 0.0);

  SceneParams urban;
  urban.name = "urban_strip";
  const Scene u = make_scene(urban);
  const double x_begin = urban.x_start + urban.transition_fraction * urban.length;
  for (double x = urban.x_start + 1.0; x < x_begin - 1.0; x += 2.0) {
    CHECK(u.height_at(x, 0.3).value_or(-1.0) == doctest::Approx(0.0));
  }
  double tallest = 0.0;
  for (double x = x_begin; x < urban.x_start + urban.length; x += 0.5) {
    for (double y = -10.0; y <= 10.0; y += 0.5) tallest = std::max(tallest, u.height_at(x, y).value_or(0.0));
  }
  CHECK(tallest >= urban.building_min_height);

  SceneParams boxes;
  boxes.name = "indoor_boxes";
  boxes.length = 10.0;
  boxes.width = 4.0;
  boxes.x_start = 0.0;
  boxes.transition_fraction = 0.0;
  const Scene b = make_scene(boxes);
  int steps = 0;
  for (double x = 0.5; x + 1.0 < 10.0; x += 1.0) {
    const double h0 = b.height_at(x, 0.5).value();
    const double h1 = b.height_at(x + 1.0, 0.5).value();
    // Occasional floor gaps between boxes.
    CHECK((h0 == 0.0 || (h0 >= boxes.box_min_height && h0 <= boxes.box_max_height)));
    if (std::abs(h1 - h0) > 1e-6) ++steps;
  }
  CHECK(steps >= 8);

  SceneParams bad;
  bad.name = "moon";
  CHECK_THROWS_AS(make_scene(bad), ConfigError);
  CHECK(make_scene(urban).landmarks.size() == u.landmarks.size());
}

TEST_CASE("IMU synthesis at rest and at constant velocity") {
  SensorRig rig = quiet_rig();
  TrajectoryProfile hover;
  hover.kind = ProfileKind::kHover;
  hover.duration = 2.0;
  TrajectoryProfile cv = hover;
  cv.kind = ProfileKind::kConstantVelocity;
  const ImuStream a = synth_imu(hover, rig, 3);
  const ImuStream b = synth_imu(cv, rig, 3);
  REQUIRE(a.samples.size() == 501);
  const Vec3 expect = -(hover.start_position * 0.0 + rig.gravity_w);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].omega_m.norm() == 0.0);
    CHECK((a.samples[i].accel_m - expect).norm() < 1e-12);
    CHECK(a.samples[i].accel_m == b.samples[i].accel_m);
    CHECK(a.samples[i].omega_m == b.samples[i].omega_m);
  }
}

TEST_CASE("streams are reproducible from the seed") {
  SensorRig rig;
  TrajectoryProfile p;
  p.duration = 3.0;
  const Scene scene = make_scene(SceneParams{});
  SensorStreams s1{synth_imu(p, rig, 9), synth_tracks(p, scene, rig, 9), synth_range(p, scene, rig, 9)};
  SensorStreams s2{synth_imu(p, rig, 9), synth_tracks(p, scene, rig, 9), synth_range(p, scene, rig, 9)};
  SensorStreams s3{synth_imu(p, rig, 10), synth_tracks(p, scene, rig, 10), synth_range(p, scene, rig, 10)};
  CHECK(stream_checksum(s1) == stream_checksum(s2));
  CHECK(imu_csv(s1.imu) == imu_csv(s2.imu));
  CHECK(stream_checksum(s1) != stream_checksum(s3));
}

TEST_CASE("landmark on the optical axis projects to the image centre") {
  const SensorRig rig = quiet_rig();
  TrajectoryProfile p;
  p.kind = ProfileKind::kHover;
  p.duration = 0.1;
  p.start_position = Vec3(1, 2, 5);
  const Scene s = ground_with_landmark(Vec3(1, 2, 0));
  const auto frames = synth_tracks(p, s, rig, 1);
  REQUIRE_FALSE(frames.empty());
  REQUIRE(frames[0].observations.size() == 1);
  CHECK(frames[0].observations[0].uv.norm() < 1e-12);
}

TEST_CASE("an occluded landmark ends its track") {
  const SensorRig rig = quiet_rig();
  TrajectoryProfile p;
  p.duration = 1.5;
  p.speed = 2.0;
  p.start_position = Vec3(0.1, 0, 5);
  Scene s = ground_with_landmark(Vec3(3, 0, 0));
  // Small plate half way down: blocks the line of sight for x in [0.2, 0.8].
  add_quad(s.mesh, Vec3(1.6, -0.5, 2.5), Vec3(1.9, -0.5, 2.5), Vec3(1.9, 0.5, 2.5),
           Vec3(1.6, 0.5, 2.5));
  const auto frames = synth_tracks(p, s, rig, 1);
  std::optional<std::uint64_t> before, after;
  for (const auto& f : frames) {
    const double x = 0.1 + 2.0 * f.stamp;
    // Oracle: direct segment test against the plate.
    const Vec3 eye(x, 0, 5);
    const Vec3 dir = Vec3(3, 0, 0) - eye;
    const bool blocked = ray_triangle(eye, dir, Vec3(1.6, -0.5, 2.5), Vec3(1.9, -0.5, 2.5), Vec3(1.9, 0.5, 2.5)).value_or(2.0) < 1.0 ||
                         ray_triangle(eye, dir, Vec3(1.6, -0.5, 2.5), Vec3(1.9, 0.5, 2.5), Vec3(1.6, 0.5, 2.5)).value_or(2.0) < 1.0;
    CHECK(f.observations.empty() == blocked);
    if (!f.observations.empty()) (x < 0.5 ? before : after) = f.observations[0].track_id;
  }
  REQUIRE(before);
  REQUIRE(after);
  CHECK(*before != *after);
}

TEST_CASE("exact projections triangulate back to the landmarks") {
  const SensorRig rig = quiet_rig();
  TrajectoryProfile p;
  p.duration = 1.0;
  SceneParams sp;
  sp.landmark_density = 0.1;
  const Scene scene = make_scene(sp);
  const auto frames = synth_tracks(p, scene, rig, 1);
  const TrackFrame& f0 = frames.front();
  const TrackFrame& f1 = frames.back();
  const CameraPoseClone c0 = true_camera_pose(p, rig, f0.stamp);
  const CameraPoseClone c1 = true_camera_pose(p, rig, f1.stamp);
  int matched = 0;
  for (const auto& a : f0.observations) {
    for (const auto& b : f1.observations) {
      if (a.landmark_id != b.landmark_id) continue;
      // Midpoint-free linear solve: p = c0 + s d0 = c1 + t d1.
      const Vec3 d0 = c0.rot_cam_to_world() * Vec3(a.uv.x(), a.uv.y(), 1.0);
      const Vec3 d1 = c1.rot_cam_to_world() * Vec3(b.uv.x(), b.uv.y(), 1.0);
      Eigen::Matrix<double, 3, 2> m;
      m << d0, -d1;
      const Eigen::Vector2d st = m.colPivHouseholderQr().solve(c1.p_w_c - c0.p_w_c);
      const Vec3 pw = c0.p_w_c + st(0) * d0;
      CHECK((pw - scene.landmarks[a.landmark_id].p_w).norm() < 1e-9);
      ++matched;
    }
  }
  CHECK(matched > 10);
}

TEST_CASE("range finder samples") {
  SensorRig rig = quiet_rig();
  TrajectoryProfile p;
  p.duration = 2.0;
  p.start_position = Vec3(0, 0, 11);
  const Scene flat = make_scene(SceneParams{});
  for (const auto& r : synth_range(p, flat, rig, 1)) {
    CHECK(r.sample.range_m == doctest::Approx(11.0).epsilon(1e-12));
    CHECK_FALSE(r.outlier);
  }

  SceneParams boxes;
  boxes.name = "indoor_boxes";
  boxes.length = 10.0;
  boxes.width = 4.0;
  boxes.x_start = 0.0;
  boxes.transition_fraction = 0.0;
  TrajectoryProfile q;
  q.duration = 8.0;
  q.speed = 0.5;
  q.start_position = Vec3(0.2, 0.5, 2.5);
  const auto ranges = synth_range(q, make_scene(boxes), rig, 1);
  int jumps = 0;
  for (std::size_t k = 1; k < ranges.size(); ++k) {
    if (std::abs(ranges[k].sample.range_m - ranges[k - 1].sample.range_m) > 0.05) ++jumps;
  }
  CHECK(jumps >= 2);  // 0.02 m of travel per sample, so only drop-offs jump

  rig.spikes = {{1.0, 7.0}};
  const auto spiked = synth_range(p, flat, rig, 1);
  int flagged = 0;
  for (const auto& r : spiked) {
    if (r.outlier) {
      ++flagged;
      CHECK(r.sample.stamp == doctest::Approx(1.0));
      CHECK(r.sample.range_m == doctest::Approx(18.0));
      CHECK(r.true_range == doctest::Approx(11.0));
    }
  }
  CHECK(flagged == 1);
}

TEST_CASE("sensor logs round-trip exactly") {
  SensorRig rig;
  TrajectoryProfile p;
  p.duration = 2.0;
  const Scene scene = make_scene(SceneParams{});
  const SensorStreams s{synth_imu(p, rig, 4), synth_tracks(p, scene, rig, 4), synth_range(p, scene, rig, 4)};
  const auto dir = std::filesystem::temp_directory_path() / "rvio_log_roundtrip";
  std::filesystem::remove_all(dir);
  write_streams(dir, s);
  const SensorStreams back = read_streams(dir);
  CHECK(stream_checksum(back) == stream_checksum(s));
  CHECK(back.imu.samples.size() == s.imu.samples.size());
  CHECK(back.frames.size() == s.frames.size());
  CHECK(back.ranges.size() == s.ranges.size());
  std::filesystem::remove(dir / "range.csv");
  CHECK_THROWS_AS(read_streams(dir), Error);
  std::filesystem::remove_all(dir);
}
