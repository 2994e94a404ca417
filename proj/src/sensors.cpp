#include "rvio/sensors.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

namespace rvio {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kImuStream = 1;
constexpr std::uint64_t kTrackStream = 2;
constexpr std::uint64_t kRangeStream = 3;

Vec3 gaussian3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return sigma * Vec3(x, y, z);
}

}  // namespace

CameraExtrinsics nadir_camera() {
  Mat3 r;
  r.col(0) = Vec3(0.0, -1.0, 0.0);
  r.col(1) = Vec3(-1.0, 0.0, 0.0);
  r.col(2) = Vec3(0.0, 0.0, -1.0);
  CameraExtrinsics e;
  e.q_i_c = Quaternion(r);
  return e;
}

std::size_t sample_count(double duration, double rate) {
  return static_cast<std::size_t>(std::floor(duration * rate + 1e-9)) + 1;
}

ImuStream synth_imu(const TrajectoryProfile& profile, const SensorRig& rig, std::uint64_t seed) {
  auto rng = make_rng(seed, kImuStream);
  const double dt = 1.0 / rig.imu_rate;
  const std::size_t n = sample_count(profile.duration, rig.imu_rate);
  const NoiseModel& nm = rig.imu_noise;
  ImuStream out;
  out.samples.reserve(n);
  out.truth.reserve(n);
  Vec3 bg = rig.gyro_bias;
  Vec3 ba = rig.accel_bias;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    if (i > 0) {
      bg += gaussian3(rng, nm.gyro_bias_walk * std::sqrt(dt));
      ba += gaussian3(rng, nm.accel_bias_walk * std::sqrt(dt));
    }
    const TruthSample ts = evaluate(profile, t);
    const Mat3 c = ts.q.toRotationMatrix().transpose();
    ImuSample s;
    s.stamp = t;
    s.omega_m = ts.omega_body + bg + gaussian3(rng, nm.gyro_noise_density / std::sqrt(dt));
    s.accel_m = c * (ts.a - rig.gravity_w) + ba +
                gaussian3(rng, nm.accel_noise_density / std::sqrt(dt));
    out.samples.push_back(s);
    out.truth.push_back({t, ts, bg, ba});
  }
  return out;
}

CameraPoseClone true_camera_pose(const TrajectoryProfile& profile, const SensorRig& rig,
                                 double t) {
  const TruthSample ts = evaluate(profile, t);
  InertialState x;
  x.p_w_i = ts.p;
  x.q_w_i = ts.q;
  CameraPoseClone c = camera_pose(x, rig.camera);
  c.stamp = t;
  return c;
}

std::vector<TrackFrame> synth_tracks(const TrajectoryProfile& profile, const Scene& scene,
                                     const SensorRig& rig, std::uint64_t seed) {
  auto rng = make_rng(seed, kTrackStream);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Live {
    std::uint64_t track_id;
    std::size_t length;
    std::size_t last_frame;
  };
  std::unordered_map<std::uint64_t, Live> live;
  std::uint64_t next_track = 0;

  const std::size_t frames = sample_count(profile.duration, rig.camera_rate);
  std::vector<TrackFrame> out;
  out.reserve(frames);
  for (std::size_t j = 0; j < frames; ++j) {
    TrackFrame frame;
    frame.stamp = static_cast<double>(j) / rig.camera_rate;
    const CameraPoseClone cam = true_camera_pose(profile, rig, frame.stamp);
    const Mat3 r_cw = cam.rot_cam_to_world().transpose();
    for (const Landmark& lm : scene.landmarks) {
      const Vec3 p = r_cw * (lm.p_w - cam.p_w_c);
      if (p.z() < rig.min_depth || p.norm() > rig.max_depth) continue;
      const Vec2 uv = p.head<2>() / p.z();
      if (std::abs(uv.x()) > rig.fov_half.x() || std::abs(uv.y()) > rig.fov_half.y()) continue;
      if (!scene.visible(cam.p_w_c, lm)) continue;

      auto it = live.find(lm.id);
      const bool continues = it != live.end() && it->second.last_frame + 1 == j &&
                             (rig.max_track_length == 0 ||
                              it->second.length < rig.max_track_length);
      if (continues) {
        ++it->second.length;
        it->second.last_frame = j;
      } else {
        live[lm.id] = Live{next_track++, 1, j};
        it = live.find(lm.id);
      }
      SimObservation o;
      o.track_id = it->second.track_id;
      o.landmark_id = lm.id;
      o.score = lm.score;
      const double nx = noise(rng);
      const double ny = noise(rng);
      o.uv = uv + rig.measurement.sigma_v * Vec2(nx, ny);
      if (rig.track_outlier_probability > 0.0 && unit(rng) < rig.track_outlier_probability) {
        o.outlier = true;
        o.uv += Vec2(unit(rng) - 0.5, unit(rng) - 0.5) * 0.1;
      }
      frame.observations.push_back(o);
    }
    out.push_back(std::move(frame));
  }
  return out;
}

std::vector<RangeRecord> synth_range(const TrajectoryProfile& profile, const Scene& scene,
                                     const SensorRig& rig, std::uint64_t seed) {
  auto rng = make_rng(seed, kRangeStream);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<bool> spike_used(rig.spikes.size(), false);

  const std::size_t n = sample_count(profile.duration, rig.lrf_rate);
  std::vector<RangeRecord> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rig.lrf_rate;
    const CameraPoseClone cam = true_camera_pose(profile, rig, t);
    const Vec3 dir = cam.rot_cam_to_world() * rig.lrf.u_r_cam.normalized();
    // Draws happen for every sample so dropped samples do not shift the stream.
    const double white = noise(rng);
    const double draw = unit(rng);
    const double magnitude = rig.outlier_min + unit(rng) * (rig.outlier_max - rig.outlier_min);
    const auto hit = scene.cast(cam.p_w_c, dir, rig.max_range);
    if (!hit) continue;
    RangeRecord r;
    r.sample.stamp = t;
    r.true_range = hit->distance;
    r.hit = hit->point;
    r.sample.range_m = hit->distance + rig.measurement.sigma_r * white;
    if (draw < rig.outlier_probability) {
      r.outlier = true;
      r.sample.range_m += magnitude;
    }
    for (std::size_t s = 0; s < rig.spikes.size(); ++s) {
      if (!spike_used[s] && t + 1e-9 >= rig.spikes[s].time) {
        spike_used[s] = true;
        r.outlier = true;
        r.sample.range_m += rig.spikes[s].magnitude;
      }
    }
    if (!(r.sample.range_m > 0.0)) continue;
    out.push_back(r);
  }
  return out;
}

}  // namespace rvio
