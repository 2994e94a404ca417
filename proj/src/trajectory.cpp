#include "rvio/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rvio/errors.hpp"

namespace rvio {

ProfileKind profile_kind_from_string(const std::string& s) {
  if (s == "hover") return ProfileKind::kHover;
  if (s == "constant_velocity") return ProfileKind::kConstantVelocity;
  if (s == "excited") return ProfileKind::kExcited;
  throw ConfigError("unknown trajectory kind '" + s + "'");
}

const char* to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::kHover: return "hover";
    case ProfileKind::kConstantVelocity: return "constant_velocity";
    case ProfileKind::kExcited: return "excited";
  }
  return "unknown";
}

namespace {

struct Along {
  double s = 0.0;
  double v = 0.0;
  double a = 0.0;
};

// Along-track motion: rest, quintic speed blend, then constant speed.
Along along_track(const TrajectoryProfile& p, double t) {
  Along out;
  const double tau = t - p.start_delay;
  if (tau < 0.0 || p.speed == 0.0) return out;
  const double T = p.ramp_time;
  if (T > 0.0 && tau < T) {
    const double u = tau / T;
    const double u2 = u * u;
    const double u3 = u2 * u;
    out.s = p.speed * T * (2.5 * u2 * u2 - 3.0 * u2 * u3 + u3 * u3);
    out.v = p.speed * (10.0 * u3 - 15.0 * u2 * u2 + 6.0 * u2 * u3);
    out.a = p.speed / T * (30.0 * u2 - 60.0 * u3 + 30.0 * u2 * u2);
    return out;
  }
  out.s = 0.5 * p.speed * T + p.speed * (tau - T);
  out.v = p.speed;
  return out;
}

Quaternion euler_zyx(double yaw, double pitch, double roll) {
  return Quaternion(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                    Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                    Eigen::AngleAxisd(roll, Vec3::UnitX()));
}

}  // namespace

TruthSample evaluate(const TrajectoryProfile& p, double t) {
  t = std::clamp(t, 0.0, p.duration);
  TruthSample out;
  out.t = t;
  const Vec3 dir(std::cos(p.heading), std::sin(p.heading), 0.0);
  out.p = p.start_position;
  out.q = euler_zyx(p.heading, 0.0, 0.0);
  if (p.kind == ProfileKind::kHover) return out;

  const Along al = along_track(p, t);
  out.p += al.s * dir;
  out.v = al.v * dir;
  out.a = al.a * dir;
  if (p.kind == ProfileKind::kConstantVelocity) return out;

  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  for (int i = 0; i < 3; ++i) {
    const double w = kTwoPi * p.excitation_frequency[i];
    const double amp = p.excitation_amplitude[i];
    out.p[i] += amp * std::sin(w * t);
    out.v[i] += amp * w * std::cos(w * t);
    out.a[i] -= amp * w * w * std::sin(w * t);
  }

  const double w = kTwoPi * p.attitude_frequency;
  const double amp = p.attitude_amplitude;
  const double roll = amp * std::sin(w * t);
  const double pitch = amp * std::sin(w * t + 1.0);
  const double yaw = p.heading + amp * std::sin(w * t + 2.0);
  const double droll = amp * w * std::cos(w * t);
  const double dpitch = amp * w * std::cos(w * t + 1.0);
  const double dyaw = amp * w * std::cos(w * t + 2.0);
  out.q = euler_zyx(yaw, pitch, roll);
  const double sr = std::sin(roll), cr = std::cos(roll);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  out.omega_body = Vec3(droll - dyaw * sp, dpitch * cr + dyaw * cp * sr,
                        -dpitch * sr + dyaw * cp * cr);
  return out;
}

double travelled_distance(const TrajectoryProfile& p) {
  if (p.kind == ProfileKind::kHover) return 0.0;
  return along_track(p, p.duration).s;
}

}  // namespace rvio
