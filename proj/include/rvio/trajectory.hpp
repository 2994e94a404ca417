#pragma once

#include <string>

#include "rvio/so3.hpp"

namespace rvio {

enum class ProfileKind { kHover, kConstantVelocity, kExcited };

ProfileKind profile_kind_from_string(const std::string& s);
const char* to_string(ProfileKind k);

/// Body frame: x forward along the traverse heading, z up.
struct TrajectoryProfile {
  ProfileKind kind = ProfileKind::kConstantVelocity;
  double duration = 60.0;
  double speed = 2.0;
  Vec3 start_position{0.0, 0.0, 11.0};
  double heading = 0.0;      // yaw of the traverse direction, rad
  double start_delay = 0.0;  // hover before moving
  double ramp_time = 0.0;    // quintic blend from rest to `speed`
  // kExcited: p += A .* sin(2 pi f t); attitude oscillations of amplitude
  // attitude_amplitude (rad) about roll/pitch/yaw at attitude_frequency (Hz).
  Vec3 excitation_amplitude{1.0, 1.0, 0.5};
  Vec3 excitation_frequency{0.2, 0.15, 0.25};
  double attitude_amplitude = 0.05;
  double attitude_frequency = 0.3;
};

struct TruthSample {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();  // world kinematic acceleration
  Quaternion q = Quaternion::Identity();
  Vec3 omega_body = Vec3::Zero();
};

/// Analytic pose and derivatives at time t (clamped to [0, duration]).
TruthSample evaluate(const TrajectoryProfile& profile, double t);

/// Along-track distance covered over [0, duration].
double travelled_distance(const TrajectoryProfile& profile);

}  // namespace rvio
