#pragma once

// CSV interchange of simulated sensor streams. Every file has a header row
// and a fixed column order:
//   imu.csv    stamp, omega_x..z, accel_x..z, true_p_x..z, true_v_x..z,
//              true_q_w..z, true_bg_x..z, true_ba_x..z
//   frames.csv frame, stamp
//   tracks.csv frame, track_id, landmark_id, u, v, score, outlier
//   range.csv  stamp, range_m, true_range, hit_x..z, outlier
// Doubles are written with 17 significant digits so a round trip is exact.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rvio/sensors.hpp"

namespace rvio {

struct SensorStreams {
  ImuStream imu;
  std::vector<TrackFrame> frames;
  std::vector<RangeRecord> ranges;
};

std::string imu_csv(const ImuStream& imu);
std::string frames_csv(const std::vector<TrackFrame>& frames);
std::string tracks_csv(const std::vector<TrackFrame>& frames);
std::string range_csv(const std::vector<RangeRecord>& ranges);

void write_streams(const std::filesystem::path& dir, const SensorStreams& streams);

/// Throws rvio::Error on missing files or malformed rows.
SensorStreams read_streams(const std::filesystem::path& dir);

/// CRC-32 over the CSV serialization of every stream.
std::uint32_t stream_checksum(const SensorStreams& streams);

/// Formats a double with round-trip precision.
std::string fmt(double v);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace rvio
