#include "rvio/sensor_log.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/crc.hpp>

#include "rvio/errors.hpp"

namespace rvio {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void put(std::string& s, const Vec3& v) {
  for (int i = 0; i < 3; ++i) {
    s += ',';
    s += fmt(v[i]);
  }
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(columns) + " columns");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

double num(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw Error("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw Error("bad number '" + s + "'");
  }
}

Vec3 vec(const std::vector<std::string>& r, std::size_t at) {
  return {num(r[at]), num(r[at + 1]), num(r[at + 2])};
}

}  // namespace

std::string imu_csv(const ImuStream& imu) {
  std::string s =
      "stamp,omega_x,omega_y,omega_z,accel_x,accel_y,accel_z,true_p_x,true_p_y,true_p_z,"
      "true_v_x,true_v_y,true_v_z,true_q_w,true_q_x,true_q_y,true_q_z,true_bg_x,true_bg_y,"
      "true_bg_z,true_ba_x,true_ba_y,true_ba_z\n";
  for (std::size_t i = 0; i < imu.samples.size(); ++i) {
    const ImuSample& m = imu.samples[i];
    const ImuTruth& t = imu.truth[i];
    s += fmt(m.stamp);
    put(s, m.omega_m);
    put(s, m.accel_m);
    put(s, t.pose.p);
    put(s, t.pose.v);
    s += ',' + fmt(t.pose.q.w()) + ',' + fmt(t.pose.q.x()) + ',' + fmt(t.pose.q.y()) + ',' +
         fmt(t.pose.q.z());
    put(s, t.b_g);
    put(s, t.b_a);
    s += '\n';
  }
  return s;
}

std::string frames_csv(const std::vector<TrackFrame>& frames) {
  std::string s = "frame,stamp\n";
  for (std::size_t j = 0; j < frames.size(); ++j) {
    s += std::to_string(j) + ',' + fmt(frames[j].stamp) + '\n';
  }
  return s;
}

std::string tracks_csv(const std::vector<TrackFrame>& frames) {
  std::string s = "frame,track_id,landmark_id,u,v,score,outlier\n";
  for (std::size_t j = 0; j < frames.size(); ++j) {
    for (const SimObservation& o : frames[j].observations) {
      s += std::to_string(j) + ',' + std::to_string(o.track_id) + ',' +
           std::to_string(o.landmark_id) + ',' + fmt(o.uv.x()) + ',' + fmt(o.uv.y()) + ',' +
           fmt(o.score) + ',' + (o.outlier ? "1" : "0") + '\n';
    }
  }
  return s;
}

std::string range_csv(const std::vector<RangeRecord>& ranges) {
  std::string s = "stamp,range_m,true_range,hit_x,hit_y,hit_z,outlier\n";
  for (const RangeRecord& r : ranges) {
    s += fmt(r.sample.stamp) + ',' + fmt(r.sample.range_m) + ',' + fmt(r.true_range);
    put(s, r.hit);
    s += r.outlier ? ",1\n" : ",0\n";
  }
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_streams(const std::filesystem::path& dir, const SensorStreams& streams) {
  std::filesystem::create_directories(dir);
  write_text(dir / "imu.csv", imu_csv(streams.imu));
  write_text(dir / "frames.csv", frames_csv(streams.frames));
  write_text(dir / "tracks.csv", tracks_csv(streams.frames));
  write_text(dir / "range.csv", range_csv(streams.ranges));
}

SensorStreams read_streams(const std::filesystem::path& dir) {
  SensorStreams s;
  for (const auto& r : read_csv(dir / "imu.csv", 23)) {
    ImuSample m;
    m.stamp = num(r[0]);
    m.omega_m = vec(r, 1);
    m.accel_m = vec(r, 4);
    ImuTruth t;
    t.stamp = m.stamp;
    t.pose.t = m.stamp;
    t.pose.p = vec(r, 7);
    t.pose.v = vec(r, 10);
    t.pose.q = Quaternion(num(r[13]), num(r[14]), num(r[15]), num(r[16]));
    t.b_g = vec(r, 17);
    t.b_a = vec(r, 20);
    s.imu.samples.push_back(m);
    s.imu.truth.push_back(t);
  }
  for (const auto& r : read_csv(dir / "frames.csv", 2)) {
    TrackFrame f;
    f.stamp = num(r[1]);
    s.frames.push_back(f);
  }
  for (const auto& r : read_csv(dir / "tracks.csv", 7)) {
    const auto j = static_cast<std::size_t>(std::stoull(r[0]));
    if (j >= s.frames.size()) throw Error("tracks.csv references an unknown frame");
    SimObservation o;
    o.track_id = std::stoull(r[1]);
    o.landmark_id = std::stoull(r[2]);
    o.uv = Vec2(num(r[3]), num(r[4]));
    o.score = num(r[5]);
    o.outlier = r[6] == "1";
    s.frames[j].observations.push_back(o);
  }
  for (const auto& r : read_csv(dir / "range.csv", 7)) {
    RangeRecord rr;
    rr.sample.stamp = num(r[0]);
    rr.sample.range_m = num(r[1]);
    rr.true_range = num(r[2]);
    rr.hit = vec(r, 3);
    rr.outlier = r[6] == "1";
    s.ranges.push_back(rr);
  }
  return s;
}

std::uint32_t stream_checksum(const SensorStreams& streams) {
  boost::crc_32_type crc;
  for (const std::string& part : {imu_csv(streams.imu), frames_csv(streams.frames),
                                  tracks_csv(streams.frames), range_csv(streams.ranges)}) {
    crc.process_bytes(part.data(), part.size());
  }
  return crc.checksum();
}

}  // namespace rvio
