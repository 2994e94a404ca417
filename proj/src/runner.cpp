#include "rvio/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "rvio/errors.hpp"

namespace rvio {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint64_t kInitStream = 4;

Mat3 traverse_frame(const ScenarioConfig& c) {
  return Eigen::AngleAxisd(c.trajectory.heading, Vec3::UnitZ()).toRotationMatrix();
}

InertialState truth_state(const TruthSample& s) {
  InertialState x;
  x.p_w_i = s.p;
  x.v_w_i = s.v;
  x.q_w_i = s.q;
  x.stamp = s.t;
  return x;
}

std::string vec_cells(const Vec3& v) { return fmt(v.x()) + ',' + fmt(v.y()) + ',' + fmt(v.z()); }

std::string quat_cells(const Quaternion& q) {
  return fmt(q.w()) + ',' + fmt(q.x()) + ',' + fmt(q.y()) + ',' + fmt(q.z());
}

// Initial filter state: truth pose, velocity with an optional draw from the
// prior, multiplied by the scale factor; zero biases.
InertialState initial_estimate(const ScenarioConfig& c, const ImuTruth& truth) {
  InertialState x = truth_state(truth.pose);
  x.stamp = truth.stamp;
  if (c.filter.sample_initial_error) {
    std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                      static_cast<std::uint32_t>(kInitStream)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> n(0.0, c.filter.initial.velocity);
    const double ex = n(rng);
    const double ey = n(rng);
    const double ez = n(rng);
    x.v_w_i += Vec3(ex, ey, ez);
  }
  x.v_w_i *= c.filter.scale_init;
  return x;
}

MatX initial_covariance(const InitialUncertainty& u) {
  VecX d(15);
  d << Vec3::Constant(u.position * u.position), Vec3::Constant(u.velocity * u.velocity),
      Vec3::Constant(u.attitude * u.attitude), Vec3::Constant(u.gyro_bias * u.gyro_bias),
      Vec3::Constant(u.accel_bias * u.accel_bias);
  return d.asDiagonal();
}

void finish_metrics(const ScenarioConfig& c, RunMetrics& m) {
  const Mat3 frame_t = traverse_frame(c).transpose();
  m.errors.clear();
  m.distance = 0.0;
  m.max_position_error = 0.0;
  for (std::size_t i = 0; i < m.states.size(); ++i) {
    const StateRecord& s = m.states[i];
    ErrorSample e;
    e.t = s.t;
    e.position = frame_t * (s.estimate.p_w_i - s.truth.p_w_i);
    e.velocity = frame_t * (s.estimate.v_w_i - s.truth.v_w_i);
    e.attitude = frame_t * so3_log(s.truth.rot_body_to_world() *
                                   s.estimate.rot_body_to_world().transpose());
    m.errors.push_back(e);
    m.max_position_error = std::max(m.max_position_error, e.position.norm());
    if (i > 0) m.distance += (s.truth.p_w_i - m.states[i - 1].truth.p_w_i).norm();
  }
  m.final_position_error = m.errors.empty() ? 0.0 : m.errors.back().position.norm();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.max_error_percent = m.distance > 0.0 ? 100.0 * m.max_position_error / m.distance : nan;
  m.final_error_percent = m.distance > 0.0 ? 100.0 * m.final_position_error / m.distance : nan;
}

}  // namespace

SensorStreams generate_streams(const ScenarioConfig& c) {
  const Scene scene = make_scene(c.scene);
  SensorStreams s;
  s.imu = synth_imu(c.trajectory, c.rig, c.seed);
  s.frames = synth_tracks(c.trajectory, scene, c.rig, c.seed);
  s.ranges = synth_range(c.trajectory, scene, c.rig, c.seed);
  return s;
}

EstimatorOptions estimator_options(const ScenarioConfig& c, Mode mode) {
  const FilterSettings& f = c.filter;
  EstimatorOptions o;
  o.use_range = mode == Mode::kRangeVio;
  o.max_clones = f.max_clones;
  o.tracks.max_slam = f.max_slam;
  o.tracks.tiles_x = f.tiles_x;
  o.tracks.tiles_y = f.tiles_y;
  o.tracks.fov_half = c.rig.fov_half;
  o.tracks.min_msckf_length = f.min_msckf_length;
  o.tracks.min_slam_length = f.min_slam_length;
  o.tracks.window_size = f.max_clones;
  o.visual.slam_gate_probability = f.visual_gate_probability;
  o.visual.msckf_gate_probability = f.visual_gate_probability;
  o.visual.min_parallax_rad = f.min_parallax_deg * kPi / 180.0;
  o.visual.semi_infinite_rho = f.semi_infinite_rho;
  o.visual.semi_infinite_sigma_rho = f.semi_infinite_sigma_rho;
  o.facet.max_range = c.rig.max_range;
  o.facet.min_facet_angle_rad = f.min_facet_angle_deg * kPi / 180.0;
  o.facet.gate_sigma = f.gate_sigma;
  o.facet.fov_half = c.rig.fov_half;
  o.noise = f.measurement;
  o.imu_noise = f.imu_noise;
  o.world.gravity_w = c.rig.gravity_w;
  o.world.dt = 1.0 / c.rig.imu_rate;
  o.camera = c.rig.camera;
  o.lrf = c.rig.lrf;
  o.semi_infinite_init = f.semi_infinite_init;
  return o;
}

RunMetrics run_filter(const ScenarioConfig& c, const SensorStreams& streams, Mode mode) {
  const auto t0 = std::chrono::steady_clock::now();
  RunMetrics m;
  m.name = c.name;
  m.mode = mode;
  m.seed = c.seed;
  m.stream_checksum = stream_checksum(streams);
  if (streams.imu.samples.size() < 2) throw Error("IMU stream has fewer than two samples");

  const auto& imu = streams.imu.samples;
  std::optional<Estimator> est;
  est.emplace(estimator_options(c, mode), initial_estimate(c, streams.imu.truth.front()),
              initial_covariance(c.filter.initial), imu.front());
  m.last_good = est->state().inertial;

  std::vector<FrameObservation> obs;
  const auto record = [&](double t) {
    const FilterState& s = est->state();
    StateRecord r;
    r.t = t;
    r.truth = truth_state(evaluate(c.trajectory, t));
    r.estimate = s.inertial;
    r.sigma_p = s.cov.diagonal().segment<3>(FilterState::kP).cwiseSqrt();
    // A frame at the initial stamp supersedes the prior-only row.
    if (!m.states.empty() && m.states.back().t == t) {
      m.states.back() = r;
    } else {
      m.states.push_back(r);
    }
  };
  record(imu.front().stamp);

  std::size_t next_frame = 0;
  std::size_t next_range = 0;
  const auto drain = [&](double upto) {
    while (true) {
      const double tf = next_frame < streams.frames.size() ? streams.frames[next_frame].stamp
                                                          : std::numeric_limits<double>::infinity();
      const double tr = next_range < streams.ranges.size()
                            ? streams.ranges[next_range].sample.stamp
                            : std::numeric_limits<double>::infinity();
      if (std::min(tf, tr) > upto) return;
      if (tf <= tr) {
        const TrackFrame& f = streams.frames[next_frame++];
        if (f.stamp < imu.front().stamp) continue;
        obs.clear();
        for (const SimObservation& o : f.observations) obs.push_back({o.track_id, o.uv, o.score});
        const FrameReport rep = est->process_frame(f.stamp, obs);
        m.max_visual_innovation = std::max(m.max_visual_innovation, rep.max_innovation);
        m.last_good = est->state().inertial;
        record(f.stamp);
      } else {
        const RangeRecord& r = streams.ranges[next_range++];
        if (r.sample.stamp < imu.front().stamp) continue;
        const RangeReport rep = est->process_range(r.sample);
        GateRecord g;
        g.stamp = r.sample.stamp;
        g.measured = r.sample.range_m;
        g.true_range = r.true_range;
        g.outlier = r.outlier;
        g.enabled = mode == Mode::kRangeVio;
        g.result = rep.result;
        if (g.enabled && rep.result.verdict == GateVerdict::kAccepted) {
          m.max_range_innovation =
              std::max(m.max_range_innovation, std::abs(rep.result.innovation));
        }
        m.gates.push_back(g);
        m.last_good = est->state().inertial;
      }
    }
  };

  try {
    drain(imu.front().stamp);
    for (std::size_t i = 1; i < imu.size(); ++i) {
      est->add_imu(imu[i]);
      drain(imu[i].stamp);
      est->catch_up();
    }
  } catch (const Divergence& e) {
    m.diverged = true;
    m.failure = e.what();
  } catch (const Error& e) {
    m.diverged = true;
    m.failure = e.what();
  }
  m.diagnostics = est->diagnostics();
  finish_metrics(c, m);
  if (!std::isfinite(m.max_position_error) && !m.diverged) {
    m.diverged = true;
    m.failure = "non-finite position error";
  }
  m.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

std::string metrics_csv(const RunMetrics& m) {
  std::string s = "metric,value\n";
  const auto row = [&](const char* k, double v) { s += std::string(k) + ',' + fmt(v) + '\n'; };
  row("distance_m", m.distance);
  row("max_position_error_m", m.max_position_error);
  row("final_position_error_m", m.final_position_error);
  row("max_error_percent", m.max_error_percent);
  row("final_error_percent", m.final_error_percent);
  double max_axis[3] = {0.0, 0.0, 0.0};
  for (const ErrorSample& e : m.errors) {
    for (int i = 0; i < 3; ++i) max_axis[i] = std::max(max_axis[i], std::abs(e.position[i]));
  }
  row("max_abs_error_x_m", max_axis[0]);
  row("max_abs_error_y_m", max_axis[1]);
  row("max_abs_error_z_m", max_axis[2]);
  row("max_visual_innovation", m.max_visual_innovation);
  row("max_range_innovation_m", m.max_range_innovation);
  row("range_accepted", m.diagnostics.range_accepted);
  row("range_rejected", m.diagnostics.range_rejected);
  row("range_no_facet", m.diagnostics.range_no_facet);
  row("range_degenerate", m.diagnostics.range_degenerate);
  row("range_negative", m.diagnostics.range_negative);
  row("visual_gated", m.diagnostics.gated_visual);
  row("msckf_skipped_baseline", m.diagnostics.msckf_skipped_baseline);
  row("quaternion_normalizations", m.diagnostics.quaternion_normalizations);
  row("diverged", m.diverged ? 1.0 : 0.0);
  return s;
}

std::string report_text(const RunMetrics& m) {
  std::ostringstream o;
  char buf[256];
  o << "scenario: " << m.name << "\n";
  o << "mode: " << to_string(m.mode) << "\n";
  o << "seed: " << m.seed << "\n";
  std::snprintf(buf, sizeof(buf), "stream checksum: %08x\n", m.stream_checksum);
  o << buf;
  o << "status: " << (m.diverged ? "diverged (" + m.failure + ")" : std::string("ok")) << "\n";
  std::snprintf(buf, sizeof(buf),
                "distance: %.3f m\nmax position error: %.4f m (%.3f%%)\n"
                "final position error: %.4f m (%.3f%%)\n",
                m.distance, m.max_position_error, m.max_error_percent, m.final_position_error,
                m.final_error_percent);
  o << buf;
  std::snprintf(buf, sizeof(buf), "range updates: %d accepted, %d rejected, %d without facet\n",
                m.diagnostics.range_accepted, m.diagnostics.range_rejected,
                m.diagnostics.range_no_facet);
  o << buf;
  std::snprintf(buf, sizeof(buf), "runtime: %.2f s\n", m.runtime_s);
  o << buf;
  return o.str();
}

void write_run(const fs::path& dir, const ScenarioConfig& c, const RunMetrics& m) {
  fs::create_directories(dir);
  write_text(dir / "config.json", config_to_json(c));

  std::string truth = "t,p_x,p_y,p_z,v_x,v_y,v_z,q_w,q_x,q_y,q_z\n";
  std::string est =
      "t,p_x,p_y,p_z,v_x,v_y,v_z,q_w,q_x,q_y,q_z,bg_x,bg_y,bg_z,ba_x,ba_y,ba_z,sigma_p_x,"
      "sigma_p_y,sigma_p_z\n";
  for (const StateRecord& r : m.states) {
    truth += fmt(r.t) + ',' + vec_cells(r.truth.p_w_i) + ',' + vec_cells(r.truth.v_w_i) + ',' +
             quat_cells(r.truth.q_w_i) + '\n';
    est += fmt(r.t) + ',' + vec_cells(r.estimate.p_w_i) + ',' + vec_cells(r.estimate.v_w_i) + ',' +
           quat_cells(r.estimate.q_w_i) + ',' + vec_cells(r.estimate.b_g) + ',' +
           vec_cells(r.estimate.b_a) + ',' + vec_cells(r.sigma_p) + '\n';
  }
  write_text(dir / "truth.csv", truth);
  write_text(dir / "estimate.csv", est);

  std::string errors =
      "t,ep_x,ep_y,ep_z,ev_x,ev_y,ev_z,eth_x,eth_y,eth_z,ep_norm\n";
  for (const ErrorSample& e : m.errors) {
    errors += fmt(e.t) + ',' + vec_cells(e.position) + ',' + vec_cells(e.velocity) + ',' +
              vec_cells(e.attitude) + ',' + fmt(e.position.norm()) + '\n';
  }
  write_text(dir / "errors.csv", errors);
  write_text(dir / "metrics.csv", metrics_csv(m));

  std::string gates =
      "stamp,measured,true_range,outlier,verdict,predicted,innovation,innovation_variance,"
      "normalized_sq\n";
  for (const GateRecord& g : m.gates) {
    gates += fmt(g.stamp) + ',' + fmt(g.measured) + ',' + fmt(g.true_range) + ',' +
             (g.outlier ? "1" : "0") + ',' + (g.enabled ? to_string(g.result.verdict) : "off") +
             ',' + fmt(g.result.predicted) + ',' + fmt(g.result.innovation) + ',' +
             fmt(g.result.innovation_variance) + ',' + fmt(g.result.normalized_sq) + '\n';
  }
  write_text(dir / "gates.csv", gates);
  write_text(dir / "report.txt", report_text(m));

  if (m.diverged && m.last_good) {
    const InertialState& x = *m.last_good;
    write_text(dir / "last_good_state.csv",
               "t,p_x,p_y,p_z,v_x,v_y,v_z,q_w,q_x,q_y,q_z,bg_x,bg_y,bg_z,ba_x,ba_y,ba_z\n" +
                   fmt(x.stamp) + ',' + vec_cells(x.p_w_i) + ',' + vec_cells(x.v_w_i) + ',' +
                   quat_cells(x.q_w_i) + ',' + vec_cells(x.b_g) + ',' + vec_cells(x.b_a) + '\n');
  }
}

RunMetrics run_scenario(const ScenarioConfig& c, const RunOptions& opts) {
  validate(c);
  const SensorStreams streams = opts.replay_dir ? read_streams(*opts.replay_dir)
                                                : generate_streams(c);
  RunMetrics m = run_filter(c, streams, c.mode);
  if (opts.write_outputs) {
    write_run(c.output_dir, c, m);
    if (opts.write_sensor_logs) write_streams(fs::path(c.output_dir) / "sensors", streams);
  }
  return m;
}

Comparison compare_modes(const ScenarioConfig& c, const RunOptions& opts) {
  validate(c);
  const SensorStreams streams = opts.replay_dir ? read_streams(*opts.replay_dir)
                                                : generate_streams(c);
  const std::uint32_t reference = stream_checksum(streams);
  Comparison cmp;
  cmp.vio = run_filter(c, streams, Mode::kVio);
  cmp.range_vio = run_filter(c, streams, Mode::kRangeVio);
  if (cmp.vio.stream_checksum != reference || cmp.range_vio.stream_checksum != reference) {
    throw Error("sensor streams differ between modes");
  }
  cmp.ratio = cmp.vio.max_position_error / cmp.range_vio.max_position_error;
  if (opts.write_outputs) {
    const fs::path out = c.output_dir;
    write_run(out / "vio", c, cmp.vio);
    write_run(out / "range_vio", c, cmp.range_vio);
    if (opts.write_sensor_logs) write_streams(out / "sensors", streams);
    std::string s = "mode,max_position_error_m,final_position_error_m,max_error_percent,"
                    "final_error_percent,diverged,stream_checksum\n";
    for (const RunMetrics* m : {&cmp.vio, &cmp.range_vio}) {
      char crc[16];
      std::snprintf(crc, sizeof(crc), "%08x", m->stream_checksum);
      s += std::string(to_string(m->mode)) + ',' + fmt(m->max_position_error) + ',' +
           fmt(m->final_position_error) + ',' + fmt(m->max_error_percent) + ',' +
           fmt(m->final_error_percent) + ',' + (m->diverged ? "1" : "0") + ',' + crc + '\n';
    }
    s += "ratio_vio_over_range_vio," + fmt(cmp.ratio) + ",,,,,\n";
    write_text(out / "compare.csv", s);
  }
  return cmp;
}

ObservabilityResult run_observability(const ScenarioConfig& c, bool write_outputs) {
  validate(c);
  const ObservabilitySettings& os = c.observability;
  const Scene scene = make_scene(c.scene);

  // Noise-free inertial data; each interval uses the mean of its end readings.
  ScenarioConfig clean = c;
  clean.rig.imu_noise = NoiseModel{};
  clean.rig.gyro_bias = Vec3::Zero();
  clean.rig.accel_bias = Vec3::Zero();
  const ImuStream imu = synth_imu(clean.trajectory, clean.rig, c.seed);
  std::vector<ImuSample> means;
  for (std::size_t i = 1; i < imu.samples.size(); ++i) {
    ImuSample s;
    s.stamp = imu.samples[i].stamp;
    s.omega_m = 0.5 * (imu.samples[i - 1].omega_m + imu.samples[i].omega_m);
    s.accel_m = 0.5 * (imu.samples[i - 1].accel_m + imu.samples[i].accel_m);
    means.push_back(s);
  }
  const InertialState x0 = truth_state(imu.truth.front().pose);
  const AnalysisTrajectory traj =
      build_analysis_trajectory(x0, means, 1.0 / c.rig.imu_rate, c.rig.gravity_w);

  AnalysisSensors sensors;
  sensors.camera = c.rig.camera;
  sensors.camera.p_i_c = Vec3::Zero();
  sensors.lrf = c.rig.lrf;
  sensors.fov_half = c.rig.fov_half;

  // Landmarks seen (frustum and occlusion) in enough analysed steps.
  const std::size_t stride = std::max<std::size_t>(1, os.stride);
  std::map<std::size_t, std::size_t> views;
  for (std::size_t k = 1; k <= traj.steps(); k += stride) {
    const InertialState& x = traj.at(k);
    const Mat3 r_wc = x.rot_body_to_world() * sensors.camera.q_i_c.toRotationMatrix();
    for (std::size_t l = 0; l < scene.landmarks.size(); ++l) {
      const Vec3 p = r_wc.transpose() * (scene.landmarks[l].p_w - x.p_w_i);
      if (p.z() < c.rig.min_depth || p.z() > c.rig.max_depth) continue;
      if (std::abs(p.x() / p.z()) > sensors.fov_half.x() ||
          std::abs(p.y() / p.z()) > sensors.fov_half.y()) {
        continue;
      }
      if (!scene.visible(x.p_w_i, scene.landmarks[l])) continue;
      ++views[l];
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> ranked;
  for (const auto& [l, n] : views) {
    if (n >= os.min_views) ranked.emplace_back(n, l);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  if (ranked.size() > os.max_features) ranked.resize(os.max_features);
  std::vector<std::size_t> chosen;
  for (const auto& r : ranked) chosen.push_back(r.second);
  std::sort(chosen.begin(), chosen.end());
  std::vector<Vec3> features;
  for (std::size_t l : chosen) features.push_back(scene.landmarks[l].p_w);

  LabOptions lab;
  lab.use_range = c.mode == Mode::kRangeVio;
  lab.use_visual = true;
  lab.stride = stride;
  lab.max_range = c.rig.max_range;
  const LabRows rows = stack_rows(traj, features, sensors, lab);

  AnalysisState init;
  init.inertial = x0;
  init.features_cartesian = features;

  ObservabilityResult res;
  res.features = features.size();
  res.range_rows = rows.range_rows.size();
  res.visual_rows = rows.visual_rows;

  std::vector<NamedDirection> dirs;
  try {
    dirs.push_back({"scale", scale_direction(traj, features, 1e-6)});
    res.scale_defined = true;
  } catch (const Error&) {
    res.scale_defined = false;
  }
  for (int a = 0; a < 3; ++a) {
    dirs.push_back({std::string("translation_") + "xyz"[a], translation_direction(a, features.size())});
  }
  dirs.push_back({"yaw", yaw_direction(init, c.rig.gravity_w)});
  if (!rows.range_rows.empty()) {
    std::vector<std::size_t> facet_features;
    for (const RangeRowRecord& r : rows.range_rows) {
      facet_features.insert(facet_features.end(), r.facet.begin(), r.facet.end());
    }
    std::sort(facet_features.begin(), facet_features.end());
    facet_features.erase(std::unique(facet_features.begin(), facet_features.end()),
                         facet_features.end());
    if (facet_features.size() < features.size()) {
      dirs.push_back({"hover_depth", hover_direction(features, facet_features, x0.p_w_i)});
    }
  }

  res.report = nullspace_report(rows.stack, dirs, os.tolerance, os.direction_tolerance);
  for (const DirectionCheck& d : res.report.directions) {
    if (d.name == "scale") res.scale_observable = !d.in_nullspace;
  }

  std::ostringstream o;
  char buf[256];
  o << "scenario: " << c.name << "\n";
  o << "mode: " << to_string(c.mode) << "\n";
  o << "trajectory: " << to_string(c.trajectory.kind) << ", " << traj.steps() << " steps\n";
  o << "features: " << res.features << "\n";
  o << "rows: " << res.visual_rows << " visual, " << res.range_rows << " range\n";
  o << "state dimension: " << rows.stack.cols() << "\n";
  o << "nullspace dimension: " << res.report.dimension << "\n";
  std::snprintf(buf, sizeof(buf), "smallest kept sigma ratio: %.3e\nlargest null sigma ratio: %.3e\n",
                res.report.smallest_kept_ratio, res.report.largest_null_ratio);
  o << buf;
  for (const DirectionCheck& d : res.report.directions) {
    std::snprintf(buf, sizeof(buf), "direction %s: residual %.3e (%s)\n", d.name.c_str(),
                  d.residual, d.in_nullspace ? "unobservable" : "observable");
    o << buf;
  }
  if (res.scale_defined) {
    o << "scale: " << (res.scale_observable ? "observable" : "unobservable") << "\n";
  } else {
    o << "scale: undefined (body acceleration is not constant)\n";
  }
  res.text = o.str();

  if (write_outputs) {
    const fs::path out = c.output_dir;
    fs::create_directories(out);
    write_text(out / "config.json", config_to_json(c));
    write_text(out / "observability.txt", res.text);
    std::string d = "direction,residual,in_nullspace\n";
    for (const DirectionCheck& dc : res.report.directions) {
      d += dc.name + ',' + fmt(dc.residual) + ',' + (dc.in_nullspace ? "1" : "0") + '\n';
    }
    write_text(out / "directions.csv", d);
    std::string sv = "index,sigma,ratio\n";
    for (int i = 0; i < res.report.singular_values.size(); ++i) {
      const double s = res.report.singular_values[i];
      sv += std::to_string(i) + ',' + fmt(s) + ',' + fmt(s / res.report.sigma_max) + '\n';
    }
    write_text(out / "singular_values.csv", sv);
    std::string rr = "step,f1,f2,f3,b,range\n";
    for (const RangeRowRecord& r : rows.range_rows) {
      rr += std::to_string(r.k) + ',' + std::to_string(r.facet[0]) + ',' +
            std::to_string(r.facet[1]) + ',' + std::to_string(r.facet[2]) + ',' + fmt(r.b) + ',' +
            fmt(r.range) + '\n';
    }
    write_text(out / "range_rows.csv", rr);
  }
  return res;
}

std::vector<SweepEntry> sweep(const ScenarioConfig& c, std::size_t count, std::size_t threads,
                              const std::vector<Mode>& modes, bool write_outputs) {
  validate(c);
  std::vector<SweepEntry> entries(count);
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  const auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        ScenarioConfig sc = c;
        sc.seed = c.seed + i;
        char dir[32];
        std::snprintf(dir, sizeof(dir), "seed_%06llu", static_cast<unsigned long long>(sc.seed));
        sc.output_dir = (fs::path(c.output_dir) / dir).string();
        const SensorStreams streams = generate_streams(sc);
        SweepEntry e;
        e.seed = sc.seed;
        for (Mode mode : modes) {
          RunMetrics m = run_filter(sc, streams, mode);
          if (write_outputs) write_run(fs::path(sc.output_dir) / to_string(mode), sc, m);
          (mode == Mode::kVio ? e.vio : e.range_vio) = std::move(m);
        }
        entries[i] = std::move(e);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, count));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  if (write_outputs) {
    std::string s = "seed,mode,max_position_error_m,final_position_error_m,max_error_percent,"
                    "diverged\n";
    for (const SweepEntry& e : entries) {
      for (const auto* m : {&e.vio, &e.range_vio}) {
        if (!*m) continue;
        s += std::to_string(e.seed) + ',' + to_string((*m)->mode) + ',' +
             fmt((*m)->max_position_error) + ',' + fmt((*m)->final_position_error) + ',' +
             fmt((*m)->max_error_percent) + ',' + ((*m)->diverged ? "1" : "0") + '\n';
      }
    }
    fs::create_directories(c.output_dir);
    write_text(fs::path(c.output_dir) / "sweep.csv", s);
  }
  return entries;
}

}  // namespace rvio
