#include "rvio/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rvio/errors.hpp"

namespace rvio {

using nlohmann::json;

Mode mode_from_string(const std::string& s) {
  if (s == "vio") return Mode::kVio;
  if (s == "range_vio") return Mode::kRangeVio;
  throw ConfigError("unknown mode '" + s + "' (expected vio or range_vio)");
}

const char* to_string(Mode m) { return m == Mode::kVio ? "vio" : "range_vio"; }

namespace {

// Reads fields from one JSON object and rejects anything it was not asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }
  void get(const char* key, Vec3& out) {
    std::vector<double> v{out.x(), out.y(), out.z()};
    get(key, v);
    if (v.size() != 3) throw ConfigError(where_ + "." + key + ": expected 3 numbers");
    out = Vec3(v[0], v[1], v[2]);
  }
  void get(const char* key, Vec2& out) {
    std::vector<double> v{out.x(), out.y()};
    get(key, v);
    if (v.size() != 2) throw ConfigError(where_ + "." + key + ": expected 2 numbers");
    out = Vec2(v[0], v[1]);
  }
  bool has(const char* key) const { return j_.contains(key); }
  const json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_noise(Reader& r, NoiseModel& n) {
  r.get("gyro_noise_density", n.gyro_noise_density);
  r.get("accel_noise_density", n.accel_noise_density);
  r.get("gyro_bias_walk", n.gyro_bias_walk);
  r.get("accel_bias_walk", n.accel_bias_walk);
}

void read_scene(const json& j, SceneParams& s) {
  Reader r(j, "scene");
  r.get("name", s.name);
  r.get("length", s.length);
  r.get("width", s.width);
  r.get("x_start", s.x_start);
  r.get("landmark_density", s.landmark_density);
  r.get("transition_fraction", s.transition_fraction);
  r.get("building_min_height", s.building_min_height);
  r.get("building_max_height", s.building_max_height);
  r.get("building_size", s.building_size);
  r.get("building_gap", s.building_gap);
  r.get("box_min_height", s.box_min_height);
  r.get("box_max_height", s.box_max_height);
  r.get("box_size", s.box_size);
  r.get("wall_distance", s.wall_distance);
  r.get("seed", s.seed);
}

void read_trajectory(const json& j, TrajectoryProfile& t) {
  Reader r(j, "trajectory");
  std::string kind = to_string(t.kind);
  r.get("kind", kind);
  t.kind = profile_kind_from_string(kind);
  r.get("duration", t.duration);
  r.get("speed", t.speed);
  r.get("start_position", t.start_position);
  r.get("heading", t.heading);
  r.get("start_delay", t.start_delay);
  r.get("ramp_time", t.ramp_time);
  r.get("excitation_amplitude", t.excitation_amplitude);
  r.get("excitation_frequency", t.excitation_frequency);
  r.get("attitude_amplitude", t.attitude_amplitude);
  r.get("attitude_frequency", t.attitude_frequency);
}

void read_sensors(const json& j, SensorRig& s) {
  Reader r(j, "sensors");
  r.get("imu_rate", s.imu_rate);
  r.get("camera_rate", s.camera_rate);
  r.get("lrf_rate", s.lrf_rate);
  read_noise(r, s.imu_noise);
  r.get("sigma_v", s.measurement.sigma_v);
  r.get("sigma_r", s.measurement.sigma_r);
  r.get("fov_half", s.fov_half);
  r.get("min_depth", s.min_depth);
  r.get("max_depth", s.max_depth);
  r.get("max_range", s.max_range);
  r.get("outlier_probability", s.outlier_probability);
  r.get("outlier_min", s.outlier_min);
  r.get("outlier_max", s.outlier_max);
  r.get("max_track_length", s.max_track_length);
  r.get("track_outlier_probability", s.track_outlier_probability);
  r.get("gyro_bias", s.gyro_bias);
  r.get("accel_bias", s.accel_bias);
  r.get("gravity", s.gravity_w);
  r.get("lrf_axis", s.lrf.u_r_cam);
  if (r.has("spikes")) {
    const json& arr = r.child("spikes");
    if (!arr.is_array()) throw ConfigError("sensors.spikes: expected an array");
    s.spikes.clear();
    for (const json& e : arr) {
      Reader sr(e, "sensors.spikes[]");
      ScriptedSpike spike;
      sr.get("time", spike.time);
      sr.get("magnitude", spike.magnitude);
      s.spikes.push_back(spike);
    }
  }
}

void read_filter(const json& j, FilterSettings& f) {
  Reader r(j, "filter");
  r.get("max_clones", f.max_clones);
  r.get("max_slam", f.max_slam);
  r.get("gate_sigma", f.gate_sigma);
  r.get("visual_gate_probability", f.visual_gate_probability);
  read_noise(r, f.imu_noise);
  r.get("sigma_v", f.measurement.sigma_v);
  r.get("sigma_r", f.measurement.sigma_r);
  r.get("sample_initial_error", f.sample_initial_error);
  r.get("scale_init", f.scale_init);
  r.get("min_parallax_deg", f.min_parallax_deg);
  r.get("semi_infinite_rho", f.semi_infinite_rho);
  r.get("semi_infinite_sigma_rho", f.semi_infinite_sigma_rho);
  r.get("semi_infinite_init", f.semi_infinite_init);
  r.get("tiles_x", f.tiles_x);
  r.get("tiles_y", f.tiles_y);
  r.get("min_msckf_length", f.min_msckf_length);
  r.get("min_slam_length", f.min_slam_length);
  r.get("min_facet_angle_deg", f.min_facet_angle_deg);
  if (r.has("initial_sigma")) {
    Reader ir(r.child("initial_sigma"), "filter.initial_sigma");
    ir.get("position", f.initial.position);
    ir.get("velocity", f.initial.velocity);
    ir.get("attitude", f.initial.attitude);
    ir.get("gyro_bias", f.initial.gyro_bias);
    ir.get("accel_bias", f.initial.accel_bias);
  }
}

void read_observability(const json& j, ObservabilitySettings& o) {
  Reader r(j, "observability");
  r.get("stride", o.stride);
  r.get("max_features", o.max_features);
  r.get("min_views", o.min_views);
  r.get("tolerance", o.tolerance);
  r.get("direction_tolerance", o.direction_tolerance);
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  ScenarioConfig c;
  {
    Reader r(j, "config");
    r.get("name", c.name);
    std::string mode = to_string(c.mode);
    r.get("mode", mode);
    c.mode = mode_from_string(mode);
    r.get("seed", c.seed);
    r.get("output_dir", c.output_dir);
    // Sections are optional; each is strict about its own keys.
    auto section = [&](const char* key, auto&& fn) {
      if (r.has(key)) fn(r.child(key));
    };
    section("scene", [&](const json& s) { read_scene(s, c.scene); });
    section("trajectory", [&](const json& s) { read_trajectory(s, c.trajectory); });
    section("sensors", [&](const json& s) { read_sensors(s, c.rig); });
    section("filter", [&](const json& s) { read_filter(s, c.filter); });
    section("observability", [&](const json& s) { read_observability(s, c.observability); });
  }
  validate(c);
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const ScenarioConfig& c) {
  const auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  const FilterSettings& f = c.filter;
  if (f.max_clones < 2) fail("filter.max_clones must be >= 2");
  if (c.mode == Mode::kRangeVio && f.max_slam < 3) fail("filter.max_slam must be >= 3 for range_vio");
  if (!(f.gate_sigma > 0.0)) fail("filter.gate_sigma must be > 0");
  if (!(f.visual_gate_probability > 0.0 && f.visual_gate_probability < 1.0)) {
    fail("filter.visual_gate_probability must be in (0, 1)");
  }
  if (!(f.measurement.sigma_v > 0.0) || !(f.measurement.sigma_r > 0.0)) {
    fail("filter measurement noise must be positive");
  }
  if (!(f.scale_init > 0.0)) fail("filter.scale_init must be > 0");
  if (f.tiles_x < 1 || f.tiles_y < 1) fail("filter tiles must be >= 1");
  for (double v : {f.imu_noise.gyro_noise_density, f.imu_noise.accel_noise_density,
                   f.imu_noise.gyro_bias_walk, f.imu_noise.accel_bias_walk,
                   c.rig.imu_noise.gyro_noise_density, c.rig.imu_noise.accel_noise_density,
                   c.rig.imu_noise.gyro_bias_walk, c.rig.imu_noise.accel_bias_walk,
                   c.rig.measurement.sigma_v, c.rig.measurement.sigma_r, f.initial.position,
                   f.initial.velocity, f.initial.attitude, f.initial.gyro_bias,
                   f.initial.accel_bias}) {
    if (!(v >= 0.0)) fail("noise densities and sigmas must be non-negative");
  }
  const SensorRig& s = c.rig;
  if (!(s.imu_rate > 0.0 && s.camera_rate > 0.0 && s.lrf_rate > 0.0)) fail("sensor rates must be positive");
  if (1.0 / s.imu_rate > kMaxImuStep) fail("sensors.imu_rate too low");
  if (!(s.outlier_probability >= 0.0 && s.outlier_probability <= 1.0)) {
    fail("sensors.outlier_probability must be in [0, 1]");
  }
  if (std::abs(s.lrf.u_r_cam.norm() - 1.0) > 1e-9) fail("sensors.lrf_axis must be a unit vector");
  if (std::abs(s.gravity_w.norm() - 9.81) > 0.5) fail("sensors.gravity magnitude must be 9.81 +- 0.5");
  if (!(c.trajectory.duration > 0.0)) fail("trajectory.duration must be > 0");
  if (c.trajectory.ramp_time < 0.0 || c.trajectory.start_delay < 0.0) {
    fail("trajectory ramp_time and start_delay must be >= 0");
  }
  if (!(c.scene.length > 0.0 && c.scene.width > 0.0)) fail("scene extent must be positive");
  if (!(c.scene.landmark_density >= 0.0)) fail("scene.landmark_density must be >= 0");
  bool known = false;
  for (const auto& n : builtin_scenes()) known = known || n == c.scene.name;
  if (!known) fail("unknown scene '" + c.scene.name + "'");
  if (c.observability.stride == 0) fail("observability.stride must be >= 1");
}

std::string config_to_json(const ScenarioConfig& c) {
  json j;
  j["name"] = c.name;
  j["mode"] = to_string(c.mode);
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  const SceneParams& s = c.scene;
  j["scene"] = {{"name", s.name},
                {"length", s.length},
                {"width", s.width},
                {"x_start", s.x_start},
                {"landmark_density", s.landmark_density},
                {"transition_fraction", s.transition_fraction},
                {"building_min_height", s.building_min_height},
                {"building_max_height", s.building_max_height},
                {"building_size", s.building_size},
                {"building_gap", s.building_gap},
                {"box_min_height", s.box_min_height},
                {"box_max_height", s.box_max_height},
                {"box_size", s.box_size},
                {"wall_distance", s.wall_distance},
                {"seed", s.seed}};
  const TrajectoryProfile& t = c.trajectory;
  j["trajectory"] = {{"kind", to_string(t.kind)},
                     {"duration", t.duration},
                     {"speed", t.speed},
                     {"start_position", vec_json(t.start_position)},
                     {"heading", t.heading},
                     {"start_delay", t.start_delay},
                     {"ramp_time", t.ramp_time},
                     {"excitation_amplitude", vec_json(t.excitation_amplitude)},
                     {"excitation_frequency", vec_json(t.excitation_frequency)},
                     {"attitude_amplitude", t.attitude_amplitude},
                     {"attitude_frequency", t.attitude_frequency}};
  const SensorRig& r = c.rig;
  json spikes = json::array();
  for (const auto& sp : r.spikes) spikes.push_back({{"time", sp.time}, {"magnitude", sp.magnitude}});
  j["sensors"] = {{"imu_rate", r.imu_rate},
                  {"camera_rate", r.camera_rate},
                  {"lrf_rate", r.lrf_rate},
                  {"gyro_noise_density", r.imu_noise.gyro_noise_density},
                  {"accel_noise_density", r.imu_noise.accel_noise_density},
                  {"gyro_bias_walk", r.imu_noise.gyro_bias_walk},
                  {"accel_bias_walk", r.imu_noise.accel_bias_walk},
                  {"sigma_v", r.measurement.sigma_v},
                  {"sigma_r", r.measurement.sigma_r},
                  {"fov_half", json::array({r.fov_half.x(), r.fov_half.y()})},
                  {"min_depth", r.min_depth},
                  {"max_depth", r.max_depth},
                  {"max_range", r.max_range},
                  {"outlier_probability", r.outlier_probability},
                  {"outlier_min", r.outlier_min},
                  {"outlier_max", r.outlier_max},
                  {"spikes", spikes},
                  {"max_track_length", r.max_track_length},
                  {"track_outlier_probability", r.track_outlier_probability},
                  {"gyro_bias", vec_json(r.gyro_bias)},
                  {"accel_bias", vec_json(r.accel_bias)},
                  {"gravity", vec_json(r.gravity_w)},
                  {"lrf_axis", vec_json(r.lrf.u_r_cam)}};
  const FilterSettings& f = c.filter;
  j["filter"] = {{"max_clones", f.max_clones},
                 {"max_slam", f.max_slam},
                 {"gate_sigma", f.gate_sigma},
                 {"visual_gate_probability", f.visual_gate_probability},
                 {"gyro_noise_density", f.imu_noise.gyro_noise_density},
                 {"accel_noise_density", f.imu_noise.accel_noise_density},
                 {"gyro_bias_walk", f.imu_noise.gyro_bias_walk},
                 {"accel_bias_walk", f.imu_noise.accel_bias_walk},
                 {"sigma_v", f.measurement.sigma_v},
                 {"sigma_r", f.measurement.sigma_r},
                 {"initial_sigma",
                  {{"position", f.initial.position},
                   {"velocity", f.initial.velocity},
                   {"attitude", f.initial.attitude},
                   {"gyro_bias", f.initial.gyro_bias},
                   {"accel_bias", f.initial.accel_bias}}},
                 {"sample_initial_error", f.sample_initial_error},
                 {"scale_init", f.scale_init},
                 {"min_parallax_deg", f.min_parallax_deg},
                 {"semi_infinite_rho", f.semi_infinite_rho},
                 {"semi_infinite_sigma_rho", f.semi_infinite_sigma_rho},
                 {"semi_infinite_init", f.semi_infinite_init},
                 {"tiles_x", f.tiles_x},
                 {"tiles_y", f.tiles_y},
                 {"min_msckf_length", f.min_msckf_length},
                 {"min_slam_length", f.min_slam_length},
                 {"min_facet_angle_deg", f.min_facet_angle_deg}};
  const ObservabilitySettings& o = c.observability;
  j["observability"] = {{"stride", o.stride},
                        {"max_features", o.max_features},
                        {"min_views", o.min_views},
                        {"tolerance", o.tolerance},
                        {"direction_tolerance", o.direction_tolerance}};
  return j.dump(2) + "\n";
}

}  // namespace rvio
