#include "rvio/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rvio/errors.hpp"

namespace rvio {

void Mesh::add_solid(const std::vector<Vec3>& verts, const std::vector<std::array<int, 3>>& tris) {
  const int base = static_cast<int>(vertices.size());
  Solid s;
  s.first_face = faces.size();
  s.face_count = tris.size();
  s.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  s.hi = -s.lo;
  for (const Vec3& v : verts) {
    vertices.push_back(v);
    s.lo = s.lo.cwiseMin(v);
    s.hi = s.hi.cwiseMax(v);
  }
  for (const auto& t : tris) faces.push_back({t[0] + base, t[1] + base, t[2] + base});
  solids.push_back(s);
}

double Mesh::face_area(std::size_t f) const {
  const auto& t = faces[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                   const Vec3& b, const Vec3& c, double t_min) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pv = dir.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tv = origin - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qv = tv.cross(e1);
  const double v = dir.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qv) * inv;
  if (t <= t_min) return std::nullopt;
  return t;
}

namespace {

bool ray_box(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi, double t_max) {
  double t0 = 0.0;
  double t1 = t_max;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-300) {
      if (o[i] < lo[i] - 1e-9 || o[i] > hi[i] + 1e-9) return false;
      continue;
    }
    double a = (lo[i] - 1e-9 - o[i]) / d[i];
    double b = (hi[i] + 1e-9 - o[i]) / d[i];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return false;
  }
  return true;
}

using Tris = std::vector<std::array<int, 3>>;

void add_quad(Mesh& mesh, const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  mesh.add_solid({a, b, c, d}, Tris{{0, 1, 2}, {0, 2, 3}});
}

// Axis-aligned box without a bottom, optionally with a gable roof whose ridge
// runs along x.
void add_building(Mesh& mesh, double x0, double y0, double sx, double sy, double h, double ridge) {
  const double x1 = x0 + sx;
  const double y1 = y0 + sy;
  std::vector<Vec3> v{{x0, y0, 0}, {x1, y0, 0}, {x1, y1, 0}, {x0, y1, 0},
                      {x0, y0, h}, {x1, y0, h}, {x1, y1, h}, {x0, y1, h}};
  Tris t{{0, 1, 5}, {0, 5, 4}, {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
  if (ridge <= 0.0) {
    t.push_back({4, 5, 6});
    t.push_back({4, 6, 7});
  } else {
    const double ym = 0.5 * (y0 + y1);
    v.push_back({x0, ym, h + ridge});  // 8
    v.push_back({x1, ym, h + ridge});  // 9
    t.push_back({4, 5, 9});
    t.push_back({4, 9, 8});
    t.push_back({7, 8, 9});
    t.push_back({7, 9, 6});
    t.push_back({4, 8, 7});
    t.push_back({5, 6, 9});
  }
  mesh.add_solid(v, t);
}

void add_ground(Mesh& mesh, const SceneParams& p) {
  const double x1 = p.x_start + p.length;
  const double hw = 0.5 * p.width;
  add_quad(mesh, {p.x_start, -hw, 0}, {x1, -hw, 0}, {x1, hw, 0}, {p.x_start, hw, 0});
}

}  // namespace

std::optional<RayHit> Scene::cast(const Vec3& origin, const Vec3& dir, double max_distance) const {
  const Vec3 d = dir.normalized();
  std::optional<RayHit> best;
  double limit = max_distance;
  for (const auto& s : mesh.solids) {
    if (!ray_box(origin, d, s.lo, s.hi, limit)) continue;
    for (std::size_t f = s.first_face; f < s.first_face + s.face_count; ++f) {
      const auto& t = mesh.faces[f];
      const auto hit = ray_triangle(origin, d, mesh.vertices[t[0]], mesh.vertices[t[1]],
                                    mesh.vertices[t[2]]);
      if (hit && *hit <= limit) {
        limit = *hit;
        best = RayHit{*hit, f, origin + *hit * d};
      }
    }
  }
  return best;
}

bool Scene::visible(const Vec3& eye, const Landmark& lm) const {
  const Vec3 delta = lm.p_w - eye;
  const double dist = delta.norm();
  if (dist <= 0.0) return false;
  const Vec3 d = delta / dist;
  const double limit = dist * (1.0 - 1e-9) - 1e-9;
  for (const auto& s : mesh.solids) {
    if (!ray_box(eye, d, s.lo, s.hi, limit)) continue;
    for (std::size_t f = s.first_face; f < s.first_face + s.face_count; ++f) {
      if (f == lm.face) continue;
      const auto& t = mesh.faces[f];
      const auto hit =
          ray_triangle(eye, d, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
      if (hit && *hit < limit) return false;
    }
  }
  // The landmark must sit on the side of its face the eye looks at.
  const auto& t = mesh.faces[lm.face];
  const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                     .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
  return n.dot(delta) < 0.0;
}

std::optional<double> Scene::height_at(double x, double y) const {
  const auto hit = cast({x, y, 1e4}, {0, 0, -1});
  if (!hit) return std::nullopt;
  return hit->point.z();
}

std::vector<std::string> builtin_scenes() {
  return {"flat_plane", "urban_strip", "indoor_boxes", "textured_wall"};
}

std::vector<Landmark> sample_landmarks(const Mesh& mesh, double density, std::uint64_t seed) {
  std::vector<Landmark> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uint64_t next_id = 0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const double expected = density * mesh.face_area(f);
    // Integer part plus a Bernoulli remainder keeps the density unbiased.
    auto count = static_cast<std::size_t>(std::floor(expected));
    if (unit(rng) < expected - static_cast<double>(count)) ++count;
    const auto& t = mesh.faces[f];
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    for (std::size_t i = 0; i < count; ++i) {
      double r1 = unit(rng);
      double r2 = unit(rng);
      if (r1 + r2 > 1.0) {
        r1 = 1.0 - r1;
        r2 = 1.0 - r2;
      }
      Landmark lm;
      lm.id = next_id++;
      lm.p_w = a + r1 * (b - a) + r2 * (c - a);
      lm.score = unit(rng);
      lm.face = f;
      out.push_back(lm);
    }
  }
  return out;
}

Scene make_scene(const SceneParams& p) {
  Scene s;
  s.name = p.name;
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  if (p.name == "flat_plane") {
    add_ground(s.mesh, p);
  } else if (p.name == "urban_strip") {
    add_ground(s.mesh, p);
    const double x_begin = p.x_start + p.transition_fraction * p.length;
    const double x_end = p.x_start + p.length;
    const double pitch = p.building_size + p.building_gap;
    const double hw = 0.5 * p.width;
    for (double x = x_begin; x + p.building_size <= x_end; x += pitch) {
      for (double y = -hw; y + p.building_size <= hw; y += pitch) {
        const double h =
            p.building_min_height + unit(rng) * (p.building_max_height - p.building_min_height);
        const double ridge = unit(rng) < 0.5 ? 0.0 : 1.0 + unit(rng);
        add_building(s.mesh, x, y, p.building_size, p.building_size, h, ridge);
      }
    }
  } else if (p.name == "indoor_boxes") {
    add_ground(s.mesh, p);
    const double x_begin = p.x_start + p.transition_fraction * p.length;
    const double x_end = p.x_start + p.length;
    const double hw = 0.5 * p.width;
    // Adjacent boxes of different heights with occasional floor gaps, so the
    // ranged area keeps crossing 90 degree drop-offs.
    for (double x = x_begin; x + p.box_size <= x_end + 1e-9; x += p.box_size) {
      for (double y = -hw; y + p.box_size <= hw + 1e-9; y += p.box_size) {
        if (unit(rng) < 0.2) continue;
        const double h = p.box_min_height + unit(rng) * (p.box_max_height - p.box_min_height);
        add_building(s.mesh, x, y, p.box_size, p.box_size, h, 0.0);
      }
    }
  } else if (p.name == "textured_wall") {
    add_ground(s.mesh, p);
    const double hw = 0.5 * p.width;
    const double x = p.wall_distance;
    add_quad(s.mesh, {x, hw, 0}, {x, -hw, 0}, {x, -hw, 10.0}, {x, hw, 10.0});
  } else {
    throw ConfigError("unknown scene '" + p.name + "'");
  }
  s.landmarks = sample_landmarks(s.mesh, p.landmark_density, p.seed + 1);
  return s;
}

}  // namespace rvio
