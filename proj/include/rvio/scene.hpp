#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rvio/so3.hpp"

namespace rvio {

struct Landmark {
  std::uint64_t id = 0;
  Vec3 p_w = Vec3::Zero();
  double score = 0.0;
  std::size_t face = 0;
};

/// Faces are grouped into solids, each with a bounding box for ray culling.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  struct Solid {
    std::size_t first_face = 0;
    std::size_t face_count = 0;
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
  };
  std::vector<Solid> solids;

  /// Appends triangles as one solid.
  void add_solid(const std::vector<Vec3>& verts, const std::vector<std::array<int, 3>>& tris);
  double face_area(std::size_t f) const;
};

struct RayHit {
  double distance = 0.0;
  std::size_t face = 0;
  Vec3 point = Vec3::Zero();
};

/// Moller-Trumbore. Returns the ray parameter of a hit with t > t_min.
std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                   const Vec3& b, const Vec3& c, double t_min = 1e-9);

struct SceneParams {
  std::string name = "flat_plane";
  double length = 200.0;            // extent along +x, meters
  double width = 60.0;              // extent along y, centred on y = 0
  double x_start = -20.0;
  double landmark_density = 0.25;   // landmarks per square meter of surface
  double transition_fraction = 0.5; // urban_strip: flat ground before this fraction of length
  double building_min_height = 3.0;
  double building_max_height = 6.0;
  double building_size = 8.0;       // footprint edge, meters
  double building_gap = 2.0;
  double box_min_height = 0.3;      // indoor_boxes
  double box_max_height = 1.0;
  double box_size = 1.0;
  double wall_distance = 6.0;       // textured_wall: plane x = wall_distance
  std::uint64_t seed = 7;
};

struct Scene {
  std::string name;
  Mesh mesh;
  std::vector<Landmark> landmarks;

  std::optional<RayHit> cast(const Vec3& origin, const Vec3& dir,
                             double max_distance = 1e9) const;
  /// True when nothing on the mesh blocks the segment from `eye` to the
  /// landmark (the landmark's own face is ignored).
  bool visible(const Vec3& eye, const Landmark& lm) const;
  /// Ground/top surface height at (x, y): highest upward hit from above.
  std::optional<double> height_at(double x, double y) const;
};

std::vector<std::string> builtin_scenes();

/// Deterministic scene from named parameters. Throws ConfigError for an
/// unknown name.
Scene make_scene(const SceneParams& params);

/// Samples landmarks uniformly over the mesh surface by area.
std::vector<Landmark> sample_landmarks(const Mesh& mesh, double density, std::uint64_t seed);

}  // namespace rvio
