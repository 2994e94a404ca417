#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "rvio/so3.hpp"

namespace rvio {

/// Sign of the orientation determinant of (a, b, c): +1 counter-clockwise,
/// -1 clockwise, 0 collinear. Exact: falls back to rational arithmetic when
/// the floating-point result is within its error bound.
int orient2d(const Vec2& a, const Vec2& b, const Vec2& c);

/// Sign of the in-circle determinant: +1 when d lies strictly inside the
/// circle through the counter-clockwise triangle (a, b, c). Exact.
int incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d);

/// Floating-point in-circle determinant, for diagnostics and tests.
double incircle_det(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d);

struct Triangulation {
  std::vector<Vec2> vertices;
  /// Counter-clockwise index triples into `vertices`, each rotated so its
  /// smallest index comes first, sorted lexicographically.
  std::vector<std::array<int, 3>> triangles;
};

/// Delaunay triangulation by sorted incremental insertion followed by Lawson
/// edge flips. Exact duplicates are ignored. Returns nullopt for fewer than
/// three distinct points or an all-collinear set.
std::optional<Triangulation> delaunay(std::span<const Vec2> points);

/// Index of the triangle containing `uv`, boundary inclusive. A point on a
/// shared edge or vertex belongs to the lowest-indexed containing triangle.
std::optional<std::size_t> select_triangle(const Triangulation& tri, const Vec2& uv);

/// Smallest interior angle of triangle t, radians.
double min_angle(const Triangulation& tri, const std::array<int, 3>& t);
double min_angle(const Triangulation& tri);

/// Shared edge flips available on `tri` (pairs of triangle indices whose
/// union is a strictly convex quadrilateral). Used to build alternative
/// triangulations for comparison.
bool flip_edge(Triangulation& tri, std::size_t t1, std::size_t t2);

}  // namespace rvio
