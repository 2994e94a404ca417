#include <doctest.h>

#include <algorithm>
#include <random>

#include "rvio/delaunay.hpp"

using namespace rvio;

namespace {

std::vector<Vec2> random_points(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(rng);
    const double y = u(rng);
    pts.emplace_back(x, y);
  }
  return pts;
}

bool empty_circumcircles(const Triangulation& t) {
  for (const auto& tri : t.triangles) {
    const Vec2& a = t.vertices[static_cast<std::size_t>(tri[0])];
    const Vec2& b = t.vertices[static_cast<std::size_t>(tri[1])];
    const Vec2& c = t.vertices[static_cast<std::size_t>(tri[2])];
    for (std::size_t v = 0; v < t.vertices.size(); ++v) {
      if (static_cast<int>(v) == tri[0] || static_cast<int>(v) == tri[1] ||
          static_cast<int>(v) == tri[2]) {
        continue;
      }
      if (incircle_det(a, b, c, t.vertices[v]) > 1e-9) return false;
    }
  }
  return true;
}

// Random sequence of legal edge flips starting from `t`.
Triangulation random_alternative(Triangulation t, std::mt19937_64& rng, int flips) {
  if (t.triangles.size() < 2) return t;
  std::uniform_int_distribution<std::size_t> pick(0, t.triangles.size() - 1);
  for (int k = 0, tries = 0; k < flips && tries < 50 * flips; ++tries) {
    const std::size_t a = pick(rng);
    const std::size_t b = pick(rng);
    if (a != b && flip_edge(t, a, b)) ++k;
  }
  return t;
}

}  // namespace

TEST_CASE("orientation and in-circle predicates") {
  CHECK(orient2d(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)) == 1);
  CHECK(orient2d(Vec2(0, 0), Vec2(0, 1), Vec2(1, 0)) == -1);
  CHECK(orient2d(Vec2(0, 0), Vec2(1, 1), Vec2(2, 2)) == 0);
  // Nearly collinear points where naive floating point gets the sign wrong.
  CHECK(orient2d(Vec2(0.5, 0.5), Vec2(12, 12), Vec2(24, 24)) == 0);
  CHECK(incircle(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(0.5, 0.5)) == 1);
  CHECK(incircle(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(1, 1)) == 0);
  CHECK(incircle(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(2, 2)) == -1);
}

TEST_CASE("three points give one triangle") {
  const std::vector<Vec2> pts{{0, 0}, {1, 0}, {0, 1}};
  const auto t = delaunay(pts);
  REQUIRE(t);
  CHECK(t->triangles.size() == 1);
  CHECK(orient2d(t->vertices[0], t->vertices[1], t->vertices[2]) == 1);
}

TEST_CASE("degenerate inputs") {
  const std::vector<Vec2> two{{0, 0}, {1, 0}};
  CHECK_FALSE(delaunay(two));
  const std::vector<Vec2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK_FALSE(delaunay(line));
  const std::vector<Vec2> dup{{0, 0}, {1, 0}, {0, 1}, {1, 0}};
  const auto t = delaunay(dup);
  REQUIRE(t);
  CHECK(t->triangles.size() == 1);
}

TEST_CASE("unit square splits into two empty-circumcircle triangles") {
  const std::vector<Vec2> pts{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const auto t = delaunay(pts);
  REQUIRE(t);
  CHECK(t->triangles.size() == 2);
  CHECK(empty_circumcircles(*t));
}

TEST_CASE("random point sets keep empty circumcircles and the best minimum angle") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<std::size_t> size(3, 30);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pts = random_points(rng, size(rng));
    const auto t = delaunay(pts);
    REQUIRE(t);
    CHECK(empty_circumcircles(*t));
    const double best = min_angle(*t);
    for (int alt = 0; alt < 5; ++alt) {
      const Triangulation other = random_alternative(*t, rng, 10);
      CHECK(best >= min_angle(other) - 1e-12);
    }
  }
}

TEST_CASE("fifty points against 200 alternative triangulations") {
  std::mt19937_64 rng(42);
  const auto pts = random_points(rng, 50);
  const auto t = delaunay(pts);
  REQUIRE(t);
  const double best = min_angle(*t);
  for (int alt = 0; alt < 200; ++alt) {
    CHECK(best >= min_angle(random_alternative(*t, rng, 1 + alt % 40)) - 1e-12);
  }
}

TEST_CASE("triangle lookup") {
  const std::vector<Vec2> pts{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const auto t = delaunay(pts);
  REQUIRE(t);
  for (std::size_t i = 0; i < t->triangles.size(); ++i) {
    const auto& tri = t->triangles[i];
    const Vec2 centroid = (t->vertices[static_cast<std::size_t>(tri[0])] +
                           t->vertices[static_cast<std::size_t>(tri[1])] +
                           t->vertices[static_cast<std::size_t>(tri[2])]) /
                          3.0;
    const auto found = select_triangle(*t, centroid);
    REQUIRE(found);
    CHECK(*found == i);
  }
  CHECK_FALSE(select_triangle(*t, Vec2(2.0, 2.0)));
  // The square's centre lies on the shared diagonal.
  const auto shared = select_triangle(*t, Vec2(0.5, 0.5));
  REQUIRE(shared);
  CHECK(*shared == 0);
}
