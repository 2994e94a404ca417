#include "rvio/delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include <boost/multiprecision/cpp_int.hpp>

namespace rvio {

namespace {

using Rational = boost::multiprecision::cpp_rational;

constexpr double kEps = std::numeric_limits<double>::epsilon() * 0.5;
constexpr double kOrientBound = (3.0 + 16.0 * kEps) * kEps;
constexpr double kInCircleBound = (10.0 + 96.0 * kEps) * kEps;

template <typename T>
int sign_of(const T& v) {
  return v > 0 ? 1 : (v < 0 ? -1 : 0);
}

int orient2d_exact(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Rational ax(a.x()), ay(a.y()), bx(b.x()), by(b.y()), cx(c.x()), cy(c.y());
  const Rational det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
  return sign_of(det);
}

int incircle_exact(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const Rational adx = Rational(a.x()) - Rational(d.x());
  const Rational ady = Rational(a.y()) - Rational(d.y());
  const Rational bdx = Rational(b.x()) - Rational(d.x());
  const Rational bdy = Rational(b.y()) - Rational(d.y());
  const Rational cdx = Rational(c.x()) - Rational(d.x());
  const Rational cdy = Rational(c.y()) - Rational(d.y());
  const Rational alift = adx * adx + ady * ady;
  const Rational blift = bdx * bdx + bdy * bdy;
  const Rational clift = cdx * cdx + cdy * cdy;
  const Rational det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
                       clift * (adx * bdy - bdx * ady);
  return sign_of(det);
}

}  // namespace

int orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double left = (b.x() - a.x()) * (c.y() - a.y());
  const double right = (b.y() - a.y()) * (c.x() - a.x());
  const double det = left - right;
  const double bound = kOrientBound * (std::abs(left) + std::abs(right));
  if (std::abs(det) > bound) return sign_of(det);
  return orient2d_exact(a, b, c);
}

double incircle_det(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  return (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy) +
         (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy) +
         (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady);
}

int incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  const double det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
                     clift * (adx * bdy - bdx * ady);
  const double permanent = alift * (std::abs(bdx * cdy) + std::abs(cdx * bdy)) +
                           blift * (std::abs(cdx * ady) + std::abs(adx * cdy)) +
                           clift * (std::abs(adx * bdy) + std::abs(bdx * ady));
  if (std::abs(det) > kInCircleBound * permanent) return sign_of(det);
  return incircle_exact(a, b, c, d);
}

namespace {

using Tri = std::array<int, 3>;
using EdgeMap = std::map<std::pair<int, int>, std::size_t>;

EdgeMap build_edges(const std::vector<Tri>& tris) {
  EdgeMap edges;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      edges[{tris[t][k], tris[t][(k + 1) % 3]}] = t;
    }
  }
  return edges;
}

int opposite(const Tri& t, int a, int b) {
  for (int v : t) {
    if (v != a && v != b) return v;
  }
  return -1;
}

void canonicalize(std::vector<Tri>& tris) {
  for (auto& t : tris) {
    const auto it = std::min_element(t.begin(), t.end());
    std::rotate(t.begin(), it, t.end());
  }
  std::sort(tris.begin(), tris.end());
}

// Repeatedly flips locally non-Delaunay edges until none remain.
void legalize(const std::vector<Vec2>& pts, std::vector<Tri>& tris) {
  bool flipped = true;
  while (flipped) {
    flipped = false;
    const EdgeMap edges = build_edges(tris);
    for (const auto& [edge, t1] : edges) {
      const auto [a, b] = edge;
      if (a > b) continue;
      const auto twin = edges.find({b, a});
      if (twin == edges.end()) continue;
      const std::size_t t2 = twin->second;
      const int c = opposite(tris[t1], a, b);
      const int d = opposite(tris[t2], a, b);
      if (incircle(pts[a], pts[b], pts[c], pts[d]) > 0) {
        tris[t1] = {a, d, c};
        tris[t2] = {d, b, c};
        flipped = true;
        break;
      }
    }
  }
}

}  // namespace

std::optional<Triangulation> delaunay(std::span<const Vec2> points) {
  Triangulation out;
  out.vertices.assign(points.begin(), points.end());
  const auto& pts = out.vertices;

  std::vector<int> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    if (pts[i].x() != pts[j].x()) return pts[i].x() < pts[j].x();
    return pts[i].y() < pts[j].y();
  });
  order.erase(std::unique(order.begin(), order.end(),
                          [&](int i, int j) { return pts[i] == pts[j]; }),
              order.end());
  if (order.size() < 3) return std::nullopt;

  std::size_t k = 2;
  while (k < order.size() && orient2d(pts[order[0]], pts[order[1]], pts[order[k]]) == 0) ++k;
  if (k == order.size()) return std::nullopt;

  std::vector<Tri>& tris = out.triangles;
  const int apex = order[k];
  const int side = orient2d(pts[order[0]], pts[order[1]], pts[apex]);
  std::vector<int> hull;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    if (side > 0) {
      tris.push_back({order[i], order[i + 1], apex});
    } else {
      tris.push_back({order[i + 1], order[i], apex});
    }
  }
  if (side > 0) {
    hull.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    hull.push_back(apex);
  } else {
    hull.push_back(order[0]);
    hull.push_back(apex);
    for (std::size_t i = k - 1; i >= 1; --i) hull.push_back(order[i]);
  }

  for (std::size_t idx = k + 1; idx < order.size(); ++idx) {
    const int q = order[idx];
    const std::size_t h = hull.size();
    std::vector<bool> visible(h);
    for (std::size_t e = 0; e < h; ++e) {
      visible[e] = orient2d(pts[hull[e]], pts[hull[(e + 1) % h]], pts[q]) < 0;
    }
    // First visible edge whose predecessor is not visible.
    std::size_t start = h;
    for (std::size_t e = 0; e < h; ++e) {
      if (visible[e] && !visible[(e + h - 1) % h]) {
        start = e;
        break;
      }
    }
    if (start == h) continue;  // collinear with the hull boundary and not beyond it
    std::size_t e = start;
    while (visible[e % h]) {
      const int a = hull[e % h];
      const int b = hull[(e + 1) % h];
      tris.push_back({b, a, q});
      ++e;
    }
    const std::size_t end_vertex = e % h;
    std::vector<int> next;
    next.push_back(q);
    for (std::size_t v = end_vertex;; v = (v + 1) % h) {
      next.push_back(hull[v]);
      if (v == start) break;
    }
    hull = std::move(next);
  }

  legalize(pts, tris);
  canonicalize(tris);
  return out;
}

std::optional<std::size_t> select_triangle(const Triangulation& tri, const Vec2& uv) {
  for (std::size_t t = 0; t < tri.triangles.size(); ++t) {
    const auto& v = tri.triangles[t];
    const Vec2& a = tri.vertices[v[0]];
    const Vec2& b = tri.vertices[v[1]];
    const Vec2& c = tri.vertices[v[2]];
    if (orient2d(a, b, uv) >= 0 && orient2d(b, c, uv) >= 0 && orient2d(c, a, uv) >= 0) {
      return t;
    }
  }
  return std::nullopt;
}

double min_angle(const Triangulation& tri, const std::array<int, 3>& t) {
  double best = std::numbers::pi;
  for (int k = 0; k < 3; ++k) {
    const Vec2& p = tri.vertices[t[k]];
    const Vec2 u = tri.vertices[t[(k + 1) % 3]] - p;
    const Vec2 w = tri.vertices[t[(k + 2) % 3]] - p;
    const double ang = std::atan2(std::abs(u.x() * w.y() - u.y() * w.x()), u.dot(w));
    best = std::min(best, ang);
  }
  return best;
}

double min_angle(const Triangulation& tri) {
  double best = std::numbers::pi;
  for (const auto& t : tri.triangles) best = std::min(best, min_angle(tri, t));
  return best;
}

bool flip_edge(Triangulation& tri, std::size_t t1, std::size_t t2) {
  auto& x = tri.triangles[t1];
  auto& y = tri.triangles[t2];
  for (int k = 0; k < 3; ++k) {
    const int a = x[k];
    const int b = x[(k + 1) % 3];
    for (int l = 0; l < 3; ++l) {
      if (y[l] == b && y[(l + 1) % 3] == a) {
        const int c = x[(k + 2) % 3];
        const int d = y[(l + 2) % 3];
        const auto& p = tri.vertices;
        // The quadrilateral a-d-b-c must be strictly convex.
        if (orient2d(p[a], p[d], p[c]) <= 0 || orient2d(p[d], p[b], p[c]) <= 0) return false;
        x = {a, d, c};
        y = {d, b, c};
        return true;
      }
    }
  }
  return false;
}

}  // namespace rvio
