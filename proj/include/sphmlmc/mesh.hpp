#pragma once

// Icosahedral approximations of S^2 by uniform red refinement.
//
// Level 0 is the icosahedron inscribed in the unit sphere. Each refinement
// splits every triangle into four through the midpoints of its flat edges; the
// midpoints stay where they are (they are not pushed out to the sphere), so all
// level-j vertices lie on the faces of the icosahedron and the P1 spaces of
// consecutive levels are nested.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sphmlmc {

using Vec3 = Eigen::Vector3d;

struct SphereMesh {
  int level = 0;
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise seen from outside
  // parents[k] are the endpoints of the coarse edge whose midpoint is vertex
  // coarse_vertex_count + k. Empty at level 0.
  std::vector<std::array<int, 2>> parents;
  int coarse_vertex_count = 0;
  double h = 0.0;       // max geodesic length of a lifted edge
  double h_flat = 0.0;  // max chord length of a flat edge

  int vertex_count() const noexcept { return static_cast<int>(vertices.size()); }
  int triangle_count() const noexcept { return static_cast<int>(triangles.size()); }
};

namespace detail {
inline void measure_widths(SphereMesh& m) {
  m.h = 0.0;
  m.h_flat = 0.0;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      const Vec3& a = m.vertices[t[e]];
      const Vec3& b = m.vertices[t[(e + 1) % 3]];
      m.h_flat = std::max(m.h_flat, (a - b).norm());
      const Vec3 pa = a.normalized(), pb = b.normalized();
      m.h = std::max(m.h, std::atan2(pa.cross(pb).norm(), pa.dot(pb)));
    }
}

inline SphereMesh icosahedron() {
  const double t = std::numbers::phi;
  SphereMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  measure_widths(m);
  return m;
}

inline SphereMesh refine(const SphereMesh& c) {
  SphereMesh f;
  f.level = c.level + 1;
  f.coarse_vertex_count = c.vertex_count();
  f.vertices = c.vertices;
  f.vertices.reserve(c.vertices.size() + c.triangles.size() * 3 / 2);
  f.triangles.reserve(4 * c.triangles.size());
  std::unordered_map<std::uint64_t, int> mid;
  mid.reserve(c.triangles.size() * 3 / 2);
  auto midpoint = [&](int a, int b) {
    const auto key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | static_cast<std::uint32_t>(std::max(a, b));
    auto [it, inserted] = mid.try_emplace(key, static_cast<int>(f.vertices.size()));
    if (inserted) {
      f.vertices.push_back(0.5 * (c.vertices[a] + c.vertices[b]));
      f.parents.push_back({std::min(a, b), std::max(a, b)});
    }
    return it->second;
  };
  for (const auto& t : c.triangles) {
    const int ab = midpoint(t[0], t[1]);
    const int bc = midpoint(t[1], t[2]);
    const int ca = midpoint(t[2], t[0]);
    f.triangles.push_back({t[0], ab, ca});
    f.triangles.push_back({t[1], bc, ab});
    f.triangles.push_back({t[2], ca, bc});
    f.triangles.push_back({ab, bc, ca});
  }
  measure_widths(f);
  return f;
}
}  // namespace detail

/// Meshes of levels 0..j, each refined from the previous one.
inline std::vector<SphereMesh> build_icosphere_hierarchy(int j) {
  if (j < 0) throw std::invalid_argument("build_icosphere: negative level");
  if (j > 12) throw std::invalid_argument("build_icosphere: level too large for 32-bit indices");
  std::vector<SphereMesh> levels;
  levels.reserve(j + 1);
  levels.push_back(detail::icosahedron());
  for (int k = 1; k <= j; ++k) levels.push_back(detail::refine(levels.back()));
  return levels;
}

inline SphereMesh build_icosphere(int j) { return std::move(build_icosphere_hierarchy(j).back()); }

/// Radial projection x / |x| onto S^2.
inline Vec3 lift(const Vec3& x) { return x.normalized(); }

/// Nodal values of a level-(j-1) P1 function, re-expressed on level j.
///
/// Exact: the fine vertices are the coarse vertices followed by flat edge
/// midpoints, where a piecewise-linear function takes the mean of its endpoint values.
inline std::vector<double> prolongate(const SphereMesh& fine, std::span<const double> coarse) {
  if (static_cast<int>(coarse.size()) != fine.coarse_vertex_count)
    throw std::invalid_argument("prolongate: coarse vector does not match the parent mesh");
  std::vector<double> out(fine.vertices.size());
  std::copy(coarse.begin(), coarse.end(), out.begin());
  for (std::size_t k = 0; k < fine.parents.size(); ++k)
    out[fine.coarse_vertex_count + k] = 0.5 * (coarse[fine.parents[k][0]] + coarse[fine.parents[k][1]]);
  return out;
}

/// OFF text: header, counts, one vertex per line, then "3 i j k" per triangle.
inline void write_off(std::ostream& os, const SphereMesh& m) {
  os << "OFF\n" << m.vertices.size() << ' ' << m.triangles.size() << " 0\n";
  os.precision(17);
  for (const auto& v : m.vertices) os << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : m.triangles) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

}  // namespace sphmlmc
