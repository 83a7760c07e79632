#include "kpdet/shapes.hpp"

#include "kpdet/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>

namespace kpdet::shapes {

namespace {

Mesh build(const std::vector<Eigen::RowVector3d>& points, const std::vector<std::array<int, 3>>& faces) {
  Positions p(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = points[i];
  Triangles t(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    t.row(static_cast<Eigen::Index>(i)) << faces[i][0], faces[i][1], faces[i][2];
  }
  return Mesh(std::move(p), std::move(t));
}

// Cube lattice points keyed by integer coordinates in [0, s]^3.
struct CubeLattice {
  std::map<std::tuple<int, int, int>, int> index;
  std::vector<std::tuple<int, int, int>> points;

  int at(int x, int y, int z) {
    auto [it, inserted] = index.try_emplace({x, y, z}, static_cast<int>(points.size()));
    if (inserted) points.emplace_back(x, y, z);
    return it->second;
  }
};

CubeLattice cube_lattice(int s, std::vector<std::array<int, 3>>* faces) {
  CubeLattice lattice;
  // Each face: a fixed axis at 0 or s, two free axes; orientation keeps normals outward.
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      const int u_axis = (axis + 1) % 3;
      const int v_axis = (axis + 2) % 3;
      auto vertex = [&](int u, int v) {
        std::array<int, 3> c{};
        c[static_cast<std::size_t>(axis)] = side * s;
        c[static_cast<std::size_t>(u_axis)] = u;
        c[static_cast<std::size_t>(v_axis)] = v;
        return lattice.at(c[0], c[1], c[2]);
      };
      for (int u = 0; u < s; ++u) {
        for (int v = 0; v < s; ++v) {
          const int a = vertex(u, v), b = vertex(u + 1, v), c = vertex(u + 1, v + 1), d = vertex(u, v + 1);
          if (!faces) continue;
          if (side == 1) {
            faces->push_back({a, b, c});
            faces->push_back({a, c, d});
          } else {
            faces->push_back({a, c, b});
            faces->push_back({a, d, c});
          }
        }
      }
    }
  }
  return lattice;
}

}  // namespace

Mesh icosphere(double radius, int subdivisions) {
  if (subdivisions < 0 || radius <= 0.0) throw config_error("icosphere needs radius > 0 and subdivisions >= 0");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::RowVector3d> points = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (auto& p : points) p.normalize();

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoints;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto [it, inserted] = midpoints.try_emplace(key, static_cast<int>(points.size()));
      if (inserted) points.push_back((points[static_cast<std::size_t>(a)] + points[static_cast<std::size_t>(b)]).normalized());
      return it->second;
    };
    std::vector<std::array<int, 3>> refined;
    refined.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = midpoint(f[0], f[1]), bc = midpoint(f[1], f[2]), ca = midpoint(f[2], f[0]);
      refined.push_back({f[0], ab, ca});
      refined.push_back({f[1], bc, ab});
      refined.push_back({f[2], ca, bc});
      refined.push_back({ab, bc, ca});
    }
    faces = std::move(refined);
  }
  for (auto& p : points) p *= radius;
  return build(points, faces);
}

Mesh grid_plane(int nx, int ny, double spacing) {
  if (nx < 1 || ny < 1 || spacing <= 0.0) throw config_error("grid needs at least one cell and spacing > 0");
  std::vector<Eigen::RowVector3d> points;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) points.emplace_back(i * spacing, j * spacing, 0.0);
  }
  std::vector<std::array<int, 3>> faces;
  auto id = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return build(points, faces);
}

Mesh subdivided_cube(int segments, double size) {
  if (segments < 1 || size <= 0.0) throw config_error("cube needs segments >= 1 and size > 0");
  std::vector<std::array<int, 3>> faces;
  const auto lattice = cube_lattice(segments, &faces);
  std::vector<Eigen::RowVector3d> points;
  const double step = size / segments;
  for (const auto& [x, y, z] : lattice.points) {
    points.emplace_back(x * step - size / 2, y * step - size / 2, z * step - size / 2);
  }
  return build(points, faces);
}

std::vector<int> cube_corners(int segments) {
  auto lattice = cube_lattice(segments, nullptr);
  std::vector<int> corners;
  for (int x : {0, segments}) {
    for (int y : {0, segments}) {
      for (int z : {0, segments}) corners.push_back(lattice.index.at({x, y, z}));
    }
  }
  std::sort(corners.begin(), corners.end());
  return corners;
}

Mesh cylinder(double radius, double height, int around, int along) {
  if (around < 3 || along < 1) throw config_error("cylinder needs around >= 3 and along >= 1");
  std::vector<Eigen::RowVector3d> points;
  for (int j = 0; j <= along; ++j) {
    for (int i = 0; i < around; ++i) {
      const double a = 2.0 * std::numbers::pi * i / around;
      points.emplace_back(radius * std::cos(a), radius * std::sin(a), height * j / along);
    }
  }
  std::vector<std::array<int, 3>> faces;
  auto id = [&](int i, int j) { return j * around + (i % around); };
  for (int j = 0; j < along; ++j) {
    for (int i = 0; i < around; ++i) {
      faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return build(points, faces);
}

Mesh regular_tetrahedron(double edge) {
  const double s = edge / (2.0 * std::sqrt(2.0));
  return build({{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}}, {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

Mesh fan(int spokes) {
  if (spokes < 3) throw config_error("fan needs at least 3 spokes");
  std::vector<Eigen::RowVector3d> points{{0, 0, 0}};
  for (int i = 0; i < spokes; ++i) {
    const double a = 2.0 * std::numbers::pi * i / spokes;
    points.emplace_back(std::cos(a), std::sin(a), 0.0);
  }
  std::vector<std::array<int, 3>> faces;
  for (int i = 0; i < spokes; ++i) faces.push_back({0, 1 + i, 1 + (i + 1) % spokes});
  return build(points, faces);
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

Positions transform(const Positions& positions, const Eigen::Matrix3d& rotation, const Eigen::RowVector3d& offset) {
  return (positions * rotation.transpose()).rowwise() + offset;
}

Positions jitter(const Positions& positions, double amplitude, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> noise(-amplitude, amplitude);
  Positions out = positions;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index c = 0; c < 3; ++c) out(i, c) += noise(rng);
  }
  return out;
}

Mesh with_positions(const Mesh& mesh, Positions positions) { return Mesh(std::move(positions), mesh.triangles()); }

}  // namespace kpdet::shapes
