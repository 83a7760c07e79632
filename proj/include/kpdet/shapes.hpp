#ifndef KPDET_SHAPES_HPP
#define KPDET_SHAPES_HPP

#include "kpdet/mesh.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <vector>

namespace kpdet::shapes {

/// Icosahedron refined by midpoint subdivision and projected to the sphere.
/// 10 * 4^s + 2 vertices.
Mesh icosphere(double radius, int subdivisions);

/// (nx + 1) x (ny + 1) lattice in z = 0, each cell split along its diagonal.
Mesh grid_plane(int nx, int ny, double spacing = 1.0);

/// Surface of an axis-aligned cube centred at the origin, every face a
/// segments x segments grid. 6 s^2 + 2 vertices.
Mesh subdivided_cube(int segments, double size = 1.0);
/// Vertex indices of the eight corners of subdivided_cube(segments).
std::vector<int> cube_corners(int segments);

/// Open tube along z without caps.
Mesh cylinder(double radius, double height, int around, int along);

Mesh regular_tetrahedron(double edge = 1.0);

/// Vertex 0 at the origin surrounded by `spokes` rim vertices on the unit circle.
Mesh fan(int spokes);

/// Uniformly distributed rotation.
Eigen::Matrix3d random_rotation(std::mt19937_64& rng);

Positions transform(const Positions& positions, const Eigen::Matrix3d& rotation, const Eigen::RowVector3d& offset);

/// Adds independent uniform noise in [-amplitude, amplitude] to each coordinate.
Positions jitter(const Positions& positions, double amplitude, std::mt19937_64& rng);

Mesh with_positions(const Mesh& mesh, Positions positions);

}  // namespace kpdet::shapes

#endif  // KPDET_SHAPES_HPP
