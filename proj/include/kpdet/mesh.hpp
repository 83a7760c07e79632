#ifndef KPDET_MESH_HPP
#define KPDET_MESH_HPP

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace kpdet {

using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Triangles = Eigen::Matrix<int, Eigen::Dynamic, 3>;
using Edge = std::pair<int, int>;
using Rgb = std::array<std::uint8_t, 3>;

/// Triangle mesh with immutable connectivity.
///
/// Construction validates indices, rejects degenerate triangles and a zero
/// bounding box, and precomputes the sorted vertex adjacency. Positions of
/// smoothed copies live outside the mesh (see ScaleSpace) and are passed
/// alongside it to the geometric operators.
class Mesh {
 public:
  Mesh(Positions positions, Triangles triangles);

  const Positions& positions() const noexcept { return positions_; }
  const Triangles& triangles() const noexcept { return triangles_; }
  int vertex_count() const noexcept { return static_cast<int>(positions_.rows()); }
  int triangle_count() const noexcept { return static_cast<int>(triangles_.rows()); }

  /// Neighbours of each vertex, ascending and unique.
  const std::vector<std::vector<int>>& adjacency() const noexcept { return adjacency_; }
  /// Undirected edges (i < j), sorted.
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  double diagonal() const noexcept { return diagonal_; }

 private:
  Positions positions_;
  Triangles triangles_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<Edge> edges_;
  double diagonal_ = 0.0;
};

double bounding_box_diagonal(const Positions& positions);

/// Largest distance between two vertices. Unlike the axis-aligned box
/// diagonal it does not change under rotation; for a box it equals the main
/// diagonal.
double diameter(const Positions& positions);

/// Mean length of the mesh edges measured on `positions`.
double mean_edge_length(const Mesh& mesh, const Positions& positions);

enum class MeshFormat { Off, PlyAscii };

Mesh load_mesh(std::istream& in, MeshFormat format);
/// Picks the format from the extension (.off / .ply).
Mesh load_mesh(const std::filesystem::path& path);

/// ASCII PLY, optionally with per-vertex RGB.
void write_ply(std::ostream& out, const Mesh& mesh, std::span<const Rgb> colors = {});
void write_off(std::ostream& out, const Mesh& mesh);

}  // namespace kpdet

#endif  // KPDET_MESH_HPP
