#ifndef KPDET_GEOMETRY_HPP
#define KPDET_GEOMETRY_HPP

#include "kpdet/mesh.hpp"
#include "kpdet/neighborhoods.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace kpdet {

using Normals = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct NormalField {
  Normals normals;
  /// Vertices whose incident triangles all have zero area. They carry an
  /// arbitrary unit normal (+z).
  std::vector<int> degenerate;

  std::size_t warning_count() const noexcept { return degenerate.size(); }
};

/// Area-weighted vertex normals, normalised to unit length.
NormalField compute_normals(const Mesh& mesh, const Positions& positions);

/// Principal curvatures per vertex (1/model-unit), c1 >= c2. Positive values
/// mean the surface bends away from the normal (a sphere with outward normals
/// has positive curvature).
struct CurvatureField {
  Eigen::VectorXd c1;
  Eigen::VectorXd c2;
  /// Vertices where the quadratic fit was rank deficient and the cotangent
  /// mean curvature was used for both principal values.
  std::vector<int> fallback;

  Eigen::VectorXd mean() const { return (c1 + c2) / 2.0; }
  Eigen::VectorXd gaussian() const { return c1.cwiseProduct(c2); }
};

/// Least-squares fit of h = a u^2 + b uv + c v^2 over the 1- and 2-ring in the
/// tangent frame of each vertex. `rings` must hold at least two rings.
CurvatureField compute_curvatures(const Mesh& mesh, const Positions& positions, const Normals& normals,
                                  const VertexNeighborhoods& rings);
CurvatureField compute_curvatures(const Mesh& mesh, const Positions& positions, const Normals& normals);

/// Cotangent-Laplacian mean curvature with barycentric areas.
Eigen::VectorXd cotangent_mean_curvature(const Mesh& mesh, const Positions& positions, const Normals& normals);

/// Distances of ring members to the tangent plane at `center`.
template <typename DerivedP, typename DerivedN>
Eigen::VectorXd tangent_plane_distances(int center, std::span<const int> ring,
                                        const Eigen::MatrixBase<DerivedP>& positions,
                                        const Eigen::MatrixBase<DerivedN>& normals) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(ring.size()));
  const Eigen::Vector3d n = normals.row(center).transpose();
  const double norm = n.norm();
  const double offset = n.dot(positions.row(center).transpose());
  for (std::size_t j = 0; j < ring.size(); ++j) {
    out(static_cast<Eigen::Index>(j)) = std::abs(n.dot(positions.row(ring[j]).transpose()) - offset) / norm;
  }
  return out;
}

enum class AngleFold {
  None,    // arccos in [0, pi]
  HalfPi,  // min(theta, pi - theta), so opposite normals count as parallel
};

/// Angles between the normal at `center` and the normals of ring members.
template <typename DerivedN>
Eigen::VectorXd normal_angles(int center, std::span<const int> ring, const Eigen::MatrixBase<DerivedN>& normals,
                              AngleFold fold = AngleFold::HalfPi) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(ring.size()));
  const Eigen::Vector3d n = normals.row(center).transpose();
  for (std::size_t j = 0; j < ring.size(); ++j) {
    const double cosine = std::clamp(n.dot(normals.row(ring[j]).transpose()), -1.0, 1.0);
    double theta = std::acos(cosine);
    if (fold == AngleFold::HalfPi) theta = std::min(theta, std::numbers::pi - theta);
    out(static_cast<Eigen::Index>(j)) = theta;
  }
  return out;
}

}  // namespace kpdet

#endif  // KPDET_GEOMETRY_HPP
