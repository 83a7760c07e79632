#ifndef KPDET_SPECTRAL_HPP
#define KPDET_SPECTRAL_HPP

#include "kpdet/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>

namespace kpdet {

using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr Eigen::Index kDefaultEigenVertexCap = 6000;
inline constexpr double kLogSpectrumFloor = 1e-12;
inline constexpr double kIrregularityCeiling = 30.0;

/// Graph Laplacian L = D - W with inverse edge-length weights.
struct LaplacianSystem {
  SparseMatrix weights;
  SparseMatrix laplacian;
  /// Edges whose length was zero and whose weight was capped.
  std::size_t capped_edges = 0;
};

LaplacianSystem build_laplacian(const Mesh& mesh, const Positions& positions);
/// Edge-list form, for graphs that are not triangle meshes. `diagonal` sets
/// the weight cap 1 / (1e-9 * diagonal) for coincident endpoints.
LaplacianSystem build_laplacian(Eigen::Index vertex_count, std::span<const Edge> edges, const Positions& positions,
                                double diagonal);

/// Full symmetric eigendecomposition, ascending eigenvalues, eigenvectors in
/// columns with their first non-negligible component positive.
struct LaplacianDecomposition {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
};

/// Vertex cap for the dense eigensolver; KPDET_EIGEN_CAP overrides the default.
Eigen::Index eigen_vertex_cap();

LaplacianDecomposition decompose(const Eigen::MatrixXd& laplacian, Eigen::Index vertex_cap = eigen_vertex_cap());
LaplacianDecomposition decompose(const SparseMatrix& laplacian, Eigen::Index vertex_cap = eigen_vertex_cap());

/// log |lambda| with magnitudes below 1e-12 clamped.
Eigen::VectorXd log_spectrum(const Eigen::VectorXd& eigenvalues);

/// |L - box_gamma * L| with a centred length-gamma box filter and replicated
/// end samples.
Eigen::VectorXd spectral_irregularity(const Eigen::VectorXd& log_spectrum, int gamma);

/// Reduction of the saliency matrix S to one value per vertex.
enum class SaliencyReduction : std::uint8_t { RowAbsSum = 0, RowSum = 1 };

struct SaliencyOptions {
  SaliencyReduction reduction = SaliencyReduction::RowAbsSum;
  /// Eigenvalues closer than this (relative to the largest magnitude) form
  /// one eigenspace whose exp(R) values are averaged. This makes the result
  /// independent of the basis the solver picks inside a repeated eigenvalue.
  /// Zero disables grouping.
  double degenerate_tolerance = 1e-9;
};

/// s_v = reduce_j (B diag(exp R) B^T (.) W)_vj, evaluated only on the edges of W.
Eigen::VectorXd spatial_saliency(const LaplacianDecomposition& decomposition, const Eigen::VectorXd& irregularity,
                                 const SparseMatrix& weights, const SaliencyOptions& options = {});

/// Laplacian -> spectrum -> irregularity -> per-vertex saliency.
Eigen::VectorXd spectral_saliency(const Mesh& mesh, const Positions& positions, int gamma,
                                  const SaliencyOptions& options = {});

/// FNV-1a over positions and triangles; keys the decomposition cache.
std::uint64_t content_hash(const Mesh& mesh, const Positions& positions);

void save_decomposition(std::ostream& out, const LaplacianDecomposition& decomposition, std::uint64_t hash);
/// Empty when the stored hash or version does not match.
std::optional<LaplacianDecomposition> load_decomposition(std::istream& in, std::uint64_t expected_hash);

}  // namespace kpdet

#endif  // KPDET_SPECTRAL_HPP
