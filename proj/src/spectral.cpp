#include "kpdet/spectral.hpp"

#include "kpdet/binary_io.hpp"
#include "kpdet/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

namespace kpdet {

namespace {

constexpr char kCacheMagic[9] = "KPDEIGEN";
constexpr std::uint32_t kCacheVersion = 1;
constexpr double kSignThreshold = 1e-12;

void check_vertex_cap(Eigen::Index n, Eigen::Index vertex_cap) {
  if (n > vertex_cap) {
    throw input_error("mesh has " + std::to_string(n) + " vertices, above the eigendecomposition cap of " +
                      std::to_string(vertex_cap) + "; simplify the mesh or raise KPDET_EIGEN_CAP");
  }
}

}  // namespace

LaplacianSystem build_laplacian(Eigen::Index vertex_count, std::span<const Edge> edges, const Positions& positions,
                                double diagonal) {
  if (positions.rows() != vertex_count) throw internal_error("positions do not match vertex count");
  const double cap = 1.0 / (1e-9 * (diagonal > 0.0 ? diagonal : 1.0));

  LaplacianSystem system;
  std::vector<Eigen::Triplet<double>> w_entries;
  std::vector<Eigen::Triplet<double>> l_entries;
  w_entries.reserve(2 * edges.size());
  l_entries.reserve(2 * edges.size() + vertex_count);
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(vertex_count);
  for (const auto& [i, j] : edges) {
    const double length = (positions.row(i) - positions.row(j)).norm();
    double w = length > 0.0 ? 1.0 / length : cap;
    if (w > cap) {
      w = cap;
      ++system.capped_edges;
    } else if (!(length > 0.0)) {
      ++system.capped_edges;
    }
    w_entries.emplace_back(i, j, w);
    w_entries.emplace_back(j, i, w);
    l_entries.emplace_back(i, j, -w);
    l_entries.emplace_back(j, i, -w);
    degree(i) += w;
    degree(j) += w;
  }
  for (Eigen::Index v = 0; v < vertex_count; ++v) l_entries.emplace_back(v, v, degree(v));

  system.weights.resize(vertex_count, vertex_count);
  system.weights.setFromTriplets(w_entries.begin(), w_entries.end());
  system.laplacian.resize(vertex_count, vertex_count);
  system.laplacian.setFromTriplets(l_entries.begin(), l_entries.end());
  return system;
}

LaplacianSystem build_laplacian(const Mesh& mesh, const Positions& positions) {
  return build_laplacian(mesh.vertex_count(), mesh.edges(), positions, bounding_box_diagonal(positions));
}

Eigen::Index eigen_vertex_cap() {
  if (const char* env = std::getenv("KPDET_EIGEN_CAP")) {
    char* end = nullptr;
    const long long value = std::strtoll(env, &end, 10);
    if (end == env || *end != '\0' || value <= 0) throw config_error(std::string("invalid KPDET_EIGEN_CAP '") + env + "'");
    return static_cast<Eigen::Index>(value);
  }
  return kDefaultEigenVertexCap;
}

LaplacianDecomposition decompose(const Eigen::MatrixXd& laplacian, Eigen::Index vertex_cap) {
  const Eigen::Index n = laplacian.rows();
  if (laplacian.cols() != n) throw internal_error("Laplacian must be square");
  check_vertex_cap(n, vertex_cap);
  const double scale = std::max(1.0, laplacian.cwiseAbs().maxCoeff());
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = c + 1; r < n; ++r) {
      if (std::abs(laplacian(r, c) - laplacian(c, r)) > 1e-12 * scale) throw internal_error("Laplacian is not symmetric");
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian);
  if (solver.info() != Eigen::Success) throw internal_error("symmetric eigensolver did not converge");

  LaplacianDecomposition out{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double x = out.eigenvectors(r, c);
      if (std::abs(x) > kSignThreshold) {
        if (x < 0.0) out.eigenvectors.col(c) *= -1.0;
        break;
      }
    }
  }
  return out;
}

LaplacianDecomposition decompose(const SparseMatrix& laplacian, Eigen::Index vertex_cap) {
  const Eigen::Index n = laplacian.rows();
  check_vertex_cap(n, vertex_cap);
  return decompose(Eigen::MatrixXd(laplacian), vertex_cap);
}

Eigen::VectorXd log_spectrum(const Eigen::VectorXd& eigenvalues) {
  return eigenvalues.unaryExpr([](double lambda) { return std::log(std::max(std::abs(lambda), kLogSpectrumFloor)); });
}

Eigen::VectorXd spectral_irregularity(const Eigen::VectorXd& log_spectrum, int gamma) {
  const Eigen::Index n = log_spectrum.size();
  if (gamma < 1) throw config_error("gamma must be >= 1");
  if (gamma > n) {
    throw config_error("gamma (" + std::to_string(gamma) + ") exceeds the spectrum length " + std::to_string(n));
  }
  // Centred window; an even gamma takes the extra sample on the right.
  const Eigen::Index left = (gamma - 1) / 2;
  const Eigen::Index right = gamma - 1 - left;
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0.0;
    for (Eigen::Index k = i - left; k <= i + right; ++k) sum += log_spectrum(std::clamp<Eigen::Index>(k, 0, n - 1));
    out(i) = std::abs(log_spectrum(i) - sum / gamma);
  }
  return out;
}

Eigen::VectorXd spatial_saliency(const LaplacianDecomposition& decomposition, const Eigen::VectorXd& irregularity,
                                 const SparseMatrix& weights, const SaliencyOptions& options) {
  const Eigen::Index n = decomposition.eigenvalues.size();
  if (irregularity.size() != n || weights.rows() != n || weights.cols() != n) {
    throw internal_error("spatial saliency inputs have inconsistent sizes");
  }

  Eigen::VectorXd gain = irregularity.unaryExpr([](double r) { return std::exp(std::min(r, kIrregularityCeiling)); });
  if (options.degenerate_tolerance > 0.0 && n > 0) {
    const auto& lambda = decomposition.eigenvalues;
    const double tol = options.degenerate_tolerance * std::max(1.0, lambda.cwiseAbs().maxCoeff());
    Eigen::Index start = 0;
    for (Eigen::Index i = 1; i <= n; ++i) {
      if (i == n || lambda(i) - lambda(i - 1) > tol) {
        if (i - start > 1) gain.segment(start, i - start).setConstant(gain.segment(start, i - start).mean());
        start = i;
      }
    }
  }

  // Column v of `basis` is row v of B; (B R1 B^T)_ij = scaled.col(i) . basis.col(j).
  const Eigen::MatrixXd basis = decomposition.eigenvectors.transpose();
  const Eigen::MatrixXd scaled = gain.asDiagonal() * basis;

  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (Eigen::Index col = 0; col < weights.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(weights, col); it; ++it) {
      const Eigen::Index row = it.row();
      const double s = scaled.col(row).dot(basis.col(col)) * it.value();
      out(row) += options.reduction == SaliencyReduction::RowAbsSum ? std::abs(s) : s;
    }
  }
  return out;
}

Eigen::VectorXd spectral_saliency(const Mesh& mesh, const Positions& positions, int gamma,
                                  const SaliencyOptions& options) {
  const auto system = build_laplacian(mesh, positions);
  const auto decomposition = decompose(system.laplacian);
  const auto irregularity = spectral_irregularity(log_spectrum(decomposition.eigenvalues), gamma);
  return spatial_saliency(decomposition, irregularity, system.weights, options);
}

std::uint64_t content_hash(const Mesh& mesh, const Positions& positions) {
  binary::Fnv1a hash;
  const std::uint64_t sizes[2] = {static_cast<std::uint64_t>(positions.rows()),
                                  static_cast<std::uint64_t>(mesh.triangle_count())};
  hash.update(sizes, sizeof(sizes));
  hash.update(positions.data(), sizeof(double) * positions.size());
  hash.update(mesh.triangles().data(), sizeof(int) * mesh.triangles().size());
  return hash.digest();
}

void save_decomposition(std::ostream& out, const LaplacianDecomposition& decomposition, std::uint64_t hash) {
  out.write(kCacheMagic, 8);
  binary::write(out, kCacheVersion);
  binary::write(out, hash);
  binary::write_matrix(out, decomposition.eigenvalues);
  binary::write_matrix(out, decomposition.eigenvectors);
}

std::optional<LaplacianDecomposition> load_decomposition(std::istream& in, std::uint64_t expected_hash) {
  binary::expect_magic(in, kCacheMagic, "decomposition cache");
  if (binary::read<std::uint32_t>(in, "cache version") != kCacheVersion) return std::nullopt;
  if (binary::read<std::uint64_t>(in, "cache hash") != expected_hash) return std::nullopt;
  LaplacianDecomposition out;
  out.eigenvalues = binary::read_matrix<Eigen::VectorXd>(in, "cached eigenvalues");
  out.eigenvectors = binary::read_matrix<Eigen::MatrixXd>(in, "cached eigenvectors");
  if (out.eigenvectors.rows() != out.eigenvalues.size() || out.eigenvectors.cols() != out.eigenvalues.size()) {
    throw input_error("decomposition cache has inconsistent dimensions");
  }
  return out;
}

}  // namespace kpdet
