#ifndef KPDET_TESTS_SUPPORT_HPP
#define KPDET_TESTS_SUPPORT_HPP

// Shared fixtures for the test binaries: hand-rolled generators and a few
// brute-force reference implementations that share no code with the library.

#include "kpdet/evaluation.hpp"
#include "kpdet/mesh.hpp"
#include "kpdet/shapes.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace kpdet::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                                     double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = uniform(rng, lo, hi);
  }
  return m;
}

inline std::string to_off(const Mesh& mesh) {
  std::ostringstream out;
  write_off(out, mesh);
  return out.str();
}

/// Rigidly moved copy of `mesh`; returns the rotation through `rotation` if given.
inline Mesh rigid_copy(const Mesh& mesh, std::mt19937_64& rng, Eigen::Matrix3d* rotation = nullptr) {
  const Eigen::Matrix3d r = shapes::random_rotation(rng);
  const Eigen::RowVector3d t(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5));
  if (rotation) *rotation = r;
  return shapes::with_positions(mesh, shapes::transform(mesh.positions(), r, t));
}

/// Graph distances by repeated relaxation over the triangle list; no BFS queue.
inline std::vector<int> brute_force_distances(const Mesh& mesh, int source) {
  const int n = mesh.vertex_count();
  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  dist[static_cast<std::size_t>(source)] = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (Eigen::Index t = 0; t < mesh.triangles().rows(); ++t) {
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          const auto u = static_cast<std::size_t>(mesh.triangles()(t, a));
          const auto v = static_cast<std::size_t>(mesh.triangles()(t, b));
          if (u == v || dist[u] < 0) continue;
          if (dist[v] < 0 || dist[v] > dist[u] + 1) {
            dist[v] = dist[u] + 1;
            changed = true;
          }
        }
      }
    }
  }
  return dist;
}

/// Greedy one-to-one matching replayed the slow way: each round scans every
/// unmatched pair for the closest one, lowest (detected, truth) index on ties.
inline int replay_greedy_matching(const std::vector<int>& detected, const std::vector<int>& truth,
                                  const Positions& p, double radius, std::vector<bool>* truth_hit = nullptr) {
  std::vector<bool> used_d(detected.size()), used_t(truth.size());
  int matched = 0;
  while (true) {
    double best = radius;
    int bi = -1, bj = -1;
    for (std::size_t i = 0; i < detected.size(); ++i) {
      if (used_d[i]) continue;
      for (std::size_t j = 0; j < truth.size(); ++j) {
        if (used_t[j]) continue;
        const Eigen::RowVector3d d = p.row(detected[i]) - p.row(truth[j]);
        const double dist = std::sqrt(d(0) * d(0) + d(1) * d(1) + d(2) * d(2));
        if (dist < best || (dist == best && bi < 0)) {
          best = dist;
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
        }
      }
    }
    if (bi < 0) break;
    used_d[static_cast<std::size_t>(bi)] = true;
    used_t[static_cast<std::size_t>(bj)] = true;
    ++matched;
  }
  if (truth_hit) *truth_hit = used_t;
  return matched;
}

struct OracleMetrics {
  double iou, fne, fpe, wme;
};

inline OracleMetrics oracle_metrics(const std::vector<int>& detected, const std::vector<Cluster>& truth,
                                    const Positions& p, double radius) {
  std::vector<int> reps;
  for (const auto& c : truth) reps.push_back(c.representative);
  std::vector<bool> hit;
  const double nc = replay_greedy_matching(detected, reps, p, radius, &hit);
  const double na = static_cast<double>(detected.size());
  const double ng = static_cast<double>(truth.size());
  double w = 0.0, wh = 0.0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    w += truth[j].support;
    if (hit[j]) wh += truth[j].support;
  }
  return {nc / (na + ng - nc), (ng - nc) / ng, na == 0 ? 0.0 : (na - nc) / na, 1.0 - wh / w};
}

/// Scratch directory under the build tree, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kpdet-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace kpdet::testing

#endif  // KPDET_TESTS_SUPPORT_HPP
