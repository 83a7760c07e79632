#ifndef KPDET_NEIGHBORHOODS_HPP
#define KPDET_NEIGHBORHOODS_HPP

#include "kpdet/mesh.hpp"

#include <span>
#include <vector>

namespace kpdet {

/// k-rings of every vertex: ring k holds the vertices at graph distance
/// exactly k, ascending by index. Rings are disjoint and exclude the center.
class VertexNeighborhoods {
 public:
  VertexNeighborhoods() = default;
  VertexNeighborhoods(int ring_count, std::vector<std::vector<std::vector<int>>> rings)
      : ring_count_(ring_count), rings_(std::move(rings)) {}

  int ring_count() const noexcept { return ring_count_; }
  int vertex_count() const noexcept { return static_cast<int>(rings_.size()); }

  /// `k` is 1-based.
  std::span<const int> ring(int vertex, int k) const { return rings_[vertex][k - 1]; }

  /// Union of rings 1..k, ascending by distance and then index.
  std::vector<int> disk(int vertex, int k) const;

 private:
  int ring_count_ = 0;
  std::vector<std::vector<std::vector<int>>> rings_;
};

VertexNeighborhoods compute_rings(const Mesh& mesh, int ring_count);

}  // namespace kpdet

#endif  // KPDET_NEIGHBORHOODS_HPP
