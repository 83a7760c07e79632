#include "kpdet/neighborhoods.hpp"

#include "kpdet/error.hpp"

#include <algorithm>

namespace kpdet {

std::vector<int> VertexNeighborhoods::disk(int vertex, int k) const {
  std::vector<int> out;
  for (int r = 1; r <= std::min(k, ring_count_); ++r) {
    const auto members = ring(vertex, r);
    out.insert(out.end(), members.begin(), members.end());
  }
  return out;
}

VertexNeighborhoods compute_rings(const Mesh& mesh, int ring_count) {
  if (ring_count < 1) throw config_error("ring count must be >= 1");
  const int n = mesh.vertex_count();
  const auto& adjacency = mesh.adjacency();

  std::vector<std::vector<std::vector<int>>> rings(n, std::vector<std::vector<int>>(ring_count));
  // visited[u] == v marks u as already reached from center v.
  std::vector<int> visited(n, -1);
  for (int v = 0; v < n; ++v) {
    visited[v] = v;
    const std::vector<int>* frontier = nullptr;
    std::vector<int> seed{v};
    frontier = &seed;
    for (int k = 0; k < ring_count; ++k) {
      auto& ring = rings[v][k];
      for (int u : *frontier) {
        for (int w : adjacency[u]) {
          if (visited[w] != v) {
            visited[w] = v;
            ring.push_back(w);
          }
        }
      }
      std::sort(ring.begin(), ring.end());
      if (ring.empty()) break;
      frontier = &ring;
    }
  }
  return VertexNeighborhoods(ring_count, std::move(rings));
}

}  // namespace kpdet
