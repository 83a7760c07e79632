#include "kpdet/scale_space.hpp"

#include "kpdet/error.hpp"
#include "kpdet/neighborhoods.hpp"

#include <algorithm>
#include <cmath>

namespace kpdet {

int smoothing_rings(double delta, double mean_edge) {
  if (!(delta > 0.0)) return 0;
  if (!(mean_edge > 0.0)) return kMaxSmoothingRings;
  const double rings = std::ceil(3.0 * delta / mean_edge);
  return static_cast<int>(std::clamp(rings, 1.0, static_cast<double>(kMaxSmoothingRings)));
}

ScaleSpace build_scale_space(const Mesh& mesh, int omega, double epsilon_fraction) {
  if (omega < 0) throw config_error("omega must be >= 0");
  if (!(epsilon_fraction > 0.0)) throw config_error("epsilon fraction must be positive");

  ScaleSpace space;
  space.omega = omega;
  space.epsilon = epsilon_fraction * diameter(mesh.positions());
  space.scales.reserve(omega + 1);
  const Positions& original = mesh.positions();
  space.scales.push_back(original);
  if (omega == 0) return space;

  const double mean_edge = mean_edge_length(mesh, original);
  const int max_rings = smoothing_rings(space.delta(omega), mean_edge);
  const auto rings = compute_rings(mesh, std::max(1, max_rings));

  const int n = mesh.vertex_count();
  for (int s = 1; s <= omega; ++s) {
    const double delta = space.delta(s);
    const int support = smoothing_rings(delta, mean_edge);
    const double inv_two_var = 1.0 / (2.0 * delta * delta);
    Positions smoothed(n, 3);
    for (int v = 0; v < n; ++v) {
      // The center has weight exp(0) = 1; weights are positive and normalised.
      Eigen::RowVector3d sum = original.row(v);
      double weight_sum = 1.0;
      for (int u : rings.disk(v, support)) {
        const double w = std::exp(-(original.row(u) - original.row(v)).squaredNorm() * inv_two_var);
        sum += w * original.row(u);
        weight_sum += w;
      }
      smoothed.row(v) = sum / weight_sum;
    }
    space.scales.push_back(std::move(smoothed));
  }
  return space;
}

}  // namespace kpdet
