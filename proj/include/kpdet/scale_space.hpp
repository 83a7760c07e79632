#ifndef KPDET_SCALE_SPACE_HPP
#define KPDET_SCALE_SPACE_HPP

#include "kpdet/mesh.hpp"

#include <vector>

namespace kpdet {

inline constexpr double kDefaultEpsilonFraction = 0.003;
inline constexpr int kMaxSmoothingRings = 10;

/// Gaussian-smoothed copies of the vertex positions at standard deviations
/// 0, eps, 2 eps, ..., omega eps. Scale 0 is the input geometry.
struct ScaleSpace {
  std::vector<Positions> scales;
  double epsilon = 0.0;
  int omega = 0;

  double delta(int scale) const noexcept { return scale * epsilon; }
};

/// eps = epsilon_fraction * diameter of the original mesh (its bounding-box
/// main diagonal for boxes, but unchanged by rotation). Each
/// smoothed vertex is the normalised Gaussian-weighted mean of the original
/// positions within ceil(3 delta / mean edge length) rings (at most 10).
ScaleSpace build_scale_space(const Mesh& mesh, int omega, double epsilon_fraction = kDefaultEpsilonFraction);

/// Number of rings used as the smoothing support at standard deviation `delta`.
int smoothing_rings(double delta, double mean_edge);

}  // namespace kpdet

#endif  // KPDET_SCALE_SPACE_HPP
