#ifndef KPDET_STATS_HPP
#define KPDET_STATS_HPP

#include <Eigen/Core>

#include <array>

namespace kpdet {

inline constexpr double kHarmonicShift = 1e-12;

/// max, min, range, mean, population variance and harmonic mean of a sample,
/// in that order. An empty sample yields zeros with `valid == false`.
template <typename Scalar>
struct StatVector {
  Scalar max{0};
  Scalar min{0};
  Scalar range{0};
  Scalar mean{0};
  Scalar variance{0};
  Scalar harmonic_mean{0};
  bool valid = false;

  static constexpr int kSize = 6;

  std::array<Scalar, kSize> values() const { return {max, min, range, mean, variance, harmonic_mean}; }
};

/// Harmonic mean uses values shifted by +1e-12 so zeros stay finite.
template <typename Derived>
StatVector<typename Derived::Scalar> stats(const Eigen::DenseBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  StatVector<Scalar> out;
  const auto n = values.size();
  if (n == 0) return out;
  const auto x = values.derived().array();
  out.max = x.maxCoeff();
  out.min = x.minCoeff();
  out.range = out.max - out.min;
  out.mean = x.mean();
  out.variance = (x - out.mean).square().mean();
  out.harmonic_mean = Scalar(n) / (x + Scalar(kHarmonicShift)).inverse().sum();
  out.valid = true;
  return out;
}

}  // namespace kpdet

#endif  // KPDET_STATS_HPP
