#ifndef KPDET_DETECTOR_HPP
#define KPDET_DETECTOR_HPP

#include "kpdet/features.hpp"
#include "kpdet/mesh.hpp"
#include "kpdet/model.hpp"
#include "kpdet/neighborhoods.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace kpdet {

inline constexpr double kDefaultThreshold = 0.5;

struct SaliencyMap {
  Eigen::VectorXd scores;
  std::string model_id;
};

/// Features are built with the model's own layout options.
SaliencyMap compute_saliency(const Mesh& mesh, const NetworkModel& model);
SaliencyMap compute_saliency(const FeatureMatrix& features, const NetworkModel& model);

struct DetectionResult {
  std::vector<int> keypoints;  // ascending
  std::vector<double> scores;
  /// 1 when some ring of the keypoint was empty (boundary or small component).
  std::vector<std::uint8_t> partial_rings;
  int rings = 0;
  double threshold = kDefaultThreshold;
  std::string model_id;
};

/// A vertex is a keypoint when its score is at least `threshold` and strictly
/// greater than every score in its rings. Plateaus therefore yield nothing.
DetectionResult select_keypoints(const SaliencyMap& map, const VertexNeighborhoods& rings,
                                 double threshold = kDefaultThreshold);

/// Text list: '#' header lines with the parameters, then one index per line.
void write_keypoints(std::ostream& out, const DetectionResult& result);
std::vector<int> read_keypoints(std::istream& in);

/// Blue (0,0,255) at the minimum score to red (255,0,0) at the maximum; a
/// constant map sits at the middle of the ramp.
std::vector<Rgb> saliency_colors(const Eigen::VectorXd& scores);

void export_colored_mesh(std::ostream& out, const Mesh& mesh, const SaliencyMap& map);

}  // namespace kpdet

#endif  // KPDET_DETECTOR_HPP
