#include "kpdet/detector.hpp"

#include "kpdet/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace kpdet {

SaliencyMap compute_saliency(const Mesh& mesh, const NetworkModel& model) {
  return compute_saliency(build_feature_matrix(mesh, model.layout.options), model);
}

SaliencyMap compute_saliency(const FeatureMatrix& features, const NetworkModel& model) {
  check_compatible(model, features.layout);
  SaliencyMap map;
  map.scores = forward(model, features.values);
  if (!map.scores.allFinite()) throw internal_error("saliency map contains non-finite scores");
  map.model_id = model_id(model);
  return map;
}

DetectionResult select_keypoints(const SaliencyMap& map, const VertexNeighborhoods& rings, double threshold) {
  const auto& s = map.scores;
  if (rings.vertex_count() != s.size()) {
    throw input_error("saliency map has " + std::to_string(s.size()) + " scores but the rings cover " +
                      std::to_string(rings.vertex_count()) + " vertices");
  }
  DetectionResult result;
  result.rings = rings.ring_count();
  result.threshold = threshold;
  result.model_id = map.model_id;
  for (int v = 0; v < rings.vertex_count(); ++v) {
    if (!(s(v) >= threshold)) continue;
    bool maximum = true;
    bool partial = false;
    for (int k = 1; k <= rings.ring_count() && maximum; ++k) {
      const auto ring = rings.ring(v, k);
      partial = partial || ring.empty();
      maximum = std::all_of(ring.begin(), ring.end(), [&](int u) { return s(v) > s(u); });
    }
    if (!maximum) continue;
    result.keypoints.push_back(v);
    result.scores.push_back(s(v));
    result.partial_rings.push_back(partial ? 1 : 0);
  }
  return result;
}

void write_keypoints(std::ostream& out, const DetectionResult& result) {
  out << "# kpdet keypoints\n";
  if (!result.model_id.empty()) out << "# model " << result.model_id << '\n';
  out << "# rings " << result.rings << '\n';
  out.precision(17);
  out << "# threshold " << result.threshold << '\n';
  out << "# count " << result.keypoints.size() << '\n';
  for (int v : result.keypoints) out << v << '\n';
}

std::vector<int> read_keypoints(std::istream& in) {
  std::vector<int> keypoints;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::size_t used = 0;
    int v = -1;
    try {
      v = std::stoi(line.substr(first), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || v < 0 || line.find_first_not_of(" \t\r", first + used) != std::string::npos) {
      throw input_error("bad keypoint index '" + line + "' (line " + std::to_string(number) + ")");
    }
    keypoints.push_back(v);
  }
  return keypoints;
}

std::vector<Rgb> saliency_colors(const Eigen::VectorXd& scores) {
  std::vector<Rgb> colors(static_cast<std::size_t>(scores.size()));
  if (scores.size() == 0) return colors;
  const double lo = scores.minCoeff();
  const double span = scores.maxCoeff() - lo;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const double t = span > 0.0 ? std::clamp((scores(i) - lo) / span, 0.0, 1.0) : 0.5;
    colors[static_cast<std::size_t>(i)] = {static_cast<std::uint8_t>(std::lround(255.0 * t)), 0,
                                           static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)))};
  }
  return colors;
}

void export_colored_mesh(std::ostream& out, const Mesh& mesh, const SaliencyMap& map) {
  if (map.scores.size() != mesh.vertex_count()) throw input_error("saliency map does not match the mesh");
  const auto colors = saliency_colors(map.scores);
  write_ply(out, mesh, colors);
}

}  // namespace kpdet
