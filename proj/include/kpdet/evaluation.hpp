#ifndef KPDET_EVALUATION_HPP
#define KPDET_EVALUATION_HPP

#include "kpdet/mesh.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kpdet {

/// A group of human annotations; `support` counts distinct annotators.
struct Cluster {
  int representative = -1;
  int support = 0;

  bool operator==(const Cluster&) const = default;
};

using Annotations = std::map<std::string, std::vector<int>>;  // annotator -> marked vertices

struct MeshGroundTruth {
  std::string mesh_id;
  /// Bounding-box diagonal; 0 means "take it from the mesh".
  double diagonal = 0.0;
  Annotations annotations;
  /// Precomputed clusters keyed by setting_key(n, sigma).
  std::map<std::string, std::vector<Cluster>> clusters;
};

struct GroundTruth {
  std::vector<MeshGroundTruth> meshes;

  const MeshGroundTruth* find(std::string_view mesh_id) const;
};

/// JSON layout:
///   {"meshes": [{"mesh_id": "chair", "diagonal": 1.7,
///                "annotations": {"annotator-1": [12, 40], ...},
///                "clusters": {"2,0.03": [{"representative": 12, "support": 5}]}}]}
/// "diagonal", "annotations" and "clusters" are optional.
GroundTruth read_ground_truth(std::istream& in);
void write_ground_truth(std::ostream& out, const GroundTruth& truth);

/// "n,sigma" with sigma in shortest round-trip form, e.g. "2,0.03".
std::string setting_key(int n, double sigma);

/// Complete-linkage agglomerative clustering of all (annotator, vertex)
/// marks: the closest pair of clusters (largest member distance) is merged
/// while that distance is at most 2 sigma * diagonal, so every cluster fits
/// in a ball of radius about sigma * diagonal. Clusters supported by at least
/// `n` distinct annotators are returned, ordered by representative; the
/// representative is the marked vertex with the smallest summed distance to
/// the cluster's marks.
std::vector<Cluster> cluster_annotations(const Annotations& annotations, const Positions& positions, double diagonal,
                                         int n, double sigma);

/// Precomputed clusters when present, otherwise clusters from annotations
/// (which then needs `positions`).
std::vector<Cluster> clusters_for(const MeshGroundTruth& truth, const Positions* positions, int n, double sigma);

struct Matching {
  int correct = 0;
  std::vector<std::uint8_t> truth_hit;
};

/// One-to-one greedy matching by ascending Euclidean distance; a pair counts
/// when its distance is at most r * diagonal.
Matching match_detections(std::span<const int> detected, std::span<const int> truth, const Positions& positions,
                          double r, double diagonal);

struct MetricCurves {
  std::vector<double> r;
  std::vector<double> iou;
  std::vector<double> fne;
  std::vector<double> fpe;
  std::vector<double> wme;
};

/// IOU = TP / (FN + FP + TP), FNE = FN / N_G, FPE = FP / N_A (0 when nothing
/// was detected), WME = 1 - sum(support * hit) / sum(support).
MetricCurves compute_metrics(std::span<const int> detected, std::span<const Cluster> truth, const Positions& positions,
                             double diagonal, std::span<const double> r_grid);

/// Pointwise mean; all curves must share the r grid.
MetricCurves average_curves(std::span<const MetricCurves> curves);

void write_curves_csv(std::ostream& out, const MetricCurves& curves);

/// Inclusive arithmetic grid lo, lo + step, ..., hi.
std::vector<double> make_grid(double lo, double hi, double step);

}  // namespace kpdet

#endif  // KPDET_EVALUATION_HPP
