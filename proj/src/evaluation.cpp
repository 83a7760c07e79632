#include "kpdet/evaluation.hpp"

#include "kpdet/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>

namespace kpdet {

namespace {

using json = nlohmann::json;

void check_vertex(int v, const Positions& positions, const char* what) {
  if (v < 0 || v >= positions.rows()) {
    throw input_error(std::string(what) + " vertex " + std::to_string(v) + " is outside the mesh");
  }
}

double distance(const Positions& positions, int a, int b) { return (positions.row(a) - positions.row(b)).norm(); }

}  // namespace

const MeshGroundTruth* GroundTruth::find(std::string_view mesh_id) const {
  for (const auto& m : meshes) {
    if (m.mesh_id == mesh_id) return &m;
  }
  return nullptr;
}

GroundTruth read_ground_truth(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw input_error(std::string("ground truth is not valid JSON: ") + e.what());
  }
  GroundTruth truth;
  try {
    for (const auto& entry : doc.at("meshes")) {
      MeshGroundTruth mesh;
      mesh.mesh_id = entry.at("mesh_id").get<std::string>();
      mesh.diagonal = entry.value("diagonal", 0.0);
      if (entry.contains("annotations")) {
        for (const auto& [annotator, vertices] : entry.at("annotations").items()) {
          mesh.annotations[annotator] = vertices.get<std::vector<int>>();
        }
      }
      if (entry.contains("clusters")) {
        for (const auto& [key, list] : entry.at("clusters").items()) {
          auto& clusters = mesh.clusters[key];
          for (const auto& c : list) clusters.push_back({c.at("representative").get<int>(), c.value("support", 1)});
        }
      }
      if (truth.find(mesh.mesh_id) != nullptr) throw input_error("duplicate mesh id '" + mesh.mesh_id + "' in ground truth");
      truth.meshes.push_back(std::move(mesh));
    }
  } catch (const json::exception& e) {
    throw input_error(std::string("malformed ground truth: ") + e.what());
  }
  return truth;
}

void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
  json doc;
  doc["meshes"] = json::array();
  for (const auto& mesh : truth.meshes) {
    json entry;
    entry["mesh_id"] = mesh.mesh_id;
    if (mesh.diagonal > 0.0) entry["diagonal"] = mesh.diagonal;
    if (!mesh.annotations.empty()) entry["annotations"] = mesh.annotations;
    if (!mesh.clusters.empty()) {
      json clusters;
      for (const auto& [key, list] : mesh.clusters) {
        json items = json::array();
        for (const auto& c : list) items.push_back({{"representative", c.representative}, {"support", c.support}});
        clusters[key] = items;
      }
      entry["clusters"] = clusters;
    }
    doc["meshes"].push_back(entry);
  }
  out << doc.dump(2) << '\n';
}

std::string setting_key(int n, double sigma) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), sigma);
  return std::to_string(n) + "," + std::string(buffer, result.ptr);
}

std::vector<Cluster> cluster_annotations(const Annotations& annotations, const Positions& positions, double diagonal,
                                         int n, double sigma) {
  if (n < 1) throw config_error("cluster support threshold n must be >= 1");
  if (!(sigma > 0.0 && sigma < 1.0)) throw config_error("sigma must lie in (0, 1)");

  // Marks in a fixed order: annotators sorted by name, vertices deduplicated.
  std::vector<int> mark_vertex;
  std::vector<int> mark_annotator;
  int annotator_index = 0;
  for (const auto& [name, vertices] : annotations) {
    std::set<int> unique(vertices.begin(), vertices.end());
    for (int v : unique) {
      check_vertex(v, positions, "annotated");
      mark_vertex.push_back(v);
      mark_annotator.push_back(annotator_index);
    }
    ++annotator_index;
  }
  const int count = static_cast<int>(mark_vertex.size());
  if (count == 0) return {};

  const double threshold = 2.0 * sigma * diagonal;
  // linkage(a, b) = max distance between members of slots a and b; slot a
  // always holds the cluster whose smallest mark index is a.
  Eigen::MatrixXd linkage(count, count);
  for (int a = 0; a < count; ++a) {
    for (int b = 0; b < count; ++b) linkage(a, b) = distance(positions, mark_vertex[a], mark_vertex[b]);
  }
  std::vector<std::vector<int>> members(count);
  for (int a = 0; a < count; ++a) members[a] = {a};
  std::vector<char> active(count, 1);

  for (;;) {
    double best = std::numeric_limits<double>::infinity();
    int best_a = -1, best_b = -1;
    for (int a = 0; a < count; ++a) {
      if (!active[a]) continue;
      for (int b = a + 1; b < count; ++b) {
        if (active[b] && linkage(a, b) < best) {
          best = linkage(a, b);
          best_a = a;
          best_b = b;
        }
      }
    }
    if (best_a < 0 || best > threshold) break;
    for (int k = 0; k < count; ++k) {
      linkage(best_a, k) = linkage(k, best_a) = std::max(linkage(best_a, k), linkage(best_b, k));
    }
    members[best_a].insert(members[best_a].end(), members[best_b].begin(), members[best_b].end());
    members[best_b].clear();
    active[best_b] = 0;
  }

  std::vector<Cluster> out;
  for (int a = 0; a < count; ++a) {
    if (!active[a]) continue;
    std::set<int> annotators;
    std::set<int> vertices;
    for (int m : members[a]) {
      annotators.insert(mark_annotator[m]);
      vertices.insert(mark_vertex[m]);
    }
    if (static_cast<int>(annotators.size()) < n) continue;
    int representative = -1;
    double best_sum = std::numeric_limits<double>::infinity();
    for (int v : vertices) {
      double sum = 0.0;
      for (int m : members[a]) sum += distance(positions, v, mark_vertex[m]);
      if (sum < best_sum) {
        best_sum = sum;
        representative = v;
      }
    }
    out.push_back({representative, static_cast<int>(annotators.size())});
  }
  std::sort(out.begin(), out.end(), [](const Cluster& x, const Cluster& y) {
    return std::tie(x.representative, x.support) < std::tie(y.representative, y.support);
  });
  return out;
}

std::vector<Cluster> clusters_for(const MeshGroundTruth& truth, const Positions* positions, int n, double sigma) {
  if (auto it = truth.clusters.find(setting_key(n, sigma)); it != truth.clusters.end()) return it->second;
  if (truth.annotations.empty()) {
    throw input_error("ground truth for '" + truth.mesh_id + "' has neither annotations nor clusters for setting " +
                      setting_key(n, sigma));
  }
  if (positions == nullptr) throw input_error("clustering annotations of '" + truth.mesh_id + "' needs its mesh");
  const double diagonal = truth.diagonal > 0.0 ? truth.diagonal : bounding_box_diagonal(*positions);
  return cluster_annotations(truth.annotations, *positions, diagonal, n, sigma);
}

namespace {

struct CandidatePair {
  double distance;
  int detected;
  int truth;
};

std::vector<CandidatePair> candidate_pairs(std::span<const int> detected, std::span<const int> truth,
                                           const Positions& positions, double max_distance) {
  std::vector<CandidatePair> pairs;
  for (int i = 0; i < static_cast<int>(detected.size()); ++i) {
    check_vertex(detected[i], positions, "detected");
    for (int j = 0; j < static_cast<int>(truth.size()); ++j) {
      check_vertex(truth[j], positions, "ground-truth");
      const double d = distance(positions, detected[i], truth[j]);
      if (d <= max_distance) pairs.push_back({d, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const CandidatePair& a, const CandidatePair& b) {
    return std::tie(a.distance, a.detected, a.truth) < std::tie(b.distance, b.detected, b.truth);
  });
  return pairs;
}

Matching greedy_match(std::span<const CandidatePair> pairs, std::size_t detected_count, std::size_t truth_count,
                      double max_distance) {
  Matching out;
  out.truth_hit.assign(truth_count, 0);
  std::vector<std::uint8_t> used(detected_count, 0);
  for (const auto& p : pairs) {
    if (p.distance > max_distance) break;
    if (used[p.detected] || out.truth_hit[p.truth]) continue;
    used[p.detected] = 1;
    out.truth_hit[p.truth] = 1;
    ++out.correct;
  }
  return out;
}

}  // namespace

Matching match_detections(std::span<const int> detected, std::span<const int> truth, const Positions& positions,
                          double r, double diagonal) {
  if (r < 0.0) throw config_error("tolerance r must be >= 0");
  const double max_distance = r * diagonal;
  const auto pairs = candidate_pairs(detected, truth, positions, max_distance);
  return greedy_match(pairs, detected.size(), truth.size(), max_distance);
}

MetricCurves compute_metrics(std::span<const int> detected, std::span<const Cluster> truth, const Positions& positions,
                             double diagonal, std::span<const double> r_grid) {
  if (truth.empty()) throw input_error("metrics need at least one ground-truth point");
  std::vector<int> truth_vertices;
  double total_weight = 0.0;
  for (const auto& c : truth) {
    truth_vertices.push_back(c.representative);
    total_weight += std::max(c.support, 0);
  }
  const bool unit_weights = !(total_weight > 0.0);
  if (unit_weights) total_weight = static_cast<double>(truth.size());

  double max_r = 0.0;
  for (double r : r_grid) {
    if (r < 0.0) throw config_error("tolerance r must be >= 0");
    max_r = std::max(max_r, r);
  }
  const auto pairs = candidate_pairs(detected, truth_vertices, positions, max_r * diagonal);

  const double n_g = static_cast<double>(truth.size());
  const double n_a = static_cast<double>(detected.size());
  MetricCurves curves;
  for (double r : r_grid) {
    const auto match = greedy_match(pairs, detected.size(), truth.size(), r * diagonal);
    const double n_c = match.correct;
    double hit_weight = 0.0;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (match.truth_hit[j]) hit_weight += unit_weights ? 1.0 : std::max(truth[j].support, 0);
    }
    curves.r.push_back(r);
    curves.iou.push_back(n_c / (n_a + n_g - n_c));
    curves.fne.push_back((n_g - n_c) / n_g);
    curves.fpe.push_back(n_a > 0.0 ? (n_a - n_c) / n_a : 0.0);
    curves.wme.push_back(1.0 - hit_weight / total_weight);
  }
  return curves;
}

MetricCurves average_curves(std::span<const MetricCurves> curves) {
  if (curves.empty()) throw input_error("no curves to average");
  MetricCurves out;
  out.r = curves.front().r;
  const std::size_t points = out.r.size();
  out.iou.assign(points, 0.0);
  out.fne.assign(points, 0.0);
  out.fpe.assign(points, 0.0);
  out.wme.assign(points, 0.0);
  for (const auto& c : curves) {
    if (c.r != out.r) throw internal_error("averaged curves must share the r grid");
    for (std::size_t i = 0; i < points; ++i) {
      out.iou[i] += c.iou[i];
      out.fne[i] += c.fne[i];
      out.fpe[i] += c.fpe[i];
      out.wme[i] += c.wme[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(curves.size());
  for (std::size_t i = 0; i < points; ++i) {
    out.iou[i] *= inv;
    out.fne[i] *= inv;
    out.fpe[i] *= inv;
    out.wme[i] *= inv;
  }
  return out;
}

void write_curves_csv(std::ostream& out, const MetricCurves& curves) {
  out << "r,IOU,FNE,FPE,WME\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < curves.r.size(); ++i) {
    out << curves.r[i] << ',' << curves.iou[i] << ',' << curves.fne[i] << ',' << curves.fpe[i] << ',' << curves.wme[i]
        << '\n';
  }
}

std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw config_error("invalid grid: need lo <= hi and step > 0");
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  grid.reserve(count);
  // Rounded to 12 decimals so 0.01 + 2 * 0.01 prints (and keys) as 0.03.
  for (long i = 0; i < count; ++i) grid.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  return grid;
}

}  // namespace kpdet
