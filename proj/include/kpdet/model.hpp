#ifndef KPDET_MODEL_HPP
#define KPDET_MODEL_HPP

#include "kpdet/features.hpp"
#include "kpdet/neuralnet.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace kpdet {

/// Per-column z-score statistics of the training features. Columns with no
/// spread are stored with stddev 1 and flagged constant.
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  std::vector<std::uint8_t> constant;

  static Standardization fit(const Eigen::MatrixXd& features);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
  Eigen::Index size() const noexcept { return mean.size(); }
};

struct PhaseHistory {
  std::string phase;
  /// Full-data cost before the first epoch, then after every epoch.
  std::vector<double> costs;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::int32_t pretrain_epochs = 0;
  std::int32_t head_epochs = 0;
  std::int32_t finetune_epochs = 0;
  double positive_weight = 1.0;
  std::vector<PhaseHistory> history;
};

/// Stacked encoders followed by the logistic head, with the standardisation
/// and feature layout they were trained against.
struct NetworkModel {
  std::vector<DenseLayer<double>> layers;
  Standardization normalization;
  FeatureLayout layout;
  TrainingMetadata metadata;

  std::vector<Eigen::Index> dimensions() const;
  Eigen::Index input_dimension() const { return layers.empty() ? 0 : layers.front().inputs(); }
  /// Throws when the layer chain, the normalisation and the layout disagree.
  void validate() const;
};

/// Raw (unstandardised) feature rows -> scores in [0, 1].
Eigen::VectorXd forward(const NetworkModel& model, const Eigen::MatrixXd& features);
double forward(const NetworkModel& model, const Eigen::RowVectorXd& features);

/// Throws a dimension-chain error naming both configurations on mismatch.
void check_compatible(const NetworkModel& model, const FeatureLayout& layout);

void save_model(std::ostream& out, const NetworkModel& model);
NetworkModel load_model(std::istream& in);

/// Hex digest of the serialised model.
std::string model_id(const NetworkModel& model);

}  // namespace kpdet

#endif  // KPDET_MODEL_HPP
