#ifndef KPDET_TRAINER_HPP
#define KPDET_TRAINER_HPP

#include "kpdet/evaluation.hpp"
#include "kpdet/features.hpp"
#include "kpdet/model.hpp"
#include "kpdet/neuralnet.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace kpdet {

struct OptimizerSettings {
  double step_size = 0.01;
  double momentum = 0.9;
  /// Step size multiplier applied whenever an epoch fails to improve the best cost.
  double decay = 0.5;
  int batch_size = 256;
};

struct SparsitySetting {
  double rho;
  double beta;
};

struct TrainingConfig {
  /// input -> SAE1 hidden -> SAE2 hidden -> SAE3 hidden -> logistic output
  std::vector<Eigen::Index> dimensions{665, 800, 200, 50, 1};
  std::array<SparsitySetting, 3> sparsity{{{0.15, 4.0}, {0.15, 4.0}, {0.1, 4.0}}};
  OptimizerSettings optimizer;
  int pretrain_epochs = 100;
  int head_epochs = 200;
  int finetune_epochs = 100;
  std::uint64_t seed = 1;
  /// Defaults to negatives / positives.
  std::optional<double> positive_weight;
  /// The first autoencoder reconstructs z-scored features, which a sigmoid
  /// output cannot reach; deeper ones reconstruct sigmoid codes.
  Activation first_decoder = Activation::Identity;

  void validate() const;
};

struct SampleOrigin {
  std::string mesh_id;
  int vertex;
};

/// Raw feature rows with binary keypoint labels.
struct LabeledSet {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  FeatureLayout layout;
  std::vector<SampleOrigin> provenance;
  /// Settings whose cluster representatives were labelled positive.
  std::vector<int> n_values;
  std::vector<double> sigmas;

  Eigen::Index positives() const { return static_cast<Eigen::Index>(labels.sum()); }
  Eigen::Index negatives() const { return labels.size() - positives(); }
};

struct TrainingMesh {
  std::string mesh_id;
  const FeatureMatrix* features = nullptr;
  /// Needed only when the ground truth has annotations but no precomputed clusters.
  const Positions* positions = nullptr;
};

/// Positives: every cluster representative over all (n, sigma) settings.
/// Negatives: all other vertices. Vertices with invalid normals are skipped.
LabeledSet build_labeled_set(const GroundTruth& truth, std::span<const TrainingMesh> meshes,
                             std::span<const int> n_values, std::span<const double> sigmas);

/// Full-data cost before training followed by one entry per epoch.
using CostHistory = std::vector<double>;

/// Greedy layer-wise pretraining on already standardised features. Each
/// autoencoder is trained on the hidden codes of the previous one. Each
/// phase returns its lowest-cost parameters.
std::vector<SparseAutoencoder<double>> pretrain_saes(const TrainingConfig& config, const Eigen::MatrixXd& standardized,
                                                     std::mt19937_64& rng, std::vector<CostHistory>* histories = nullptr);

/// Hidden codes of the last encoder in `encoders`.
Eigen::MatrixXd encode(std::span<const DenseLayer<double>> encoders, const Eigen::MatrixXd& standardized);

double default_positive_weight(const Eigen::VectorXd& labels);

/// Logistic head trained on frozen codes.
DenseLayer<double> train_head(const TrainingConfig& config, const Eigen::MatrixXd& codes, const Eigen::VectorXd& labels,
                              double positive_weight, std::mt19937_64& rng, CostHistory* history = nullptr);

/// End-to-end backpropagation through every layer; standardisation stays frozen.
NetworkModel fine_tune(const TrainingConfig& config, NetworkModel model, const LabeledSet& labeled,
                       std::mt19937_64& rng);

/// Standardise, pretrain, train the head, stack and fine-tune.
NetworkModel train_model(const TrainingConfig& config, const LabeledSet& labeled);

/// phase,epoch,cost rows.
void write_loss_history(std::ostream& out, const NetworkModel& model);

}  // namespace kpdet

#endif  // KPDET_TRAINER_HPP
