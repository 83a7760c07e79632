#include "kpdet/trainer.hpp"

#include "kpdet/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <set>

namespace kpdet {

namespace {

using Layer = DenseLayer<double>;
using Gradients = std::vector<LayerGradient<double>>;

struct BatchResult {
  double cost;
  Gradients gradients;
};

// Mini-batch momentum descent over `params`. The step size is multiplied by
// `decay` whenever an epoch ends without beating the best full-data cost,
// and the best parameters seen (including the initial ones) are restored at
// the end.
CostHistory run_phase(const std::string& phase, std::span<Layer* const> params, Eigen::Index samples,
                      const std::function<BatchResult(const std::vector<Eigen::Index>&)>& batch_step,
                      const std::function<double()>& full_cost, int epochs, const OptimizerSettings& opt,
                      std::mt19937_64& rng) {
  CostHistory history;
  auto record = [&](int epoch) {
    const double c = full_cost();
    if (!std::isfinite(c)) {
      throw config_error("training diverged in phase " + phase + " at epoch " + std::to_string(epoch) +
                         " (non-finite cost); lower the step size");
    }
    history.push_back(c);
    return c;
  };

  double best = record(0);
  std::vector<Layer> best_params;
  for (const auto* p : params) best_params.push_back(*p);
  if (epochs == 0) return history;

  Gradients velocity(params.size());
  for (std::size_t l = 0; l < params.size(); ++l) {
    velocity[l].weights = Eigen::MatrixXd::Zero(params[l]->weights.rows(), params[l]->weights.cols());
    velocity[l].bias = Eigen::VectorXd::Zero(params[l]->bias.size());
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(samples));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  double step = opt.step_size;
  const auto batch_size = static_cast<std::size_t>(opt.batch_size);

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
      const BatchResult result = batch_step(rows);
      if (!std::isfinite(result.cost)) {
        throw config_error("training diverged in phase " + phase + " at epoch " + std::to_string(epoch) +
                           " (non-finite batch cost); lower the step size");
      }
      for (std::size_t l = 0; l < params.size(); ++l) {
        velocity[l].weights = opt.momentum * velocity[l].weights - step * result.gradients[l].weights;
        velocity[l].bias = opt.momentum * velocity[l].bias - step * result.gradients[l].bias;
        params[l]->weights += velocity[l].weights;
        params[l]->bias += velocity[l].bias;
      }
    }
    const double c = record(epoch);
    if (c < best) {
      best = c;
      for (std::size_t l = 0; l < params.size(); ++l) best_params[l] = *params[l];
    } else {
      step *= opt.decay;
    }
  }
  for (std::size_t l = 0; l < params.size(); ++l) *params[l] = std::move(best_params[l]);
  return history;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& data, const std::vector<Eigen::Index>& rows) {
  return data(rows, Eigen::all);
}

Eigen::VectorXd gather(const Eigen::VectorXd& data, const std::vector<Eigen::Index>& rows) { return data(rows); }

void check_labels(const Eigen::VectorXd& labels) {
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != 0.0 && labels(i) != 1.0) throw input_error("labels must be 0 or 1");
  }
  const double positives = labels.sum();
  if (positives == 0.0 || positives == static_cast<double>(labels.size())) {
    throw input_error("training labels contain only one class");
  }
}

}  // namespace

void TrainingConfig::validate() const {
  if (dimensions.size() != 5) {
    throw config_error("dimension chain must have 5 entries (input, three hidden sizes, output), got " +
                       std::to_string(dimensions.size()));
  }
  for (auto d : dimensions) {
    if (d < 1) throw config_error("dimension chain entries must be positive");
  }
  if (dimensions.back() != 1) throw config_error("dimension chain must end in a single output");
  for (const auto& s : sparsity) {
    if (!(s.rho > 0.0 && s.rho < 1.0)) throw config_error("sparsity target rho must lie in (0, 1)");
    if (!(s.beta >= 0.0)) throw config_error("sparsity weight beta must be >= 0");
  }
  if (pretrain_epochs < 0 || head_epochs < 0 || finetune_epochs < 0) throw config_error("epochs must be >= 0");
  if (!(optimizer.step_size >= 0.0)) throw config_error("step size must be >= 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) throw config_error("momentum must lie in [0, 1)");
  if (!(optimizer.decay > 0.0 && optimizer.decay <= 1.0)) throw config_error("step decay must lie in (0, 1]");
  if (optimizer.batch_size < 1) throw config_error("batch size must be >= 1");
  if (positive_weight && !(*positive_weight > 0.0)) throw config_error("positive class weight must be > 0");
}

LabeledSet build_labeled_set(const GroundTruth& truth, std::span<const TrainingMesh> meshes,
                             std::span<const int> n_values, std::span<const double> sigmas) {
  if (meshes.empty()) throw input_error("no training meshes given");
  if (n_values.empty() || sigmas.empty()) throw config_error("labelling needs at least one n and one sigma");

  LabeledSet set;
  set.n_values.assign(n_values.begin(), n_values.end());
  set.sigmas.assign(sigmas.begin(), sigmas.end());
  struct Selected {
    const FeatureMatrix* features;
    std::vector<int> keep;
    std::set<int> positives;
  };
  std::vector<Selected> selected;
  Eigen::Index rows = 0;

  for (const auto& m : meshes) {
    if (m.features == nullptr) throw internal_error("training mesh '" + m.mesh_id + "' has no features");
    const auto* gt = truth.find(m.mesh_id);
    if (gt == nullptr) throw input_error("unknown mesh id '" + m.mesh_id + "' in ground truth");
    if (selected.empty()) {
      set.layout = m.features->layout;
    } else if (!(m.features->layout == set.layout)) {
      throw input_error("features of '" + m.mesh_id + "' use a different layout (" + m.features->layout.describe() +
                        ") from the other training meshes (" + set.layout.describe() + ")");
    }

    Selected s{m.features, {}, {}};
    for (int n : n_values) {
      for (double sigma : sigmas) {
        for (const auto& c : clusters_for(*gt, m.positions, n, sigma)) {
          if (c.representative < 0 || c.representative >= m.features->values.rows()) {
            throw input_error("cluster representative " + std::to_string(c.representative) + " of '" + m.mesh_id +
                              "' is outside the mesh");
          }
          s.positives.insert(c.representative);
        }
      }
    }
    for (int v = 0; v < static_cast<int>(m.features->values.rows()); ++v) {
      if (!m.features->flags.empty() && (m.features->flags[static_cast<std::size_t>(v)] & kInvalidNormal)) continue;
      s.keep.push_back(v);
      set.provenance.push_back({m.mesh_id, v});
    }
    rows += static_cast<Eigen::Index>(s.keep.size());
    selected.push_back(std::move(s));
  }

  set.features.resize(rows, set.layout.dimension());
  set.labels.resize(rows);
  Eigen::Index r = 0;
  for (const auto& s : selected) {
    for (int v : s.keep) {
      set.features.row(r) = s.features->values.row(v);
      set.labels(r++) = s.positives.count(v) ? 1.0 : 0.0;
    }
  }
  if (set.positives() == 0) throw input_error("ground truth yields no positive samples for the training meshes");
  return set;
}

Eigen::MatrixXd encode(std::span<const DenseLayer<double>> encoders, const Eigen::MatrixXd& standardized) {
  Eigen::MatrixXd codes = standardized;
  for (const auto& e : encoders) codes = e.forward(codes);
  return codes;
}

std::vector<SparseAutoencoder<double>> pretrain_saes(const TrainingConfig& config, const Eigen::MatrixXd& standardized,
                                                     std::mt19937_64& rng, std::vector<CostHistory>* histories) {
  config.validate();
  if (standardized.cols() != config.dimensions[0]) {
    throw config_error("pretraining expects " + std::to_string(config.dimensions[0]) + " input columns, got " +
                       std::to_string(standardized.cols()));
  }
  if (standardized.rows() < 1) throw input_error("no training samples");

  std::vector<SparseAutoencoder<double>> saes;
  Eigen::MatrixXd input = standardized;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto decoder = k == 0 ? config.first_decoder : Activation::Sigmoid;
    auto sae = make_sparse_autoencoder(config.dimensions[k], config.dimensions[k + 1], config.sparsity[k].rho,
                                       config.sparsity[k].beta, decoder, rng);
    Layer* params[] = {&sae.encoder, &sae.decoder};
    auto history = run_phase(
        "sae" + std::to_string(k + 1), params, input.rows(),
        [&](const std::vector<Eigen::Index>& rows) {
          auto c = sae_cost(sae, gather(input, rows));
          return BatchResult{c.cost, {std::move(c.encoder), std::move(c.decoder)}};
        },
        [&] { return sae_cost(sae, input, false).cost; }, config.pretrain_epochs, config.optimizer, rng);
    if (histories) histories->push_back(std::move(history));
    input = sae.encoder.forward(input);
    saes.push_back(std::move(sae));
  }
  return saes;
}

double default_positive_weight(const Eigen::VectorXd& labels) {
  check_labels(labels);
  const double positives = labels.sum();
  return (static_cast<double>(labels.size()) - positives) / positives;
}

DenseLayer<double> train_head(const TrainingConfig& config, const Eigen::MatrixXd& codes, const Eigen::VectorXd& labels,
                              double positive_weight, std::mt19937_64& rng, CostHistory* history) {
  config.validate();
  if (codes.cols() != config.dimensions[3]) {
    throw config_error("head expects " + std::to_string(config.dimensions[3]) + " code columns, got " +
                       std::to_string(codes.cols()));
  }
  if (codes.rows() != labels.size()) throw input_error("codes and labels disagree in size");
  check_labels(labels);

  auto head = make_layer<double>(config.dimensions[3], 1, Activation::Sigmoid, rng);
  Layer* params[] = {&head};
  auto h = run_phase(
      "head", params, codes.rows(),
      [&](const std::vector<Eigen::Index>& rows) {
        auto c = logistic_cost(head, gather(codes, rows), gather(labels, rows), positive_weight);
        return BatchResult{c.cost, {std::move(c.gradient)}};
      },
      [&] { return logistic_cost(head, codes, labels, positive_weight, false).cost; }, config.head_epochs,
      config.optimizer, rng);
  if (history) *history = std::move(h);
  return head;
}

NetworkModel fine_tune(const TrainingConfig& config, NetworkModel model, const LabeledSet& labeled,
                       std::mt19937_64& rng) {
  config.validate();
  model.validate();
  check_labels(labeled.labels);
  const Eigen::MatrixXd x = model.normalization.apply(labeled.features);
  const double weight = model.metadata.positive_weight;

  std::vector<Layer*> params;
  for (auto& l : model.layers) params.push_back(&l);
  auto history = run_phase(
      "finetune", params, x.rows(),
      [&](const std::vector<Eigen::Index>& rows) {
        auto c = network_cost<double>(model.layers, gather(x, rows), gather(labeled.labels, rows), weight);
        return BatchResult{c.cost, std::move(c.gradients)};
      },
      [&] { return network_cost<double>(model.layers, x, labeled.labels, weight, false).cost; },
      config.finetune_epochs, config.optimizer, rng);
  model.metadata.finetune_epochs = config.finetune_epochs;
  model.metadata.history.push_back({"finetune", std::move(history)});
  return model;
}

NetworkModel train_model(const TrainingConfig& config, const LabeledSet& labeled) {
  config.validate();
  if (labeled.features.cols() != config.dimensions[0]) {
    throw config_error("dimension-chain mismatch: configured input " + std::to_string(config.dimensions[0]) +
                       " but features have dimension " + std::to_string(labeled.features.cols()) + " (" +
                       labeled.layout.describe() + ")");
  }
  if (labeled.labels.size() != labeled.features.rows()) throw input_error("labels and features disagree in size");
  check_labels(labeled.labels);

  std::mt19937_64 rng(config.seed);
  NetworkModel model;
  model.layout = labeled.layout;
  model.normalization = Standardization::fit(labeled.features);
  const Eigen::MatrixXd x = model.normalization.apply(labeled.features);

  auto& meta = model.metadata;
  meta.seed = config.seed;
  meta.pretrain_epochs = config.pretrain_epochs;
  meta.head_epochs = config.head_epochs;
  meta.positive_weight = config.positive_weight.value_or(default_positive_weight(labeled.labels));

  std::vector<CostHistory> sae_histories;
  auto saes = pretrain_saes(config, x, rng, &sae_histories);
  for (std::size_t k = 0; k < saes.size(); ++k) {
    meta.history.push_back({"sae" + std::to_string(k + 1), std::move(sae_histories[k])});
    model.layers.push_back(std::move(saes[k].encoder));
  }

  CostHistory head_history;
  model.layers.push_back(
      train_head(config, encode(model.layers, x), labeled.labels, meta.positive_weight, rng, &head_history));
  meta.history.push_back({"head", std::move(head_history)});
  return fine_tune(config, std::move(model), labeled, rng);
}

void write_loss_history(std::ostream& out, const NetworkModel& model) {
  out << "phase,epoch,cost\n";
  out.precision(17);
  for (const auto& phase : model.metadata.history) {
    for (std::size_t e = 0; e < phase.costs.size(); ++e) out << phase.phase << ',' << e << ',' << phase.costs[e] << '\n';
  }
}

}  // namespace kpdet
