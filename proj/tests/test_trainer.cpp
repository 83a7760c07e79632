#include "kpdet/error.hpp"
#include "kpdet/evaluation.hpp"
#include "kpdet/trainer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace kpdet;
namespace t = kpdet::testing;

namespace {

FeatureLayout small_layout() {
  FeatureOptions o;
  o.omega = 0;
  o.rings = 1;
  return FeatureLayout::make(o);
}

// Rows with a planted linear rule, laid out like real 23-column features.
LabeledSet synthetic_set(std::uint64_t seed, int rows = 300) {
  std::mt19937_64 rng(seed);
  LabeledSet set;
  set.layout = small_layout();
  const auto d = set.layout.dimension();
  set.features = t::random_matrix(rng, rows, d, -2, 2);
  set.features.col(5).array() *= 40.0;
  set.features.col(7).setConstant(1.5);
  set.labels.resize(rows);
  for (int i = 0; i < rows; ++i) set.labels(i) = set.features(i, 0) + 0.5 * set.features(i, 1) > 1.0 ? 1.0 : 0.0;
  for (int i = 0; i < rows; ++i) set.provenance.push_back({"synthetic", i});
  return set;
}

TrainingConfig small_config(int epochs) {
  TrainingConfig c;
  c.dimensions = {23, 12, 8, 4, 1};
  c.pretrain_epochs = epochs;
  c.head_epochs = epochs;
  c.finetune_epochs = epochs;
  c.optimizer.batch_size = 32;
  c.seed = 5;
  return c;
}

std::string model_bytes(const NetworkModel& m) {
  std::ostringstream out;
  save_model(out, m);
  return out.str();
}

double reconstruction_mse(const SparseAutoencoder<double>& sae, const Eigen::MatrixXd& x) {
  return (sae.decoder.forward(sae.encoder.forward(x)) - x).squaredNorm() / static_cast<double>(x.size());
}

double accuracy(const DenseLayer<double>& head, const Eigen::MatrixXd& codes, const Eigen::VectorXd& labels) {
  const Eigen::VectorXd p = head.forward(codes).col(0);
  int right = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) right += (p(i) >= 0.5) == (labels(i) == 1.0);
  return static_cast<double>(right) / static_cast<double>(p.size());
}

// Probability that a random positive outscores a random negative.
double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  double wins = 0, pairs = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (labels(i) != 1.0) continue;
    for (Eigen::Index j = 0; j < scores.size(); ++j) {
      if (labels(j) != 0.0) continue;
      wins += scores(i) > scores(j) ? 1.0 : scores(i) == scores(j) ? 0.5 : 0.0;
      pairs += 1;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("default configuration") {
  const TrainingConfig c;
  CHECK(c.dimensions == std::vector<Eigen::Index>{665, 800, 200, 50, 1});
  CHECK(c.sparsity[0].rho == 0.15);
  CHECK(c.sparsity[1].rho == 0.15);
  CHECK(c.sparsity[2].rho == 0.1);
  for (const auto& s : c.sparsity) CHECK(s.beta == 4.0);
  CHECK(c.optimizer.momentum == 0.9);
  CHECK(c.optimizer.batch_size == 256);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("configuration validation") {
  auto broken = [](auto mutate) {
    TrainingConfig c = small_config(1);
    mutate(c);
    try {
      c.validate();
    } catch (const Error& e) {
      return e.kind() == ErrorKind::Config;
    }
    return false;
  };
  CHECK(broken([](TrainingConfig& c) { c.dimensions = {23, 12, 1}; }));
  CHECK(broken([](TrainingConfig& c) { c.dimensions.back() = 2; }));
  CHECK(broken([](TrainingConfig& c) { c.sparsity[1].rho = 1.0; }));
  CHECK(broken([](TrainingConfig& c) { c.sparsity[2].beta = -1.0; }));
  CHECK(broken([](TrainingConfig& c) { c.head_epochs = -1; }));
  CHECK(broken([](TrainingConfig& c) { c.optimizer.momentum = 1.0; }));
  CHECK(broken([](TrainingConfig& c) { c.optimizer.batch_size = 0; }));
  CHECK(broken([](TrainingConfig& c) { c.positive_weight = 0.0; }));
}

TEST_CASE("zero pretraining epochs returns the initial autoencoders") {
  const auto set = synthetic_set(1);
  const TrainingConfig config = small_config(0);
  const Eigen::MatrixXd x = Standardization::fit(set.features).apply(set.features);
  std::mt19937_64 rng(9), replay(9);
  std::vector<CostHistory> histories;
  const auto saes = pretrain_saes(config, x, rng, &histories);
  REQUIRE(saes.size() == 3);
  REQUIRE(histories.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto act = k == 0 ? Activation::Identity : Activation::Sigmoid;
    const auto fresh = make_sparse_autoencoder(config.dimensions[k], config.dimensions[k + 1], config.sparsity[k].rho,
                                               config.sparsity[k].beta, act, replay);
    CHECK(saes[k].encoder.weights == fresh.encoder.weights);
    CHECK(saes[k].decoder.weights == fresh.decoder.weights);
    CHECK(saes[k].decoder.activation == act);
    CHECK(histories[k].size() == 1);
  }
}

TEST_CASE("pretraining halves the reconstruction error on low-rank data") {
  std::mt19937_64 data_rng(13);
  const Eigen::MatrixXd basis = t::random_matrix(data_rng, 3, 20);
  const Eigen::MatrixXd raw =
      t::random_matrix(data_rng, 600, 3) * basis + 0.05 * t::random_matrix(data_rng, 600, 20);
  const Eigen::MatrixXd x = Standardization::fit(raw).apply(raw);
  TrainingConfig config;
  config.dimensions = {20, 10, 6, 4, 1};
  config.optimizer.batch_size = 32;
  config.pretrain_epochs = 0;
  std::mt19937_64 a(17), b(17);
  const auto initial = pretrain_saes(config, x, a);
  config.pretrain_epochs = 100;
  std::vector<CostHistory> histories;
  const auto trained = pretrain_saes(config, x, b, &histories);
  const double before = reconstruction_mse(initial[0], x);
  const double after = reconstruction_mse(trained[0], x);
  MESSAGE("reconstruction mse " << before << " -> " << after);
  CHECK(after < 0.5 * before);
  for (const auto& h : histories) {
    CHECK(h.size() == 101);
    CHECK(std::all_of(h.begin(), h.end(), [](double c) { return std::isfinite(c); }));
    CHECK(*std::min_element(h.begin(), h.end()) <= h.front());
  }
  // The returned parameters are the best snapshot.
  const double final_cost = sae_cost(trained[0], x, false).cost;
  CHECK(final_cost == *std::min_element(histories[0].begin(), histories[0].end()));
}

TEST_CASE("head learns separable codes") {
  std::mt19937_64 rng(19);
  const int n = 400;
  Eigen::MatrixXd codes = t::random_matrix(rng, n, 4, 0, 1);
  Eigen::VectorXd labels(n);
  for (int i = 0; i < n; ++i) {
    double margin = codes(i, 0) - codes(i, 2) + 0.3 * codes(i, 3) - 0.15;
    if (std::abs(margin) < 0.05) {
      codes(i, 0) += margin > 0 ? 0.1 : -0.1;
      margin = codes(i, 0) - codes(i, 2) + 0.3 * codes(i, 3) - 0.15;
    }
    labels(i) = margin > 0 ? 1.0 : 0.0;
  }
  TrainingConfig config = small_config(500);
  config.optimizer.step_size = 0.1;
  std::mt19937_64 train_rng(23);
  CostHistory history;
  const auto head = train_head(config, codes, labels, 1.0, train_rng, &history);
  MESSAGE("head accuracy " << accuracy(head, codes, labels));
  CHECK(accuracy(head, codes, labels) >= 0.99);
  CHECK(history.size() == 501);
  CHECK(*std::min_element(history.begin(), history.end()) <= history.front());
}

TEST_CASE("flipping the labels mirrors the head") {
  std::mt19937_64 rng(29);
  const int n = 300;
  const Eigen::MatrixXd codes = t::random_matrix(rng, n, 4, 0, 1);
  Eigen::VectorXd labels(n);
  for (int i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-(6 * codes(i, 0) - 4 * codes(i, 1) - 1)));
    labels(i) = t::uniform(rng, 0, 1) < p ? 1.0 : 0.0;
  }
  const Eigen::VectorXd flipped = (1.0 - labels.array()).matrix();
  TrainingConfig config = small_config(400);
  std::mt19937_64 r1(31), r2(31);
  const auto a = train_head(config, codes, labels, 1.0, r1);
  const auto b = train_head(config, codes, flipped, 1.0, r2);
  Eigen::VectorXd pa(5), pb(5);
  pa << a.weights.transpose(), a.bias;
  pb << b.weights.transpose(), b.bias;
  MESSAGE("relative asymmetry " << (pa + pb).norm() / pa.norm());
  CHECK((pa + pb).norm() < 0.05 * pa.norm());
  const double auc_a = auc(a.forward(codes).col(0), labels);
  const double auc_b = auc(b.forward(codes).col(0), flipped);
  CHECK(auc_a == doctest::Approx(auc_b).epsilon(0.01));
}

TEST_CASE("zero head epochs returns the initial head") {
  std::mt19937_64 data_rng(36), rng(37), replay(37);
  const Eigen::MatrixXd codes = t::random_matrix(data_rng, 10, 4, 0, 1);
  Eigen::VectorXd labels = Eigen::VectorXd::Zero(10);
  labels(3) = 1.0;
  const auto head = train_head(small_config(0), codes, labels, 9.0, rng);
  const auto fresh = make_layer<double>(4, 1, Activation::Sigmoid, replay);
  CHECK(head.weights == fresh.weights);
  CHECK(head.bias == fresh.bias);
}

TEST_CASE("single-class labels are rejected") {
  std::mt19937_64 rng(41);
  const Eigen::MatrixXd codes = t::random_matrix(rng, 10, 4, 0, 1);
  CHECK_THROWS_AS(train_head(small_config(1), codes, Eigen::VectorXd(Eigen::VectorXd::Ones(10)), 1.0, rng), Error);
  CHECK_THROWS_AS(default_positive_weight(Eigen::VectorXd(Eigen::VectorXd::Zero(4))), Error);
  CHECK(default_positive_weight((Eigen::VectorXd(5) << 1, 0, 0, 0, 1).finished()) == doctest::Approx(1.5));
}

TEST_CASE("fine tuning with step size zero changes nothing") {
  const auto set = synthetic_set(2);
  TrainingConfig config = small_config(3);
  const NetworkModel trained = train_model(config, set);
  config.optimizer.step_size = 0.0;
  config.finetune_epochs = 5;
  std::mt19937_64 rng(43);
  const NetworkModel tuned = fine_tune(config, trained, set, rng);
  REQUIRE(tuned.layers.size() == trained.layers.size());
  for (std::size_t l = 0; l < tuned.layers.size(); ++l) {
    CHECK(tuned.layers[l].weights == trained.layers[l].weights);
    CHECK(tuned.layers[l].bias == trained.layers[l].bias);
  }
  CHECK(tuned.normalization.mean == trained.normalization.mean);
}

TEST_CASE("training is deterministic and records every phase") {
  const auto set = synthetic_set(3);
  const TrainingConfig config = small_config(4);
  const NetworkModel a = train_model(config, set);
  const NetworkModel b = train_model(config, set);
  CHECK(model_bytes(a) == model_bytes(b));
  CHECK(a.dimensions() == config.dimensions);
  CHECK(a.metadata.seed == 5);
  CHECK(a.metadata.positive_weight == doctest::Approx(set.negatives() / static_cast<double>(set.positives())));

  std::vector<std::string> phases;
  for (const auto& h : a.metadata.history) {
    phases.push_back(h.phase);
    CHECK(h.costs.size() == 5);
    CHECK(std::all_of(h.costs.begin(), h.costs.end(), [](double c) { return std::isfinite(c); }));
    CHECK(*std::min_element(h.costs.begin(), h.costs.end()) <= h.costs.front());
  }
  CHECK(phases == std::vector<std::string>{"sae1", "sae2", "sae3", "head", "finetune"});

  TrainingConfig other = config;
  other.seed = 6;
  CHECK(model_bytes(train_model(other, set)) != model_bytes(a));
}

TEST_CASE("fine tuning does not raise the supervised loss") {
  const auto set = synthetic_set(4);
  TrainingConfig config = small_config(20);
  const NetworkModel m = train_model(config, set);
  const auto& head = m.metadata.history[3].costs;
  const auto& tune = m.metadata.history[4].costs;
  CHECK(tune.front() == doctest::Approx(*std::min_element(head.begin(), head.end())).epsilon(1e-12));
  const Eigen::MatrixXd x = m.normalization.apply(set.features);
  const double final_cost =
      network_cost<double>(m.layers, x, set.labels, m.metadata.positive_weight, false).cost;
  CHECK(final_cost == *std::min_element(tune.begin(), tune.end()));
  CHECK(final_cost <= tune.front());
}

TEST_CASE("standardisation comes from the training rows only") {
  const auto set = synthetic_set(5);
  const NetworkModel m = train_model(small_config(1), set);
  const Eigen::MatrixXd z = m.normalization.apply(set.features);
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    CHECK(std::abs(z.col(c).mean()) < 1e-9);
    if (!m.normalization.constant[static_cast<std::size_t>(c)]) {
      CHECK(std::abs(std::sqrt(z.col(c).array().square().mean()) - 1.0) < 1e-9);
    }
  }
  CHECK(m.normalization.constant[7] == 1);
}

TEST_CASE("input dimension must match the chain") {
  const auto set = synthetic_set(6);
  TrainingConfig config = small_config(1);
  config.dimensions[0] = 24;
  try {
    train_model(config, set);
    FAIL("mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("24") != std::string::npos);
    CHECK(std::string(e.what()).find("23") != std::string::npos);
  }
}

TEST_CASE("divergence names the phase") {
  const auto set = synthetic_set(7);
  TrainingConfig config = small_config(50);
  config.optimizer.step_size = 1e300;
  config.optimizer.decay = 1.0;
  try {
    train_model(config, set);
    FAIL("diverging run finished");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("phase sae1") != std::string::npos);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("loss history csv") {
  NetworkModel m;
  m.metadata.history = {{"sae1", {2.0, 1.5}}, {"head", {0.25}}};
  std::ostringstream out;
  write_loss_history(out, m);
  CHECK(out.str() == "phase,epoch,cost\nsae1,0,2\nsae1,1,1.5\nhead,0,0.25\n");
}

TEST_CASE("labelled set from precomputed clusters") {
  FeatureMatrix f;
  f.layout = small_layout();
  f.values = Eigen::MatrixXd::Random(6, f.layout.dimension());
  f.flags.assign(6, kVertexOk);
  GroundTruth truth;
  MeshGroundTruth gt;
  gt.mesh_id = "cube";
  gt.clusters[setting_key(2, 0.05)] = {{4, 3}};
  truth.meshes.push_back(gt);
  const std::vector<TrainingMesh> meshes{{"cube", &f, nullptr}};
  const std::vector<int> n{2};
  const std::vector<double> sigma{0.05};
  const auto set = build_labeled_set(truth, meshes, n, sigma);
  CHECK(set.labels == (Eigen::VectorXd(6) << 0, 0, 0, 0, 1, 0).finished());
  CHECK(set.features == f.values);
  CHECK(set.positives() == 1);
  CHECK(set.negatives() == 5);
  CHECK(set.provenance[4].mesh_id == "cube");
  CHECK(set.provenance[4].vertex == 4);

  f.flags[1] = kInvalidNormal;
  const auto masked = build_labeled_set(truth, meshes, n, sigma);
  CHECK(masked.labels.size() == 5);
  CHECK(masked.provenance[1].vertex == 2);
}

TEST_CASE("labelled set unions clusters over settings") {
  // Four collinear vertices; two annotators agree on vertex 0, one marks vertex 3.
  Positions p(4, 3);
  p << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
  FeatureMatrix f;
  f.layout = small_layout();
  f.values = Eigen::MatrixXd::Zero(4, f.layout.dimension());
  GroundTruth truth;
  MeshGroundTruth gt;
  gt.mesh_id = "line";
  gt.annotations = {{"a", {0, 3}}, {"b", {0}}};
  truth.meshes.push_back(gt);
  const std::vector<TrainingMesh> meshes{{"line", &f, &p}};
  const std::vector<double> sigma{0.01};
  const std::vector<int> two{2};
  CHECK(build_labeled_set(truth, meshes, two, sigma).labels == Eigen::Vector4d(1, 0, 0, 0));
  const std::vector<int> both{1, 2};
  CHECK(build_labeled_set(truth, meshes, both, sigma).labels == Eigen::Vector4d(1, 0, 0, 1));
}

TEST_CASE("labelled set errors") {
  FeatureMatrix f;
  f.layout = small_layout();
  f.values = Eigen::MatrixXd::Zero(3, f.layout.dimension());
  GroundTruth truth;
  MeshGroundTruth gt;
  gt.mesh_id = "m";
  gt.clusters[setting_key(1, 0.1)] = {};
  truth.meshes.push_back(gt);
  const std::vector<int> n{1};
  const std::vector<double> sigma{0.1};
  const std::vector<TrainingMesh> unknown{{"other", &f, nullptr}};
  CHECK_THROWS_AS(build_labeled_set(truth, unknown, n, sigma), Error);
  const std::vector<TrainingMesh> known{{"m", &f, nullptr}};
  try {
    build_labeled_set(truth, known, n, sigma);
    FAIL("empty positives accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("no positive") != std::string::npos);
  }
  truth.meshes[0].clusters[setting_key(1, 0.1)] = {{7, 1}};
  CHECK_THROWS_AS(build_labeled_set(truth, known, n, sigma), Error);
}
