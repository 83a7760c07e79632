#include "kpdet/error.hpp"
#include "kpdet/model.hpp"
#include "kpdet/neuralnet.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

using namespace kpdet;
namespace t = kpdet::testing;

namespace {

using Layer = DenseLayer<double>;

Layer random_layer(std::mt19937_64& rng, Eigen::Index in, Eigen::Index out, Activation act = Activation::Sigmoid,
                   double scale = 1.0) {
  Layer l;
  l.weights = t::random_matrix(rng, out, in, -scale, scale);
  l.bias = t::random_matrix(rng, out, 1, -scale, scale);
  l.activation = act;
  return l;
}

// Small model over the Omega = 0, one-ring layout (23 columns).
NetworkModel tiny_model(std::mt19937_64& rng, int omega = 0) {
  FeatureOptions o;
  o.omega = omega;
  o.rings = 1;
  NetworkModel m;
  m.layout = FeatureLayout::make(o);
  const Eigen::Index d = m.layout.dimension();
  m.layers = {random_layer(rng, d, 6), random_layer(rng, 6, 4), random_layer(rng, 4, 3), random_layer(rng, 3, 1)};
  m.normalization = Standardization::fit(t::random_matrix(rng, 40, d, -5, 5));
  m.metadata.seed = 99;
  m.metadata.head_epochs = 3;
  m.metadata.history = {{"sae1", {3.0, 2.5, 2.0}}, {"head", {0.7, 0.6}}};
  return m;
}

std::string bytes_of(const NetworkModel& m) {
  std::ostringstream out;
  save_model(out, m);
  return out.str();
}

NetworkModel from_bytes(const std::string& s) {
  std::istringstream in(s);
  return load_model(in);
}

// Central difference of f around x(i).
double central_difference(const std::function<double()>& f, double& x, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2 * h);
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST_CASE("kl divergence examples") {
  CHECK(kl_divergence(0.1, 0.1) == 0.0);
  CHECK(std::abs(kl_divergence(0.15, 0.15)) <= 1e-12);
  CHECK(kl_divergence(0.5, 0.25) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-12));
  CHECK(std::abs(kl_divergence(0.5, 0.25) - 0.143841) < 1e-6);
  CHECK(std::isfinite(kl_divergence(0.1, 0.0)));
  CHECK(std::isfinite(kl_divergence(0.1, 1.0)));
}

TEST_CASE("kl divergence is monotone on both sides of rho") {
  for (double rho : {0.05, 0.1, 0.15, 0.5, 0.8}) {
    double previous = kl_divergence(rho, 1e-6);
    for (double x = 2e-6; x < rho; x += (rho - 2e-6) / 200) {
      const double current = kl_divergence(rho, x);
      CHECK(current < previous);
      previous = current;
    }
    previous = kl_divergence(rho, rho);
    for (double x = rho + (1 - rho) / 200; x < 1 - 1e-6; x += (1 - rho) / 200) {
      const double current = kl_divergence(rho, x);
      CHECK(current > previous);
      previous = current;
    }
  }
}

TEST_CASE("sae cost vanishes for an exact reconstruction") {
  SparseAutoencoder<double> sae;
  sae.encoder.weights = Eigen::MatrixXd::Zero(2, 3);
  sae.encoder.bias = Eigen::VectorXd::Zero(2);
  sae.decoder.weights = Eigen::MatrixXd::Zero(3, 2);
  sae.decoder.bias = Eigen::Vector3d(0.3, -1.0, 2.0);
  sae.decoder.activation = Activation::Identity;
  sae.penalty = 0.0;
  const Eigen::MatrixXd batch = Eigen::Vector3d(0.3, -1.0, 2.0).transpose().replicate(5, 1);
  const auto c = sae_cost(sae, batch);
  CHECK(c.cost == 0.0);
  CHECK(c.decoder.weights.isZero(0.0));
}

TEST_CASE("sparsity penalty vanishes at the target") {
  std::mt19937_64 rng(101);
  SparseAutoencoder<double> sae;
  sae.sparsity = 0.15;
  sae.penalty = 4.0;
  sae.encoder.weights = Eigen::MatrixXd::Zero(3, 4);
  sae.encoder.bias = Eigen::VectorXd::Constant(3, std::log(0.15 / 0.85));
  sae.decoder = random_layer(rng, 3, 4);
  const auto c = sae_cost(sae, t::random_matrix(rng, 7, 4));
  CHECK(std::abs(c.penalty) < 1e-12);
  CHECK(c.cost == doctest::Approx(c.reconstruction));
}

TEST_CASE("sae gradient matches finite differences") {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 8; ++trial) {
    const auto in = t::uniform_int(rng, 2, 12);
    const auto hidden = t::uniform_int(rng, 1, 7);
    const auto act = trial % 2 ? Activation::Sigmoid : Activation::Identity;
    auto sae = make_sparse_autoencoder<double>(in, hidden, trial % 3 ? 0.1 : 0.15, trial % 4 ? 4.0 : 0.0, act, rng);
    const Eigen::MatrixXd batch = t::random_matrix(rng, t::uniform_int(rng, 1, 16), in, 0, 1);
    const auto analytic = sae_cost(sae, batch);
    auto cost = [&] { return sae_cost(sae, batch, false).cost; };
    double worst = 0.0;
    for (Eigen::Index i = 0; i < sae.encoder.weights.size(); ++i) {
      worst = std::max(worst, relative_error(analytic.encoder.weights(i), central_difference(cost, sae.encoder.weights(i))));
    }
    for (Eigen::Index i = 0; i < sae.encoder.bias.size(); ++i) {
      worst = std::max(worst, relative_error(analytic.encoder.bias(i), central_difference(cost, sae.encoder.bias(i))));
    }
    for (Eigen::Index i = 0; i < sae.decoder.weights.size(); ++i) {
      worst = std::max(worst, relative_error(analytic.decoder.weights(i), central_difference(cost, sae.decoder.weights(i))));
    }
    for (Eigen::Index i = 0; i < sae.decoder.bias.size(); ++i) {
      worst = std::max(worst, relative_error(analytic.decoder.bias(i), central_difference(cost, sae.decoder.bias(i))));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("sae validation") {
  std::mt19937_64 rng(107);
  CHECK_THROWS_AS(make_sparse_autoencoder<double>(4, 2, 0.0, 1.0, Activation::Sigmoid, rng), Error);
  CHECK_THROWS_AS(make_sparse_autoencoder<double>(4, 2, 0.1, -1.0, Activation::Sigmoid, rng), Error);
  CHECK_THROWS_AS(make_layer<double>(0, 2, Activation::Sigmoid, rng), Error);
  auto sae = make_sparse_autoencoder<double>(4, 2, 0.1, 1.0, Activation::Sigmoid, rng);
  CHECK_THROWS_AS(sae_cost(sae, Eigen::MatrixXd(0, 4)), Error);
  CHECK_THROWS_AS(sae_cost(sae, Eigen::MatrixXd(Eigen::MatrixXd::Zero(3, 5))), Error);
}

TEST_CASE("initialisation range") {
  std::mt19937_64 rng(109);
  const auto l = make_layer<double>(30, 20, Activation::Sigmoid, rng);
  const double limit = std::sqrt(6.0 / 50.0);
  CHECK(l.weights.cwiseAbs().maxCoeff() <= limit);
  CHECK(l.weights.cwiseAbs().maxCoeff() > 0.8 * limit);
  CHECK(l.bias.isZero(0.0));
}

TEST_CASE("logistic cost examples") {
  Layer head;
  head.weights = Eigen::MatrixXd::Zero(1, 3);
  head.bias = Eigen::VectorXd::Zero(1);
  std::mt19937_64 rng(113);
  const Eigen::MatrixXd x = t::random_matrix(rng, 6, 3);
  const Eigen::VectorXd y = (Eigen::VectorXd(6) << 1, 0, 0, 1, 0, 1).finished();
  CHECK(logistic_cost(head, x, y, 1.0).cost == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // Labels given by the sign of the first feature; a steep head predicts them.
  Eigen::MatrixXd sep = t::random_matrix(rng, 20, 3);
  Eigen::VectorXd labels(20);
  for (int i = 0; i < 20; ++i) {
    if (std::abs(sep(i, 0)) < 0.1) sep(i, 0) = 0.1 * (i % 2 ? 1 : -1);
    labels(i) = sep(i, 0) > 0 ? 1.0 : 0.0;
  }
  head.weights(0, 0) = 500.0;
  CHECK(logistic_cost(head, sep, labels, 1.0).cost < 1e-6);
  CHECK(logistic_cost(head, sep, labels, 3.0).cost < 1e-6);
}

TEST_CASE("positive weight scales only positive terms") {
  std::mt19937_64 rng(127);
  const Layer head = random_layer(rng, 4, 1);
  const Eigen::MatrixXd x = t::random_matrix(rng, 10, 4);
  const Eigen::VectorXd pos = Eigen::VectorXd::Ones(10);
  const Eigen::VectorXd neg = Eigen::VectorXd::Zero(10);
  CHECK(logistic_cost(head, x, pos, 2.5).cost == doctest::Approx(2.5 * logistic_cost(head, x, pos, 1.0).cost));
  CHECK(logistic_cost(head, x, neg, 2.5).cost == doctest::Approx(logistic_cost(head, x, neg, 1.0).cost));
}

TEST_CASE("logistic and network gradients match finite differences") {
  std::mt19937_64 rng(131);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Layer> layers{random_layer(rng, 5, 4), random_layer(rng, 4, 3), random_layer(rng, 3, 1)};
    const Eigen::MatrixXd x = t::random_matrix(rng, 9, 5);
    Eigen::VectorXd y(9);
    for (int i = 0; i < 9; ++i) y(i) = i % 3 == 0;
    const double w = 1.0 + trial;
    const auto net = network_cost<double>(layers, x, y, w);
    auto cost = [&] { return network_cost<double>(layers, x, y, w, false).cost; };
    double worst = 0.0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (Eigen::Index i = 0; i < layers[l].weights.size(); ++i) {
        worst = std::max(worst, relative_error(net.gradients[l].weights(i), central_difference(cost, layers[l].weights(i))));
      }
      for (Eigen::Index i = 0; i < layers[l].bias.size(); ++i) {
        worst = std::max(worst, relative_error(net.gradients[l].bias(i), central_difference(cost, layers[l].bias(i))));
      }
    }
    CHECK(worst < 1e-5);

    const Eigen::MatrixXd codes = layers[1].forward(layers[0].forward(x));
    const auto head = logistic_cost(layers[2], codes, y, w);
    CHECK(head.cost == doctest::Approx(net.cost).epsilon(1e-14));
    CHECK((head.gradient.weights - net.gradients[2].weights).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("head shape is enforced") {
  std::mt19937_64 rng(137);
  const Layer two = random_layer(rng, 3, 2);
  const Eigen::MatrixXd x = t::random_matrix(rng, 4, 3);
  CHECK_THROWS_AS(logistic_cost(two, x, Eigen::VectorXd(Eigen::VectorXd::Zero(4)), 1.0), Error);
  const Layer one = random_layer(rng, 3, 1);
  CHECK_THROWS_AS(logistic_cost(one, x, Eigen::VectorXd(Eigen::VectorXd::Zero(5)), 1.0), Error);
}

TEST_CASE("zero and constant-head models") {
  std::mt19937_64 rng(139);
  NetworkModel m = tiny_model(rng);
  const Eigen::MatrixXd x = t::random_matrix(rng, 12, m.input_dimension(), -50, 50);
  for (auto& l : m.layers) {
    l.weights.setZero();
    l.bias.setZero();
  }
  CHECK((forward(m, x).array() == 0.5).all());
  m = tiny_model(rng);
  m.layers.back().weights.setZero();
  m.layers.back().bias(0) = -1.3;
  const double expected = 1.0 / (1.0 + std::exp(1.3));
  for (Eigen::Index i = 0; i < x.rows(); ++i) CHECK(forward(m, Eigen::RowVectorXd(x.row(i))) == doctest::Approx(expected));
}

TEST_CASE("forward stays inside the unit interval and is stable") {
  std::mt19937_64 rng(149);
  for (int trial = 0; trial < 10; ++trial) {
    const NetworkModel m = tiny_model(rng);
    const Eigen::MatrixXd x = t::random_matrix(rng, 30, m.input_dimension(), -10, 10);
    const Eigen::VectorXd a = forward(m, x);
    CHECK(a.minCoeff() > 0.0);
    CHECK(a.maxCoeff() < 1.0);
    CHECK(forward(m, x) == a);
  }
}

TEST_CASE("model save load save is byte identical") {
  std::mt19937_64 rng(151);
  const NetworkModel m = tiny_model(rng, 1);
  const std::string first = bytes_of(m);
  const NetworkModel back = from_bytes(first);
  CHECK(bytes_of(back) == first);
  const Eigen::MatrixXd x = t::random_matrix(rng, 8, m.input_dimension());
  CHECK(forward(back, x) == forward(m, x));
  CHECK(back.layout == m.layout);
  CHECK(back.metadata.seed == 99);
  REQUIRE(back.metadata.history.size() == 2);
  CHECK(back.metadata.history[0].phase == "sae1");
  CHECK(back.metadata.history[1].costs == std::vector<double>{0.7, 0.6});
  CHECK(model_id(back) == model_id(m));
  CHECK(model_id(m).size() == 16);
}

TEST_CASE("truncated or corrupt model files are rejected") {
  std::mt19937_64 rng(157);
  const std::string bytes = bytes_of(tiny_model(rng));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      from_bytes(bytes.substr(0, cut));
      FAIL("accepted a model cut at " << cut);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidInput);
    }
  }
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK_THROWS_AS(from_bytes(wrong_magic), Error);
}

TEST_CASE("model validation catches broken chains") {
  std::mt19937_64 rng(163);
  NetworkModel m = tiny_model(rng);
  m.layers[1] = random_layer(rng, 5, 4);
  CHECK_THROWS_AS(m.validate(), Error);
  m = tiny_model(rng);
  m.layers[0].weights(0, 0) = std::nan("");
  CHECK_THROWS_AS(m.validate(), Error);
  m = tiny_model(rng);
  m.normalization.stddev(2) = 0.0;
  CHECK_THROWS_AS(m.validate(), Error);
  std::ostringstream sink;
  CHECK_THROWS_AS(save_model(sink, m), Error);
}

TEST_CASE("feature layout mismatch names both configurations") {
  NetworkModel m;
  m.layout = FeatureLayout::make(FeatureOptions{});
  std::mt19937_64 rng(167);
  m.layers = {random_layer(rng, 665, 2), random_layer(rng, 2, 1)};
  FeatureOptions five;
  five.omega = 5;
  try {
    check_compatible(m, FeatureLayout::make(five));
    FAIL("mismatch accepted");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("665") != std::string::npos);
    CHECK(msg.find("570") != std::string::npos);
    CHECK(msg.find("omega=6") != std::string::npos);
    CHECK(msg.find("omega=5") != std::string::npos);
  }
  CHECK_NOTHROW(check_compatible(m, FeatureLayout::make(FeatureOptions{})));
  CHECK_THROWS_AS(forward(m, Eigen::MatrixXd(Eigen::MatrixXd::Zero(2, 570))), Error);
}

TEST_CASE("standardization") {
  std::mt19937_64 rng(173);
  Eigen::MatrixXd x = t::random_matrix(rng, 50, 4, -3, 8);
  x.col(2).setConstant(4.0);
  const auto s = Standardization::fit(x);
  CHECK(s.constant == std::vector<std::uint8_t>{0, 0, 1, 0});
  const Eigen::MatrixXd z = s.apply(x);
  for (Eigen::Index c : {0, 1, 3}) {
    CHECK(std::abs(z.col(c).mean()) < 1e-9);
    CHECK(std::abs(std::sqrt(z.col(c).array().square().mean()) - 1.0) < 1e-9);
  }
  CHECK(z.col(2).isZero(0.0));
  CHECK_THROWS_AS(s.apply(Eigen::MatrixXd::Zero(2, 3)), Error);
}
