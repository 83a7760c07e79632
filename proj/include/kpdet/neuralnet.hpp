#ifndef KPDET_NEURALNET_HPP
#define KPDET_NEURALNET_HPP

#include "kpdet/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace kpdet {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kRhoHatClamp = 1e-9;

enum class Activation : std::uint8_t { Sigmoid = 0, Identity = 1 };

template <typename Derived>
typename Derived::PlainObject sigmoid(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-z.array()).exp()).inverse().matrix();
}

/// log(1 + e^z) without overflow.
template <typename Scalar>
Scalar softplus(Scalar z) {
  return std::max(z, Scalar(0)) + std::log1p(std::exp(-std::abs(z)));
}

/// Fully connected layer; batches are row-major in the sense that each row
/// is one sample, so the forward map is Y = act(X W^T + 1 b^T).
template <typename Scalar>
struct DenseLayer {
  MatrixT<Scalar> weights;  // outputs x inputs
  VectorT<Scalar> bias;     // outputs
  Activation activation = Activation::Sigmoid;

  Eigen::Index inputs() const noexcept { return weights.cols(); }
  Eigen::Index outputs() const noexcept { return weights.rows(); }

  MatrixT<Scalar> pre_activation(const MatrixT<Scalar>& batch) const {
    if (batch.cols() != inputs()) {
      throw input_error("layer expects " + std::to_string(inputs()) + " inputs, got " + std::to_string(batch.cols()));
    }
    return (batch * weights.transpose()).rowwise() + bias.transpose();
  }

  MatrixT<Scalar> forward(const MatrixT<Scalar>& batch) const {
    MatrixT<Scalar> z = pre_activation(batch);
    return activation == Activation::Sigmoid ? sigmoid(z) : z;
  }
};

template <typename Scalar>
struct LayerGradient {
  MatrixT<Scalar> weights;
  VectorT<Scalar> bias;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias.
template <typename Scalar, typename Rng>
DenseLayer<Scalar> make_layer(Eigen::Index inputs, Eigen::Index outputs, Activation activation, Rng& rng) {
  if (inputs < 1 || outputs < 1) throw config_error("layer dimensions must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(inputs + outputs));
  std::uniform_real_distribution<double> dist(-limit, limit);
  DenseLayer<Scalar> layer;
  layer.weights.resize(outputs, inputs);
  for (Eigen::Index c = 0; c < inputs; ++c) {
    for (Eigen::Index r = 0; r < outputs; ++r) layer.weights(r, c) = static_cast<Scalar>(dist(rng));
  }
  layer.bias = VectorT<Scalar>::Zero(outputs);
  layer.activation = activation;
  return layer;
}

/// KL divergence between Bernoulli(rho) and Bernoulli(rho_hat); rho_hat is
/// clamped to [1e-9, 1 - 1e-9].
template <typename Scalar>
Scalar kl_divergence(Scalar rho, Scalar rho_hat) {
  rho_hat = std::clamp(rho_hat, Scalar(kRhoHatClamp), Scalar(1 - kRhoHatClamp));
  return rho * std::log(rho / rho_hat) + (1 - rho) * std::log((1 - rho) / (1 - rho_hat));
}

template <typename Scalar>
struct SparseAutoencoder {
  DenseLayer<Scalar> encoder;
  DenseLayer<Scalar> decoder;
  Scalar sparsity{0.1};  // target mean activation rho
  Scalar penalty{0};     // beta

  Eigen::Index hidden_size() const noexcept { return encoder.outputs(); }

  void validate() const {
    if (encoder.outputs() != decoder.inputs() || encoder.inputs() != decoder.outputs()) {
      throw config_error("autoencoder encoder/decoder dimensions do not chain");
    }
    if (encoder.activation != Activation::Sigmoid) throw config_error("autoencoder hidden layer must be sigmoid");
    if (!(sparsity > 0 && sparsity < 1)) throw config_error("sparsity target must lie in (0, 1)");
    if (!(penalty >= 0)) throw config_error("sparsity penalty weight must be >= 0");
  }
};

template <typename Scalar, typename Rng>
SparseAutoencoder<Scalar> make_sparse_autoencoder(Eigen::Index inputs, Eigen::Index hidden, Scalar sparsity,
                                                  Scalar penalty, Activation decoder_activation, Rng& rng) {
  SparseAutoencoder<Scalar> sae;
  sae.encoder = make_layer<Scalar>(inputs, hidden, Activation::Sigmoid, rng);
  sae.decoder = make_layer<Scalar>(hidden, inputs, decoder_activation, rng);
  sae.sparsity = sparsity;
  sae.penalty = penalty;
  sae.validate();
  return sae;
}

template <typename Scalar>
struct SaeCost {
  Scalar cost{0};
  Scalar reconstruction{0};
  Scalar penalty{0};
  LayerGradient<Scalar> encoder;
  LayerGradient<Scalar> decoder;
};

/// Batch sparse-autoencoder objective
///   (1/m) sum_i 1/2 |x_hat_i - x_i|^2 + beta sum_j KL(rho || rho_hat_j)
/// with rho_hat_j the batch mean of hidden unit j, plus its gradient.
template <typename Scalar>
SaeCost<Scalar> sae_cost(const SparseAutoencoder<Scalar>& sae, const MatrixT<Scalar>& batch,
                         bool with_gradient = true) {
  const Eigen::Index m = batch.rows();
  if (m < 1) throw input_error("autoencoder batch is empty");
  const Scalar inv_m = Scalar(1) / static_cast<Scalar>(m);

  const MatrixT<Scalar> hidden = sae.encoder.forward(batch);
  const MatrixT<Scalar> output = sae.decoder.forward(hidden);
  const MatrixT<Scalar> diff = output - batch;

  VectorT<Scalar> rho_hat = hidden.colwise().mean().transpose();
  rho_hat = rho_hat.cwiseMax(Scalar(kRhoHatClamp)).cwiseMin(Scalar(1 - kRhoHatClamp));

  SaeCost<Scalar> out;
  out.reconstruction = Scalar(0.5) * diff.squaredNorm() * inv_m;
  for (Eigen::Index j = 0; j < rho_hat.size(); ++j) out.penalty += kl_divergence(sae.sparsity, rho_hat(j));
  out.penalty *= sae.penalty;
  out.cost = out.reconstruction + out.penalty;
  if (!with_gradient) return out;

  MatrixT<Scalar> delta_out = diff * inv_m;
  if (sae.decoder.activation == Activation::Sigmoid) {
    delta_out.array() *= output.array() * (Scalar(1) - output.array());
  }
  out.decoder.weights = delta_out.transpose() * hidden;
  out.decoder.bias = delta_out.colwise().sum().transpose();

  const VectorT<Scalar> sparse_term =
      (sae.penalty * inv_m) *
      ((-sae.sparsity) * rho_hat.array().inverse() + (Scalar(1) - sae.sparsity) * (Scalar(1) - rho_hat.array()).inverse())
          .matrix();
  MatrixT<Scalar> delta_hidden = (delta_out * sae.decoder.weights).rowwise() + sparse_term.transpose();
  delta_hidden.array() *= hidden.array() * (Scalar(1) - hidden.array());
  out.encoder.weights = delta_hidden.transpose() * batch;
  out.encoder.bias = delta_hidden.colwise().sum().transpose();
  return out;
}

template <typename Scalar>
struct LogisticCost {
  Scalar cost{0};
  LayerGradient<Scalar> gradient;
};

namespace detail {

// Weighted cross-entropy over logits z; fills dJ/dz.
template <typename Scalar>
Scalar weighted_cross_entropy(const VectorT<Scalar>& z, const VectorT<Scalar>& labels, Scalar positive_weight,
                              VectorT<Scalar>& dz) {
  const Eigen::Index m = z.size();
  const Scalar inv_m = Scalar(1) / static_cast<Scalar>(m);
  Scalar cost{0};
  dz.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Scalar y = labels(i);
    const Scalar p = Scalar(1) / (Scalar(1) + std::exp(-z(i)));
    cost += positive_weight * y * softplus(-z(i)) + (Scalar(1) - y) * softplus(z(i));
    dz(i) = (positive_weight * y * (p - Scalar(1)) + (Scalar(1) - y) * p) * inv_m;
  }
  return cost * inv_m;
}

template <typename Scalar>
void check_head(const DenseLayer<Scalar>& layer, Eigen::Index rows, Eigen::Index labels) {
  if (layer.outputs() != 1 || layer.activation != Activation::Sigmoid) {
    throw config_error("logistic layer must have one sigmoid output");
  }
  if (rows < 1 || labels != rows) throw input_error("logistic batch and labels disagree in size");
}

}  // namespace detail

/// Mean class-weighted cross-entropy of a single-output sigmoid layer.
/// Positive samples are scaled by `positive_weight`.
template <typename Scalar>
LogisticCost<Scalar> logistic_cost(const DenseLayer<Scalar>& layer, const MatrixT<Scalar>& batch,
                                   const VectorT<Scalar>& labels, Scalar positive_weight, bool with_gradient = true) {
  detail::check_head(layer, batch.rows(), labels.size());
  const VectorT<Scalar> z = layer.pre_activation(batch).col(0);
  VectorT<Scalar> dz;
  LogisticCost<Scalar> out;
  out.cost = detail::weighted_cross_entropy(z, labels, positive_weight, dz);
  if (with_gradient) {
    out.gradient.weights = dz.transpose() * batch;
    out.gradient.bias = VectorT<Scalar>::Constant(1, dz.sum());
  }
  return out;
}

template <typename Scalar>
struct NetworkCost {
  Scalar cost{0};
  std::vector<LayerGradient<Scalar>> gradients;
};

/// Weighted cross-entropy of a sigmoid stack whose last layer is the
/// single-output logistic head, with gradients for every layer.
template <typename Scalar>
NetworkCost<Scalar> network_cost(std::span<const DenseLayer<Scalar>> layers, const MatrixT<Scalar>& batch,
                                 const VectorT<Scalar>& labels, Scalar positive_weight, bool with_gradient = true) {
  if (layers.empty()) throw config_error("network has no layers");
  detail::check_head(layers.back(), batch.rows(), labels.size());
  std::vector<MatrixT<Scalar>> activations;
  activations.reserve(layers.size());
  activations.push_back(batch);
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    if (layers[l].activation != Activation::Sigmoid) throw config_error("hidden layers must be sigmoid");
    activations.push_back(layers[l].forward(activations.back()));
  }

  const VectorT<Scalar> z = layers.back().pre_activation(activations.back()).col(0);
  VectorT<Scalar> dz;
  NetworkCost<Scalar> out;
  out.cost = detail::weighted_cross_entropy(z, labels, positive_weight, dz);
  if (!with_gradient) return out;

  out.gradients.resize(layers.size());
  MatrixT<Scalar> delta = dz;
  for (std::size_t l = layers.size(); l-- > 0;) {
    out.gradients[l].weights = delta.transpose() * activations[l];
    out.gradients[l].bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    const auto& a = activations[l];
    MatrixT<Scalar> below = delta * layers[l].weights;
    below.array() *= a.array() * (Scalar(1) - a.array());
    delta = std::move(below);
  }
  return out;
}

}  // namespace kpdet

#endif  // KPDET_NEURALNET_HPP
