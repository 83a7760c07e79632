#include "kpdet/model.hpp"

#include "kpdet/binary_io.hpp"
#include "kpdet/error.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace kpdet {

namespace {

constexpr char kModelMagic[9] = "KPDMODEL";
constexpr std::uint32_t kModelVersion = 1;

std::string chain_string(const std::vector<Eigen::Index>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "->" : "") + std::to_string(dims[i]);
  return s;
}

}  // namespace

Standardization Standardization::fit(const Eigen::MatrixXd& features) {
  if (features.rows() == 0) throw input_error("cannot standardise an empty feature matrix");
  Standardization s;
  s.mean = features.colwise().mean().transpose();
  s.stddev.resize(features.cols());
  s.constant.assign(features.cols(), 0);
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const double sd = std::sqrt((features.col(c).array() - s.mean(c)).square().mean());
    if (sd > 1e-12 * std::max(1.0, std::abs(s.mean(c)))) {
      s.stddev(c) = sd;
    } else {
      s.stddev(c) = 1.0;
      s.constant[c] = 1;
    }
  }
  return s;
}

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd& features) const {
  if (features.cols() != size()) {
    throw input_error("standardisation expects " + std::to_string(size()) + " columns, got " +
                      std::to_string(features.cols()));
  }
  return (features.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array();
}

std::vector<Eigen::Index> NetworkModel::dimensions() const {
  std::vector<Eigen::Index> dims;
  if (layers.empty()) return dims;
  dims.push_back(layers.front().inputs());
  for (const auto& l : layers) dims.push_back(l.outputs());
  return dims;
}

void NetworkModel::validate() const {
  if (layers.empty()) throw input_error("model has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.outputs()) throw input_error("model layer " + std::to_string(l) + " bias size mismatch");
    if (l > 0 && layer.inputs() != layers[l - 1].outputs()) {
      throw input_error("model dimension chain broken at layer " + std::to_string(l) + ": " + chain_string(dimensions()));
    }
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      throw input_error("model layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
  if (layers.back().outputs() != 1) throw input_error("model head must have a single output");
  if (input_dimension() != layout.dimension()) {
    throw input_error("model dimension chain " + chain_string(dimensions()) + " does not match its feature layout (" +
                      layout.describe() + ")");
  }
  if (normalization.size() != input_dimension() || normalization.stddev.size() != input_dimension() ||
      normalization.constant.size() != static_cast<std::size_t>(input_dimension())) {
    throw input_error("model normalisation statistics do not match the input dimension");
  }
  if ((normalization.stddev.array() <= 0.0).any()) throw input_error("model normalisation has non-positive stddev");
}

Eigen::VectorXd forward(const NetworkModel& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.input_dimension()) {
    throw input_error("feature dimension " + std::to_string(features.cols()) + " does not match model input " +
                      std::to_string(model.input_dimension()));
  }
  Eigen::MatrixXd activation = model.normalization.apply(features);
  for (const auto& layer : model.layers) activation = layer.forward(activation);
  return activation.col(0);
}

double forward(const NetworkModel& model, const Eigen::RowVectorXd& features) {
  return forward(model, Eigen::MatrixXd(features))(0);
}

void check_compatible(const NetworkModel& model, const FeatureLayout& layout) {
  if (model.layout == layout) return;
  const auto& m = model.layout.options;
  const auto& f = layout.options;
  std::ostringstream msg;
  msg << "dimension-chain mismatch: model expects input " << model.input_dimension() << " (omega=" << m.omega
      << ", gamma=" << m.gamma << ", rings=" << m.rings << ") but features have dimension " << layout.dimension()
      << " (omega=" << f.omega << ", gamma=" << f.gamma << ", rings=" << f.rings << ")";
  throw input_error(msg.str());
}

void save_model(std::ostream& out, const NetworkModel& model) {
  model.validate();
  out.write(kModelMagic, 8);
  binary::write(out, kModelVersion);
  write_layout(out, model.layout);

  const auto dims = model.dimensions();
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  for (const auto& layer : model.layers) {
    binary::write<std::uint8_t>(out, static_cast<std::uint8_t>(layer.activation));
    binary::write_matrix(out, layer.weights);
    binary::write_matrix(out, layer.bias);
  }

  binary::write_matrix(out, model.normalization.mean);
  binary::write_matrix(out, model.normalization.stddev);
  out.write(reinterpret_cast<const char*>(model.normalization.constant.data()),
            static_cast<std::streamsize>(model.normalization.constant.size()));

  const auto& meta = model.metadata;
  binary::write(out, meta.seed);
  binary::write(out, meta.pretrain_epochs);
  binary::write(out, meta.head_epochs);
  binary::write(out, meta.finetune_epochs);
  binary::write(out, meta.positive_weight);
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(meta.history.size()));
  for (const auto& phase : meta.history) {
    binary::write_string(out, phase.phase);
    binary::write_matrix(out, Eigen::Map<const Eigen::VectorXd>(phase.costs.data(),
                                                                 static_cast<Eigen::Index>(phase.costs.size())));
  }
}

NetworkModel load_model(std::istream& in) {
  binary::expect_magic(in, kModelMagic, "model");
  const auto version = binary::read<std::uint32_t>(in, "model version");
  if (version != kModelVersion) {
    throw input_error("model format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kModelVersion) + ")");
  }
  NetworkModel model;
  model.layout = read_layout(in);

  const auto chain_length = binary::read<std::uint32_t>(in, "model chain length");
  if (chain_length < 2 || chain_length > 64) throw input_error("corrupt model dimension chain");
  std::vector<Eigen::Index> declared(chain_length);
  for (auto& d : declared) d = static_cast<Eigen::Index>(binary::read<std::uint64_t>(in, "model chain"));
  for (std::uint32_t l = 0; l + 1 < chain_length; ++l) {
    DenseLayer<double> layer;
    const auto activation = binary::read<std::uint8_t>(in, "layer activation");
    if (activation > 1) throw input_error("unknown layer activation in model file");
    layer.activation = static_cast<Activation>(activation);
    layer.weights = binary::read_matrix<Eigen::MatrixXd>(in, "layer weights");
    layer.bias = binary::read_matrix<Eigen::VectorXd>(in, "layer bias");
    model.layers.push_back(std::move(layer));
  }
  if (model.dimensions() != declared) {
    throw input_error("model layers " + chain_string(model.dimensions()) + " disagree with declared chain " +
                      chain_string(declared));
  }

  model.normalization.mean = binary::read_matrix<Eigen::VectorXd>(in, "normalisation mean");
  model.normalization.stddev = binary::read_matrix<Eigen::VectorXd>(in, "normalisation stddev");
  model.normalization.constant.resize(model.normalization.mean.size());
  if (!model.normalization.constant.empty() &&
      !in.read(reinterpret_cast<char*>(model.normalization.constant.data()),
               static_cast<std::streamsize>(model.normalization.constant.size()))) {
    throw input_error("truncated file while reading normalisation flags");
  }

  auto& meta = model.metadata;
  meta.seed = binary::read<std::uint64_t>(in, "model seed");
  meta.pretrain_epochs = binary::read<std::int32_t>(in, "model epochs");
  meta.head_epochs = binary::read<std::int32_t>(in, "model epochs");
  meta.finetune_epochs = binary::read<std::int32_t>(in, "model epochs");
  meta.positive_weight = binary::read<double>(in, "model positive weight");
  const auto phases = binary::read<std::uint32_t>(in, "model history");
  if (phases > 64) throw input_error("corrupt model history");
  for (std::uint32_t p = 0; p < phases; ++p) {
    PhaseHistory phase;
    phase.phase = binary::read_string(in, "phase name");
    const auto costs = binary::read_matrix<Eigen::VectorXd>(in, "phase costs");
    phase.costs.assign(costs.data(), costs.data() + costs.size());
    meta.history.push_back(std::move(phase));
  }
  model.validate();
  return model;
}

std::string model_id(const NetworkModel& model) {
  std::ostringstream bytes;
  save_model(bytes, model);
  const auto s = bytes.str();
  binary::Fnv1a hash;
  hash.update(s.data(), s.size());
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash.digest()));
  return hex;
}

}  // namespace kpdet
