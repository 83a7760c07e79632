#include "kpdet/features.hpp"

#include "kpdet/binary_io.hpp"
#include "kpdet/error.hpp"

#include <algorithm>
#include <sstream>

namespace kpdet {

namespace {

constexpr char kFeatureMagic[9] = "KPDFEATS";
constexpr std::uint32_t kFeatureVersion = 1;
constexpr int kStatCount = StatVector<double>::kSize;

template <typename Derived>
void put_stats(Eigen::VectorXd& out, int& cursor, const Eigen::DenseBase<Derived>& sample, bool& partial) {
  const auto s = stats(sample);
  if (!s.valid) partial = true;
  for (double v : s.values()) out(cursor++) = v;
}

}  // namespace

const char* block_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::TangentDistance: return "tangent_distance";
    case BlockKind::NormalAngle: return "normal_angle";
    case BlockKind::Curvature: return "curvature";
    case BlockKind::RingSaliency: return "ring_saliency";
    case BlockKind::SelfSaliency: return "self_saliency";
  }
  return "unknown";
}

FeatureLayout FeatureLayout::make(const FeatureOptions& options) {
  if (options.omega < 0) throw config_error("omega must be >= 0");
  if (options.rings < 1) throw config_error("ring count must be >= 1");
  if (options.gamma < 1) throw config_error("gamma must be >= 1");
  FeatureLayout layout;
  layout.options = options;
  int offset = 0;
  auto add = [&](BlockKind kind, int scale, int ring, int length) {
    layout.blocks.push_back({kind, scale, ring, offset, length});
    offset += length;
  };
  for (int s = 0; s <= options.omega; ++s) {
    for (int k = 1; k <= options.rings; ++k) add(BlockKind::TangentDistance, s, k, kStatCount);
    for (int k = 1; k <= options.rings; ++k) add(BlockKind::NormalAngle, s, k, kStatCount);
    add(BlockKind::Curvature, s, 0, 4);
    for (int k = 1; k <= options.rings; ++k) add(BlockKind::RingSaliency, s, k, kStatCount);
    if (options.self_saliency) add(BlockKind::SelfSaliency, s, 0, 1);
  }
  return layout;
}

int FeatureLayout::per_scale() const {
  return 3 * kStatCount * options.rings + 4 + (options.self_saliency ? 1 : 0);
}

int FeatureLayout::dimension() const { return per_scale() * (options.omega + 1); }

const LayoutBlock& FeatureLayout::find(BlockKind kind, int scale, int ring) const {
  for (const auto& b : blocks) {
    if (b.kind == kind && b.scale == scale && b.ring == ring) return b;
  }
  throw internal_error(std::string("no layout block ") + block_name(kind) + " scale " + std::to_string(scale) +
                       " ring " + std::to_string(ring));
}

std::string FeatureLayout::describe() const {
  std::ostringstream out;
  out << "omega=" << options.omega << " gamma=" << options.gamma << " rings=" << options.rings
      << " epsilon_fraction=" << options.epsilon_fraction << " self_saliency=" << options.self_saliency
      << " dimension=" << dimension();
  return out.str();
}

bool FeatureLayout::operator==(const FeatureLayout& other) const {
  const auto& a = options;
  const auto& b = other.options;
  return a.omega == b.omega && a.gamma == b.gamma && a.rings == b.rings && a.epsilon_fraction == b.epsilon_fraction &&
         a.self_saliency == b.self_saliency && a.fold == b.fold && a.reduction == b.reduction && blocks == other.blocks;
}

void write_layout(std::ostream& out, const FeatureLayout& layout) {
  const auto& o = layout.options;
  binary::write<std::int32_t>(out, o.omega);
  binary::write<std::int32_t>(out, o.gamma);
  binary::write<std::int32_t>(out, o.rings);
  binary::write<double>(out, o.epsilon_fraction);
  binary::write<std::uint8_t>(out, o.self_saliency ? 1 : 0);
  binary::write<std::uint8_t>(out, static_cast<std::uint8_t>(o.fold));
  binary::write<std::uint8_t>(out, static_cast<std::uint8_t>(o.reduction));
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(layout.blocks.size()));
  for (const auto& b : layout.blocks) {
    binary::write<std::uint8_t>(out, static_cast<std::uint8_t>(b.kind));
    binary::write<std::int32_t>(out, b.scale);
    binary::write<std::int32_t>(out, b.ring);
    binary::write<std::int32_t>(out, b.offset);
    binary::write<std::int32_t>(out, b.length);
  }
}

FeatureLayout read_layout(std::istream& in) {
  FeatureOptions o;
  o.omega = binary::read<std::int32_t>(in, "layout omega");
  o.gamma = binary::read<std::int32_t>(in, "layout gamma");
  o.rings = binary::read<std::int32_t>(in, "layout rings");
  o.epsilon_fraction = binary::read<double>(in, "layout epsilon");
  o.self_saliency = binary::read<std::uint8_t>(in, "layout flags") != 0;
  o.fold = static_cast<AngleFold>(binary::read<std::uint8_t>(in, "layout fold"));
  o.reduction = static_cast<SaliencyReduction>(binary::read<std::uint8_t>(in, "layout reduction"));
  if (o.omega < 0 || o.omega > 1000 || o.rings < 1 || o.rings > 1000 || o.gamma < 1) {
    throw input_error("corrupt feature layout header");
  }
  FeatureLayout layout = FeatureLayout::make(o);
  const auto count = binary::read<std::uint32_t>(in, "layout block count");
  std::vector<LayoutBlock> blocks;
  blocks.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t i = 0; i < count; ++i) {
    LayoutBlock b{};
    b.kind = static_cast<BlockKind>(binary::read<std::uint8_t>(in, "layout block"));
    b.scale = binary::read<std::int32_t>(in, "layout block");
    b.ring = binary::read<std::int32_t>(in, "layout block");
    b.offset = binary::read<std::int32_t>(in, "layout block");
    b.length = binary::read<std::int32_t>(in, "layout block");
    blocks.push_back(b);
  }
  if (blocks != layout.blocks) throw input_error("feature layout blocks do not match their declared options");
  return layout;
}

ScaleContext make_scale_context(const Mesh& mesh, const Positions& positions, const VertexNeighborhoods& rings,
                                const FeatureOptions& options) {
  ScaleContext context;
  context.positions = positions;
  auto normals = compute_normals(mesh, positions);
  context.normals = std::move(normals.normals);
  context.degenerate_normals = std::move(normals.degenerate);
  context.curvature = compute_curvatures(mesh, positions, context.normals, rings);
  SaliencyOptions saliency;
  saliency.reduction = options.reduction;
  const int gamma = std::min(options.gamma, mesh.vertex_count());
  context.saliency = spectral_saliency(mesh, positions, gamma, saliency);
  return context;
}

Eigen::VectorXd vertex_attributes(int vertex, const VertexNeighborhoods& rings, const ScaleContext& context,
                                  const FeatureOptions& options, std::uint8_t* flags) {
  if (rings.ring_count() < options.rings) throw internal_error("neighbourhoods hold fewer rings than requested");
  const int size = 3 * kStatCount * options.rings + 4 + (options.self_saliency ? 1 : 0);
  Eigen::VectorXd out(size);
  int cursor = 0;
  bool partial = false;

  for (int k = 1; k <= options.rings; ++k) {
    put_stats(out, cursor, tangent_plane_distances(vertex, rings.ring(vertex, k), context.positions, context.normals),
              partial);
  }
  for (int k = 1; k <= options.rings; ++k) {
    put_stats(out, cursor, normal_angles(vertex, rings.ring(vertex, k), context.normals, options.fold), partial);
  }
  const double c1 = context.curvature.c1(vertex);
  const double c2 = context.curvature.c2(vertex);
  out.segment<4>(cursor) << c1, c2, 0.5 * (c1 + c2), c1 * c2;
  cursor += 4;
  for (int k = 1; k <= options.rings; ++k) {
    const auto ring = rings.ring(vertex, k);
    Eigen::VectorXd sample(static_cast<Eigen::Index>(ring.size()));
    for (std::size_t j = 0; j < ring.size(); ++j) sample(static_cast<Eigen::Index>(j)) = context.saliency(ring[j]);
    put_stats(out, cursor, sample, partial);
  }
  if (options.self_saliency) out(cursor++) = context.saliency(vertex);

  if (partial && flags != nullptr) *flags |= kPartialRings;
  return out;
}

FeatureMatrix build_feature_matrix(const Mesh& mesh, const FeatureOptions& options) {
  FeatureMatrix features;
  features.layout = FeatureLayout::make(options);
  const int n = mesh.vertex_count();
  const int per_scale = features.layout.per_scale();
  features.values = Eigen::MatrixXd::Zero(n, features.layout.dimension());
  features.flags.assign(n, kVertexOk);

  const auto space = build_scale_space(mesh, options.omega, options.epsilon_fraction);
  features.epsilon = space.epsilon;
  const auto rings = compute_rings(mesh, std::max(options.rings, 2));

  for (int s = 0; s <= options.omega; ++s) {
    const auto context = make_scale_context(mesh, space.scales[s], rings, options);
    if (s == 0) {
      for (int v : context.degenerate_normals) features.flags[v] |= kInvalidNormal;
    }
    for (int v = 0; v < n; ++v) {
      if (features.flags[v] & kInvalidNormal) continue;
      features.values.block(v, s * per_scale, 1, per_scale) =
          vertex_attributes(v, rings, context, options, &features.flags[v]).transpose();
    }
  }
  if (!features.values.allFinite()) throw internal_error("feature matrix contains non-finite values");
  return features;
}

void write_features(std::ostream& out, const FeatureMatrix& features) {
  out.write(kFeatureMagic, 8);
  binary::write(out, kFeatureVersion);
  binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(features.values.rows()));
  binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(features.values.cols()));
  write_layout(out, features.layout);
  binary::write<double>(out, features.epsilon);
  out.write(reinterpret_cast<const char*>(features.flags.data()), static_cast<std::streamsize>(features.flags.size()));
  binary::write_matrix(out, features.values);
}

FeatureMatrix read_features(std::istream& in) {
  binary::expect_magic(in, kFeatureMagic, "feature");
  const auto version = binary::read<std::uint32_t>(in, "feature version");
  if (version != kFeatureVersion) {
    throw input_error("feature file version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kFeatureVersion) + ")");
  }
  const auto rows = binary::read<std::uint64_t>(in, "feature rows");
  const auto cols = binary::read<std::uint64_t>(in, "feature columns");
  FeatureMatrix features;
  features.layout = read_layout(in);
  if (cols != static_cast<std::uint64_t>(features.layout.dimension())) {
    throw input_error("feature file dimension " + std::to_string(cols) + " disagrees with its layout (" +
                      std::to_string(features.layout.dimension()) + ")");
  }
  if (rows > (1ull << 31)) throw input_error("implausible vertex count in feature file");
  features.epsilon = binary::read<double>(in, "feature epsilon");
  features.flags.resize(rows);
  if (rows > 0 && !in.read(reinterpret_cast<char*>(features.flags.data()), static_cast<std::streamsize>(rows))) {
    throw input_error("truncated file while reading feature flags");
  }
  features.values = binary::read_matrix<Eigen::MatrixXd>(in, "feature values");
  if (static_cast<std::uint64_t>(features.values.rows()) != rows ||
      static_cast<std::uint64_t>(features.values.cols()) != cols) {
    throw input_error("feature matrix size disagrees with header");
  }
  return features;
}

}  // namespace kpdet
