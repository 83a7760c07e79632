#ifndef KPDET_FEATURES_HPP
#define KPDET_FEATURES_HPP

#include "kpdet/geometry.hpp"
#include "kpdet/mesh.hpp"
#include "kpdet/neighborhoods.hpp"
#include "kpdet/scale_space.hpp"
#include "kpdet/spectral.hpp"
#include "kpdet/stats.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace kpdet {

struct FeatureOptions {
  int omega = 6;
  int gamma = 9;
  int rings = 5;
  double epsilon_fraction = kDefaultEpsilonFraction;
  /// Append the vertex's own spectral saliency to every scale block.
  bool self_saliency = true;
  AngleFold fold = AngleFold::HalfPi;
  SaliencyReduction reduction = SaliencyReduction::RowAbsSum;
};

enum class BlockKind : std::uint8_t {
  TangentDistance = 0,  // stats of d_k, one block per ring
  NormalAngle = 1,      // stats of theta_k, one block per ring
  Curvature = 2,        // c1, c2, mean, gaussian
  RingSaliency = 3,     // stats of s_k, one block per ring
  SelfSaliency = 4,     // s_v
};

const char* block_name(BlockKind kind);

struct LayoutBlock {
  BlockKind kind;
  int scale;
  int ring;  // 1-based; 0 for curvature and self saliency
  int offset;
  int length;

  bool operator==(const LayoutBlock&) const = default;
};

/// Column layout of a feature matrix plus the options that produced it.
///
/// Per scale the order is: d stats for rings 1..K, theta stats for rings
/// 1..K, the four curvatures, saliency stats for rings 1..K, then (optionally)
/// the vertex's own saliency. With K = 5 that is 30 + 30 + 4 + 30 + 1 = 95
/// columns per scale.
struct FeatureLayout {
  FeatureOptions options;
  std::vector<LayoutBlock> blocks;

  static FeatureLayout make(const FeatureOptions& options);

  int per_scale() const;
  int dimension() const;
  /// Throws when the block does not exist.
  const LayoutBlock& find(BlockKind kind, int scale, int ring = 0) const;
  std::string describe() const;

  bool operator==(const FeatureLayout& other) const;
};

void write_layout(std::ostream& out, const FeatureLayout& layout);
FeatureLayout read_layout(std::istream& in);

enum VertexFlag : std::uint8_t {
  kVertexOk = 0,
  kPartialRings = 1,   // some ring was empty at some scale; its stats are zero
  kInvalidNormal = 2,  // zero-area star at scale 0; row is zero-filled
};

/// Per-scale inputs to the attribute assembly. All fields refer to the same
/// smoothed positions.
struct ScaleContext {
  Positions positions;
  Normals normals;
  CurvatureField curvature;
  Eigen::VectorXd saliency;
  std::vector<int> degenerate_normals;
};

ScaleContext make_scale_context(const Mesh& mesh, const Positions& positions, const VertexNeighborhoods& rings,
                                const FeatureOptions& options);

/// One scale's attribute block for `vertex` (FeatureLayout::per_scale() values).
/// Sets kPartialRings in `flags` when a ring is empty.
Eigen::VectorXd vertex_attributes(int vertex, const VertexNeighborhoods& rings, const ScaleContext& context,
                                  const FeatureOptions& options, std::uint8_t* flags = nullptr);

struct FeatureMatrix {
  Eigen::MatrixXd values;  // vertices x dimension
  FeatureLayout layout;
  std::vector<std::uint8_t> flags;
  double epsilon = 0.0;  // absolute scale step of the source mesh

  /// Columns of one layout block.
  auto block(const LayoutBlock& b) const { return values.middleCols(b.offset, b.length); }
};

/// gamma is clamped to the vertex count for meshes smaller than the window.
FeatureMatrix build_feature_matrix(const Mesh& mesh, const FeatureOptions& options = {});

void write_features(std::ostream& out, const FeatureMatrix& features);
FeatureMatrix read_features(std::istream& in);

}  // namespace kpdet

#endif  // KPDET_FEATURES_HPP
