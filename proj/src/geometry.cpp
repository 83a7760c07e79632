#include "kpdet/geometry.hpp"

#include "kpdet/error.hpp"

#include <Eigen/Dense>

namespace kpdet {

namespace {

constexpr int kMinFitNeighbours = 5;

// Orthonormal tangent basis for unit normal n.
void tangent_frame(const Eigen::Vector3d& n, Eigen::Vector3d& t1, Eigen::Vector3d& t2) {
  Eigen::Index axis = 0;
  n.cwiseAbs().minCoeff(&axis);
  t1 = n.cross(Eigen::Vector3d::Unit(axis)).normalized();
  t2 = n.cross(t1);
}

}  // namespace

NormalField compute_normals(const Mesh& mesh, const Positions& positions) {
  if (positions.rows() != mesh.vertex_count()) throw internal_error("positions do not match mesh vertex count");
  Normals accum = Normals::Zero(mesh.vertex_count(), 3);
  const auto& tris = mesh.triangles();
  for (int f = 0; f < mesh.triangle_count(); ++f) {
    const Eigen::Vector3d a = positions.row(tris(f, 0)).transpose();
    const Eigen::Vector3d b = positions.row(tris(f, 1)).transpose();
    const Eigen::Vector3d c = positions.row(tris(f, 2)).transpose();
    // |cross| is twice the area, so summing raw cross products is area weighting.
    const Eigen::RowVector3d weighted = (b - a).cross(c - a).transpose();
    for (int k = 0; k < 3; ++k) accum.row(tris(f, k)) += weighted;
  }

  NormalField field;
  field.normals.resize(mesh.vertex_count(), 3);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const double norm = accum.row(v).norm();
    if (norm > 0.0 && std::isfinite(norm)) {
      field.normals.row(v) = accum.row(v) / norm;
    } else {
      field.normals.row(v) = Eigen::RowVector3d::UnitZ();
      field.degenerate.push_back(v);
    }
  }
  return field;
}

Eigen::VectorXd cotangent_mean_curvature(const Mesh& mesh, const Positions& positions, const Normals& normals) {
  const int n = mesh.vertex_count();
  Positions laplace = Positions::Zero(n, 3);
  Eigen::VectorXd area = Eigen::VectorXd::Zero(n);
  const auto& tris = mesh.triangles();
  for (int f = 0; f < mesh.triangle_count(); ++f) {
    const double twice_area = (positions.row(tris(f, 1)) - positions.row(tris(f, 0)))
                                  .cross(positions.row(tris(f, 2)) - positions.row(tris(f, 0)))
                                  .norm();
    if (!(twice_area > 0.0)) continue;
    for (int k = 0; k < 3; ++k) {
      const int i = tris(f, k), j = tris(f, (k + 1) % 3), o = tris(f, (k + 2) % 3);
      // Angle at o is opposite edge (i, j).
      const Eigen::RowVector3d u = positions.row(i) - positions.row(o);
      const Eigen::RowVector3d w = positions.row(j) - positions.row(o);
      const double cot = u.dot(w) / twice_area;
      const Eigen::RowVector3d e = positions.row(i) - positions.row(j);
      laplace.row(i) += cot * e;
      laplace.row(j) -= cot * e;
      area(i) += twice_area / 6.0;
    }
  }
  Eigen::VectorXd mean(n);
  for (int v = 0; v < n; ++v) {
    // laplace / (2A) = 2 H n
    mean(v) = area(v) > 0.0 ? laplace.row(v).dot(normals.row(v)) / (4.0 * area(v)) : 0.0;
  }
  return mean;
}

CurvatureField compute_curvatures(const Mesh& mesh, const Positions& positions, const Normals& normals,
                                  const VertexNeighborhoods& rings) {
  if (rings.ring_count() < 2) throw internal_error("curvature fit needs at least two rings");
  const int n = mesh.vertex_count();
  CurvatureField field;
  field.c1.resize(n);
  field.c2.resize(n);

  Eigen::VectorXd cotangent;
  Eigen::MatrixXd design;
  Eigen::VectorXd heights;
  for (int v = 0; v < n; ++v) {
    const auto support = rings.disk(v, 2);
    bool fitted = false;
    if (static_cast<int>(support.size()) >= kMinFitNeighbours) {
      const Eigen::Vector3d nv = normals.row(v).transpose();
      Eigen::Vector3d t1, t2;
      tangent_frame(nv, t1, t2);
      design.resize(static_cast<Eigen::Index>(support.size()), 3);
      heights.resize(design.rows());
      for (Eigen::Index j = 0; j < design.rows(); ++j) {
        const Eigen::Vector3d d = (positions.row(support[j]) - positions.row(v)).transpose();
        const double u = d.dot(t1), w = d.dot(t2);
        design.row(j) << u * u, u * w, w * w;
        heights(j) = d.dot(nv);
      }
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
      if (qr.rank() == 3) {
        const Eigen::Vector3d abc = qr.solve(heights);
        // Second fundamental form with the sign flipped so that a surface
        // curving away from the normal reads positive.
        Eigen::Matrix2d shape;
        shape << -2.0 * abc(0), -abc(1), -abc(1), -2.0 * abc(2);
        const double half_trace = 0.5 * shape.trace();
        const double disc = std::sqrt(std::max(0.0, 0.25 * (shape(0, 0) - shape(1, 1)) * (shape(0, 0) - shape(1, 1)) +
                                                        shape(0, 1) * shape(0, 1)));
        field.c1(v) = half_trace + disc;
        field.c2(v) = half_trace - disc;
        fitted = std::isfinite(field.c1(v)) && std::isfinite(field.c2(v));
      }
    }
    if (!fitted) {
      if (cotangent.size() == 0) cotangent = cotangent_mean_curvature(mesh, positions, normals);
      field.c1(v) = field.c2(v) = cotangent(v);
      field.fallback.push_back(v);
    }
  }
  return field;
}

CurvatureField compute_curvatures(const Mesh& mesh, const Positions& positions, const Normals& normals) {
  return compute_curvatures(mesh, positions, normals, compute_rings(mesh, 2));
}

}  // namespace kpdet
