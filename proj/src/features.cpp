#include "npmesh/features.hpp"

namespace npmesh {

Eigen::MatrixXd face_features_13(const HalfEdgeMesh& mesh) {
  const MatX3d N = vertex_normals(mesh);
  const auto& F = mesh.faces();
  Eigen::MatrixXd out(mesh.num_faces(), kMeshFeatureDim);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    FaceGeometry g = face_geometry(mesh, f);
    out(f, 0) = g.area;
    for (int k = 0; k < 3; ++k) out(f, 1 + k) = g.angles[k];
    for (int k = 0; k < 3; ++k) out(f, 4 + k) = g.normal.dot(N.row(F(f, k)));
    out.block<1, 3>(f, 7) = g.centroid.transpose();
    out.block<1, 3>(f, 10) = g.normal.transpose();
  }
  return out;
}

} // namespace npmesh
