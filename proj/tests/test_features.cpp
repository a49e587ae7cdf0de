#include "npmesh/features.hpp"

#include "testutil.hpp"

#include <doctest.h>

using namespace npmesh;
using namespace npmesh::testutil;

TEST_CASE("feature matrix has one 13-row per face") {
  HalfEdgeMesh m = make_octahedron();
  Eigen::MatrixXd X = face_features_13(m);
  CHECK(X.rows() == m.num_faces());
  CHECK(X.cols() == kMeshFeatureDim);
}

TEST_CASE("feature layout matches face_geometry and vertex_normals") {
  HalfEdgeMesh m = make_blob(2, 1);
  Eigen::MatrixXd X = face_features_13(m);
  MatX3d N = vertex_normals(m);
  for (int f = 0; f < m.num_faces(); f += 5) {
    FaceGeometry g = face_geometry(m, f);
    CHECK(X(f, 0) == doctest::Approx(g.area));
    for (int k = 0; k < 3; ++k) {
      CHECK(X(f, 1 + k) == doctest::Approx(g.angles[k]));
      double dot = g.normal.dot(N.row(m.faces()(f, k)));
      CHECK(X(f, 4 + k) == doctest::Approx(dot));
    }
    CHECK(Vec3(X.row(f).segment<3>(7)).isApprox(g.centroid, 1e-12));
    CHECK(Vec3(X.row(f).segment<3>(10)).isApprox(g.normal, 1e-12));
  }
}

TEST_CASE("the 7 shape entries are rigid-motion invariant") {
  HalfEdgeMesh m = make_blob(4, 1);
  Eigen::MatrixXd X = face_features_13(m);

  double angle = 0.73;
  Eigen::Matrix3d R = Eigen::AngleAxisd(angle, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  MatX3d V = m.vertices() * R.transpose();
  V.rowwise() += Eigen::RowVector3d(0.3, -0.2, 0.9);
  Eigen::MatrixXd Y = face_features_13(HalfEdgeMesh(V, m.faces()));

  CHECK((X.leftCols(7) - Y.leftCols(7)).cwiseAbs().maxCoeff() < 1e-9);
  // pose entries move: centroid translated/rotated, normal rotated
  CHECK((X.rightCols(6) - Y.rightCols(6)).cwiseAbs().maxCoeff() > 0.01);
}

TEST_CASE("angles of each face sum to pi") {
  Eigen::MatrixXd X = face_features_13(make_torus(10, 6));
  for (int f = 0; f < X.rows(); ++f)
    CHECK(X(f, 1) + X(f, 2) + X(f, 3) == doctest::Approx(M_PI));
}
