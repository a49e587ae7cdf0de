#pragma once

#include "npmesh/mesh.hpp"

namespace npmesh {

constexpr int kMeshFeatureDim = 13;
constexpr int kLearnedFeatureDim = 8;

// Per-face 13-vector, one row per face:
//   [area; angle0..2 (radians); dot(face normal, vertex normal 0..2);
//    centroid x,y,z; normal x,y,z]
// Slot k of angles/dots corresponds to the face's k-th vertex.
Eigen::MatrixXd face_features_13(const HalfEdgeMesh& mesh);

} // namespace npmesh
