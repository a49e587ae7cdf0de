#pragma once

#include "npmesh/mesh.hpp"
#include "npmesh/rng.hpp"

#include <vector>

namespace npmesh {

// Closest point on a single triangle (Ericson-style case analysis).
// Returns the point and its barycentric coordinates.
std::pair<Vec3, Vec3> closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                                const Vec3& c);

// AABB tree over the faces of a mesh for exact closest-point queries.
class BvhIndex {
public:
  explicit BvhIndex(const HalfEdgeMesh& mesh);

  // Exact minimum over all faces.
  std::pair<SurfacePoint, double> closest_point(const Vec3& query) const;

  const HalfEdgeMesh& mesh() const { return *mesh_; }

private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1; // children; leaf if left < 0
    int begin = 0, end = 0;    // face range for leaves
  };

  int build(int begin, int end, int depth);
  double box_dist2(const Node& n, const Vec3& p) const;

  const HalfEdgeMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_; // face indices, partitioned by the tree
  int root_ = -1;
};

// Brute-force reference used as the oracle in tests.
std::pair<SurfacePoint, double> closest_point_brute(const HalfEdgeMesh& mesh, const Vec3& query);

struct SurfaceSample {
  SurfacePoint point;
  Vec3 position;
};

// Area-uniform surface sampling, deterministic per seed. Face selection via
// the area CDF, barycentrics via the sqrt trick.
std::vector<SurfaceSample> sample_surface(const HalfEdgeMesh& mesh, int n, uint64_t seed);

} // namespace npmesh
