#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace npmesh {

using Vec3 = Eigen::Vector3d;
using MatX3d = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using MatX3i = Eigen::Matrix<int, Eigen::Dynamic, 3>;

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Point on a mesh surface: a face index plus barycentric coordinates.
struct SurfacePoint {
  int face = -1;
  Vec3 bary = Vec3::Zero();

  bool valid() const {
    return face >= 0 && bary.minCoeff() >= -1e-9 && std::abs(bary.sum() - 1.0) <= 1e-9;
  }
};

struct ValidationReport {
  bool is_edge_manifold = false;
  bool is_watertight = false;
  int connected_component_count = 0;
  int degenerate_face_count = 0;

  bool ok() const {
    return is_edge_manifold && is_watertight && connected_component_count == 1 &&
           degenerate_face_count == 0;
  }
};

// Indexed triangle mesh with half-edge connectivity. Half-edge h belongs to
// face h/3 and runs from faces(h/3, h%3) to faces(h/3, (h+1)%3). The
// connectivity arrays are built best-effort: twin is -1 across boundary or
// non-manifold edges, so validation can still report on broken input.
class HalfEdgeMesh {
public:
  HalfEdgeMesh() = default;
  HalfEdgeMesh(MatX3d vertices, MatX3i faces);

  int num_vertices() const { return static_cast<int>(V_.rows()); }
  int num_faces() const { return static_cast<int>(F_.rows()); }
  int num_edges() const { return num_edges_; }

  const MatX3d& vertices() const { return V_; }
  const MatX3i& faces() const { return F_; }
  MatX3d& mutable_vertices() { return V_; }

  Vec3 position(int v) const { return V_.row(v); }
  Vec3 point_at(const SurfacePoint& sp) const;

  // half-edge accessors
  int twin(int h) const { return twin_[h]; }
  int next(int h) const { return 3 * (h / 3) + (h + 1) % 3; }
  int face_of(int h) const { return h / 3; }
  int origin(int h) const { return F_(h / 3, h % 3); }
  int dest(int h) const { return F_(h / 3, (h % 3 + 1) % 3); }

  // Unique undirected edges as (min vertex, max vertex), sorted
  // lexicographically; edge_index lookup uses the same order.
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  int edge_index(int a, int b) const;

  // The three faces across each face's edges, in half-edge order
  // (neighbor k is across the edge from vertex k to vertex k+1).
  // Requires a closed manifold; throws otherwise.
  std::array<int, 3> face_neighbors(int f) const;

  // faces incident to a vertex (unordered)
  const std::vector<std::vector<int>>& vertex_faces() const { return vertex_faces_; }

  bool has_full_connectivity() const { return connectivity_ok_; }

private:
  void build_connectivity();

  MatX3d V_;
  MatX3i F_;
  std::vector<int> twin_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> vertex_faces_;
  int num_edges_ = 0;
  bool connectivity_ok_ = false;
};

struct FaceGeometry {
  double area = 0;
  std::array<double, 3> angles{}; // angle k at the face's k-th vertex, radians
  Vec3 normal = Vec3::Zero();
  Vec3 centroid = Vec3::Zero();
};

struct UnitCubeTransform {
  double scale = 1.0;
  Vec3 translate = Vec3::Zero(); // applied before scaling

  Vec3 apply(const Vec3& p) const { return (p + translate) * scale; }
};

struct ObjLoadResult {
  HalfEdgeMesh mesh;
  int ignored_record_count = 0;
};

ObjLoadResult load_obj(const std::string& path);
void save_obj(const HalfEdgeMesh& mesh, const std::string& path);

ValidationReport validate(const HalfEdgeMesh& mesh);

FaceGeometry face_geometry(const HalfEdgeMesh& mesh, int face);

// Area-weighted average of incident face normals, normalized.
MatX3d vertex_normals(const HalfEdgeMesh& mesh);

// Uniform scale + translation so the bounding box is centered at the origin
// with max extent 1.
std::pair<HalfEdgeMesh, UnitCubeTransform> normalize_to_unit_cube(const HalfEdgeMesh& mesh);

double bbox_diagonal(const HalfEdgeMesh& mesh);

} // namespace npmesh
