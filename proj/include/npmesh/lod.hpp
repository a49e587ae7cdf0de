#pragma once

#include "npmesh/mesh.hpp"
#include "npmesh/rng.hpp"

#include <array>
#include <optional>

namespace npmesh {

// One accepted edge collapse with the data needed to map points on the
// post-collapse patch back onto the pre-collapse patch. Face and vertex ids
// are stable pool ids: faces are never renumbered during decimation, so the
// initial pool ids coincide with original mesh face indices.
struct CollapseRecord {
  int kept_vertex = -1;    // survives the collapse and takes placed_position
  int removed_vertex = -1;
  Vec3 placed_position = Vec3::Zero();
  double quadric_cost = 0.0; // unjittered

  std::vector<int> patch_vertices;             // pool vertex ids of the pre patch
  std::vector<Eigen::Vector2d> uv;             // flattened coordinates, one per patch vertex
  Eigen::Vector2d uv_kept = Eigen::Vector2d::Zero(); // post-collapse position of kept vertex

  std::vector<Vec3> patch_positions;                // 3D positions at pre time

  std::vector<int> pre_face_ids;                    // faces incident to either endpoint
  std::vector<std::array<int, 3>> pre_face_local;   // indices into patch_vertices

  std::vector<int> post_face_ids;                   // sorted; faces incident to kept vertex, post
  std::vector<std::array<int, 3>> post_face_local;  // -1 marks the kept vertex (uses uv_kept)

  bool flatten_ok = true; // false => closest-point projection fallback for this patch
};

struct SurfaceMap {
  std::vector<CollapseRecord> records;   // in decimation order
  std::vector<int> coarse_face_to_pool;  // compact coarse face index -> pool face id
  int flatten_failures = 0;
};

struct DecimationResult {
  HalfEdgeMesh coarse;
  std::vector<CollapseRecord> records;
  std::vector<int> coarse_face_to_pool;
  std::vector<int> coarse_vertex_to_pool;
};

// QSlim edge-collapse decimation with link-condition and normal-flip guards.
// Priorities are multiplied by Uniform(1, 1+jitter) drawn from seed. The
// result has exactly target_faces faces when reachable, otherwise within 2
// (odd targets and feasibility limits).
DecimationResult quadric_decimate(const HalfEdgeMesh& mesh, int target_faces, uint64_t seed,
                                  double jitter);

SurfaceMap build_surface_map(const DecimationResult& decimation);

// Maps a point on the coarse mesh to a point on the original mesh by
// unwinding the collapse records.
SurfacePoint map_to_original(const SurfaceMap& map, const SurfacePoint& on_coarse);

struct SubdivisionStep {
  MatX3i faces;                                       // 4x the parent count
  std::vector<std::array<int, 4>> parent_children;    // children 0..2 corner, 3 center
  std::vector<std::pair<std::pair<int, int>, int>> edge_midpoints; // sorted edges -> new vertex
  int num_vertices = 0;                               // vertex count after the split
};

// Midpoint 1-to-4 connectivity split with deterministic indexing: midpoint
// vertices are appended after the old ones in sorted-edge order.
SubdivisionStep subdivide_connectivity(const MatX3i& faces, int num_vertices);

struct LodLevel {
  HalfEdgeMesh mesh;
  std::vector<SurfacePoint> vertex_domain; // position of each vertex on M^0
};

struct LodHierarchy {
  std::vector<LodLevel> levels;                                  // 0..L
  std::vector<std::vector<std::array<int, 4>>> parent_children;  // per level 0..L-1
  std::vector<std::vector<std::pair<std::pair<int, int>, int>>> edge_midpoints;
  SurfaceMap map;
  int L = 0;

  const HalfEdgeMesh& level_mesh(int i) const { return levels[i].mesh; }
};

// Full LoD preprocessing: decimate, self-parameterize, subdivide, and place
// every level's vertices on the original surface through the map.
LodHierarchy build_hierarchy(const HalfEdgeMesh& mesh, int target_faces = 400, int levels = 3,
                             uint64_t seed = 0, double jitter = 0.0);

// Hierarchy cache: level_k.obj files plus a JSON sidecar with parent maps,
// midpoint maps, and coarse-domain coordinates. The collapse records are not
// cached; a loaded hierarchy has an empty surface map.
void save_hierarchy_cache(const LodHierarchy& h, const std::string& directory);
LodHierarchy load_hierarchy_cache(const std::string& directory);

} // namespace npmesh
