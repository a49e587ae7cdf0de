#include "npmesh/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace npmesh {

HalfEdgeMesh::HalfEdgeMesh(MatX3d vertices, MatX3i faces)
    : V_(std::move(vertices)), F_(std::move(faces)) {
  for (int f = 0; f < num_faces(); ++f)
    for (int k = 0; k < 3; ++k)
      if (F_(f, k) < 0 || F_(f, k) >= num_vertices())
        throw MeshError("face vertex index out of range");
  build_connectivity();
}

void HalfEdgeMesh::build_connectivity() {
  const int nf = num_faces();
  twin_.assign(3 * nf, -1);
  vertex_faces_.assign(num_vertices(), {});
  edges_.clear();
  connectivity_ok_ = true;

  std::map<std::pair<int, int>, int> directed; // (origin, dest) -> half-edge
  for (int f = 0; f < nf; ++f) {
    for (int k = 0; k < 3; ++k) {
      int h = 3 * f + k;
      auto key = std::make_pair(origin(h), dest(h));
      if (!directed.emplace(key, h).second)
        connectivity_ok_ = false; // duplicated directed edge: non-orientable/non-manifold
    }
    for (int k = 0; k < 3; ++k) vertex_faces_[F_(f, k)].push_back(f);
  }

  std::map<std::pair<int, int>, int> undirected_count;
  for (auto& [key, h] : directed) {
    auto rkey = std::make_pair(key.second, key.first);
    auto it = directed.find(rkey);
    if (it != directed.end()) twin_[h] = it->second;
    undirected_count[std::pair<int, int>(std::min(key.first, key.second),
                                         std::max(key.first, key.second))]++;
  }
  for (auto& [e, c] : undirected_count) {
    edges_.push_back(e);
    if (c > 2) connectivity_ok_ = false;
  }
  num_edges_ = static_cast<int>(edges_.size());
  for (int h = 0; h < 3 * nf; ++h)
    if (twin_[h] < 0) connectivity_ok_ = false; // boundary
}

int HalfEdgeMesh::edge_index(int a, int b) const {
  std::pair<int, int> key(std::min(a, b), std::max(a, b));
  auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
  if (it == edges_.end() || *it != key) throw MeshError("edge not found");
  return static_cast<int>(it - edges_.begin());
}

std::array<int, 3> HalfEdgeMesh::face_neighbors(int f) const {
  std::array<int, 3> n{};
  for (int k = 0; k < 3; ++k) {
    int t = twin_[3 * f + k];
    if (t < 0) throw MeshError("face_neighbors requires a closed manifold");
    n[k] = face_of(t);
  }
  return n;
}

Vec3 HalfEdgeMesh::point_at(const SurfacePoint& sp) const {
  const auto f = F_.row(sp.face);
  return sp.bary[0] * V_.row(f[0]) + sp.bary[1] * V_.row(f[1]) + sp.bary[2] * V_.row(f[2]);
}

ObjLoadResult load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open OBJ file: " + path);

  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  int ignored = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p[0] >> p[1] >> p[2]))
        throw MeshError("OBJ parse error at line " + std::to_string(lineno));
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        // accept v, v/vt, v//vn forms; only the vertex index is used
        int v = 0;
        try {
          v = std::stoi(tok.substr(0, tok.find('/')));
        } catch (...) {
          throw MeshError("OBJ parse error at line " + std::to_string(lineno));
        }
        if (v < 0) v = static_cast<int>(verts.size()) + v + 1;
        idx.push_back(v - 1);
      }
      if (idx.size() != 3)
        throw MeshError("non-triangular face at line " + std::to_string(lineno));
      for (int v : idx)
        if (v < 0 || v >= static_cast<int>(verts.size()))
          throw MeshError("face index out of range at line " + std::to_string(lineno));
      faces.push_back({idx[0], idx[1], idx[2]});
    } else {
      ++ignored;
    }
  }

  MatX3d V(verts.size(), 3);
  for (size_t i = 0; i < verts.size(); ++i) V.row(i) = verts[i];
  MatX3i F(faces.size(), 3);
  for (size_t i = 0; i < faces.size(); ++i)
    F.row(i) << faces[i][0], faces[i][1], faces[i][2];
  return {HalfEdgeMesh(std::move(V), std::move(F)), ignored};
}

void save_obj(const HalfEdgeMesh& mesh, const std::string& path) {
  if (mesh.num_vertices() == 0) throw MeshError("empty mesh");
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write OBJ file: " + path);
  char buf[128];
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", mesh.vertices()(v, 0),
                  mesh.vertices()(v, 1), mesh.vertices()(v, 2));
    out << buf;
  }
  for (int f = 0; f < mesh.num_faces(); ++f)
    out << "f " << mesh.faces()(f, 0) + 1 << ' ' << mesh.faces()(f, 1) + 1 << ' '
        << mesh.faces()(f, 2) + 1 << '\n';
  if (!out) throw MeshError("I/O failure writing " + path);
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

} // namespace

ValidationReport validate(const HalfEdgeMesh& mesh) {
  ValidationReport r;
  const auto& F = mesh.faces();
  const int nf = mesh.num_faces();

  std::map<std::pair<int, int>, int> und;
  std::map<std::pair<int, int>, int> dir;
  for (int f = 0; f < nf; ++f) {
    for (int k = 0; k < 3; ++k) {
      int a = F(f, k), b = F(f, (k + 1) % 3);
      und[std::pair<int, int>(std::min(a, b), std::max(a, b))]++;
      dir[{a, b}]++;
    }
  }
  r.is_edge_manifold = true;
  r.is_watertight = nf > 0;
  for (auto& [e, c] : und) {
    if (c > 2) r.is_edge_manifold = false;
    if (c != 2) r.is_watertight = false;
  }
  for (auto& [e, c] : dir)
    if (c > 1) r.is_edge_manifold = false; // duplicated orientation

  UnionFind uf(mesh.num_vertices());
  for (int f = 0; f < nf; ++f) {
    uf.unite(F(f, 0), F(f, 1));
    uf.unite(F(f, 0), F(f, 2));
  }
  std::vector<bool> used(mesh.num_vertices(), false);
  for (int f = 0; f < nf; ++f)
    for (int k = 0; k < 3; ++k) used[F(f, k)] = true;
  std::vector<int> roots;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (used[v]) roots.push_back(uf.find(v));
  std::sort(roots.begin(), roots.end());
  r.connected_component_count =
      static_cast<int>(std::unique(roots.begin(), roots.end()) - roots.begin());

  const double diag2 = bbox_diagonal(mesh) * bbox_diagonal(mesh);
  const double thresh = 1e-12 * diag2;
  for (int f = 0; f < nf; ++f) {
    Vec3 a = mesh.position(F(f, 0)), b = mesh.position(F(f, 1)), c = mesh.position(F(f, 2));
    double area = 0.5 * (b - a).cross(c - a).norm();
    if (area <= thresh) r.degenerate_face_count++;
  }
  return r;
}

FaceGeometry face_geometry(const HalfEdgeMesh& mesh, int face) {
  const auto& F = mesh.faces();
  Vec3 p[3] = {mesh.position(F(face, 0)), mesh.position(F(face, 1)), mesh.position(F(face, 2))};
  Vec3 c = (p[1] - p[0]).cross(p[2] - p[0]);
  double cn = c.norm();
  if (cn <= 0) throw MeshError("degenerate face " + std::to_string(face));
  FaceGeometry g;
  g.area = 0.5 * cn;
  g.normal = c / cn;
  g.centroid = (p[0] + p[1] + p[2]) / 3.0;
  for (int k = 0; k < 3; ++k) {
    Vec3 u = p[(k + 1) % 3] - p[k];
    Vec3 v = p[(k + 2) % 3] - p[k];
    g.angles[k] = std::atan2(u.cross(v).norm(), u.dot(v));
  }
  return g;
}

MatX3d vertex_normals(const HalfEdgeMesh& mesh) {
  MatX3d N = MatX3d::Zero(mesh.num_vertices(), 3);
  const auto& F = mesh.faces();
  for (int f = 0; f < mesh.num_faces(); ++f) {
    Vec3 a = mesh.position(F(f, 0)), b = mesh.position(F(f, 1)), c = mesh.position(F(f, 2));
    Vec3 av = 0.5 * (b - a).cross(c - a); // area-weighted normal
    for (int k = 0; k < 3; ++k) N.row(F(f, k)) += av;
  }
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    double n = N.row(v).norm();
    if (n <= 0) throw MeshError("zero-length vertex normal at vertex " + std::to_string(v));
    N.row(v) /= n;
  }
  return N;
}

std::pair<HalfEdgeMesh, UnitCubeTransform> normalize_to_unit_cube(const HalfEdgeMesh& mesh) {
  if (mesh.num_vertices() == 0) throw MeshError("empty mesh");
  Vec3 lo = mesh.vertices().colwise().minCoeff();
  Vec3 hi = mesh.vertices().colwise().maxCoeff();
  double extent = (hi - lo).maxCoeff();
  if (extent <= 0) throw MeshError("zero-extent mesh");
  UnitCubeTransform t;
  t.scale = 1.0 / extent;
  t.translate = -0.5 * (lo + hi);
  MatX3d V = mesh.vertices();
  for (int v = 0; v < V.rows(); ++v) V.row(v) = t.apply(V.row(v).transpose()).transpose();
  return {HalfEdgeMesh(std::move(V), mesh.faces()), t};
}

double bbox_diagonal(const HalfEdgeMesh& mesh) {
  if (mesh.num_vertices() == 0) return 0.0;
  Vec3 lo = mesh.vertices().colwise().minCoeff();
  Vec3 hi = mesh.vertices().colwise().maxCoeff();
  return (hi - lo).norm();
}

} // namespace npmesh
