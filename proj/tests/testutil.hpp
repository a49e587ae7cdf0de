#pragma once

#include "npmesh/mesh.hpp"
#include "npmesh/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace npmesh::testutil {

inline HalfEdgeMesh make_tetrahedron() {
  MatX3d V(4, 3);
  V << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
  MatX3i F(4, 3);
  F << 0, 2, 1, 0, 1, 3, 0, 3, 2, 1, 2, 3;
  return HalfEdgeMesh(V, F);
}

inline HalfEdgeMesh make_octahedron() {
  MatX3d V(6, 3);
  V << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1;
  MatX3i F(8, 3);
  F << 0, 2, 4, 2, 1, 4, 1, 3, 4, 3, 0, 4, 2, 0, 5, 1, 2, 5, 3, 1, 5, 0, 3, 5;
  return HalfEdgeMesh(V, F);
}

inline HalfEdgeMesh make_icosahedron() {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  MatX3d V(12, 3);
  V << -1, t, 0, 1, t, 0, -1, -t, 0, 1, -t, 0, 0, -1, t, 0, 1, t, 0, -1, -t, 0, 1, -t,
      t, 0, -1, t, 0, 1, -t, 0, -1, -t, 0, 1;
  MatX3i F(20, 3);
  F << 0, 11, 5, 0, 5, 1, 0, 1, 7, 0, 7, 10, 0, 10, 11, 1, 5, 9, 5, 11, 4, 11, 10, 2,
      10, 7, 6, 7, 1, 8, 3, 9, 4, 3, 4, 2, 3, 2, 6, 3, 6, 8, 3, 8, 9, 4, 9, 5, 2, 4, 11,
      6, 2, 10, 8, 6, 7, 9, 8, 1;
  return HalfEdgeMesh(V, F);
}

// Independent 1-to-4 midpoint refinement (kept separate from the library so
// subdivision tests have their own reference path).
inline HalfEdgeMesh refine_midpoint(const HalfEdgeMesh& mesh) {
  const MatX3d& V = mesh.vertices();
  const MatX3i& F = mesh.faces();
  std::map<std::pair<int, int>, int> mid;
  std::vector<Vec3> pts;
  for (int v = 0; v < mesh.num_vertices(); ++v) pts.push_back(V.row(v));
  auto midpoint = [&](int a, int b) {
    auto key = std::make_pair(std::min(a, b), std::max(a, b));
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    int id = static_cast<int>(pts.size());
    pts.push_back(0.5 * (Vec3(V.row(a)) + Vec3(V.row(b))));
    mid[key] = id;
    return id;
  };
  MatX3i Fn(4 * F.rows(), 3);
  for (int f = 0; f < F.rows(); ++f) {
    int a = F(f, 0), b = F(f, 1), c = F(f, 2);
    int ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
    Fn.row(4 * f + 0) << a, ab, ca;
    Fn.row(4 * f + 1) << b, bc, ab;
    Fn.row(4 * f + 2) << c, ca, bc;
    Fn.row(4 * f + 3) << ab, bc, ca;
  }
  MatX3d Vn(pts.size(), 3);
  for (size_t i = 0; i < pts.size(); ++i) Vn.row(i) = pts[i];
  return HalfEdgeMesh(Vn, Fn);
}

// Geodesic sphere of the given radius; refinements of the icosahedron with
// vertices pushed onto the sphere.
inline HalfEdgeMesh make_icosphere(int refinements, double radius = 1.0) {
  HalfEdgeMesh m = make_icosahedron();
  for (int i = 0; i < refinements; ++i) m = refine_midpoint(m);
  MatX3d V = m.vertices();
  for (int v = 0; v < V.rows(); ++v) V.row(v) = radius * V.row(v).normalized();
  return HalfEdgeMesh(V, m.faces());
}

inline HalfEdgeMesh make_torus(int nu = 16, int nv = 8, double R = 1.0, double r = 0.35) {
  MatX3d V(nu * nv, 3);
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      double u = 2.0 * M_PI * i / nu, v = 2.0 * M_PI * j / nv;
      V.row(i * nv + j) << (R + r * std::cos(v)) * std::cos(u),
          (R + r * std::cos(v)) * std::sin(u), r * std::sin(v);
    }
  MatX3i F(2 * nu * nv, 3);
  int f = 0;
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      int a = i * nv + j, b = ((i + 1) % nu) * nv + j;
      int c = ((i + 1) % nu) * nv + (j + 1) % nv, d = i * nv + (j + 1) % nv;
      F.row(f++) << a, b, c;
      F.row(f++) << a, c, d;
    }
  return HalfEdgeMesh(V, F);
}

// Smooth sphere deformation with seed-dependent lobes; stays star-shaped.
inline HalfEdgeMesh make_blob(uint64_t seed, int refinements = 3) {
  HalfEdgeMesh sphere = make_icosphere(refinements);
  Rng rng(seed);
  double a1 = rng.uniform(0.05, 0.25), a2 = rng.uniform(0.05, 0.2);
  double p1 = rng.uniform(0, 2 * M_PI), p2 = rng.uniform(0, 2 * M_PI);
  int k1 = 2 + static_cast<int>(rng.uniform_index(3));
  int k2 = 2 + static_cast<int>(rng.uniform_index(4));
  MatX3d V = sphere.vertices();
  for (int v = 0; v < V.rows(); ++v) {
    Vec3 d = Vec3(V.row(v)).normalized();
    double theta = std::atan2(d.y(), d.x()), phi = std::acos(std::clamp(d.z(), -1.0, 1.0));
    double rad = 1.0 + a1 * std::sin(k1 * theta + p1) * std::sin(phi) +
                 a2 * std::cos(k2 * phi + p2);
    V.row(v) = rad * d;
  }
  return HalfEdgeMesh(V, sphere.faces());
}

class TmpDir {
public:
  explicit TmpDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("npmesh_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter_++));
    std::filesystem::create_directories(path_);
  }
  ~TmpDir() { std::filesystem::remove_all(path_); }

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

} // namespace npmesh::testutil
