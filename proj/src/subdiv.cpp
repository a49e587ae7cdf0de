#include "npmesh/subdiv.hpp"

#include "npmesh/codec.hpp"
#include "npmesh/metrics.hpp"
#include "npmesh/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace npmesh {

namespace {

void require_closed(const HalfEdgeMesh& mesh) {
  if (!mesh.has_full_connectivity())
    throw MeshError("subdivision requires a closed manifold mesh");
}

// third vertex of the face incident to edge (a, b) other than skip_face
int apex_across(const HalfEdgeMesh& mesh, int a, int b, int skip_face) {
  for (int f : mesh.vertex_faces()[a]) {
    if (f == skip_face) continue;
    const auto& F = mesh.faces();
    for (int k = 0; k < 3; ++k) {
      int u = F(f, k), v = F(f, (k + 1) % 3);
      if ((u == a && v == b) || (u == b && v == a)) return F(f, (k + 2) % 3);
    }
  }
  throw MeshError("apex_across: edge has no second incident face");
}

// half-edge with the given origin and destination
int find_halfedge(const HalfEdgeMesh& mesh, int from, int to) {
  for (int f : mesh.vertex_faces()[from]) {
    for (int k = 0; k < 3; ++k) {
      int h = 3 * f + k;
      if (mesh.origin(h) == from && mesh.dest(h) == to) return h;
    }
  }
  throw MeshError("find_halfedge: vertices not adjacent");
}

// one-ring of v ordered by rotation, starting at the neighbor `start`
std::vector<int> ordered_ring(const HalfEdgeMesh& mesh, int v, int start) {
  std::vector<int> ring;
  int h0 = find_halfedge(mesh, v, start);
  int h = h0;
  do {
    ring.push_back(mesh.dest(h));
    h = mesh.twin(mesh.next(mesh.next(h)));
    if (h < 0) throw MeshError("ordered_ring: boundary edge encountered");
  } while (h != h0);
  return ring;
}

int valence(const HalfEdgeMesh& mesh, int v) {
  return static_cast<int>(mesh.vertex_faces()[v].size());
}

// Zorin one-ring edge stencil centered at v, ring starting at the opposite
// endpoint: q = 3/4 v + sum_j s_j r_j.
Vec3 butterfly_irregular_point(const HalfEdgeMesh& mesh, int v, int other) {
  std::vector<int> ring = ordered_ring(mesh, v, other);
  const int n = static_cast<int>(ring.size());
  Vec3 q = 0.75 * mesh.position(v);
  auto s = [&](int j) -> double {
    if (n == 3) return j == 0 ? 5.0 / 12.0 : -1.0 / 12.0;
    if (n == 4) return j == 0 ? 3.0 / 8.0 : (j == 2 ? -1.0 / 8.0 : 0.0);
    return (0.25 + std::cos(2.0 * M_PI * j / n) + 0.5 * std::cos(4.0 * M_PI * j / n)) / n;
  };
  for (int j = 0; j < n; ++j) q += s(j) * mesh.position(ring[j]);
  return q;
}

Vec3 butterfly_regular_point(const HalfEdgeMesh& mesh, int a, int b) {
  int h = find_halfedge(mesh, a, b);
  int f1 = mesh.face_of(h), f2 = mesh.face_of(mesh.twin(h));
  const auto& F = mesh.faces();
  auto third = [&](int f) {
    for (int k = 0; k < 3; ++k)
      if (F(f, k) != a && F(f, k) != b) return F(f, k);
    throw MeshError("degenerate face in butterfly stencil");
  };
  int c = third(f1), d = third(f2);
  int e1 = apex_across(mesh, a, c, f1);
  int e2 = apex_across(mesh, b, c, f1);
  int e3 = apex_across(mesh, a, d, f2);
  int e4 = apex_across(mesh, b, d, f2);
  return 0.5 * (mesh.position(a) + mesh.position(b)) +
         0.125 * (mesh.position(c) + mesh.position(d)) -
         0.0625 * (mesh.position(e1) + mesh.position(e2) + mesh.position(e3) +
                   mesh.position(e4));
}

HalfEdgeMesh subdivide_once(const HalfEdgeMesh& mesh, SubdivisionScheme scheme) {
  require_closed(mesh);
  SubdivisionStep step = subdivide_connectivity(mesh.faces(), mesh.num_vertices());

  MatX3d V(step.num_vertices, 3);
  const int nv = mesh.num_vertices();

  if (scheme == SubdivisionScheme::kLoop) {
    for (int v = 0; v < nv; ++v) {
      // neighbors via incident faces
      std::vector<int> nbrs;
      for (int f : mesh.vertex_faces()[v])
        for (int k = 0; k < 3; ++k) {
          int u = mesh.faces()(f, k);
          if (u != v && std::find(nbrs.begin(), nbrs.end(), u) == nbrs.end()) nbrs.push_back(u);
        }
      const int n = static_cast<int>(nbrs.size());
      double beta = loop_beta(n);
      Vec3 p = (1.0 - n * beta) * mesh.position(v);
      for (int u : nbrs) p += beta * mesh.position(u);
      V.row(v) = p;
    }
  } else {
    V.topRows(nv) = mesh.vertices();
  }

  for (const auto& [edge, midx] : step.edge_midpoints) {
    const int a = edge.first, b = edge.second;
    Vec3 p;
    switch (scheme) {
      case SubdivisionScheme::kMidpoint:
        p = (mesh.position(a) + mesh.position(b)) * 0.5;
        break;
      case SubdivisionScheme::kLoop: {
        int h = find_halfedge(mesh, a, b);
        int c = apex_across(mesh, a, b, mesh.face_of(h));
        const auto& F = mesh.faces();
        int f1 = mesh.face_of(h);
        int d = -1;
        for (int k = 0; k < 3; ++k)
          if (F(f1, k) != a && F(f1, k) != b) d = F(f1, k);
        p = 0.375 * (mesh.position(a) + mesh.position(b)) +
            0.125 * (mesh.position(c) + mesh.position(d));
        break;
      }
      case SubdivisionScheme::kButterfly: {
        const int na = valence(mesh, a), nb = valence(mesh, b);
        if (na == 6 && nb == 6) {
          p = butterfly_regular_point(mesh, a, b);
        } else if (na != 6 && nb == 6) {
          p = butterfly_irregular_point(mesh, a, b);
        } else if (na == 6 && nb != 6) {
          p = butterfly_irregular_point(mesh, b, a);
        } else {
          p = 0.5 * (butterfly_irregular_point(mesh, a, b) +
                     butterfly_irregular_point(mesh, b, a));
        }
        break;
      }
    }
    V.row(midx) = p;
  }

  return HalfEdgeMesh(std::move(V), step.faces);
}

} // namespace

double loop_beta(int n) {
  double t = 0.375 + 0.25 * std::cos(2.0 * M_PI / n);
  return (0.625 - t * t) / n;
}

HalfEdgeMesh subdivide(const HalfEdgeMesh& mesh, SubdivisionScheme scheme, int levels) {
  if (levels < 1) throw MeshError("subdivide: level count must be >= 1");
  HalfEdgeMesh out = mesh;
  for (int i = 0; i < levels; ++i) out = subdivide_once(out, scheme);
  return out;
}

HalfEdgeMesh midpoint_subdivide(const HalfEdgeMesh& mesh, int levels) {
  return subdivide(mesh, SubdivisionScheme::kMidpoint, levels);
}

HalfEdgeMesh loop_subdivide(const HalfEdgeMesh& mesh, int levels) {
  return subdivide(mesh, SubdivisionScheme::kLoop, levels);
}

HalfEdgeMesh butterfly_subdivide(const HalfEdgeMesh& mesh, int levels) {
  return subdivide(mesh, SubdivisionScheme::kButterfly, levels);
}

std::vector<BenchmarkRow> run_benchmark(const std::vector<BenchmarkInput>& inputs,
                                        ParamStore& params,
                                        const std::vector<std::string>& methods,
                                        const std::vector<size_t>& budgets, int samples,
                                        uint64_t seed, int threads) {
  std::vector<BenchmarkRow> rows;
  for (const BenchmarkInput& in : inputs) {
    const HalfEdgeMesh& coarse = in.hierarchy.level_mesh(0);
    const int L = in.hierarchy.L;
    const double cr_coarse =
        compression_ratio(in.original.num_vertices(), coarse.num_vertices(), 0);

    for (const std::string& m : methods) {
      if (m == "neural") continue;
      HalfEdgeMesh sub;
      if (m == "qslim") {
        sub = coarse;
      } else if (m == "midpoint") {
        sub = midpoint_subdivide(coarse, L);
      } else if (m == "loop") {
        sub = loop_subdivide(coarse, L);
      } else if (m == "butterfly") {
        sub = butterfly_subdivide(coarse, L);
      } else {
        throw MeshError("unknown benchmark method: " + m);
      }
      PairMetrics pm = surface_metrics(sub, in.original, samples, seed, threads);
      rows.push_back({in.name, m, 0, cr_coarse, pm.d_pm, pm.d_normal});
    }

    if (std::find(methods.begin(), methods.end(), "neural") == methods.end()) continue;

    Tape tape;
    ModelContext ctx(tape, params, false, false);
    ForwardResult fwd = network_forward(ctx, in.hierarchy);
    std::vector<Eigen::MatrixXd> learned;
    for (const Tensor& t : fwd.learned) learned.push_back(t.value());
    std::vector<FeatureRecord> ranked = rank_features_magnitude(learned);

    for (size_t k : budgets) {
      if (k > ranked.size()) k = ranked.size();
      std::vector<Eigen::MatrixXd> masked;
      for (int i = 0; i < L; ++i)
        masked.push_back(Eigen::MatrixXd::Zero(learned[i].rows(), kLearnedFeatureDim));
      for (size_t i = 0; i < k; ++i) {
        const FeatureRecord& r = ranked[i];
        for (int j = 0; j < kLearnedFeatureDim; ++j)
          masked[r.level](r.face, j) = static_cast<double>(r.values[j]);
      }
      Tape dt;
      ModelContext dctx(dt, params, false, false);
      std::vector<Tensor> mt;
      for (int i = 0; i < L; ++i) mt.push_back(dt.input(masked[i]));
      DecoderResult dec = decoder_forward(dctx, coarse, mt, L);
      HalfEdgeMesh pred(dec.pred_vertices.back().value(), dec.faces.back());
      PairMetrics pm = surface_metrics(pred, in.original, samples, seed, threads);
      double cr = compression_ratio(in.original.num_vertices(), coarse.num_vertices(), k);
      rows.push_back({in.name, "neural", k, cr, pm.d_pm, pm.d_normal});
    }
  }
  return rows;
}

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream out;
  out << "mesh,method,budget,CR,d_pm,d_normal\n";
  char buf[64];
  for (const BenchmarkRow& r : rows) {
    out << r.mesh << ',' << r.method << ',' << r.budget << ',';
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g", r.cr, r.d_pm, r.d_normal);
    out << buf << '\n';
  }
  return out.str();
}

} // namespace npmesh
