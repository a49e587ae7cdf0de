#include "npmesh/lod.hpp"

#include "npmesh/bvh.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>

namespace npmesh {

namespace {

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

Vec3 bary_in_triangle_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                         const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  double d = cross2(b - a, c - a);
  if (std::abs(d) < 1e-300) return Vec3(-1, -1, -1);
  double w0 = cross2(b - p, c - p) / d;
  double w1 = cross2(c - p, a - p) / d;
  return Vec3(w0, w1, 1.0 - w0 - w1);
}

Vec3 clamp_bary(Vec3 b) {
  b = b.cwiseMax(0.0);
  double s = b.sum();
  if (s <= 0) return Vec3(1.0 / 3, 1.0 / 3, 1.0 / 3);
  return b / s;
}

// Least-squares conformal flattening of a small patch. local triangles index
// into positions; two pinned vertices fix the similarity. Returns false when
// the solve degenerates or the flattening folds.
bool lscm_flatten(const std::vector<Vec3>& positions,
                  const std::vector<std::array<int, 3>>& triangles,
                  const std::vector<int>& pin_candidates, std::vector<Eigen::Vector2d>& uv_out) {
  const int n = static_cast<int>(positions.size());
  const int m = static_cast<int>(triangles.size());
  if (n < 3 || m < 1 || pin_candidates.size() < 2) return false;

  // pin the two candidates farthest apart
  int p0 = pin_candidates[0], p1 = pin_candidates[1];
  double best = -1;
  for (size_t i = 0; i < pin_candidates.size(); ++i)
    for (size_t j = i + 1; j < pin_candidates.size(); ++j) {
      double d = (positions[pin_candidates[i]] - positions[pin_candidates[j]]).squaredNorm();
      if (d > best) {
        best = d;
        p0 = pin_candidates[i];
        p1 = pin_candidates[j];
      }
    }
  if (best <= 0) return false;

  std::vector<int> col(n, -1); // free-vertex column index
  int nf = 0;
  for (int v = 0; v < n; ++v)
    if (v != p0 && v != p1) col[v] = nf++;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * m, 2 * nf);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * m);
  Eigen::Vector2d pin0(0, 0), pin1(std::sqrt(best), 0);

  for (int t = 0; t < m; ++t) {
    const auto& tri = triangles[t];
    Vec3 q0 = positions[tri[0]], q1 = positions[tri[1]], q2 = positions[tri[2]];
    Vec3 e1 = q1 - q0, e2 = q2 - q0;
    double x1 = e1.norm();
    if (x1 < 1e-300) return false;
    Vec3 ex = e1 / x1;
    Vec3 nrm = e1.cross(e2);
    double a2 = nrm.norm();
    if (a2 < 1e-300) return false;
    Vec3 ey = (nrm / a2).cross(ex);
    Eigen::Vector2d l0(0, 0), l1(x1, 0), l2(e2.dot(ex), e2.dot(ey));
    double scale = 1.0 / std::sqrt(a2); // 1/sqrt(2*area)
    // W_v = (l_{v+2} - l_{v+1}) as a complex coefficient, rotated by i
    Eigen::Vector2d W[3] = {l2 - l1, l0 - l2, l1 - l0};
    for (int v = 0; v < 3; ++v) {
      // real part row 2t, imaginary part row 2t+1 of W_v * (u + i w)
      double wr = W[v].x() * scale, wi = W[v].y() * scale;
      int g = tri[v];
      if (col[g] >= 0) {
        A(2 * t, 2 * col[g]) += wr;
        A(2 * t, 2 * col[g] + 1) += -wi;
        A(2 * t + 1, 2 * col[g]) += wi;
        A(2 * t + 1, 2 * col[g] + 1) += wr;
      } else {
        Eigen::Vector2d pv = g == p0 ? pin0 : pin1;
        rhs(2 * t) -= wr * pv.x() - wi * pv.y();
        rhs(2 * t + 1) -= wi * pv.x() + wr * pv.y();
      }
    }
  }

  Eigen::VectorXd sol;
  if (nf > 0) {
    sol = A.colPivHouseholderQr().solve(rhs);
    if (!sol.allFinite()) return false;
  }

  uv_out.assign(n, Eigen::Vector2d::Zero());
  uv_out[p0] = pin0;
  uv_out[p1] = pin1;
  for (int v = 0; v < n; ++v)
    if (col[v] >= 0) uv_out[v] = Eigen::Vector2d(sol(2 * col[v]), sol(2 * col[v] + 1));

  // all triangles must keep one orientation; flip globally if needed
  int sign = 0;
  for (const auto& tri : triangles) {
    double s = cross2(uv_out[tri[1]] - uv_out[tri[0]], uv_out[tri[2]] - uv_out[tri[0]]);
    if (std::abs(s) < 1e-14) return false;
    int cur = s > 0 ? 1 : -1;
    if (sign == 0) sign = cur;
    if (cur != sign) return false;
  }
  if (sign < 0)
    for (auto& p : uv_out) p.y() = -p.y();
  return true;
}

struct DecimationPool {
  std::vector<Vec3> pos;
  std::vector<std::array<int, 3>> tri;
  std::vector<bool> face_alive, vert_alive;
  std::vector<std::vector<int>> vfaces; // sorted
  std::vector<Eigen::Matrix4d> quadric;
  std::vector<int> version;

  std::vector<int> neighbors(int v) const {
    std::set<int> out;
    for (int f : vfaces[v])
      for (int k = 0; k < 3; ++k)
        if (tri[f][k] != v) out.insert(tri[f][k]);
    return {out.begin(), out.end()};
  }

  std::vector<int> shared_faces(int a, int b) const {
    std::vector<int> out;
    std::set_intersection(vfaces[a].begin(), vfaces[a].end(), vfaces[b].begin(), vfaces[b].end(),
                          std::back_inserter(out));
    return out;
  }
};

struct Candidate {
  double priority;
  double cost;
  int a, b;
  int stamp;
  Vec3 placement;
  bool operator>(const Candidate& o) const {
    if (priority != o.priority) return priority > o.priority;
    if (a != o.a) return a > o.a;
    return b > o.b;
  }
};

double quadric_eval(const Eigen::Matrix4d& q, const Vec3& p) {
  Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
  return h.dot(q * h);
}

std::pair<double, Vec3> plan_placement(const Eigen::Matrix4d& q, const Vec3& pa, const Vec3& pb) {
  Eigen::Matrix3d A = q.topLeftCorner<3, 3>();
  Vec3 rhs = -q.block<3, 1>(0, 3);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  double smin = svd.singularValues()(2), smax = svd.singularValues()(0);
  if (smin > 0 && smax / smin < 1e8) {
    Vec3 w = svd.solve(rhs);
    return {quadric_eval(q, w), w};
  }
  Vec3 cands[3] = {pa, pb, 0.5 * (pa + pb)};
  double best = std::numeric_limits<double>::infinity();
  Vec3 bw = pa;
  for (const Vec3& w : cands) {
    double c = quadric_eval(q, w);
    if (c < best) {
      best = c;
      bw = w;
    }
  }
  return {best, bw};
}

} // namespace

DecimationResult quadric_decimate(const HalfEdgeMesh& mesh, int target_faces, uint64_t seed,
                                  double jitter) {
  if (target_faces < 4 || target_faces > mesh.num_faces())
    throw MeshError("decimation target out of range");
  if (jitter < 0 || jitter >= 1) throw MeshError("jitter must be in [0, 1)");
  if (!mesh.has_full_connectivity())
    throw MeshError("decimation requires a closed manifold mesh");

  const int nv = mesh.num_vertices(), nf = mesh.num_faces();
  DecimationPool p;
  p.pos.resize(nv);
  for (int v = 0; v < nv; ++v) p.pos[v] = mesh.position(v);
  p.tri.resize(nf);
  for (int f = 0; f < nf; ++f)
    p.tri[f] = {mesh.faces()(f, 0), mesh.faces()(f, 1), mesh.faces()(f, 2)};
  p.face_alive.assign(nf, true);
  p.vert_alive.assign(nv, true);
  p.vfaces.assign(nv, {});
  for (int f = 0; f < nf; ++f)
    for (int k = 0; k < 3; ++k) p.vfaces[p.tri[f][k]].push_back(f);
  for (auto& vf : p.vfaces) std::sort(vf.begin(), vf.end());
  p.version.assign(nv, 0);

  p.quadric.assign(nv, Eigen::Matrix4d::Zero());
  for (int f = 0; f < nf; ++f) {
    Vec3 a = p.pos[p.tri[f][0]], b = p.pos[p.tri[f][1]], c = p.pos[p.tri[f][2]];
    Vec3 cr = (b - a).cross(c - a);
    double area = 0.5 * cr.norm();
    if (area < 1e-300) continue;
    Vec3 n = cr.normalized();
    Eigen::Vector4d plane(n.x(), n.y(), n.z(), -n.dot(a));
    Eigen::Matrix4d k = area * (plane * plane.transpose());
    for (int j = 0; j < 3; ++j) p.quadric[p.tri[f][j]] += k;
  }

  const double area_eps = 1e-12 * bbox_diagonal(mesh) * bbox_diagonal(mesh);
  Rng rng(seed);
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<Candidate>> heap;

  auto push_edge = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    auto [cost, w] = plan_placement(p.quadric[a] + p.quadric[b], p.pos[a], p.pos[b]);
    double pri = cost;
    if (jitter > 0) pri *= rng.uniform(1.0, 1.0 + jitter);
    heap.push({pri, cost, a, b, p.version[a] + p.version[b], w});
  };

  auto seed_all_edges = [&]() {
    std::set<std::pair<int, int>> seen;
    for (int v = 0; v < nv; ++v) {
      if (!p.vert_alive[v]) continue;
      for (int n : p.neighbors(v)) {
        auto key = std::pair<int, int>(std::min(v, n), std::max(v, n));
        if (seen.insert(key).second) push_edge(key.first, key.second);
      }
    }
  };
  for (auto& [a, b] : mesh.edges()) push_edge(a, b);

  int alive_faces = nf;
  std::vector<CollapseRecord> records;
  bool reseeded = false;

  while (alive_faces > target_faces + 1) {
    if (heap.empty()) {
      if (reseeded) break;
      seed_all_edges();
      reseeded = true;
      if (heap.empty()) break;
    }
    Candidate cand = heap.top();
    heap.pop();
    int u = cand.a, v = cand.b;
    if (!p.vert_alive[u] || !p.vert_alive[v]) continue;
    if (cand.stamp != p.version[u] + p.version[v]) continue;

    auto shared = p.shared_faces(u, v);
    if (shared.size() != 2) continue;

    // link condition: common neighbors must be exactly the two apex vertices
    auto nu = p.neighbors(u), nv_ = p.neighbors(v);
    std::vector<int> common;
    std::set_intersection(nu.begin(), nu.end(), nv_.begin(), nv_.end(),
                          std::back_inserter(common));
    std::set<int> apex;
    for (int f : shared)
      for (int k = 0; k < 3; ++k)
        if (p.tri[f][k] != u && p.tri[f][k] != v) apex.insert(p.tri[f][k]);
    if (common.size() != apex.size() ||
        !std::equal(common.begin(), common.end(), apex.begin()))
      continue;

    // orientation guard: no surviving face may flip or degenerate
    const Vec3 w = cand.placement;
    bool flips = false;
    std::vector<int> pre_faces;
    std::set_union(p.vfaces[u].begin(), p.vfaces[u].end(), p.vfaces[v].begin(),
                   p.vfaces[v].end(), std::back_inserter(pre_faces));
    for (int f : pre_faces) {
      if (std::find(shared.begin(), shared.end(), f) != shared.end()) continue;
      Vec3 c0[3], c1[3];
      for (int k = 0; k < 3; ++k) {
        int vid = p.tri[f][k];
        c0[k] = p.pos[vid];
        c1[k] = (vid == u || vid == v) ? w : p.pos[vid];
      }
      Vec3 n0 = (c0[1] - c0[0]).cross(c0[2] - c0[0]);
      Vec3 n1 = (c1[1] - c1[0]).cross(c1[2] - c1[0]);
      if (0.5 * n1.norm() <= area_eps || n0.dot(n1) <= 0) {
        flips = true;
        break;
      }
    }
    if (flips) continue;

    // ---- accepted: build the record ----
    CollapseRecord rec;
    rec.kept_vertex = u;
    rec.removed_vertex = v;
    rec.placed_position = w;
    rec.quadric_cost = cand.cost;
    rec.pre_face_ids = pre_faces;

    std::set<int> pv_set;
    for (int f : pre_faces)
      for (int k = 0; k < 3; ++k) pv_set.insert(p.tri[f][k]);
    rec.patch_vertices.assign(pv_set.begin(), pv_set.end());
    std::vector<int> local(nv, -1);
    for (size_t i = 0; i < rec.patch_vertices.size(); ++i) local[rec.patch_vertices[i]] = (int)i;
    rec.patch_positions.resize(rec.patch_vertices.size());
    for (size_t i = 0; i < rec.patch_vertices.size(); ++i)
      rec.patch_positions[i] = p.pos[rec.patch_vertices[i]];
    for (int f : pre_faces)
      rec.pre_face_local.push_back(
          {local[p.tri[f][0]], local[p.tri[f][1]], local[p.tri[f][2]]});

    std::vector<int> pins; // ring vertices (everything but the edge endpoints)
    for (int pvid : rec.patch_vertices)
      if (pvid != u && pvid != v) pins.push_back(local[pvid]);
    rec.flatten_ok =
        lscm_flatten(rec.patch_positions, rec.pre_face_local, pins, rec.uv);

    // prospective post faces (v merged into u), local id -1 = kept vertex
    for (int f : pre_faces) {
      if (std::find(shared.begin(), shared.end(), f) != shared.end()) continue;
      rec.post_face_ids.push_back(f);
      std::array<int, 3> loc{};
      for (int k = 0; k < 3; ++k) {
        int vid = p.tri[f][k];
        loc[k] = (vid == u || vid == v) ? -1 : local[vid];
      }
      rec.post_face_local.push_back(loc);
    }

    if (rec.flatten_ok) {
      auto post_ok = [&](const Eigen::Vector2d& wp) {
        for (const auto& loc : rec.post_face_local) {
          Eigen::Vector2d q[3];
          for (int k = 0; k < 3; ++k) q[k] = loc[k] < 0 ? wp : rec.uv[loc[k]];
          if (cross2(q[1] - q[0], q[2] - q[0]) <= 1e-14) return false;
        }
        return true;
      };
      Eigen::Vector2d wp = 0.5 * (rec.uv[local[u]] + rec.uv[local[v]]);
      if (!post_ok(wp)) {
        // retry from the ring average
        Eigen::Vector2d acc = Eigen::Vector2d::Zero();
        int cnt = 0;
        for (int lp : pins) {
          acc += rec.uv[lp];
          ++cnt;
        }
        wp = acc / std::max(cnt, 1);
        if (!post_ok(wp)) rec.flatten_ok = false;
      }
      rec.uv_kept = wp;
    }

    // ---- apply the collapse ----
    p.pos[u] = w;
    for (int f : shared) {
      p.face_alive[f] = false;
      for (int k = 0; k < 3; ++k) {
        auto& vf = p.vfaces[p.tri[f][k]];
        vf.erase(std::remove(vf.begin(), vf.end(), f), vf.end());
      }
    }
    for (int f : p.vfaces[v]) {
      for (int k = 0; k < 3; ++k)
        if (p.tri[f][k] == v) p.tri[f][k] = u;
      p.vfaces[u].push_back(f);
    }
    std::sort(p.vfaces[u].begin(), p.vfaces[u].end());
    p.vfaces[u].erase(std::unique(p.vfaces[u].begin(), p.vfaces[u].end()), p.vfaces[u].end());
    p.vfaces[v].clear();
    p.vert_alive[v] = false;
    p.quadric[u] += p.quadric[v];
    p.version[u]++;
    p.version[v]++;
    alive_faces -= static_cast<int>(shared.size());
    records.push_back(std::move(rec));
    reseeded = false;

    for (int n : p.neighbors(u)) push_edge(std::min(u, n), std::max(u, n));
  }

  if (alive_faces > target_faces + 2)
    throw MeshError("cannot reach decimation target without breaking manifoldness (stuck at " +
                    std::to_string(alive_faces) + " faces)");

  // compact the surviving mesh
  DecimationResult out;
  std::vector<int> vmap(nv, -1);
  std::vector<Vec3> cv;
  for (int v = 0; v < nv; ++v)
    if (p.vert_alive[v]) {
      vmap[v] = static_cast<int>(cv.size());
      cv.push_back(p.pos[v]);
      out.coarse_vertex_to_pool.push_back(v);
    }
  std::vector<std::array<int, 3>> cf;
  for (int f = 0; f < nf; ++f)
    if (p.face_alive[f]) {
      cf.push_back({vmap[p.tri[f][0]], vmap[p.tri[f][1]], vmap[p.tri[f][2]]});
      out.coarse_face_to_pool.push_back(f);
    }
  MatX3d V(cv.size(), 3);
  for (size_t i = 0; i < cv.size(); ++i) V.row(i) = cv[i];
  MatX3i F(cf.size(), 3);
  for (size_t i = 0; i < cf.size(); ++i) F.row(i) << cf[i][0], cf[i][1], cf[i][2];
  out.coarse = HalfEdgeMesh(std::move(V), std::move(F));
  out.records = std::move(records);
  return out;
}

SurfaceMap build_surface_map(const DecimationResult& decimation) {
  SurfaceMap map;
  map.records = decimation.records;
  map.coarse_face_to_pool = decimation.coarse_face_to_pool;
  for (const auto& r : map.records)
    if (!r.flatten_ok) map.flatten_failures++;
  return map;
}

namespace {

// Pull a surface point on the post-collapse patch back to the pre-collapse
// patch of one record.
SurfacePoint unwind_record(const CollapseRecord& rec, int local_post_idx, const Vec3& bary) {
  if (rec.flatten_ok) {
    const auto& loc = rec.post_face_local[local_post_idx];
    Eigen::Vector2d pt = Eigen::Vector2d::Zero();
    for (int k = 0; k < 3; ++k)
      pt += bary[k] * (loc[k] < 0 ? rec.uv_kept : rec.uv[loc[k]]);

    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    Vec3 best_bary = Vec3::Zero();
    for (size_t f = 0; f < rec.pre_face_ids.size(); ++f) {
      const auto& l = rec.pre_face_local[f];
      Vec3 b = bary_in_triangle_2d(pt, rec.uv[l[0]], rec.uv[l[1]], rec.uv[l[2]]);
      double score = b.minCoeff();
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(f);
        best_bary = b;
      }
    }
    return {rec.pre_face_ids[best], clamp_bary(best_bary)};
  }

  // projection fallback: closest point on the pre patch in 3D
  const auto& loc = rec.post_face_local[local_post_idx];
  Vec3 p = Vec3::Zero();
  for (int k = 0; k < 3; ++k)
    p += bary[k] * (loc[k] < 0 ? rec.placed_position : rec.patch_positions[loc[k]]);
  int best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  Vec3 best_bary = Vec3(1, 0, 0);
  for (size_t f = 0; f < rec.pre_face_ids.size(); ++f) {
    const auto& l = rec.pre_face_local[f];
    auto [pt, b] = closest_point_on_triangle(p, rec.patch_positions[l[0]],
                                             rec.patch_positions[l[1]], rec.patch_positions[l[2]]);
    double d2 = (pt - p).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<int>(f);
      best_bary = b;
    }
  }
  return {rec.pre_face_ids[best], clamp_bary(best_bary)};
}

} // namespace

SurfacePoint map_to_original(const SurfaceMap& map, const SurfacePoint& on_coarse) {
  SurfacePoint cur;
  cur.face = map.coarse_face_to_pool.empty() ? on_coarse.face
                                             : map.coarse_face_to_pool[on_coarse.face];
  cur.bary = on_coarse.bary;
  for (auto it = map.records.rbegin(); it != map.records.rend(); ++it) {
    const auto& rec = *it;
    auto pos = std::lower_bound(rec.post_face_ids.begin(), rec.post_face_ids.end(), cur.face);
    if (pos == rec.post_face_ids.end() || *pos != cur.face) continue;
    cur = unwind_record(rec, static_cast<int>(pos - rec.post_face_ids.begin()), cur.bary);
  }
  return cur;
}

SubdivisionStep subdivide_connectivity(const MatX3i& faces, int num_vertices) {
  SubdivisionStep step;
  const int nf = static_cast<int>(faces.rows());

  std::set<std::pair<int, int>> edge_set;
  for (int f = 0; f < nf; ++f)
    for (int k = 0; k < 3; ++k) {
      int a = faces(f, k), b = faces(f, (k + 1) % 3);
      edge_set.insert({std::min(a, b), std::max(a, b)});
    }
  std::map<std::pair<int, int>, int> midpoint;
  int next = num_vertices;
  for (const auto& e : edge_set) { // std::set iterates in sorted order
    midpoint[e] = next;
    step.edge_midpoints.push_back({e, next});
    ++next;
  }
  step.num_vertices = next;

  step.faces.resize(4 * nf, 3);
  step.parent_children.resize(nf);
  for (int f = 0; f < nf; ++f) {
    int a = faces(f, 0), b = faces(f, 1), c = faces(f, 2);
    auto mid = [&](int x, int y) { return midpoint.at({std::min(x, y), std::max(x, y)}); };
    int mab = mid(a, b), mbc = mid(b, c), mca = mid(c, a);
    int base = 4 * f;
    step.faces.row(base + 0) << a, mab, mca;
    step.faces.row(base + 1) << b, mbc, mab;
    step.faces.row(base + 2) << c, mca, mbc;
    step.faces.row(base + 3) << mab, mbc, mca;
    step.parent_children[f] = {base, base + 1, base + 2, base + 3};
  }
  return step;
}

LodHierarchy build_hierarchy(const HalfEdgeMesh& mesh, int target_faces, int levels,
                             uint64_t seed, double jitter) {
  ValidationReport vr = validate(mesh);
  if (!vr.ok()) throw MeshError("hierarchy input failed validation");

  LodHierarchy h;
  h.L = levels;

  DecimationResult dec = mesh.num_faces() <= target_faces
                             ? DecimationResult{mesh, {}, {}, {}}
                             : quadric_decimate(mesh, target_faces, seed, jitter);
  if (dec.coarse_face_to_pool.empty() && mesh.num_faces() <= target_faces) {
    dec.coarse_face_to_pool.resize(mesh.num_faces());
    for (int f = 0; f < mesh.num_faces(); ++f) dec.coarse_face_to_pool[f] = f;
  }
  h.map = build_surface_map(dec);

  const HalfEdgeMesh& coarse = dec.coarse;
  const int ncv = coarse.num_vertices();

  // canonical domain point per coarse vertex: corner of its lowest incident face
  std::vector<SurfacePoint> domain0(ncv);
  for (int v = 0; v < ncv; ++v) {
    const auto& inc = coarse.vertex_faces()[v];
    int f = *std::min_element(inc.begin(), inc.end());
    Vec3 b = Vec3::Zero();
    for (int k = 0; k < 3; ++k)
      if (coarse.faces()(f, k) == v) b[k] = 1.0;
    domain0[v] = {f, b};
  }

  // vertices of every level are pulled onto the original surface
  auto place = [&](const SurfacePoint& dp) {
    SurfacePoint on_orig = map_to_original(h.map, dp);
    return mesh.point_at(on_orig);
  };

  MatX3d V0(ncv, 3);
  for (int v = 0; v < ncv; ++v) V0.row(v) = place(domain0[v]);
  h.levels.push_back({HalfEdgeMesh(V0, coarse.faces()), domain0});

  // per-face domain triangles in the coarse parameter space
  struct FaceDomain {
    int coarse_face;
    Vec3 corner_bary[3];
  };
  std::vector<FaceDomain> fd(coarse.num_faces());
  for (int f = 0; f < coarse.num_faces(); ++f) {
    fd[f].coarse_face = f;
    fd[f].corner_bary[0] = Vec3(1, 0, 0);
    fd[f].corner_bary[1] = Vec3(0, 1, 0);
    fd[f].corner_bary[2] = Vec3(0, 0, 1);
  }

  for (int i = 1; i <= levels; ++i) {
    const LodLevel& prev = h.levels[i - 1];
    SubdivisionStep step = subdivide_connectivity(prev.mesh.faces(), prev.mesh.num_vertices());

    std::vector<SurfacePoint> domain = prev.vertex_domain;
    domain.resize(step.num_vertices);
    MatX3d V(step.num_vertices, 3);
    V.topRows(prev.mesh.num_vertices()) = prev.mesh.vertices();

    // midpoint of each edge in the domain of the edge's lowest incident face
    std::map<std::pair<int, int>, int> edge_face;
    for (int f = 0; f < prev.mesh.num_faces(); ++f)
      for (int k = 0; k < 3; ++k) {
        int a = prev.mesh.faces()(f, k), b = prev.mesh.faces()(f, (k + 1) % 3);
        auto key = std::pair<int, int>(std::min(a, b), std::max(a, b));
        auto it = edge_face.find(key);
        if (it == edge_face.end() || f < it->second) edge_face[key] = f;
      }
    for (const auto& [edge, mid] : step.edge_midpoints) {
      int f = edge_face.at(edge);
      const FaceDomain& d = fd[f];
      Vec3 bary_sum = Vec3::Zero();
      for (int endpoint : {edge.first, edge.second})
        for (int k = 0; k < 3; ++k)
          if (prev.mesh.faces()(f, k) == endpoint) bary_sum += d.corner_bary[k];
      SurfacePoint dp{d.coarse_face, 0.5 * bary_sum};
      domain[mid] = dp;
      V.row(mid) = place(dp);
    }

    // child face domains
    std::vector<FaceDomain> fd_next(step.faces.rows());
    for (int f = 0; f < prev.mesh.num_faces(); ++f) {
      const FaceDomain& d = fd[f];
      Vec3 m01 = 0.5 * (d.corner_bary[0] + d.corner_bary[1]);
      Vec3 m12 = 0.5 * (d.corner_bary[1] + d.corner_bary[2]);
      Vec3 m20 = 0.5 * (d.corner_bary[2] + d.corner_bary[0]);
      auto& ch = step.parent_children[f];
      fd_next[ch[0]] = {d.coarse_face, {d.corner_bary[0], m01, m20}};
      fd_next[ch[1]] = {d.coarse_face, {d.corner_bary[1], m12, m01}};
      fd_next[ch[2]] = {d.coarse_face, {d.corner_bary[2], m20, m12}};
      fd_next[ch[3]] = {d.coarse_face, {m01, m12, m20}};
    }
    fd = std::move(fd_next);

    h.parent_children.push_back(std::move(step.parent_children));
    h.edge_midpoints.push_back(std::move(step.edge_midpoints));
    h.levels.push_back({HalfEdgeMesh(std::move(V), step.faces), std::move(domain)});
  }
  return h;
}

void save_hierarchy_cache(const LodHierarchy& h, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  for (size_t i = 0; i < h.levels.size(); ++i)
    save_obj(h.levels[i].mesh, directory + "/level_" + std::to_string(i) + ".obj");

  nlohmann::json j;
  j["levels"] = h.L;
  j["parent_children"] = h.parent_children;
  nlohmann::json mids = nlohmann::json::array();
  for (const auto& lvl : h.edge_midpoints) {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& [e, v] : lvl) m.push_back({e.first, e.second, v});
    mids.push_back(m);
  }
  j["edge_midpoints"] = mids;
  nlohmann::json doms = nlohmann::json::array();
  for (const auto& lvl : h.levels) {
    nlohmann::json d = nlohmann::json::array();
    for (const auto& sp : lvl.vertex_domain)
      d.push_back({sp.face, sp.bary[0], sp.bary[1], sp.bary[2]});
    doms.push_back(d);
  }
  j["vertex_domains"] = doms;

  std::ofstream out(directory + "/hierarchy.json");
  if (!out) throw MeshError("cannot write hierarchy sidecar");
  out << j.dump(1) << "\n";
}

LodHierarchy load_hierarchy_cache(const std::string& directory) {
  std::ifstream in(directory + "/hierarchy.json");
  if (!in) throw MeshError("cannot open hierarchy sidecar in " + directory);
  nlohmann::json j;
  in >> j;

  LodHierarchy h;
  h.L = j.at("levels").get<int>();
  h.parent_children =
      j.at("parent_children").get<std::vector<std::vector<std::array<int, 4>>>>();
  for (const auto& lvl : j.at("edge_midpoints")) {
    std::vector<std::pair<std::pair<int, int>, int>> m;
    for (const auto& e : lvl)
      m.push_back({{e[0].get<int>(), e[1].get<int>()}, e[2].get<int>()});
    h.edge_midpoints.push_back(std::move(m));
  }
  const auto& doms = j.at("vertex_domains");
  for (int i = 0; i <= h.L; ++i) {
    auto loaded = load_obj(directory + "/level_" + std::to_string(i) + ".obj");
    std::vector<SurfacePoint> dom;
    for (const auto& d : doms[i])
      dom.push_back({d[0].get<int>(),
                     Vec3(d[1].get<double>(), d[2].get<double>(), d[3].get<double>())});
    h.levels.push_back({std::move(loaded.mesh), std::move(dom)});
  }
  return h;
}

} // namespace npmesh
