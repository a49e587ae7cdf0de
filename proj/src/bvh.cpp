#include "npmesh/bvh.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace npmesh {

std::pair<Vec3, Vec3> closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                                const Vec3& c) {
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {a, {1, 0, 0}};

  Vec3 bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {b, {0, 1, 0}};

  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    double v = d1 / (d1 - d3);
    return {a + v * ab, {1 - v, v, 0}};
  }

  Vec3 cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {c, {0, 0, 1}};

  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    double w = d2 / (d2 - d6);
    return {a + w * ac, {1 - w, 0, w}};
  }

  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + w * (c - b), {0, 1 - w, w}};
  }

  double denom = 1.0 / (va + vb + vc);
  double v = vb * denom, w = vc * denom;
  return {a + ab * v + ac * w, {1 - v - w, v, w}};
}

BvhIndex::BvhIndex(const HalfEdgeMesh& mesh) : mesh_(&mesh) {
  order_.resize(mesh.num_faces());
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) root_ = build(0, static_cast<int>(order_.size()), 0);
}

int BvhIndex::build(int begin, int end, int depth) {
  Node n;
  n.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  n.hi = -n.lo;
  const auto& F = mesh_->faces();
  for (int i = begin; i < end; ++i)
    for (int k = 0; k < 3; ++k) {
      Vec3 p = mesh_->position(F(order_[i], k));
      n.lo = n.lo.cwiseMin(p);
      n.hi = n.hi.cwiseMax(p);
    }
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back(n);
  if (end - begin <= 4 || depth > 48) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  int axis;
  (n.hi - n.lo).maxCoeff(&axis);
  int mid = (begin + end) / 2;
  auto centroid = [&](int f) {
    return (mesh_->position(F(f, 0))[axis] + mesh_->position(F(f, 1))[axis] +
            mesh_->position(F(f, 2))[axis]);
  };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return centroid(a) < centroid(b) || (centroid(a) == centroid(b) && a < b); });
  int l = build(begin, mid, depth + 1);
  int r = build(mid, end, depth + 1);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

double BvhIndex::box_dist2(const Node& n, const Vec3& p) const {
  Vec3 d = (n.lo - p).cwiseMax(p - n.hi).cwiseMax(0.0);
  return d.squaredNorm();
}

std::pair<SurfacePoint, double> BvhIndex::closest_point(const Vec3& query) const {
  SurfacePoint best;
  double best_d2 = std::numeric_limits<double>::infinity();
  if (root_ < 0) return {best, best_d2};

  const auto& F = mesh_->faces();
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    const Node& n = nodes_[id];
    if (box_dist2(n, query) >= best_d2) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        int f = order_[i];
        auto [pt, bary] = closest_point_on_triangle(query, mesh_->position(F(f, 0)),
                                                    mesh_->position(F(f, 1)),
                                                    mesh_->position(F(f, 2)));
        double d2 = (pt - query).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && f < best.face)) {
          best_d2 = d2;
          best.face = f;
          best.bary = bary;
        }
      }
    } else {
      double dl = box_dist2(nodes_[n.left], query);
      double dr = box_dist2(nodes_[n.right], query);
      // visit the nearer child first
      if (dl < dr) {
        stack.push_back(n.right);
        stack.push_back(n.left);
      } else {
        stack.push_back(n.left);
        stack.push_back(n.right);
      }
    }
  }
  return {best, std::sqrt(best_d2)};
}

std::pair<SurfacePoint, double> closest_point_brute(const HalfEdgeMesh& mesh, const Vec3& query) {
  const auto& F = mesh.faces();
  SurfacePoint best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int f = 0; f < mesh.num_faces(); ++f) {
    auto [pt, bary] = closest_point_on_triangle(query, mesh.position(F(f, 0)),
                                                mesh.position(F(f, 1)), mesh.position(F(f, 2)));
    double d2 = (pt - query).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best.face = f;
      best.bary = bary;
    }
  }
  return {best, std::sqrt(best_d2)};
}

std::vector<SurfaceSample> sample_surface(const HalfEdgeMesh& mesh, int n, uint64_t seed) {
  const auto& F = mesh.faces();
  std::vector<double> cdf(mesh.num_faces());
  double total = 0;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    Vec3 a = mesh.position(F(f, 0)), b = mesh.position(F(f, 1)), c = mesh.position(F(f, 2));
    total += 0.5 * (b - a).cross(c - a).norm();
    cdf[f] = total;
  }
  Rng rng(seed);
  std::vector<SurfaceSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform() * total;
    int f = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (f >= mesh.num_faces()) f = mesh.num_faces() - 1;
    double su = std::sqrt(rng.uniform());
    double v = rng.uniform();
    SurfaceSample s;
    s.point.face = f;
    s.point.bary = Vec3(1.0 - su, su * (1.0 - v), su * v);
    s.position = mesh.point_at(s.point);
    out.push_back(s);
  }
  return out;
}

} // namespace npmesh
