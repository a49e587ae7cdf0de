#include "npmesh/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <thread>

namespace npmesh {

PairMetrics surface_metrics(const HalfEdgeMesh& pred, const HalfEdgeMesh& gt, int n,
                            uint64_t seed, int threads) {
  if (n < 1) throw MeshError("sample count must be >= 1");
  const std::vector<SurfaceSample> samples = sample_surface(pred, n, seed);
  const BvhIndex bvh(gt);

  std::vector<double> dist(n), ang(n);
  auto worker = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      auto [sp, d] = bvh.closest_point(samples[i].position);
      dist[i] = d;
      Vec3 np = face_geometry(pred, samples[i].point.face).normal;
      Vec3 ng = face_geometry(gt, sp.face).normal;
      double dot = std::clamp(np.dot(ng), -1.0, 1.0);
      ang[i] = std::acos(dot) * 180.0 / M_PI;
    }
  };
  if (threads <= 1) {
    worker(0, n);
  } else {
    std::vector<std::thread> pool;
    int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      int b = t * chunk, e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(worker, b, e);
    }
    for (auto& th : pool) th.join();
  }

  // ordered reduction keeps the result independent of the thread count
  PairMetrics m;
  for (int i = 0; i < n; ++i) {
    m.d_pm += dist[i];
    m.d_normal += ang[i];
  }
  m.d_pm /= n;
  m.d_normal /= n;
  return m;
}

double d_pm(const HalfEdgeMesh& pred, const HalfEdgeMesh& gt, int n, uint64_t seed, int threads) {
  return surface_metrics(pred, gt, n, seed, threads).d_pm;
}

double d_normal(const HalfEdgeMesh& pred, const HalfEdgeMesh& gt, int n, uint64_t seed,
                int threads) {
  return surface_metrics(pred, gt, n, seed, threads).d_normal;
}

MetricsReport evaluate(const HalfEdgeMesh& pred, const HalfEdgeMesh& gt,
                       std::optional<double> cr, int n, uint64_t seed, int threads) {
  PairMetrics m = surface_metrics(pred, gt, n, seed, threads);
  MetricsReport r;
  r.d_pm = m.d_pm;
  r.d_normal = m.d_normal;
  r.cr = cr;
  r.sample_count = n;
  r.seed = seed;
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["d_pm"] = d_pm;
  j["d_pm_x1e4"] = d_pm * 1e4; // the scale the tables use for unit-cube meshes
  j["d_normal_deg"] = d_normal;
  if (cr) j["cr"] = *cr;
  j["sample_count"] = sample_count;
  j["seed"] = seed;
  return j.dump(1);
}

} // namespace npmesh
