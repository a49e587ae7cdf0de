#pragma once

#include "npmesh/bvh.hpp"
#include "npmesh/mesh.hpp"

#include <optional>
#include <string>

namespace npmesh {

struct MetricsReport {
  double d_pm = 0;       // mean point-to-mesh distance, model units
  double d_normal = 0;   // mean normal angle error, degrees
  std::optional<double> cr;
  int sample_count = 0;
  uint64_t seed = 0;

  std::string to_json() const;
};

// Mean distance from area-uniform samples on pred to the gt surface.
// threads > 1 parallelizes the closest-point queries over a fixed sample
// array with an ordered reduction, so results are bitwise thread-invariant.
double d_pm(const HalfEdgeMesh& pred, const HalfEdgeMesh& gt, int n, uint64_t seed,
            int threads = 1);

// Mean angle (degrees) between the sample's face normal and the face normal
// at its closest point on gt.
double d_normal(const HalfEdgeMesh& pred, const HalfEdgeMesh& gt, int n, uint64_t seed,
                int threads = 1);

struct PairMetrics {
  double d_pm = 0;
  double d_normal = 0;
};

// single sampling pass computing both metrics
PairMetrics surface_metrics(const HalfEdgeMesh& pred, const HalfEdgeMesh& gt, int n,
                            uint64_t seed, int threads = 1);

MetricsReport evaluate(const HalfEdgeMesh& pred, const HalfEdgeMesh& gt,
                       std::optional<double> cr, int n = 1000000, uint64_t seed = 0,
                       int threads = 1);

} // namespace npmesh
