#pragma once

#include "npmesh/lod.hpp"
#include "npmesh/mesh.hpp"
#include "npmesh/tensor.hpp"

#include <string>

namespace npmesh {

enum class SubdivisionScheme { kMidpoint, kLoop, kButterfly };

// Midpoint split: connectivity from subdivide_connectivity, new vertices at
// exact edge midpoints, old vertices unchanged.
HalfEdgeMesh midpoint_subdivide(const HalfEdgeMesh& mesh, int levels);

// Loop: edge vertices 3/8 (a+b) + 1/8 (c+d); a valence-n vertex is moved to
// (1 - n beta) v + beta * sum of neighbors.
HalfEdgeMesh loop_subdivide(const HalfEdgeMesh& mesh, int levels);
double loop_beta(int n);

// Modified Butterfly: interpolating; the regular 8-point stencil
// (1/2 endpoints, 1/8 wing apexes, -1/16 outer four) with the one-ring
// stencil fallback at extraordinary vertices.
HalfEdgeMesh butterfly_subdivide(const HalfEdgeMesh& mesh, int levels);

HalfEdgeMesh subdivide(const HalfEdgeMesh& mesh, SubdivisionScheme scheme, int levels);

struct BenchmarkInput {
  std::string name;
  HalfEdgeMesh original;
  LodHierarchy hierarchy;
};

struct BenchmarkRow {
  std::string mesh;
  std::string method;
  size_t budget = 0; // transmitted feature records (0 for classical schemes)
  double cr = 0, d_pm = 0, d_normal = 0;
};

// One row per mesh per classical method, plus one neural row per budget.
// Classical schemes subdivide the coarse mesh with zero transmitted features,
// so their CR is |V| / |V^0|.
std::vector<BenchmarkRow> run_benchmark(const std::vector<BenchmarkInput>& inputs,
                                        ParamStore& params,
                                        const std::vector<std::string>& methods,
                                        const std::vector<size_t>& budgets, int samples,
                                        uint64_t seed, int threads = 1);

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);

} // namespace npmesh
