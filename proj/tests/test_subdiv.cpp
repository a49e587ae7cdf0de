#include "npmesh/subdiv.hpp"

#include "npmesh/bvh.hpp"
#include "npmesh/network.hpp"
#include "testutil.hpp"

#include <doctest.h>

#include <sstream>

using namespace npmesh;
using namespace npmesh::testutil;

TEST_CASE("midpoint subdivision matches the independent reference refinement") {
  for (const HalfEdgeMesh& base :
       {make_tetrahedron(), make_octahedron(), make_blob(51, 1)}) {
    HalfEdgeMesh ours = midpoint_subdivide(base, 2);
    HalfEdgeMesh ref = refine_midpoint(refine_midpoint(base));
    REQUIRE(ours.num_vertices() == ref.num_vertices());
    REQUIRE(ours.num_faces() == ref.num_faces());
    // same vertex set and same face set, independent of index order
    BvhIndex bvh(ref);
    for (int v = 0; v < ours.num_vertices(); ++v)
      CHECK(bvh.closest_point(ours.position(v)).second < 1e-12);
    auto sorted_centroids = [](const HalfEdgeMesh& m) {
      std::vector<std::array<double, 3>> c;
      for (int f = 0; f < m.num_faces(); ++f) {
        Vec3 ctr = (m.position(m.faces()(f, 0)) + m.position(m.faces()(f, 1)) +
                    m.position(m.faces()(f, 2))) /
                   3.0;
        c.push_back({ctr.x(), ctr.y(), ctr.z()});
      }
      std::sort(c.begin(), c.end());
      return c;
    };
    auto ca = sorted_centroids(ours), cb = sorted_centroids(ref);
    for (size_t i = 0; i < ca.size(); ++i)
      for (int k = 0; k < 3; ++k) CHECK(ca[i][k] == doctest::Approx(cb[i][k]).epsilon(1e-12));
  }
}

TEST_CASE("one midpoint level of the tetrahedron gives 10 vertices and 16 faces") {
  HalfEdgeMesh m = midpoint_subdivide(make_tetrahedron(), 1);
  CHECK(m.num_vertices() == 10);
  CHECK(m.num_faces() == 16);
  CHECK(validate(m).ok());
}

TEST_CASE("loop_beta values") {
  CHECK(loop_beta(6) == 1.0 / 16.0);
  for (int n = 3; n <= 12; ++n) {
    double c = 3.0 / 8.0 + 0.25 * std::cos(2.0 * M_PI / n);
    CHECK(loop_beta(n) == doctest::Approx((5.0 / 8.0 - c * c) / n).epsilon(1e-15));
    CHECK(loop_beta(n) > 0);
  }
}

TEST_CASE("butterfly is interpolating: original vertices survive bitwise") {
  HalfEdgeMesh base = make_blob(52, 1);
  HalfEdgeMesh fine = base;
  for (int lvl = 0; lvl < 3; ++lvl) {
    fine = butterfly_subdivide(fine, 1);
    for (int v = 0; v < base.num_vertices(); ++v)
      CHECK(fine.position(v) == base.position(v)); // bitwise
  }
}

TEST_CASE("a planar mesh stays planar and stencil weights sum to one") {
  // octahedron connectivity flattened onto z = 0: every stencil mixes exact
  // zeros, so the output z column is exactly zero for all three schemes
  HalfEdgeMesh octa = make_octahedron();
  MatX3d flat = octa.vertices();
  flat.col(2).setZero();
  HalfEdgeMesh planar(flat, octa.faces());
  for (auto scheme :
       {SubdivisionScheme::kMidpoint, SubdivisionScheme::kLoop, SubdivisionScheme::kButterfly}) {
    HalfEdgeMesh out = subdivide(planar, scheme, 2);
    CHECK(out.vertices().col(2).cwiseAbs().maxCoeff() == 0.0);
  }

  // constant reproduction on an all-regular (valence 6) mesh: shifting every
  // vertex by t shifts every output vertex by t, so the weights sum to 1
  HalfEdgeMesh torus = make_torus(8, 6);
  Eigen::RowVector3d t(1.5, -2.0, 0.25);
  MatX3d shifted = torus.vertices();
  shifted.rowwise() += t;
  for (auto scheme :
       {SubdivisionScheme::kMidpoint, SubdivisionScheme::kLoop, SubdivisionScheme::kButterfly}) {
    HalfEdgeMesh a = subdivide(torus, scheme, 1);
    HalfEdgeMesh b = subdivide(HalfEdgeMesh(shifted, torus.faces()), scheme, 1);
    MatX3d expect = a.vertices();
    expect.rowwise() += t;
    CHECK((b.vertices() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("loop subdivision of the icosahedron converges to a sphere") {
  HalfEdgeMesh m = loop_subdivide(make_icosahedron(), 3);
  CHECK(validate(m).ok());
  CHECK(m.num_faces() == 20 * 64);
  // best-fit sphere: centroid + mean radius
  Vec3 c = m.vertices().colwise().mean();
  Eigen::VectorXd r(m.num_vertices());
  for (int v = 0; v < m.num_vertices(); ++v) r(v) = (m.position(v) - c).norm();
  double mean_r = r.mean();
  CHECK((r.array() - mean_r).abs().maxCoeff() / mean_r < 0.02);
}

TEST_CASE("subdivision commutes with rigid motion") {
  HalfEdgeMesh base = make_blob(53, 1);
  Eigen::Matrix3d R =
      Eigen::AngleAxisd(0.9, Vec3(2, -1, 1).normalized()).toRotationMatrix();
  Eigen::RowVector3d t(0.4, -0.7, 0.2);
  MatX3d Vm = base.vertices() * R.transpose();
  Vm.rowwise() += t;
  HalfEdgeMesh moved(Vm, base.faces());
  for (auto scheme :
       {SubdivisionScheme::kMidpoint, SubdivisionScheme::kLoop, SubdivisionScheme::kButterfly}) {
    HalfEdgeMesh a = subdivide(base, scheme, 2);
    HalfEdgeMesh b = subdivide(moved, scheme, 2);
    MatX3d expect = a.vertices() * R.transpose();
    expect.rowwise() += t;
    CHECK((b.vertices() - expect).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("subdivision preserves watertightness and genus") {
  HalfEdgeMesh torus = make_torus(12, 8);
  for (auto scheme :
       {SubdivisionScheme::kMidpoint, SubdivisionScheme::kLoop, SubdivisionScheme::kButterfly}) {
    HalfEdgeMesh out = subdivide(torus, scheme, 2);
    ValidationReport rep = validate(out);
    CHECK(rep.ok());
    CHECK(rep.is_watertight);
    CHECK(out.num_vertices() - out.num_edges() + out.num_faces() == 0);
  }
}

TEST_CASE("benchmark emits one row per mesh/method/budget with a fixed schema") {
  HalfEdgeMesh blob = normalize_to_unit_cube(make_blob(54, 2)).first;
  std::vector<BenchmarkInput> inputs;
  inputs.push_back({"blob54", blob, build_hierarchy(blob, 40, 2, 1, 0.1)});
  ParamStore params = init_model(2, 5);
  std::vector<BenchmarkRow> rows = run_benchmark(
      inputs, params, {"midpoint", "loop", "butterfly", "neural"}, {0, 10}, 2000, 11);
  REQUIRE(rows.size() == 5); // 3 classical + 2 neural budgets
  for (const auto& row : rows) {
    CHECK(row.mesh == "blob54");
    CHECK(row.cr > 1.0);
    CHECK(row.d_pm >= 0.0);
    CHECK(row.d_normal >= 0.0);
  }

  std::string csv = benchmark_csv(rows);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "mesh,method,budget,CR,d_pm,d_normal");
  int data_lines = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++data_lines;
  CHECK(data_lines == 5);
}
