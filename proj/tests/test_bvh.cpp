#include "npmesh/bvh.hpp"

#include "testutil.hpp"

#include <doctest.h>

using namespace npmesh;
using namespace npmesh::testutil;

TEST_CASE("closest point on a single triangle covers all regions") {
  Vec3 a(0, 0, 0), b(2, 0, 0), c(0, 2, 0);

  auto [p_in, b_in] = closest_point_on_triangle(Vec3(0.5, 0.5, 3), a, b, c);
  CHECK(p_in.isApprox(Vec3(0.5, 0.5, 0), 1e-14));
  CHECK(b_in.sum() == doctest::Approx(1.0));

  auto [p_v, b_v] = closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c);
  CHECK(p_v.isApprox(a, 1e-14));
  CHECK(b_v.isApprox(Vec3(1, 0, 0), 1e-14));

  auto [p_e, b_e] = closest_point_on_triangle(Vec3(1, -1, 0), a, b, c);
  CHECK(p_e.isApprox(Vec3(1, 0, 0), 1e-14));
  CHECK(b_e.y() == doctest::Approx(0.5));

  auto [p_h, b_h] = closest_point_on_triangle(Vec3(2, 2, 0), a, b, c);
  CHECK(p_h.isApprox(Vec3(1, 1, 0), 1e-14));
  (void)b_h;
}

TEST_CASE("BVH matches the brute-force oracle") {
  for (const HalfEdgeMesh& m : {make_blob(5, 2), make_torus(12, 6)}) {
    BvhIndex bvh(m);
    Rng rng(99);
    for (int i = 0; i < 200; ++i) {
      Vec3 q(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
      auto [sp_fast, d_fast] = bvh.closest_point(q);
      auto [sp_ref, d_ref] = closest_point_brute(m, q);
      CHECK(d_fast == doctest::Approx(d_ref).epsilon(1e-12));
      CHECK((m.point_at(sp_fast) - q).norm() == doctest::Approx(d_fast).epsilon(1e-12));
    }
  }
}

TEST_CASE("BVH tie-break picks the lower face id deterministically") {
  HalfEdgeMesh m = make_octahedron();
  // the +x apex touches faces 0, 3, 4, 7; brute force and BVH must agree
  auto [sp_b, d_b] = closest_point_brute(m, Vec3(2, 0, 0));
  auto [sp_t, d_t] = BvhIndex(m).closest_point(Vec3(2, 0, 0));
  CHECK(d_b == doctest::Approx(1.0));
  CHECK(d_t == doctest::Approx(1.0));
  CHECK(sp_b.face == sp_t.face);
}

TEST_CASE("surface sampling is deterministic and on-surface") {
  HalfEdgeMesh m = make_blob(3, 2);
  auto s1 = sample_surface(m, 500, 42);
  auto s2 = sample_surface(m, 500, 42);
  auto s3 = sample_surface(m, 500, 43);
  REQUIRE(s1.size() == 500);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 500; ++i) {
    all_equal = all_equal && s1[i].position == s2[i].position && s1[i].point.face == s2[i].point.face;
    any_diff = any_diff || s1[i].position != s3[i].position;
    CHECK((m.point_at(s1[i].point) - s1[i].position).norm() < 1e-12);
    CHECK(s1[i].point.valid());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("surface sampling is area-uniform") {
  // two triangles with area ratio 4:1; counts should split roughly 4:1
  MatX3d V(5, 3);
  V << 0, 0, 0, 4, 0, 0, 0, 2, 0, 5, 0, 0, 5, 1, 0;
  MatX3i F(2, 3);
  F << 0, 1, 2, 1, 3, 4; // areas 4 and 0.5
  HalfEdgeMesh m(V, F);
  auto samples = sample_surface(m, 9000, 7);
  int big = 0;
  for (const auto& s : samples) big += s.point.face == 0;
  double frac = big / 9000.0;
  CHECK(frac == doctest::Approx(4.0 / 4.5).epsilon(0.02));
}
