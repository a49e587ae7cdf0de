#include "npmesh/mesh.hpp"

#include "testutil.hpp"

#include <doctest.h>

#include <fstream>

using namespace npmesh;
using namespace npmesh::testutil;

TEST_CASE("half-edge connectivity on a tetrahedron") {
  HalfEdgeMesh m = make_tetrahedron();
  CHECK(m.num_vertices() == 4);
  CHECK(m.num_faces() == 4);
  CHECK(m.num_edges() == 6);
  CHECK(m.has_full_connectivity());

  for (int h = 0; h < 12; ++h) {
    int t = m.twin(h);
    REQUIRE(t >= 0);
    CHECK(m.twin(t) == h);
    CHECK(m.origin(h) == m.dest(t));
    CHECK(m.dest(h) == m.origin(t));
  }
  CHECK(m.next(0) == 1);
  CHECK(m.next(2) == 0);
  CHECK(m.face_of(7) == 2);
}

TEST_CASE("edges are sorted lexicographically and edge_index agrees") {
  HalfEdgeMesh m = make_octahedron();
  const auto& E = m.edges();
  CHECK(static_cast<int>(E.size()) == m.num_edges());
  for (size_t i = 1; i < E.size(); ++i) CHECK(E[i - 1] < E[i]);
  for (size_t i = 0; i < E.size(); ++i) {
    CHECK(m.edge_index(E[i].first, E[i].second) == static_cast<int>(i));
    CHECK(m.edge_index(E[i].second, E[i].first) == static_cast<int>(i));
  }
}

TEST_CASE("face_neighbors are the faces across each half-edge") {
  HalfEdgeMesh m = make_octahedron();
  for (int f = 0; f < m.num_faces(); ++f) {
    auto nbrs = m.face_neighbors(f);
    for (int k = 0; k < 3; ++k) {
      CHECK(nbrs[k] != f);
      CHECK(nbrs[k] == m.face_of(m.twin(3 * f + k)));
    }
  }
}

TEST_CASE("validate accepts closed manifolds") {
  for (const HalfEdgeMesh& m :
       {make_tetrahedron(), make_octahedron(), make_icosphere(2), make_torus()}) {
    ValidationReport r = validate(m);
    CHECK(r.is_edge_manifold);
    CHECK(r.is_watertight);
    CHECK(r.connected_component_count == 1);
    CHECK(r.degenerate_face_count == 0);
    CHECK(r.ok());
  }
}

TEST_CASE("validate flags an open fan as not watertight") {
  MatX3d V(4, 3);
  V << 0, 0, 0, 1, 0, 0, 0, 1, 0, -1, 0, 0;
  MatX3i F(2, 3);
  F << 0, 1, 2, 0, 2, 3;
  ValidationReport r = validate(HalfEdgeMesh(V, F));
  CHECK(!r.is_watertight);
  CHECK(!r.ok());
}

TEST_CASE("validate counts connected components") {
  HalfEdgeMesh a = make_tetrahedron();
  MatX3d V(8, 3);
  V.topRows(4) = a.vertices();
  V.bottomRows(4) = a.vertices().array() + 10.0;
  MatX3i F(8, 3);
  F.topRows(4) = a.faces();
  F.bottomRows(4) = a.faces().array() + 4;
  ValidationReport r = validate(HalfEdgeMesh(V, F));
  CHECK(r.connected_component_count == 2);
  CHECK(!r.ok());
}

TEST_CASE("validate counts degenerate faces") {
  MatX3d V(4, 3);
  V << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0.5, 0, 0; // vertex 3 on the edge 0-1
  MatX3i F(2, 3);
  F << 0, 1, 2, 0, 1, 3;
  ValidationReport r = validate(HalfEdgeMesh(V, F));
  CHECK(r.degenerate_face_count == 1);
}

TEST_CASE("validate rejects inconsistent orientation") {
  HalfEdgeMesh t = make_tetrahedron();
  MatX3i F = t.faces();
  std::swap(F(1, 0), F(1, 1)); // flip one face
  ValidationReport r = validate(HalfEdgeMesh(t.vertices(), F));
  CHECK(!r.is_edge_manifold);
}

TEST_CASE("OBJ round trip preserves geometry and connectivity") {
  TmpDir tmp("obj");
  HalfEdgeMesh m = make_blob(11, 2);
  save_obj(m, tmp.file("blob.obj"));
  ObjLoadResult r = load_obj(tmp.file("blob.obj"));
  CHECK(r.ignored_record_count == 0);
  REQUIRE(r.mesh.num_vertices() == m.num_vertices());
  REQUIRE(r.mesh.num_faces() == m.num_faces());
  CHECK(r.mesh.faces() == m.faces());
  // nine significant digits survive a double round trip of these magnitudes
  CHECK((r.mesh.vertices() - m.vertices()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("OBJ loader accepts slash forms and counts ignored records") {
  TmpDir tmp("obj2");
  {
    std::ofstream f(tmp.file("m.obj"));
    f << "# comment\n"
         "mtllib none.mtl\n"
         "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
         "vt 0 0\nvn 0 0 1\n"
         "f 1/1/1 3/1/1 2/1/1\nf 1//1 2//1 4//1\nf 1/1 4/1 3/1\nf 2/1/1 3/1/1 4/1/1\n";
  }
  ObjLoadResult r = load_obj(tmp.file("m.obj"));
  CHECK(r.mesh.num_vertices() == 4);
  CHECK(r.mesh.num_faces() == 4);
  CHECK(r.ignored_record_count == 3); // mtllib + vt + vn
  CHECK(validate(r.mesh).ok());
}

TEST_CASE("OBJ loader reports the offending line") {
  TmpDir tmp("obj3");
  {
    std::ofstream f(tmp.file("bad.obj"));
    f << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
  }
  try {
    load_obj(tmp.file("bad.obj"));
    FAIL("expected MeshError");
  } catch (const MeshError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("face_geometry on an equilateral triangle") {
  MatX3d V(3, 3);
  V << 0, 0, 0, 1, 0, 0, 0.5, std::sqrt(3.0) / 2.0, 0;
  MatX3i F(1, 3);
  F << 0, 1, 2;
  FaceGeometry g = face_geometry(HalfEdgeMesh(V, F), 0);
  CHECK(g.area == doctest::Approx(std::sqrt(3.0) / 4.0));
  for (int k = 0; k < 3; ++k) CHECK(g.angles[k] == doctest::Approx(M_PI / 3.0));
  CHECK(g.normal.isApprox(Vec3(0, 0, 1), 1e-12));
  CHECK(g.centroid.isApprox(Vec3(0.5, std::sqrt(3.0) / 6.0, 0), 1e-12));
}

TEST_CASE("vertex normals of a sphere point radially") {
  HalfEdgeMesh m = make_icosphere(3);
  MatX3d N = vertex_normals(m);
  for (int v = 0; v < m.num_vertices(); ++v) {
    Vec3 radial = m.position(v).normalized();
    CHECK(Vec3(N.row(v)).dot(radial) > 0.99);
    CHECK(N.row(v).norm() == doctest::Approx(1.0));
  }
}

TEST_CASE("normalize_to_unit_cube centers the bbox with max extent 1") {
  HalfEdgeMesh m = make_torus();
  auto [n, xf] = normalize_to_unit_cube(m);
  Vec3 lo = n.vertices().colwise().minCoeff();
  Vec3 hi = n.vertices().colwise().maxCoeff();
  CHECK((hi - lo).maxCoeff() == doctest::Approx(1.0));
  CHECK((hi + lo).cwiseAbs().maxCoeff() < 1e-12);
  // the returned transform reproduces the normalized vertices
  for (int v : {0, 7, 31}) CHECK(xf.apply(m.position(v)).isApprox(n.position(v), 1e-12));
}

TEST_CASE("point_at interpolates barycentrically") {
  HalfEdgeMesh m = make_tetrahedron();
  SurfacePoint sp{2, Vec3(0.2, 0.3, 0.5)};
  Vec3 expected = 0.2 * m.position(m.faces()(2, 0)) + 0.3 * m.position(m.faces()(2, 1)) +
                  0.5 * m.position(m.faces()(2, 2));
  CHECK(m.point_at(sp).isApprox(expected, 1e-14));
  CHECK(sp.valid());
  CHECK(!SurfacePoint{}.valid());
}

TEST_CASE("bbox_diagonal") {
  HalfEdgeMesh m = make_tetrahedron();
  CHECK(bbox_diagonal(m) == doctest::Approx(2.0 * std::sqrt(3.0)));
}
