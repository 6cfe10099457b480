#include <doctest.h>

#include <spinefuse/error.hpp>
#include <spinefuse/mesh.hpp>
#include <spinefuse/mesh_io.hpp>

#include "scratch.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

using namespace spinefuse;
using Approx = doctest::Approx;

namespace {

TriMesh triangle() {
  TriMesh m;
  m.vertices.resize(3, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  m.faces.resize(1, 3);
  m.faces << 0, 1, 2;
  return m;
}

TriMesh tetrahedron() {
  TriMesh m;
  m.vertices.resize(4, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  m.faces.resize(4, 3);
  m.faces << 0, 2, 1, 0, 1, 3, 0, 3, 2, 1, 2, 3;
  return m;
}

// unit square split along (1,2)
TriMesh strip() {
  TriMesh m;
  m.vertices.resize(4, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0;
  m.faces.resize(2, 3);
  m.faces << 0, 1, 2, 2, 1, 3;
  return m;
}

TriMesh hexagon_fan() {
  TriMesh m;
  m.vertices.resize(7, 3);
  m.vertices.row(0).setZero();
  for (int k = 0; k < 6; ++k) {
    const double a = k * std::numbers::pi / 3.0;
    m.vertices.row(k + 1) << std::cos(a), std::sin(a), 0.0;
  }
  m.faces.resize(6, 3);
  for (int k = 0; k < 6; ++k) m.faces.row(k) << 0, k + 1, (k + 1) % 6 + 1;
  return m;
}

}  // namespace

TEST_CASE("validate rejects malformed meshes") {
  TriMesh m = triangle();
  CHECK_NOTHROW(validate(m));
  m.faces(0, 2) = 3;
  CHECK_THROWS_AS(validate(m), Error);
  m = triangle();
  m.faces(0, 2) = 0;
  CHECK_THROWS_AS(validate(m), Error);
  m = triangle();
  m.vertices(1, 1) = std::nan("");
  try {
    build_adjacency(m);
    FAIL("expected a structural error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::StructuralInput);
  }
}

TEST_CASE("adjacency") {
  const auto tri = build_adjacency(triangle());
  CHECK(tri.neighbors[0] == std::vector<int>{1, 2});
  CHECK(tri.neighbors[1] == std::vector<int>{0, 2});
  CHECK(tri.neighbors[2] == std::vector<int>{0, 1});

  const auto tet = build_adjacency(tetrahedron());
  for (const auto& n : tet.neighbors) CHECK(n.size() == 3);

  const auto s = build_adjacency(strip());
  CHECK(s.neighbors[1] == std::vector<int>{0, 2, 3});
  CHECK(s.faces[1].size() == 2);

  const auto ico = build_adjacency(icosphere(1.0, 2));
  for (std::size_t i = 0; i < ico.size(); ++i) {
    for (int j : ico.neighbors[i]) {
      CHECK(j != static_cast<int>(i));
      const auto& back = ico.neighbors[j];
      CHECK(std::find(back.begin(), back.end(), static_cast<int>(i)) != back.end());
    }
  }
}

TEST_CASE("vertex normals") {
  for (Eigen::Index i = 0; i < 4; ++i) {
    const auto n = vertex_normals(strip());
    CHECK((n.normals.row(i) - Eigen::RowVector3d(0, 0, 1)).norm() < 1e-12);
  }
  const auto cube = vertex_normals(unit_cube());
  // vertex 7 = (1,1,1)
  CHECK((cube.normals.row(7).transpose() - Eigen::Vector3d(1, 1, 1).normalized()).norm() < 1e-12);
  CHECK((cube.normals.row(0).transpose() + Eigen::Vector3d(1, 1, 1).normalized()).norm() < 1e-12);

  const TriMesh ico = icosphere(3.0, 4);
  const auto n = vertex_normals(ico);
  CHECK(n.undefined.empty());
  for (Eigen::Index i = 0; i < ico.vertex_count(); ++i) {
    const Eigen::Vector3d radial = ico.vertices.row(i).normalized();
    CHECK(std::abs(n.normals.row(i).norm() - 1.0) < 1e-9);
    CHECK(std::acos(std::min(1.0, n.normals.row(i).dot(radial.transpose()))) < 1e-2);
  }

  TriMesh lonely = triangle();
  lonely.vertices.conservativeResize(4, 3);
  lonely.vertices.row(3) << 5, 5, 5;
  const auto ln = vertex_normals(lonely);
  CHECK(ln.undefined == std::vector<int>{3});
  CHECK(ln.normals.row(3).isZero(0.0));
}

TEST_CASE("laplacian") {
  const TriMesh fan = hexagon_fan();
  const auto cot = cotangent_weights(fan);
  const Points lap = laplacian(fan, fan.vertices, cot);
  CHECK(lap.row(0).norm() < 1e-9);

  // hand values: right isosceles triangle has cot 45 = 1 and cot 90 = 0
  const auto sw = cotangent_weights(strip());
  CHECK(sw.edge.coeff(0, 1) == Approx(0.5));
  CHECK(sw.edge.coeff(1, 2) == Approx(kMinCotangentWeight));  // both opposite angles are 90 deg
  CHECK(sw.edge.coeff(1, 0) == sw.edge.coeff(0, 1));

  Points same = Points::Constant(7, 3, 2.5);
  CHECK(laplacian(fan, same, cot).norm() == 0.0);

  const TriMesh ico = icosphere(1.0, 2);
  const auto w = cotangent_weights(ico);
  const Points l = laplacian(ico, ico.vertices, w);
  const auto normals = vertex_normals(ico).normals;
  for (Eigen::Index i = 0; i < ico.vertex_count(); ++i) CHECK(l.row(i).dot(normals.row(i)) < 0.0);

  // translation invariance and linearity
  Points shifted = ico.vertices;
  shifted.rowwise() += Eigen::RowVector3d(3, -1, 7);
  CHECK((laplacian(ico, shifted, w) - l).norm() < 1e-12);
  const Points doubled = 2.0 * ico.vertices + shifted;
  CHECK((laplacian(ico, doubled, w) - (2.0 * l + laplacian(ico, shifted, w))).norm() < 1e-12);

  // matrix form agrees with the direct form
  const Points viaMatrix = laplacian_matrix(w) * ico.vertices;
  CHECK((viaMatrix - l).norm() < 1e-12);
}

TEST_CASE("voronoi areas") {
  TriMesh eq;
  eq.vertices.resize(3, 3);
  eq.vertices << 0, 0, 0, 1, 0, 0, 0.5, std::sqrt(3.0) / 2.0, 0;
  eq.faces.resize(1, 3);
  eq.faces << 0, 1, 2;
  const auto a = voronoi_areas(eq);
  for (int i = 0; i < 3; ++i) CHECK(a[i] == Approx(std::sqrt(3.0) / 12.0).epsilon(1e-12));

  CHECK(voronoi_areas(strip()).sum() == Approx(1.0).epsilon(1e-12));

  // obtuse triangle: the obtuse vertex takes half the area, the others a quarter
  TriMesh obtuse;
  obtuse.vertices.resize(3, 3);
  obtuse.vertices << 0, 0, 0, 4, 0, 0, 2, 0.5, 0;
  obtuse.faces.resize(1, 3);
  obtuse.faces << 0, 1, 2;
  const auto ao = voronoi_areas(obtuse);
  CHECK(ao[2] == Approx(0.5).epsilon(1e-12));
  CHECK(ao[0] == Approx(0.25).epsilon(1e-12));

  for (int sub : {2, 3}) {
    const TriMesh s = icosphere(2.0, sub);
    const auto va = voronoi_areas(s);
    CHECK(va.sum() == Approx(surface_area(s)).epsilon(1e-9));
    CHECK((va.array() > 0.0).all());
    CHECK(std::abs(va.sum() - 16.0 * std::numbers::pi) / (16.0 * std::numbers::pi) < (sub == 2 ? 0.03 : 0.01));
  }
}

TEST_CASE("closed surfaces") {
  CHECK(is_closed(unit_cube()));
  CHECK(is_closed(icosphere(1.0, 1)));
  CHECK_FALSE(is_closed(strip()));
  CHECK(signed_volume(unit_cube()) == Approx(1.0).epsilon(1e-12));
  CHECK(signed_volume(tetrahedron()) == Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(face_areas(unit_cube()).sum() == Approx(6.0).epsilon(1e-12));
}

TEST_CASE("OBJ and PLY round trip") {
  ScratchDir dir("mesh");
  const TriMesh ico = icosphere(1.7, 2);
  for (const char* name : {"a.obj", "a.ply"}) {
    write_mesh(dir / name, ico);
    const TriMesh back = read_mesh(dir / name);
    CHECK(back.vertices == ico.vertices);
    CHECK(back.faces == ico.faces);
  }

  {
    std::ofstream out(dir / "quad.obj");
    out << "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n";
  }
  const TriMesh quad = read_obj(dir / "quad.obj");
  CHECK(quad.face_count() == 2);
  CHECK(surface_area(quad) == Approx(1.0));

  {
    std::ofstream out(dir / "bad.obj");
    out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
  }
  CHECK_THROWS_AS(read_obj(dir / "bad.obj"), Error);

  {
    std::ofstream out(dir / "ascii.ply");
    out << "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
  }
  try {
    read_ply(dir / "ascii.ply");
    FAIL("ascii PLY must be rejected");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("ascii.ply") != std::string::npos);
  }

  // float32 vertices with int32 indices
  {
    std::ofstream out(dir / "f32.ply", std::ios::binary);
    out << "ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
           "property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n";
    const float v[9] = {0, 0, 0, 2, 0, 0, 0, 2, 0};
    out.write(reinterpret_cast<const char*>(v), sizeof v);
    const unsigned char three = 3;
    const int idx[3] = {0, 1, 2};
    out.write(reinterpret_cast<const char*>(&three), 1);
    out.write(reinterpret_cast<const char*>(idx), sizeof idx);
  }
  const TriMesh f32 = read_ply(dir / "f32.ply");
  CHECK(surface_area(f32) == Approx(2.0));

  CHECK_THROWS_AS(read_mesh(dir / "missing.obj"), Error);
}
