#include <doctest.h>

#include <spinefuse/error.hpp>
#include <spinefuse/registration.hpp>

#include "scratch.hpp"

#include <Eigen/Geometry>

#include <fstream>
#include <numbers>
#include <random>

using namespace spinefuse;

namespace {

Eigen::Matrix3d rot(double deg, const Eigen::Vector3d& axis) {
  return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, axis.normalized()).toRotationMatrix();
}

// centroid-like positions for C1, C7, T7, L4, L5 with a mild curve
LandmarkSet spine_landmarks() {
  LandmarkSet s;
  s.frame = "ct";
  s.entries = {{"C1", {0, 0, 0}, 1.0},
               {"C7", {5, 0, -110}, 1.0},
               {"T7", {-12, 3, -260}, 1.0},
               {"L4", {8, -2, -520}, 1.0},
               {"L5", {20, 0, -560}, 1.0}};
  return s;
}

LandmarkSet transformed(const LandmarkSet& s, const SimilarityTransform& t, const std::string& frame) {
  LandmarkSet out = s;
  out.frame = frame;
  for (auto& e : out.entries) e.position = t.apply(e.position);
  return out;
}

TriMesh ellipsoid() {
  TriMesh m = icosphere(1.0, 3);
  m.vertices = m.vertices * Eigen::Vector3d(40, 15, 8).asDiagonal();
  return m;
}

}  // namespace

TEST_CASE("landmark subsets") {
  CHECK(parse_landmark_subset("full") == std::vector<std::string>{"C1", "C7", "T7", "L4", "L5"});
  CHECK(parse_landmark_subset("reduced") == std::vector<std::string>{"C1", "T7", "L5"});
  CHECK(parse_landmark_subset("custom:C1,T7,L4") == std::vector<std::string>{"C1", "T7", "L4"});
  CHECK_THROWS_AS(parse_landmark_subset("most"), Error);
  CHECK_THROWS_AS(parse_landmark_subset("custom:"), Error);
}

TEST_CASE("coarse_register identity and forward-constructed transforms") {
  const LandmarkSet s = spine_landmarks();
  const auto id = coarse_register(s, s, full_landmark_subset());
  CHECK(id.transform.scale == doctest::Approx(1.0));
  CHECK(id.rms < 1e-12);

  SimilarityTransform t;
  t.scale = 1.1;
  t.rotation = rot(20, Eigen::Vector3d::UnitZ());
  t.translation = {30, 0, 0};
  const auto rec = coarse_register(s, transformed(s, t, "skeleton"), full_landmark_subset());
  CHECK(std::abs(rec.transform.scale - 1.1) < 1e-9);
  CHECK(rotation_angle_between(rec.transform.rotation, t.rotation) < 1e-9);
  CHECK((rec.transform.translation - t.translation).norm() < 1e-9);
}

TEST_CASE("coarse_register residuals are self-consistent") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 0.5);
  const LandmarkSet s = spine_landmarks();
  SimilarityTransform t;
  t.scale = 1.2;
  t.rotation = rot(10, Eigen::Vector3d::UnitX());
  t.translation = {5, 5, 0};
  LandmarkSet target = transformed(s, t, "skeleton");
  for (auto& e : target.entries) e.position += Eigen::Vector3d(g(rng), g(rng), g(rng));
  const auto rep = coarse_register(s, target, full_landmark_subset());
  CHECK(std::abs(rep.transform.scale - 1.2) / 1.2 < 0.02);
  double sq = 0.0;
  for (std::size_t i = 0; i < rep.subset.size(); ++i) {
    const double r = (target.at(rep.subset[i]).position - rep.transform.apply(s.at(rep.subset[i]).position)).norm();
    CHECK(std::abs(r - rep.residuals[i]) < 1e-12);
    sq += r * r;
  }
  CHECK(std::abs(rep.rms - std::sqrt(sq / 5.0)) < 1e-12);
}

TEST_CASE("coarse_register is rotation equivariant") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  const LandmarkSet s = spine_landmarks();
  LandmarkSet target = s;
  for (auto& e : target.entries) e.position = 0.9 * (rot(25, {1, 1, 0}) * e.position) + Eigen::Vector3d(3, 4, 5) +
                                              Eigen::Vector3d(g(rng), g(rng), g(rng));
  const auto base = coarse_register(s, target, full_landmark_subset());
  for (int k = 0; k < 20; ++k) {
    SimilarityTransform q;
    q.rotation = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix();
    const auto rotated = coarse_register(transformed(s, q, "a"), transformed(target, q, "b"), full_landmark_subset());
    CHECK((rotated.transform.rotation - q.rotation * base.transform.rotation * q.rotation.transpose()).norm() < 1e-9);
    CHECK((rotated.transform.translation - q.rotation * base.transform.translation).norm() < 1e-9);
    CHECK(std::abs(rotated.transform.scale - base.transform.scale) < 1e-12);
  }
}

TEST_CASE("full landmark set registers better than the reduced set on average") {
  // error of the recovered transform against the generating one, over the noiseless landmarks
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 2.0);
  const LandmarkSet s = spine_landmarks();
  SimilarityTransform t;
  t.scale = 1.05;
  t.rotation = rot(35, {0.2, 1, 0.4});
  t.translation = {-20, 40, 10};
  const LandmarkSet exact = transformed(s, t, "skeleton");
  double full = 0.0, reduced = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    LandmarkSet noisy = exact;
    for (auto& e : noisy.entries) e.position += Eigen::Vector3d(g(rng), g(rng), g(rng));
    for (int pass = 0; pass < 2; ++pass) {
      const auto rep = coarse_register(s, noisy, pass == 0 ? full_landmark_subset() : reduced_landmark_subset());
      double sq = 0.0;
      for (const auto& e : s.entries) sq += (rep.transform.apply(e.position) - t.apply(e.position)).squaredNorm();
      (pass == 0 ? full : reduced) += std::sqrt(sq / 5.0);
    }
  }
  CHECK(full < reduced);
}

TEST_CASE("coarse_register errors") {
  const LandmarkSet s = spine_landmarks();
  try {
    coarse_register(s, s, {"C1", "C7", "S1"});
    FAIL("missing landmark must fail");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Lookup);
  }
  LandmarkSet line = s;
  for (std::size_t i = 0; i < line.entries.size(); ++i) line.entries[i].position = {0, 0, -100.0 * i};
  try {
    coarse_register(line, line, full_landmark_subset());
    FAIL("collinear landmarks must fail");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
}

TEST_CASE("apply_transform") {
  const TriMesh cube = unit_cube();
  const TriMesh same = apply_transform(cube, SimilarityTransform::identity());
  CHECK(same.vertices == cube.vertices);
  SimilarityTransform two;
  two.scale = 2.0;
  const TriMesh big = apply_transform(cube, two);
  CHECK((big.vertices.colwise().maxCoeff() - big.vertices.colwise().minCoeff()).isApprox(Eigen::RowVector3d(2, 2, 2)));
}

TEST_CASE("icp_register") {
  const TriMesh target = ellipsoid();

  const auto self = icp_register(target, target);
  CHECK(self.rms_trace.front() < 1e-9);
  CHECK(self.iterations <= 1);
  CHECK(self.transform.rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-9));

  SimilarityTransform tilt;
  tilt.rotation = rot(5, Eigen::Vector3d::UnitZ());
  const TriMesh moved = apply_transform(target, tilt);
  IcpConfig cfg;
  cfg.tol = 1e-10;
  const auto rec = icp_register(moved, target, cfg);
  CHECK(rec.iterations <= 50);
  CHECK(rotation_angle_between(rec.transform.rotation, tilt.rotation.transpose()) < 0.1 * std::numbers::pi / 180.0);
  CHECK_FALSE(rec.stalled);

  SimilarityTransform quarter;
  quarter.rotation = rot(90, Eigen::Vector3d(1, 0.3, 0.2));
  const auto far = icp_register(apply_transform(target, quarter), target);
  for (std::size_t i = 1; i < far.rms_trace.size(); ++i) CHECK(far.rms_trace[i] <= far.rms_trace[i - 1]);

  CHECK_THROWS_AS(icp_register(Points(0, 3), target), Error);
}

TEST_CASE("landmark and transform files") {
  ScratchDir dir("reg");
  const LandmarkSet s = spine_landmarks();
  write_landmarks(dir / "l.json", s);
  const LandmarkSet back = read_landmarks(dir / "l.json");
  CHECK(back.frame == "ct");
  REQUIRE(back.entries.size() == 5);
  CHECK(back.at("T7").position == s.at("T7").position);

  SimilarityTransform t;
  t.scale = 1.25;
  t.rotation = rot(33, {1, 2, 3});
  t.translation = {1, -2, 3.5};
  write_transform(dir / "t.json", t);
  const SimilarityTransform tb = read_transform(dir / "t.json");
  CHECK(tb.scale == t.scale);
  CHECK(tb.rotation == t.rotation);
  CHECK(tb.translation == t.translation);

  {
    std::ofstream out(dir / "broken.json");
    out << "{\"landmarks\": [ {\"name\": \"C1\", ";
  }
  try {
    read_landmarks(dir / "broken.json");
    FAIL("malformed JSON must fail");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("broken.json: byte") != std::string::npos);
  }
  {
    std::ofstream out(dir / "nosigma.json");
    out << R"({"frame": "x", "landmarks": [{"name": "C1", "position": [1, 2, 3]}]})";
  }
  CHECK(read_landmarks(dir / "nosigma.json").at("C1").sigma == 1.0);
  {
    std::ofstream out(dir / "negsigma.json");
    out << R"({"landmarks": [{"name": "C1", "position": [1, 2, 3], "sigma": -1}]})";
  }
  CHECK_THROWS_AS(read_landmarks(dir / "negsigma.json"), Error);
  try {
    read_landmarks(dir / "absent.json");
    FAIL("missing file must fail");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("absent.json") != std::string::npos);
  }
}
