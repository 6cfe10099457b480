#include <spinefuse/error.hpp>
#include <spinefuse/mesh.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace spinefuse {

namespace {

using Triplet = Eigen::Triplet<double>;

Eigen::Vector3d corner(const TriMesh& m, int f, int k) {
  return m.vertices.row(m.faces(f, k)).transpose();
}

// cot of the angle at vertex a in triangle (a, b, c)
double cot_at(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d u = b - a;
  const Eigen::Vector3d v = c - a;
  const double cross = u.cross(v).norm();
  if (cross <= 0.0) return 0.0;
  return u.dot(v) / cross;
}

}  // namespace

void validate(const TriMesh& mesh) {
  const Eigen::Index n = mesh.vertex_count();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mesh.vertices.row(i).allFinite())
      throw Error(ErrorKind::StructuralInput, "vertex " + std::to_string(i) + " has a non-finite coordinate");
  }
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int idx = mesh.faces(f, k);
      if (idx < 0 || idx >= n)
        throw Error(ErrorKind::StructuralInput,
                    "face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                        " outside [0, " + std::to_string(n) + ")");
    }
    if (mesh.faces(f, 0) == mesh.faces(f, 1) || mesh.faces(f, 1) == mesh.faces(f, 2) ||
        mesh.faces(f, 0) == mesh.faces(f, 2))
      throw Error(ErrorKind::StructuralInput, "face " + std::to_string(f) + " repeats a vertex");
  }
}

Adjacency Adjacency::from_edges(int vertex_count, std::span<const std::pair<int, int>> edges) {
  Adjacency adj;
  adj.neighbors.resize(vertex_count);
  adj.faces.resize(vertex_count);
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= vertex_count || b >= vertex_count || a == b)
      throw Error(ErrorKind::StructuralInput, "invalid edge (" + std::to_string(a) + ", " + std::to_string(b) + ")");
    adj.neighbors[a].push_back(b);
    adj.neighbors[b].push_back(a);
  }
  for (auto& n : adj.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

Adjacency build_adjacency(const TriMesh& mesh) {
  validate(mesh);
  std::vector<std::pair<int, int>> edges;
  edges.reserve(mesh.face_count() * 3);
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) edges.emplace_back(mesh.faces(f, k), mesh.faces(f, (k + 1) % 3));
  }
  Adjacency adj = Adjacency::from_edges(static_cast<int>(mesh.vertex_count()), edges);
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) adj.faces[mesh.faces(f, k)].push_back(static_cast<int>(f));
  }
  return adj;
}

Eigen::VectorXd face_areas(const TriMesh& mesh) {
  Eigen::VectorXd areas(mesh.face_count());
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    const Eigen::Vector3d a = corner(mesh, f, 0);
    areas[f] = 0.5 * (corner(mesh, f, 1) - a).cross(corner(mesh, f, 2) - a).norm();
  }
  return areas;
}

double surface_area(const TriMesh& mesh) { return face_areas(mesh).sum(); }

Eigen::VectorXd voronoi_areas(const TriMesh& mesh) {
  validate(mesh);
  Eigen::VectorXd area = Eigen::VectorXd::Zero(mesh.vertex_count());
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    const Eigen::Vector3d p[3] = {corner(mesh, f, 0), corner(mesh, f, 1), corner(mesh, f, 2)};
    const double face_area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm();
    if (face_area <= 0.0) continue;

    int obtuse = -1;
    for (int k = 0; k < 3; ++k) {
      if ((p[(k + 1) % 3] - p[k]).dot(p[(k + 2) % 3] - p[k]) < 0.0) obtuse = k;
    }
    for (int k = 0; k < 3; ++k) {
      const int vi = mesh.faces(f, k);
      if (obtuse < 0) {
        const Eigen::Vector3d& a = p[k];
        const Eigen::Vector3d& b = p[(k + 1) % 3];
        const Eigen::Vector3d& c = p[(k + 2) % 3];
        // |ab|^2 cot(c) + |ac|^2 cot(b), over 8
        area[vi] += ((b - a).squaredNorm() * cot_at(c, a, b) + (c - a).squaredNorm() * cot_at(b, c, a)) / 8.0;
      } else if (obtuse == k) {
        area[vi] += face_area / 2.0;
      } else {
        area[vi] += face_area / 4.0;
      }
    }
  }
  return area;
}

VertexWeights uniform_weights(const TriMesh& mesh) {
  const Adjacency adj = build_adjacency(mesh);
  std::vector<Triplet> triplets;
  for (std::size_t i = 0; i < adj.size(); ++i) {
    for (int j : adj.neighbors[i]) triplets.emplace_back(static_cast<int>(i), j, 1.0);
  }
  VertexWeights w;
  w.scheme = WeightScheme::Uniform;
  w.edge.resize(mesh.vertex_count(), mesh.vertex_count());
  w.edge.setFromTriplets(triplets.begin(), triplets.end());
  w.area = voronoi_areas(mesh);
  return w;
}

VertexWeights cotangent_weights(const TriMesh& mesh) {
  validate(mesh);
  std::map<std::pair<int, int>, double> accum;
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    const Eigen::Vector3d p[3] = {corner(mesh, f, 0), corner(mesh, f, 1), corner(mesh, f, 2)};
    for (int k = 0; k < 3; ++k) {
      // edge opposite to corner k
      int a = mesh.faces(f, (k + 1) % 3);
      int b = mesh.faces(f, (k + 2) % 3);
      if (a > b) std::swap(a, b);
      accum[{a, b}] += 0.5 * cot_at(p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
    }
  }
  std::vector<Triplet> triplets;
  triplets.reserve(accum.size() * 2);
  for (const auto& [e, value] : accum) {
    const double w = std::max(value, kMinCotangentWeight);
    triplets.emplace_back(e.first, e.second, w);
    triplets.emplace_back(e.second, e.first, w);
  }
  VertexWeights w;
  w.scheme = WeightScheme::Cotangent;
  w.edge.resize(mesh.vertex_count(), mesh.vertex_count());
  w.edge.setFromTriplets(triplets.begin(), triplets.end());
  w.area = voronoi_areas(mesh);
  return w;
}

VertexWeights make_weights(const TriMesh& mesh, WeightScheme scheme) {
  return scheme == WeightScheme::Cotangent ? cotangent_weights(mesh) : uniform_weights(mesh);
}

NormalField vertex_normals(const TriMesh& mesh) {
  validate(mesh);
  NormalField out;
  out.normals = Points::Zero(mesh.vertex_count(), 3);
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    const Eigen::Vector3d a = corner(mesh, f, 0);
    // |cross| = 2 * area, so the unnormalized cross product is already area-weighted
    const Eigen::Vector3d n = (corner(mesh, f, 1) - a).cross(corner(mesh, f, 2) - a);
    for (int k = 0; k < 3; ++k) out.normals.row(mesh.faces(f, k)) += n.transpose();
  }
  for (Eigen::Index i = 0; i < out.normals.rows(); ++i) {
    const double len = out.normals.row(i).norm();
    if (len > 0.0) {
      out.normals.row(i) /= len;
    } else {
      out.normals.row(i).setZero();
      out.undefined.push_back(static_cast<int>(i));
    }
  }
  return out;
}

Eigen::SparseMatrix<double> laplacian_matrix(const VertexWeights& weights) {
  Eigen::SparseMatrix<double> lap = weights.edge;
  const Eigen::VectorXd row_sums = weights.edge * Eigen::VectorXd::Ones(weights.edge.cols());
  Eigen::SparseMatrix<double> diag(lap.rows(), lap.cols());
  std::vector<Triplet> triplets;
  for (Eigen::Index i = 0; i < lap.rows(); ++i) triplets.emplace_back(i, i, -row_sums[i]);
  diag.setFromTriplets(triplets.begin(), triplets.end());
  lap += diag;
  return lap;
}

Points laplacian(const TriMesh& mesh, const Points& positions, const VertexWeights& weights) {
  if (positions.rows() != mesh.vertex_count() || weights.edge.rows() != mesh.vertex_count())
    throw Error(ErrorKind::StructuralInput, "laplacian: positions/weights do not match the vertex count");
  Points out = Points::Zero(positions.rows(), 3);
  // fixed per-vertex summation order keeps the result independent of scheduling
  for (Eigen::Index i = 0; i < weights.edge.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(weights.edge, i); it; ++it) {
      out.row(it.row()) += it.value() * (positions.row(it.col()) - positions.row(it.row()));
    }
  }
  return out;
}

Points laplace_beltrami(const TriMesh& mesh, const Points& positions, const VertexWeights& weights) {
  Points out = laplacian(mesh, positions, weights);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double a = weights.area[i];
    out.row(i) = a > 0.0 ? Eigen::RowVector3d(out.row(i) / a) : Eigen::RowVector3d::Zero();
  }
  return out;
}

bool is_closed(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> directed;
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) ++directed[{mesh.faces(f, k), mesh.faces(f, (k + 1) % 3)}];
  }
  for (const auto& [e, count] : directed) {
    if (count != 1) return false;
    auto twin = directed.find({e.second, e.first});
    if (twin == directed.end() || twin->second != 1) return false;
  }
  return !directed.empty();
}

double signed_volume(const TriMesh& mesh) {
  double vol = 0.0;
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    vol += corner(mesh, f, 0).dot(corner(mesh, f, 1).cross(corner(mesh, f, 2))) / 6.0;
  }
  return vol;
}

Eigen::Vector3d centroid(const Points& points) {
  if (points.rows() == 0) return Eigen::Vector3d::Zero();
  return points.colwise().mean().transpose();
}

TriMesh icosphere(double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Eigen::Vector3i> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (auto& v : verts) v.normalize();

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back((verts[a] + verts[b]).normalized());
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Eigen::Vector3i> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.emplace_back(f[0], ab, ca);
      next.emplace_back(f[1], bc, ab);
      next.emplace_back(f[2], ca, bc);
      next.emplace_back(ab, bc, ca);
    }
    faces = std::move(next);
  }

  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = radius * verts[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) mesh.faces.row(i) = faces[i].transpose();
  return mesh;
}

TriMesh unit_cube() {
  TriMesh mesh;
  mesh.vertices.resize(8, 3);
  // index = x + 2y + 4z
  for (int i = 0; i < 8; ++i) mesh.vertices.row(i) << (i & 1), (i >> 1) & 1, (i >> 2) & 1;
  mesh.faces.resize(12, 3);
  mesh.faces << 0, 4, 6, 0, 6, 2,  // x = 0
      0, 1, 5, 0, 5, 4,            // y = 0
      0, 2, 3, 0, 3, 1,            // z = 0
      7, 4, 5, 7, 6, 4,            // z = 1
      7, 1, 3, 7, 5, 1,            // x = 1
      7, 2, 6, 7, 3, 2;            // y = 1
  return mesh;
}

}  // namespace spinefuse
