#include <spinefuse/error.hpp>
#include <spinefuse/spatial.hpp>

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>

namespace spinefuse {

namespace {

constexpr int kLeafSize = 4;

double box_squared_distance(const Eigen::AlignedBox3d& box, const Eigen::Vector3d& p) {
  return box.squaredExteriorDistance(p);
}

bool ray_hits_box(const Eigen::AlignedBox3d& box, const Eigen::Vector3d& o, const Eigen::Vector3d& inv_dir) {
  double tmin = 0.0;
  double tmax = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    double t1 = (box.min()[k] - o[k]) * inv_dir[k];
    double t2 = (box.max()[k] - o[k]) * inv_dir[k];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return false;
  }
  return true;
}

// Moller-Trumbore, counting only hits strictly in front of the origin
bool ray_hits_triangle(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& a,
                       const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d e1 = b - a;
  const Eigen::Vector3d e2 = c - a;
  const Eigen::Vector3d pv = d.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-300) return false;
  const double inv = 1.0 / det;
  const Eigen::Vector3d tv = o - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Eigen::Vector3d qv = tv.cross(e1);
  const double v = d.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  return e2.dot(qv) * inv > 0.0;
}

}  // namespace

Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a;
  const Eigen::Vector3d ac = c - a;
  const Eigen::Vector3d ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

  const double denom = va + vb + vc;
  if (std::abs(denom) < 1e-300) return a;  // degenerate triangle
  const double v = vb / denom;
  const double w = vc / denom;
  return a + ab * v + ac * w;
}

TriangleTree::TriangleTree(const TriMesh& mesh) : mesh_(mesh) {
  validate(mesh_);
  if (mesh_.face_count() == 0) throw Error(ErrorKind::StructuralInput, "spatial index needs at least one face");
  const int nf = static_cast<int>(mesh_.face_count());
  face_boxes_.resize(nf);
  face_centers_.resize(nf);
  for (int f = 0; f < nf; ++f) {
    Eigen::AlignedBox3d box;
    for (int k = 0; k < 3; ++k) box.extend(vertex(f, k));
    face_boxes_[f] = box;
    face_centers_[f] = box.center();
  }
  order_.resize(nf);
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * nf / kLeafSize + 2);
  build(0, nf);
}

int TriangleTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d centers;
  for (int i = begin; i < end; ++i) {
    box.extend(face_boxes_[order_[i]]);
    centers.extend(face_centers_[order_[i]]);
  }
  nodes_[id].box = box;
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  int axis = 0;
  centers.sizes().maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    if (face_centers_[a][axis] != face_centers_[b][axis]) return face_centers_[a][axis] < face_centers_[b][axis];
    return a < b;
  });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

TriangleTree::Hit TriangleTree::closest_point(const Eigen::Vector3d& query) const {
  Hit best;
  best.squared_distance = std::numeric_limits<double>::infinity();
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (box_squared_distance(node.box, query) > best.squared_distance) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int f = order_[i];
        const Eigen::Vector3d c = closest_point_on_triangle(query, vertex(f, 0), vertex(f, 1), vertex(f, 2));
        const double d = (c - query).squaredNorm();
        // ties broken by face index for deterministic results
        if (d < best.squared_distance || (d == best.squared_distance && f < best.face)) {
          best.squared_distance = d;
          best.point = c;
          best.face = f;
        }
      }
      continue;
    }
    const double dl = box_squared_distance(nodes_[node.left].box, query);
    const double dr = box_squared_distance(nodes_[node.right].box, query);
    // visit the nearer child first
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  return best;
}

int TriangleTree::count_ray_hits(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction) const {
  const Eigen::Vector3d inv_dir = direction.cwiseInverse();
  int hits = 0;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (!ray_hits_box(node.box, origin, inv_dir)) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int f = order_[i];
        if (ray_hits_triangle(origin, direction, vertex(f, 0), vertex(f, 1), vertex(f, 2))) ++hits;
      }
      continue;
    }
    stack.push_back(node.left);
    stack.push_back(node.right);
  }
  return hits;
}

bool TriangleTree::contains(const Eigen::Vector3d& query) const {
  static const std::array<Eigen::Vector3d, 3> directions = {
      Eigen::Vector3d(0.5773502691896258, 0.5773502691896258, 0.5773502691896258 + 1e-3).normalized(),
      Eigen::Vector3d(-0.3141592653589793, 0.8414709848078965, 0.4396926207859084).normalized(),
      Eigen::Vector3d(0.2718281828459045, -0.6931471805599453, -0.6671189629396418).normalized()};
  int inside_votes = 0;
  for (const auto& d : directions) {
    if (count_ray_hits(query, d) % 2 == 1) ++inside_votes;
  }
  return inside_votes >= 2;
}

}  // namespace spinefuse
