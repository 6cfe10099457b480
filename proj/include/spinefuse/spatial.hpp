#pragma once

#include <spinefuse/mesh.hpp>

#include <Eigen/Geometry>

#include <vector>

namespace spinefuse {

/// Immutable bounding-volume hierarchy over the triangles of a mesh.
/// Queries are const and safe to issue concurrently.
class TriangleTree {
 public:
  struct Hit {
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    int face = -1;
    double squared_distance = 0.0;
  };

  explicit TriangleTree(const TriMesh& mesh);

  Hit closest_point(const Eigen::Vector3d& query) const;

  /// Number of triangles crossed by the ray origin + t * direction, t > 0.
  int count_ray_hits(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction) const;

  /// Ray-parity inside test, majority over three fixed skew directions.
  /// Only meaningful for closed meshes.
  bool contains(const Eigen::Vector3d& query) const;

  const TriMesh& mesh() const { return mesh_; }

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1;   // child node, or -1 for a leaf
    int right = -1;
    int begin = 0;   // leaf range into order_
    int end = 0;
  };

  int build(int begin, int end);
  Eigen::Vector3d vertex(int face, int k) const { return mesh_.vertices.row(mesh_.faces(face, k)).transpose(); }

  TriMesh mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  std::vector<Eigen::AlignedBox3d> face_boxes_;
  std::vector<Eigen::Vector3d> face_centers_;
};

/// Closest point to p on triangle (a, b, c).
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c);

}  // namespace spinefuse
