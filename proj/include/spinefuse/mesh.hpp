#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <span>
#include <utility>
#include <vector>

namespace spinefuse {

/// One point per row, millimeters.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;
/// One triangle per row, counter-clockwise when seen from outside.
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;

struct TriMesh {
  Points vertices;
  Faces faces;

  Eigen::Index vertex_count() const { return vertices.rows(); }
  Eigen::Index face_count() const { return faces.rows(); }
};

/// Throws Error(StructuralInput) on non-finite coordinates, out-of-range or repeated face indices.
void validate(const TriMesh& mesh);

struct Adjacency {
  /// N(i), sorted ascending, never containing i.
  std::vector<std::vector<int>> neighbors;
  /// Incident face indices per vertex.
  std::vector<std::vector<int>> faces;

  std::size_t size() const { return neighbors.size(); }

  /// Edge-only graph (no faces), e.g. for polylines.
  static Adjacency from_edges(int vertex_count, std::span<const std::pair<int, int>> edges);
};

Adjacency build_adjacency(const TriMesh& mesh);

enum class WeightScheme { Uniform, Cotangent };

/// Lower clamp applied to every cotangent edge weight.
inline constexpr double kMinCotangentWeight = 1e-6;

struct VertexWeights {
  WeightScheme scheme = WeightScheme::Uniform;
  /// Symmetric, zero diagonal; entry (i,j) is w_ij for every mesh edge.
  Eigen::SparseMatrix<double> edge;
  /// Mixed-Voronoi area per vertex (mm^2).
  Eigen::VectorXd area;
};

VertexWeights uniform_weights(const TriMesh& mesh);
VertexWeights cotangent_weights(const TriMesh& mesh);
VertexWeights make_weights(const TriMesh& mesh, WeightScheme scheme);

struct NormalField {
  Points normals;
  /// Vertices whose neighborhood is isolated or entirely degenerate; their normal is zero.
  std::vector<int> undefined;
};

NormalField vertex_normals(const TriMesh& mesh);

Eigen::VectorXd face_areas(const TriMesh& mesh);
double surface_area(const TriMesh& mesh);
Eigen::VectorXd voronoi_areas(const TriMesh& mesh);

/// L with L_ij = w_ij off the diagonal and L_ii = -sum_j w_ij, so (L x)_i = sum_j w_ij (x_j - x_i).
Eigen::SparseMatrix<double> laplacian_matrix(const VertexWeights& weights);

/// Per-vertex sum_j w_ij (x_j - x_i).
Points laplacian(const TriMesh& mesh, const Points& positions, const VertexWeights& weights);

/// laplacian() divided by the vertex area; zero where the area is zero.
Points laplace_beltrami(const TriMesh& mesh, const Points& positions, const VertexWeights& weights);

/// Every undirected edge is shared by exactly two faces with opposite orientation.
bool is_closed(const TriMesh& mesh);

/// Signed enclosed volume (positive for outward-oriented closed meshes).
double signed_volume(const TriMesh& mesh);

Eigen::Vector3d centroid(const Points& points);

TriMesh icosphere(double radius, int subdivisions);
/// Axis-aligned unit cube [0,1]^3; every face diagonal passes through (0,0,0) or (1,1,1).
TriMesh unit_cube();

}  // namespace spinefuse
