#pragma once

#include <spinefuse/mesh.hpp>
#include <spinefuse/registration.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace spinefuse {

enum class Endplate { Superior, Inferior };
enum class Plane { Sagittal, Coronal };

/// Right-handed anatomical frame: anterior x left = superior.
struct BodyFrame {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d anterior = Eigen::Vector3d::UnitX();
  Eigen::Vector3d left = Eigen::Vector3d::UnitY();
  Eigen::Vector3d superior = Eigen::Vector3d::UnitZ();

  void check() const;
};

struct Vertebra {
  std::string label;
  /// Global indices into SpineModel::mesh.
  std::vector<int> vertices;
  /// Faces of the vertebra sub-mesh, indexing into `vertices`.
  Faces faces;
  /// Endplate vertex sets, indexing into `vertices`.
  std::vector<int> superior;
  std::vector<int> inferior;
};

struct SpineModel {
  /// Whole spine as one surface (vertebrae joined through the discs).
  TriMesh mesh;
  /// Superior to inferior.
  std::vector<Vertebra> vertebrae;
  BodyFrame frame;

  const Vertebra* find(const std::string& label) const;
  /// Throws Error(Lookup).
  const Vertebra& at(const std::string& label) const;
  Points positions(const Vertebra& v) const;
  TriMesh submesh(const Vertebra& v) const;
  /// Union of the global vertex indices of the listed vertebrae.
  std::vector<int> vertex_indices(const std::vector<std::string>& labels) const;

  /// Unique, anatomically ordered labels; indices in range; orthonormal frame.
  void check() const;
};

/// C1..C7, T1..T12, L1..L5, sacrum, pelvis.
const std::vector<std::string>& anatomical_order();

Eigen::Vector3d vertebra_centroid(const SpineModel& spine, const std::string& label);

/// Centroid landmarks for `names`, each with the given sigma.
LandmarkSet centroid_landmarks(const SpineModel& spine, const std::vector<std::string>& names, double sigma,
                               const std::string& frame);

/// Principal axis of the endplate vertices projected into the plane, expressed in the
/// plane basis (sagittal: anterior, superior; coronal: left, superior) and oriented so the
/// first coordinate is non-negative.
Eigen::Vector2d endplate_direction(const SpineModel& spine, const std::string& label, Endplate which,
                                   Plane plane = Plane::Sagittal);

struct EndplateRef {
  std::string label;
  Endplate which = Endplate::Superior;
};

struct CobbMeasurement {
  /// Signed degrees; positive for posterior convexity in the sagittal plane.
  double angle_deg = 0.0;
  EndplateRef upper;
  EndplateRef lower;
  Plane plane = Plane::Sagittal;
  /// |angle| < 90.
  bool plausible = true;
};

CobbMeasurement cobb_angle(const SpineModel& spine, const EndplateRef& upper = {"L1", Endplate::Superior},
                           const EndplateRef& lower = {"L5", Endplate::Inferior}, Plane plane = Plane::Sagittal);

/// Replace the vertex positions, keeping labels, endplates and frame.
SpineModel with_positions(const SpineModel& spine, const Points& positions);

std::string to_string(Endplate e);
std::string to_string(Plane p);
Endplate endplate_from_string(const std::string& s);
Plane plane_from_string(const std::string& s);
/// "L1:superior"
EndplateRef parse_endplate_ref(const std::string& s);

// Directory container: manifest.json, spine.ply (joined mesh), <label>.ply per vertebra.
SpineModel read_spine(const std::filesystem::path& dir);
void write_spine(const std::filesystem::path& dir, const SpineModel& spine);
BodyFrame read_frame(const std::filesystem::path& path);
void write_frame(const std::filesystem::path& path, const BodyFrame& frame);
void write_cobb(const std::filesystem::path& path, const CobbMeasurement& m);

}  // namespace spinefuse
