#pragma once

#include <spinefuse/arap.hpp>
#include <spinefuse/registration.hpp>
#include <spinefuse/similarity.hpp>
#include <spinefuse/spine.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace spinefuse {

struct SegmentSize {
  double height = 20.0;
  double ap_half = 12.0;       // anterior-posterior half width
  double lateral_half = 15.0;  // left-right half width
};

struct SynthSpec {
  /// Sagittal arc angle between the L1 superior and L5 inferior endplates.
  double theta_gt_deg = 0.0;
  /// Optional coronal S-curve: +angle over the upper half of the thoracic run, -angle over the lower half.
  double coronal_deg = 0.0;
  double disc_gap = 8.0;
  SegmentSize cervical{14.0, 8.0, 10.0};
  SegmentSize thoracic{20.0, 12.0, 15.0};
  SegmentSize lumbar{28.0, 16.0, 22.0};
  SegmentSize sacrum{40.0, 20.0, 30.0};
  SegmentSize pelvis{50.0, 40.0, 80.0};
  std::uint64_t seed = 0;
  /// Landmark noise used by perturb (mm).
  double noise_sigma = 0.0;

  void check() const;
};

struct SynthSpine {
  SpineModel spine;
  double theta_gt_deg = 0.0;
  std::map<std::string, Eigen::Vector3d> centroids;
  /// Exact centroid landmarks C1, C7, T7, L4, L5.
  LandmarkSet landmarks;
};

SynthSpine make_spine(const SynthSpec& spec);

/// Labels whose vertices act as posture handles.
const std::vector<std::string>& handle_labels();  // sacrum, pelvis

struct PerturbSpec {
  SimilarityTransform transform;
  /// Displacement of the pelvis and sacrum before the transform (mm).
  Eigen::Vector3d handle_offset = Eigen::Vector3d::Zero();
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  /// Vertebrae held in place while the posture change bends the spine.
  std::vector<std::string> posture_anchors{"C1"};
};

struct Perturbed {
  SpineModel spine;
  LandmarkSet landmarks;
};

/// Posture change (pelvis and sacrum moved by handle_offset, ARAP for the rest), then the
/// similarity transform, then Gaussian noise on centroid landmarks.
Perturbed perturb(const SpineModel& spine, const PerturbSpec& spec);

SimilarityTransform random_similarity(std::mt19937_64& rng, double max_rotation_deg, double min_scale,
                                      double max_scale, double max_translation);
/// Rotation by exactly `rotation_deg` about a random axis.
SimilarityTransform random_similarity_fixed_angle(std::mt19937_64& rng, double rotation_deg, double min_scale,
                                                  double max_scale, double max_translation);

/// Independent per-case seed derived from a batch seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct CaseSpec {
  double theta_gt_deg = 0.0;
  std::uint64_t seed = 0;
  double max_rotation_deg = 45.0;
  /// When > 0 the rotation angle is exactly this value instead of being drawn up to the maximum.
  double fixed_rotation_deg = 0.0;
  double min_scale = 0.9;
  double max_scale = 1.1;
  double max_translation = 100.0;
  Eigen::Vector3d handle_offset{10.0, 0.0, 0.0};
  double noise_sigma = 0.5;
  std::vector<std::string> posture_anchors{"C1"};
};

struct SynthCase {
  CaseSpec spec;
  /// Skeleton-frame spine (ground truth).
  SynthSpine truth;
  /// CT-frame spine and its landmarks.
  Perturbed ct;
  SimilarityTransform transform;
  LandmarkSet skeleton_landmarks;
  /// Pelvis and sacrum vertices at their skeleton-frame positions.
  HandleMap handles;
};

SynthCase make_case(const CaseSpec& spec);

/// Layout: ct/ (spine container), ct_landmarks.json, skeleton/{landmarks.json, handles.json,
/// skeleton.ply, frame.json}, truth/ (spine container), ground_truth.json.
void write_case(const std::filesystem::path& dir, const SynthCase& c);

struct GroundTruthRecord {
  double theta_gt_deg = 0.0;
  SimilarityTransform transform;
  Eigen::Vector3d handle_offset = Eigen::Vector3d::Zero();
  std::uint64_t seed = 0;
};

GroundTruthRecord read_ground_truth(const std::filesystem::path& path);
void write_ground_truth(const std::filesystem::path& path, const GroundTruthRecord& record);

}  // namespace spinefuse
