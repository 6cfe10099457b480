#include <spinefuse/error.hpp>
#include <spinefuse/mesh_io.hpp>
#include <spinefuse/synth.hpp>

#include "json_util.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spinefuse {

using detail::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// constant-curvature piece of the centerline: the frame turns by kappa per mm about a fixed world axis
struct Piece {
  double begin = 0.0;
  double end = 0.0;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitY();
  double kappa = 0.0;
};

struct FramePoint {
  Eigen::Vector3d position;
  Eigen::Matrix3d frame;  // columns: anterior, left, superior
};

class Centerline {
 public:
  explicit Centerline(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {}

  // arc length s >= 0 measured downward from the top
  FramePoint at(double s) const {
    FramePoint f{Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity()};
    double cursor = 0.0;
    auto advance = [&](double len, const Eigen::Vector3d& k, double kappa) {
      const Eigen::Vector3d t0 = -f.frame.col(2);
      if (kappa == 0.0) {
        f.position += len * t0;
        return;
      }
      const double a = kappa * len;
      const Eigen::Vector3d along = k.dot(t0) * k;
      f.position += len * along + std::sin(a) / kappa * (t0 - along) + (1.0 - std::cos(a)) / kappa * k.cross(t0);
      f.frame = Eigen::AngleAxisd(a, k).toRotationMatrix() * f.frame;
    };
    for (const auto& p : pieces_) {
      if (cursor < p.begin) {
        const double len = std::min(p.begin, s) - cursor;
        if (len > 0.0) advance(len, p.axis, 0.0);
        cursor = std::min(p.begin, s);
      }
      if (cursor >= s) return f;
      const double len = std::min(p.end, s) - cursor;
      if (len > 0.0) advance(len, p.axis, p.kappa);
      cursor = std::min(p.end, s);
      if (cursor >= s) return f;
    }
    if (s > cursor) advance(s - cursor, Eigen::Vector3d::UnitY(), 0.0);
    return f;
  }

 private:
  std::vector<Piece> pieces_;
};

const SegmentSize& size_for(const SynthSpec& spec, const std::string& label) {
  if (label == "sacrum") return spec.sacrum;
  if (label == "pelvis") return spec.pelvis;
  switch (label[0]) {
    case 'C': return spec.cervical;
    case 'T': return spec.thoracic;
    default: return spec.lumbar;
  }
}

// ring corners in (anterior, left) half-width units; clockwise seen from above
constexpr double kCorners[4][2] = {{1, 1}, {1, -1}, {-1, -1}, {-1, 1}};

void add_quad(std::vector<Eigen::Vector3i>& faces, int ti, int tj, int bj, int bi) {
  faces.emplace_back(ti, tj, bj);
  faces.emplace_back(ti, bj, bi);
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng, double angle_rad) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector3d axis;
  do {
    axis = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
  } while (axis.norm() < 1e-6);
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

SimilarityTransform draw_rest(std::mt19937_64& rng, const Eigen::Matrix3d& rotation, double min_scale,
                              double max_scale, double max_translation) {
  std::uniform_real_distribution<double> scale(min_scale, max_scale);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  SimilarityTransform t;
  t.rotation = rotation;
  t.scale = min_scale == max_scale ? min_scale : scale(rng);
  Eigen::Vector3d dir;
  do {
    dir = Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
  } while (dir.norm() > 1.0);
  t.translation = max_translation * dir;
  return t;
}

}  // namespace

void SynthSpec::check() const {
  if (!(std::abs(theta_gt_deg) < 90.0)) throw Error(ErrorKind::Config, "theta_gt_deg must lie in (-90, 90)");
  if (!(std::abs(coronal_deg) < 90.0)) throw Error(ErrorKind::Config, "coronal_deg must lie in (-90, 90)");
  if (!(disc_gap > 0.0)) throw Error(ErrorKind::Config, "disc gap must be > 0");
  for (const auto* s : {&cervical, &thoracic, &lumbar, &sacrum, &pelvis}) {
    if (!(s->height > 0.0) || !(s->ap_half > 0.0) || !(s->lateral_half > 0.0))
      throw Error(ErrorKind::Config, "segment sizes must be > 0");
  }
  if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::Config, "noise sigma must be >= 0");
}

const std::vector<std::string>& handle_labels() {
  static const std::vector<std::string> labels{"sacrum", "pelvis"};
  return labels;
}

SynthSpine make_spine(const SynthSpec& spec) {
  spec.check();
  const auto& labels = anatomical_order();
  const std::size_t count = labels.size();

  std::vector<double> top(count), bottom(count);
  double s = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    top[k] = s;
    bottom[k] = s + size_for(spec, labels[k]).height;
    s = bottom[k] + spec.disc_gap;
  }
  auto index_of = [&](const std::string& l) {
    return static_cast<std::size_t>(std::find(labels.begin(), labels.end(), l) - labels.begin());
  };

  std::vector<Piece> pieces;
  if (spec.coronal_deg != 0.0) {
    const double t_begin = top[index_of("T1")];
    const double t_end = bottom[index_of("T12")];
    const double mid = 0.5 * (t_begin + t_end);
    const double kc = spec.coronal_deg * kDeg / (mid - t_begin);
    if (std::abs(kc) * spec.thoracic.lateral_half >= 0.9)
      throw Error(ErrorKind::Config, "coronal curvature makes vertebrae overlap");
    pieces.push_back({t_begin, mid, Eigen::Vector3d::UnitX(), kc});
    pieces.push_back({mid, t_end, Eigen::Vector3d::UnitX(), -kc});
  }
  const double arc_begin = top[index_of("L1")];
  const double arc_end = bottom[index_of("L5")];
  const double kappa = spec.theta_gt_deg * kDeg / (arc_end - arc_begin);
  if (std::abs(kappa) * spec.lumbar.ap_half >= 0.9)
    throw Error(ErrorKind::Config, "sagittal curvature makes vertebrae overlap");
  // turning about -left bends the downward tangent toward anterior for positive angles
  if (kappa != 0.0) pieces.push_back({arc_begin, arc_end, -Eigen::Vector3d::UnitY(), kappa});
  const Centerline line(pieces);

  Points vertices(static_cast<Eigen::Index>(8 * count), 3);
  for (std::size_t k = 0; k < count; ++k) {
    const SegmentSize& sz = size_for(spec, labels[k]);
    for (int ring = 0; ring < 2; ++ring) {
      const FramePoint f = line.at(ring == 0 ? top[k] : bottom[k]);
      for (int c = 0; c < 4; ++c) {
        const Eigen::Vector3d p =
            f.position + f.frame.col(0) * (kCorners[c][0] * sz.ap_half) + f.frame.col(1) * (kCorners[c][1] * sz.lateral_half);
        vertices.row(static_cast<Eigen::Index>(8 * k + 4 * ring + c)) = p.transpose();
      }
    }
  }

  // local box: superior ring 0..3, inferior ring 4..7
  Faces box(12, 3);
  {
    std::vector<Eigen::Vector3i> f;
    f.emplace_back(0, 3, 2);
    f.emplace_back(0, 2, 1);
    f.emplace_back(4, 5, 6);
    f.emplace_back(4, 6, 7);
    for (int c = 0; c < 4; ++c) add_quad(f, c, (c + 1) % 4, 4 + (c + 1) % 4, 4 + c);
    for (int i = 0; i < 12; ++i) box.row(i) = f[i].transpose();
  }

  std::vector<Eigen::Vector3i> faces;
  faces.emplace_back(0, 3, 2);
  faces.emplace_back(0, 2, 1);
  for (std::size_t k = 0; k < count; ++k) {
    const int b = static_cast<int>(8 * k);
    for (int c = 0; c < 4; ++c) add_quad(faces, b + c, b + (c + 1) % 4, b + 4 + (c + 1) % 4, b + 4 + c);
    if (k + 1 < count) {
      const int n = b + 8;
      for (int c = 0; c < 4; ++c) add_quad(faces, b + 4 + c, b + 4 + (c + 1) % 4, n + (c + 1) % 4, n + c);
    }
  }
  const int last = static_cast<int>(8 * (count - 1));
  faces.emplace_back(last + 4, last + 5, last + 6);
  faces.emplace_back(last + 4, last + 6, last + 7);

  SynthSpine out;
  out.spine.mesh.vertices = std::move(vertices);
  out.spine.mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) out.spine.mesh.faces.row(i) = faces[i].transpose();
  for (std::size_t k = 0; k < count; ++k) {
    Vertebra v;
    v.label = labels[k];
    for (int i = 0; i < 8; ++i) v.vertices.push_back(static_cast<int>(8 * k) + i);
    v.faces = box;
    v.superior = {0, 1, 2, 3};
    v.inferior = {4, 5, 6, 7};
    out.spine.vertebrae.push_back(std::move(v));
  }
  out.spine.check();

  out.theta_gt_deg = spec.theta_gt_deg;
  for (const auto& l : labels) out.centroids[l] = vertebra_centroid(out.spine, l);
  out.landmarks = centroid_landmarks(out.spine, full_landmark_subset(), spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0,
                                     "skeleton");
  return out;
}

Perturbed perturb(const SpineModel& spine, const PerturbSpec& spec) {
  spine.check();
  spec.transform.check();
  if (!(spec.noise_sigma >= 0.0)) throw Error(ErrorKind::Config, "noise sigma must be >= 0");

  Points posed = spine.mesh.vertices;
  if (!spec.handle_offset.isZero(0.0)) {
    HandleMap handles;
    for (int v : spine.vertex_indices(handle_labels()))
      handles[v] = spine.mesh.vertices.row(v).transpose() + spec.handle_offset;
    for (int v : spine.vertex_indices(spec.posture_anchors)) {
      if (handles.count(v)) throw Error(ErrorKind::Config, "posture anchors overlap the pelvis/sacrum handles");
      handles[v] = spine.mesh.vertices.row(v).transpose();
    }
    ArapConfig cfg;
    cfg.max_iters = 200;
    cfg.energy_rel_tol = 1e-10;
    posed = arap_deform(spine.mesh, handles, cfg).mesh.vertices;
  }

  Perturbed out;
  out.spine = with_positions(spine, apply_transform(posed, spec.transform));
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  out.landmarks = centroid_landmarks(out.spine, full_landmark_subset(), spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0,
                                     "ct");
  if (spec.noise_sigma > 0.0) {
    for (auto& l : out.landmarks.entries) {
      for (int a = 0; a < 3; ++a) l.position[a] += spec.noise_sigma * gauss(rng);
    }
  }
  return out;
}

SimilarityTransform random_similarity(std::mt19937_64& rng, double max_rotation_deg, double min_scale,
                                      double max_scale, double max_translation) {
  std::uniform_real_distribution<double> angle(0.0, max_rotation_deg * kDeg);
  const Eigen::Matrix3d r = random_rotation(rng, angle(rng));
  return draw_rest(rng, r, min_scale, max_scale, max_translation);
}

SimilarityTransform random_similarity_fixed_angle(std::mt19937_64& rng, double rotation_deg, double min_scale,
                                                  double max_scale, double max_translation) {
  const Eigen::Matrix3d r = random_rotation(rng, rotation_deg * kDeg);
  return draw_rest(rng, r, min_scale, max_scale, max_translation);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

SynthCase make_case(const CaseSpec& spec) {
  SynthCase c;
  c.spec = spec;
  SynthSpec s;
  s.theta_gt_deg = spec.theta_gt_deg;
  s.seed = spec.seed;
  s.noise_sigma = spec.noise_sigma;
  c.truth = make_spine(s);

  std::mt19937_64 rng(derive_seed(spec.seed, 0));
  c.transform = spec.fixed_rotation_deg > 0.0
                    ? random_similarity_fixed_angle(rng, spec.fixed_rotation_deg, spec.min_scale, spec.max_scale,
                                                    spec.max_translation)
                    : random_similarity(rng, spec.max_rotation_deg, spec.min_scale, spec.max_scale, spec.max_translation);

  PerturbSpec p;
  p.transform = c.transform;
  p.handle_offset = spec.handle_offset;
  p.noise_sigma = spec.noise_sigma;
  p.seed = derive_seed(spec.seed, 1);
  p.posture_anchors = spec.posture_anchors;
  c.ct = perturb(c.truth.spine, p);

  c.skeleton_landmarks = centroid_landmarks(c.truth.spine, full_landmark_subset(), 1.0, "skeleton");
  for (int v : c.truth.spine.vertex_indices(handle_labels())) c.handles[v] = c.truth.spine.mesh.vertices.row(v).transpose();
  return c;
}

void write_case(const std::filesystem::path& dir, const SynthCase& c) {
  std::filesystem::create_directories(dir / "skeleton");
  write_spine(dir / "ct", c.ct.spine);
  write_landmarks(dir / "ct_landmarks.json", c.ct.landmarks);
  write_landmarks(dir / "skeleton" / "landmarks.json", c.skeleton_landmarks);
  write_handles(dir / "skeleton" / "handles.json", c.handles);
  write_ply(dir / "skeleton" / "skeleton.ply", c.truth.spine.mesh);
  write_frame(dir / "skeleton" / "frame.json", c.truth.spine.frame);
  write_spine(dir / "truth", c.truth.spine);
  write_ground_truth(dir / "ground_truth.json", {c.truth.theta_gt_deg, c.transform, c.spec.handle_offset, c.spec.seed});
}

GroundTruthRecord read_ground_truth(const std::filesystem::path& path) {
  const json j = detail::read_json(path);
  if (!j.is_object() || !j.contains("theta_gt_deg") || !j["theta_gt_deg"].is_number())
    detail::schema_fail(path, "ground truth needs a numeric 'theta_gt_deg'");
  GroundTruthRecord r;
  r.theta_gt_deg = j["theta_gt_deg"].get<double>();
  if (j.contains("transform")) r.transform = detail::transform_from(j["transform"], path);
  if (j.contains("handle_offset")) r.handle_offset = detail::vec3_from(j["handle_offset"], path, "handle_offset");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) detail::schema_fail(path, "'seed' must be an unsigned integer");
    r.seed = j["seed"].get<std::uint64_t>();
  }
  return r;
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruthRecord& record) {
  detail::write_json(path, json{{"theta_gt_deg", record.theta_gt_deg},
                                {"transform", detail::to_json(record.transform)},
                                {"handle_offset", detail::to_json(record.handle_offset)},
                                {"seed", record.seed}});
}

}  // namespace spinefuse
