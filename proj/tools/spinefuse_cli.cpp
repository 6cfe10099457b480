#include <spinefuse/arap.hpp>
#include <spinefuse/error.hpp>
#include <spinefuse/mesh_io.hpp>
#include <spinefuse/pipeline.hpp>
#include <spinefuse/registration.hpp>
#include <spinefuse/skinfit.hpp>
#include <spinefuse/spine.hpp>
#include <spinefuse/synth.hpp>

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace spinefuse;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 2;
constexpr int kNumericError = 3;
constexpr int kPartialBatch = 4;

std::vector<std::string> split_labels(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_angles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_labels(s)) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw Error(ErrorKind::Config, "bad angle '" + item + "' in --thetas");
    out.push_back(v);
  }
  return out;
}

Eigen::Vector3d parse_vec3(const std::vector<double>& v, const std::string& what) {
  if (v.size() != 3) throw Error(ErrorKind::Config, what + " needs exactly 3 numbers");
  return {v[0], v[1], v[2]};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Parse, path.string() + ": cannot open file for writing");
  out << text;
}

WeightScheme scheme_from(const std::string& s) {
  if (s == "uniform") return WeightScheme::Uniform;
  if (s == "cotangent") return WeightScheme::Cotangent;
  throw Error(ErrorKind::Config, "unknown weight scheme '" + s + "'");
}

GlobalMode global_mode_from(const std::string& s) {
  if (s == "solve") return GlobalMode::Solve;
  if (s == "jacobi") return GlobalMode::Jacobi;
  throw Error(ErrorKind::Config, "unknown global mode '" + s + "'");
}

struct CaseOptions {
  double rotation_max = 45.0;
  double rotation_fixed = 0.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double translation_max = 100.0;
  std::vector<double> offset{10.0, 0.0, 0.0};
  double noise = 0.5;
  std::string posture_anchors = "C1";

  void add_to(CLI::App* app) {
    app->add_option("--rotation-max", rotation_max, "Largest random rotation (deg)");
    app->add_option("--rotation-deg", rotation_fixed, "Exact rotation angle about a random axis (deg)");
    app->add_option("--scale-min", scale_min);
    app->add_option("--scale-max", scale_max);
    app->add_option("--translation-max", translation_max, "Largest translation (mm)");
    app->add_option("--offset", offset, "Pelvis/sacrum posture offset x y z (mm)")->expected(3);
    app->add_option("--noise", noise, "Landmark noise sigma (mm)");
    app->add_option("--posture-anchors", posture_anchors, "Vertebrae fixed during the posture change");
  }

  CaseSpec spec() const {
    CaseSpec c;
    c.max_rotation_deg = rotation_max;
    c.fixed_rotation_deg = rotation_fixed;
    c.min_scale = scale_min;
    c.max_scale = scale_max;
    c.max_translation = translation_max;
    c.handle_offset = parse_vec3(offset, "--offset");
    c.noise_sigma = noise;
    c.posture_anchors = split_labels(posture_anchors);
    return c;
  }
};

struct ArapOptions {
  int iters = 100;
  double tol = 1e-6;
  std::string weights = "uniform";
  std::string global_mode = "solve";

  void add_to(CLI::App* app) {
    app->add_option("--iters", iters, "ARAP iterations");
    app->add_option("--tol", tol, "Relative energy change tolerance");
    app->add_option("--weights", weights, "uniform | cotangent");
    app->add_option("--global-mode", global_mode, "solve | jacobi");
  }

  ArapConfig config() const {
    ArapConfig c;
    c.max_iters = iters;
    c.energy_rel_tol = tol;
    c.weights = scheme_from(weights);
    c.global_mode = global_mode_from(global_mode);
    c.check();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spinefuse: spine model to skeleton fusion and Cobb measurement"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic case directory");
  double synth_theta = 31.8;
  std::uint64_t synth_seed = 0;
  fs::path synth_out;
  CaseOptions synth_case;
  synth->add_option("--theta", synth_theta, "Ground-truth sagittal Cobb angle (deg)");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out)->required();
  synth_case.add_to(synth);

  // coarse
  auto* coarse = app.add_subcommand("coarse", "Landmark similarity registration");
  fs::path coarse_source, coarse_target, coarse_out, coarse_spine;
  std::string coarse_subset = "full";
  coarse->add_option("--source", coarse_source, "Landmarks in the moving frame")->required();
  coarse->add_option("--target", coarse_target, "Landmarks in the fixed frame")->required();
  coarse->add_option("--subset", coarse_subset, "full | reduced | custom:<names>");
  coarse->add_option("--spine", coarse_spine, "Spine container to transform");
  coarse->add_option("--out", coarse_out)->required();

  // arap
  auto* arap = app.add_subcommand("arap", "As-rigid-as-possible deformation with handles");
  fs::path arap_mesh, arap_handles, arap_out, arap_transform;
  ArapOptions arap_opts;
  arap->add_option("--mesh", arap_mesh, "Input OBJ/PLY")->required();
  arap->add_option("--handles", arap_handles, "Handle JSON")->required();
  arap->add_option("--transform", arap_transform, "Similarity applied before deforming");
  arap->add_option("--out", arap_out)->required();
  arap_opts.add_to(arap);

  // skinfit
  auto* skin = app.add_subcommand("skinfit", "Fit a surface to a wrap surface with bending regularization");
  fs::path skin_mesh, skin_wrap, skin_out, skin_fixed_src, skin_fixed_dst;
  SkinFitConfig skin_cfg;
  std::string skin_weights = "cotangent";
  skin->add_option("--mesh", skin_mesh, "Initial surface M")->required();
  skin->add_option("--wrap", skin_wrap, "Closed wrap surface W")->required();
  skin->add_option("--w-fit", skin_cfg.w_fit);
  skin->add_option("--w-reg", skin_cfg.w_reg);
  skin->add_option("--iters", skin_cfg.outer_iters);
  skin->add_option("--margin", skin_cfg.collision_margin, "Collision depth margin (mm)");
  skin->add_option("--weights", skin_weights, "uniform | cotangent");
  skin->add_option("--fixed-source", skin_fixed_src, "Landmarks on M");
  skin->add_option("--fixed-target", skin_fixed_dst, "Matching landmarks on W");
  skin->add_option("--out", skin_out)->required();

  // cobb
  auto* cobb = app.add_subcommand("cobb", "Measure a Cobb angle on a spine container");
  fs::path cobb_spine, cobb_frame, cobb_out;
  std::string cobb_upper = "L1:superior", cobb_lower = "L5:inferior", cobb_plane = "sagittal";
  cobb->add_option("--spine", cobb_spine)->required();
  cobb->add_option("--frame", cobb_frame, "Body frame JSON overriding the manifest frame");
  cobb->add_option("--upper", cobb_upper);
  cobb->add_option("--lower", cobb_lower);
  cobb->add_option("--plane", cobb_plane, "sagittal | coronal");
  cobb->add_option("--out", cobb_out, "Write the measurement JSON");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Register a CT spine to the skeleton and measure");
  fs::path pipe_case, pipe_out;
  PipelineInputs pipe_in;
  std::string pipe_method = "ours", pipe_subset = "full", pipe_anchors;
  std::uint64_t pipe_seed = 0;
  ArapOptions pipe_arap;
  pipe->add_option("--case", pipe_case, "Synthetic case directory (sets all inputs)");
  pipe->add_option("--spine", pipe_in.spine_dir);
  pipe->add_option("--ct-landmarks", pipe_in.ct_landmarks);
  pipe->add_option("--skeleton-landmarks", pipe_in.skeleton_landmarks);
  pipe->add_option("--handles", pipe_in.handles);
  pipe->add_option("--skeleton-mesh", pipe_in.skeleton_mesh);
  pipe->add_option("--frame", pipe_in.frame);
  pipe->add_option("--method", pipe_method, "ours | feature-only | icp-arap");
  pipe->add_option("--subset", pipe_subset, "full | reduced | custom:<names>");
  pipe->add_option("--anchors", pipe_anchors, "Vertebrae held during the fine stage");
  pipe->add_option("--seed", pipe_seed, "Recorded only; the pipeline is deterministic");
  pipe->add_option("--out", pipe_out)->required();
  pipe_arap.add_to(pipe);

  // compare
  auto* cmp = app.add_subcommand("compare", "Run the method x subset comparison battery");
  std::uint64_t cmp_seed = 0;
  fs::path cmp_out, cmp_render;
  std::optional<std::string> cmp_thetas;
  std::string cmp_anchors;
  bool cmp_keep = false;
  CaseOptions cmp_case;
  cmp->add_option("--seed", cmp_seed);
  cmp->add_option("--out", cmp_out, "Output directory (or CSV path with --render)");
  cmp->add_option("--thetas", cmp_thetas, "Comma-separated ground-truth angles, one case each (empty: no cases)");
  cmp->add_option("--anchors", cmp_anchors, "Vertebrae held during the fine stage");
  cmp->add_option("--render", cmp_render, "Re-render CSV from a report JSON");
  cmp->add_flag("--keep-artifacts", cmp_keep, "Write every case and cell output below --out");
  cmp_case.add_to(cmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*synth) {
      CaseSpec spec = synth_case.spec();
      spec.theta_gt_deg = synth_theta;
      spec.seed = synth_seed;
      const SynthCase c = make_case(spec);
      write_case(synth_out, c);
      std::printf("theta_gt_deg %.6f\n", c.truth.theta_gt_deg);
    } else if (*coarse) {
      const auto report = coarse_register(read_landmarks(coarse_source), read_landmarks(coarse_target),
                                          parse_landmark_subset(coarse_subset));
      fs::create_directories(coarse_out);
      write_transform(coarse_out / "transform.json", report.transform);
      write_registration_report(coarse_out / "registration.json", report);
      if (!coarse_spine.empty()) {
        const SpineModel s = read_spine(coarse_spine);
        write_spine(coarse_out / "registered", with_positions(s, apply_transform(s.mesh.vertices, report.transform)));
      }
      std::printf("rms_mm %.6f\n", report.rms);
    } else if (*arap) {
      TriMesh mesh = read_mesh(arap_mesh);
      if (!arap_transform.empty()) mesh = apply_transform(mesh, read_transform(arap_transform));
      const auto result = arap_deform(mesh, read_handles(arap_handles), arap_opts.config());
      fs::create_directories(arap_out);
      write_ply(arap_out / "deformed.ply", result.mesh);
      write_energy_trace(arap_out / "energy_trace.csv", result.energy_trace);
      std::printf("iterations %d energy_mm2 %.9g converged %d\n", result.iterations, result.energy_trace.back(),
                  result.converged ? 1 : 0);
    } else if (*skin) {
      skin_cfg.weights = scheme_from(skin_weights);
      const TriMesh m = read_mesh(skin_mesh);
      const TriMesh w = read_mesh(skin_wrap);
      std::vector<FixedPair> fixed;
      if (!skin_fixed_src.empty() || !skin_fixed_dst.empty()) {
        if (skin_fixed_src.empty() || skin_fixed_dst.empty())
          throw Error(ErrorKind::Config, "--fixed-source and --fixed-target go together");
        fixed = fixed_pairs_from_landmarks(m, read_landmarks(skin_fixed_src), read_landmarks(skin_fixed_dst));
      }
      const auto result = fit_surface(m, w, skin_cfg, fixed);
      fs::create_directories(skin_out);
      write_ply(skin_out / "fitted.ply", result.mesh);
      write_skinfit_trace(skin_out / "skinfit_trace.csv", result.trace);
      std::printf("iterations %zu energy %.9g\n", result.trace.size(), result.trace.back().energy_after);
    } else if (*cobb) {
      SpineModel s = read_spine(cobb_spine);
      if (!cobb_frame.empty()) s.frame = read_frame(cobb_frame);
      const auto m = cobb_angle(s, parse_endplate_ref(cobb_upper), parse_endplate_ref(cobb_lower),
                                plane_from_string(cobb_plane));
      if (!cobb_out.empty()) write_cobb(cobb_out, m);
      std::printf("cobb_deg %.6f%s\n", m.angle_deg, m.plausible ? "" : " (implausible)");
    } else if (*pipe) {
      PipelineConfig cfg;
      cfg.inputs = pipe_case.empty() ? pipe_in : PipelineInputs::from_case_dir(pipe_case);
      if (cfg.inputs.spine_dir.empty() || cfg.inputs.ct_landmarks.empty() || cfg.inputs.skeleton_landmarks.empty())
        throw Error(ErrorKind::Config, "pipeline needs --case or --spine, --ct-landmarks and --skeleton-landmarks");
      cfg.method.method = method_from_string(pipe_method);
      cfg.method.subset = parse_landmark_subset(pipe_subset);
      if (!pipe_anchors.empty()) cfg.method.anchors = split_labels(pipe_anchors);
      cfg.method.arap = pipe_arap.config();
      cfg.out_dir = pipe_out;
      const auto out = run_pipeline(cfg);
      std::printf("cobb_deg %.6f\n", out.cobb.angle_deg);
    } else if (*cmp) {
      if (!cmp_render.empty()) {
        const std::string csv = render_csv(read_report(cmp_render));
        if (cmp_out.empty())
          std::fwrite(csv.data(), 1, csv.size(), stdout);
        else
          write_file(cmp_out, csv);
        return kOk;
      }
      if (cmp_out.empty()) throw Error(ErrorKind::Config, "compare needs --out");
      BatchConfig batch;
      batch.seed = cmp_seed;
      if (cmp_thetas) batch.thetas_deg = parse_angles(*cmp_thetas);
      batch.case_template = cmp_case.spec();
      if (!cmp_anchors.empty()) batch.anchors = split_labels(cmp_anchors);
      if (cmp_keep) batch.work_dir = cmp_out / "work";
      const auto report = run_comparison(batch);
      fs::create_directories(cmp_out);
      write_file(cmp_out / "report.csv", render_csv(report));
      write_file(cmp_out / "report.json", render_json(report));
      if (report.failed_cells() > 0) {
        std::fprintf(stderr, "spinefuse: %d of %zu cells failed\n", report.failed_cells(),
                     report.rows.size() * report.columns.size());
        return kPartialBatch;
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "spinefuse: %s\n", e.what());
    return e.is_input_error() ? kInputError : kNumericError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "spinefuse: %s\n", e.what());
    return kInputError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "spinefuse: %s\n", e.what());
    return kNumericError;
  }
  return kOk;
}
