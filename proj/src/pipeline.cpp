#include <spinefuse/error.hpp>
#include <spinefuse/mesh_io.hpp>
#include <spinefuse/pipeline.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

namespace spinefuse {

std::string to_string(Method m) {
  switch (m) {
    case Method::Ours: return "ours";
    case Method::FeatureOnly: return "feature-only";
    case Method::IcpArap: return "icp-arap";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "ours") return Method::Ours;
  if (s == "feature-only") return Method::FeatureOnly;
  if (s == "icp-arap") return Method::IcpArap;
  throw Error(ErrorKind::Config, "unknown method '" + s + "' (expected ours, feature-only or icp-arap)");
}

std::vector<std::string> default_anchor_labels() {
  // everything above the lumbar spine keeps its landmark-registered pose
  const auto& order = anatomical_order();
  const auto l1 = std::find(order.begin(), order.end(), "L1");
  return {order.begin(), l1};
}

PipelineOutcome run_method(const PipelineData& data, const MethodConfig& config) {
  PipelineOutcome out;
  if (config.method == Method::IcpArap) {
    if (!data.skeleton_mesh) throw Error(ErrorKind::Config, "the icp-arap method needs a skeleton mesh");
    out.registration = icp_register(data.ct.mesh, *data.skeleton_mesh, config.icp);
    if (!out.registration.transform.rotation.allFinite() || !out.registration.transform.translation.allFinite())
      throw Error(ErrorKind::Solver, "ICP diverged (non-finite transform)");
  } else {
    out.registration = coarse_register(data.ct_landmarks, data.skeleton_landmarks, config.subset);
  }

  out.aligned = with_positions(data.ct, apply_transform(data.ct.mesh.vertices, out.registration.transform));
  out.aligned.frame = data.frame;

  if (config.method != Method::FeatureOnly) {
    if (data.handles.empty()) throw Error(ErrorKind::Config, "the fine stage needs pelvis/sacrum handles");
    HandleMap handles = data.handles;
    for (int v : out.aligned.vertex_indices(config.anchors)) {
      if (!handles.count(v)) handles[v] = out.aligned.mesh.vertices.row(v).transpose();
    }
    out.arap = arap_deform(out.aligned.mesh, handles, config.arap);
    out.aligned.mesh.vertices = out.arap->mesh.vertices;
  }
  out.cobb = cobb_angle(out.aligned, config.upper, config.lower, Plane::Sagittal);
  return out;
}

PipelineInputs PipelineInputs::from_case_dir(const std::filesystem::path& dir) {
  PipelineInputs in;
  in.spine_dir = dir / "ct";
  in.ct_landmarks = dir / "ct_landmarks.json";
  in.skeleton_landmarks = dir / "skeleton" / "landmarks.json";
  in.handles = dir / "skeleton" / "handles.json";
  in.skeleton_mesh = dir / "skeleton" / "skeleton.ply";
  in.frame = dir / "skeleton" / "frame.json";
  return in;
}

PipelineData load_pipeline_data(const PipelineInputs& inputs, bool need_skeleton_mesh) {
  PipelineData d;
  d.ct = read_spine(inputs.spine_dir);
  d.ct_landmarks = read_landmarks(inputs.ct_landmarks);
  d.skeleton_landmarks = read_landmarks(inputs.skeleton_landmarks);
  if (!inputs.handles.empty()) d.handles = read_handles(inputs.handles);
  if (need_skeleton_mesh) {
    if (inputs.skeleton_mesh.empty()) throw Error(ErrorKind::Config, "no skeleton mesh given");
    d.skeleton_mesh = read_mesh(inputs.skeleton_mesh);
  }
  d.frame = inputs.frame.empty() ? d.ct.frame : read_frame(inputs.frame);
  return d;
}

void write_pipeline_outputs(const std::filesystem::path& dir, const PipelineOutcome& outcome) {
  std::filesystem::create_directories(dir);
  write_spine(dir / "aligned", outcome.aligned);
  write_registration_report(dir / "registration.json", outcome.registration);
  write_transform(dir / "transform.json", outcome.registration.transform);
  if (outcome.arap) write_energy_trace(dir / "energy_trace.csv", outcome.arap->energy_trace);
  write_cobb(dir / "cobb.json", outcome.cobb);
}

PipelineOutcome run_pipeline(const PipelineConfig& config) {
  const PipelineData data = load_pipeline_data(config.inputs, config.method.method == Method::IcpArap);
  PipelineOutcome out = run_method(data, config.method);
  if (!config.out_dir.empty()) write_pipeline_outputs(config.out_dir, out);
  return out;
}

std::string ComparisonColumn::name() const {
  std::string s = subset;
  std::replace(s.begin(), s.end(), ',', '+');
  return to_string(method) + "_" + s;
}

std::vector<ComparisonColumn> default_columns() {
  std::vector<ComparisonColumn> cols;
  for (Method m : {Method::Ours, Method::FeatureOnly, Method::IcpArap}) {
    for (const char* s : {"full", "reduced"}) cols.push_back({m, s});
  }
  return cols;
}

int ComparisonReport::failed_cells() const {
  int n = 0;
  for (const auto& r : rows) {
    for (const auto& c : r.cells) n += !c.ok;
  }
  return n;
}

double ComparisonReport::mean_abs_error(std::size_t column) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.cells[column].ok) {
      sum += std::abs(r.cells[column].measured_deg - r.ground_truth_deg);
      ++n;
    }
  }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

double ComparisonReport::max_abs_error(std::size_t column) const {
  double m = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rows) {
    if (r.cells[column].ok) {
      const double e = std::abs(r.cells[column].measured_deg - r.ground_truth_deg);
      m = std::isnan(m) ? e : std::max(m, e);
    }
  }
  return m;
}

int thread_limit_from_env() {
  if (const char* env = std::getenv("SPINEFUSE_THREADS")) {
    int n = 0;
    const char* end = env + std::char_traits<char>::length(env);
    auto [ptr, ec] = std::from_chars(env, end, n);
    if (ec == std::errc() && ptr == end && n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ComparisonReport run_comparison(const BatchConfig& config) {
  ComparisonReport report;
  report.seed = config.seed;
  report.columns = config.columns;

  std::vector<PipelineData> data;
  for (std::size_t k = 0; k < config.thetas_deg.size(); ++k) {
    CaseSpec spec = config.case_template;
    spec.theta_gt_deg = config.thetas_deg[k];
    spec.seed = derive_seed(config.seed, k);
    SynthCase c = make_case(spec);
    ComparisonRow row;
    row.case_id = "case" + std::to_string(k + 1);
    row.ground_truth_deg = c.truth.theta_gt_deg;
    row.cells.resize(config.columns.size());
    report.rows.push_back(std::move(row));
    if (!config.work_dir.empty()) write_case(config.work_dir / "cases" / report.rows.back().case_id, c);

    PipelineData d;
    d.ct = c.ct.spine;
    d.ct_landmarks = c.ct.landmarks;
    d.skeleton_landmarks = c.skeleton_landmarks;
    d.handles = c.handles;
    d.skeleton_mesh = c.truth.spine.mesh;
    d.frame = c.truth.spine.frame;
    data.push_back(std::move(d));
  }

  const std::size_t ncols = config.columns.size();
  const std::size_t total = report.rows.size() * ncols;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t task = next++; task < total; task = next++) {
      const std::size_t r = task / ncols;
      const std::size_t col = task % ncols;
      ComparisonCell& cell = report.rows[r].cells[col];
      try {
        MethodConfig mc;
        mc.method = config.columns[col].method;
        mc.subset = parse_landmark_subset(config.columns[col].subset);
        mc.anchors = config.anchors;
        mc.arap = config.arap;
        mc.icp = config.icp;
        const PipelineOutcome out = run_method(data[r], mc);
        if (!config.work_dir.empty())
          write_pipeline_outputs(config.work_dir / "cells" / report.rows[r].case_id / config.columns[col].name(), out);
        cell.ok = true;
        cell.measured_deg = out.cobb.angle_deg;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.message = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(config.threads > 0 ? config.threads : thread_limit_from_env(),
                                                static_cast<int>(std::max<std::size_t>(total, 1))));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return report;
}

}  // namespace spinefuse
