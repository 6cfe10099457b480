#pragma once

#include <spinefuse/arap.hpp>
#include <spinefuse/registration.hpp>
#include <spinefuse/skinfit.hpp>
#include <spinefuse/spine.hpp>
#include <spinefuse/synth.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spinefuse {

enum class Method {
  Ours,         // landmark similarity + ARAP
  FeatureOnly,  // landmark similarity
  IcpArap,      // ICP + ARAP
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// Vertebrae held at their registered positions during the fine stage.
std::vector<std::string> default_anchor_labels();

struct PipelineData {
  SpineModel ct;
  LandmarkSet ct_landmarks;
  LandmarkSet skeleton_landmarks;
  HandleMap handles;
  /// Skeleton-side spine surface; required by the ICP arm.
  std::optional<TriMesh> skeleton_mesh;
  BodyFrame frame;
};

struct MethodConfig {
  Method method = Method::Ours;
  std::vector<std::string> subset = full_landmark_subset();
  std::vector<std::string> anchors = default_anchor_labels();
  ArapConfig arap;
  IcpConfig icp;
  EndplateRef upper{"L1", Endplate::Superior};
  EndplateRef lower{"L5", Endplate::Inferior};
};

struct PipelineOutcome {
  /// Registered (and deformed) spine in the skeleton frame.
  SpineModel aligned;
  RegistrationReport registration;
  std::optional<ArapResult> arap;
  CobbMeasurement cobb;
};

PipelineOutcome run_method(const PipelineData& data, const MethodConfig& config);

struct PipelineInputs {
  std::filesystem::path spine_dir;
  std::filesystem::path ct_landmarks;
  std::filesystem::path skeleton_landmarks;
  std::filesystem::path handles;
  std::filesystem::path skeleton_mesh;  // may be empty unless the ICP arm runs
  std::filesystem::path frame;          // may be empty: the spine's own frame is used

  /// Standard file names inside a synthetic case directory.
  static PipelineInputs from_case_dir(const std::filesystem::path& dir);
};

struct PipelineConfig {
  PipelineInputs inputs;
  MethodConfig method;
  SkinFitConfig skinfit;
  std::filesystem::path out_dir;
};

PipelineData load_pipeline_data(const PipelineInputs& inputs, bool need_skeleton_mesh);

/// Writes aligned/ (spine container), registration.json, transform.json, energy_trace.csv
/// (ARAP arms) and cobb.json into config.out_dir.
PipelineOutcome run_pipeline(const PipelineConfig& config);
void write_pipeline_outputs(const std::filesystem::path& dir, const PipelineOutcome& outcome);

// ---- comparison batch ----

struct ComparisonColumn {
  Method method = Method::Ours;
  std::string subset = "full";  // full | reduced | custom:<names>

  std::string name() const;
};

struct ComparisonCell {
  bool ok = false;
  double measured_deg = 0.0;
  std::string message;
};

struct ComparisonRow {
  std::string case_id;
  double ground_truth_deg = 0.0;
  std::vector<ComparisonCell> cells;  // one per column
};

struct ComparisonReport {
  std::uint64_t seed = 0;
  std::vector<ComparisonColumn> columns;
  std::vector<ComparisonRow> rows;

  int failed_cells() const;
  /// Mean and max |measured - ground truth| over successful cells of one column.
  double mean_abs_error(std::size_t column) const;
  double max_abs_error(std::size_t column) const;
};

/// Methods x {full, reduced}, in Table-I order.
std::vector<ComparisonColumn> default_columns();

struct BatchConfig {
  std::uint64_t seed = 0;
  std::vector<double> thetas_deg{31.8, 25.6, 22.5, 38.2, 33.5, 28.1};
  /// Template for every case; theta and seed are filled per case.
  CaseSpec case_template;
  std::vector<ComparisonColumn> columns = default_columns();
  std::vector<std::string> anchors = default_anchor_labels();
  ArapConfig arap;
  IcpConfig icp;
  /// Parallel cells; 0 reads SPINEFUSE_THREADS, falling back to the hardware concurrency.
  int threads = 0;
  /// When set, every case and every cell's artifacts are written below this directory.
  std::filesystem::path work_dir;
};

/// Cells run concurrently; failures are recorded per cell and the batch continues.
ComparisonReport run_comparison(const BatchConfig& config);

/// SPINEFUSE_THREADS if set to a positive integer, else the hardware concurrency (at least 1).
int thread_limit_from_env();

std::string render_csv(const ComparisonReport& report);
std::string render_json(const ComparisonReport& report);
ComparisonReport parse_report_json(const std::string& text, const std::filesystem::path& origin = {});
ComparisonReport read_report(const std::filesystem::path& path);

}  // namespace spinefuse
