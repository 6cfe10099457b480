#include <spinefuse/error.hpp>
#include <spinefuse/pipeline.hpp>

#include "json_util.hpp"

#include <cmath>
#include <cstdio>

namespace spinefuse {

using detail::json;

namespace {

std::string fixed(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string render_csv(const ComparisonReport& report) {
  std::string out = "case_id,ground_truth_deg";
  for (const auto& c : report.columns) out += "," + c.name() + "_deg";
  for (const auto& c : report.columns) out += "," + c.name() + "_abs_err_deg";
  out += '\n';
  for (const auto& row : report.rows) {
    out += row.case_id + "," + fixed(row.ground_truth_deg);
    for (const auto& cell : row.cells) out += "," + (cell.ok ? fixed(cell.measured_deg) : std::string("failed"));
    for (const auto& cell : row.cells)
      out += "," + (cell.ok ? fixed(std::abs(cell.measured_deg - row.ground_truth_deg)) : std::string("failed"));
    out += '\n';
  }
  const std::size_t n = report.columns.size();
  for (int pass = 0; pass < 2; ++pass) {
    out += pass == 0 ? "mean_abs_error," : "max_abs_error,";
    for (std::size_t c = 0; c < n; ++c) out += ",";
    for (std::size_t c = 0; c < n; ++c)
      out += "," + fixed(pass == 0 ? report.mean_abs_error(c) : report.max_abs_error(c));
    out += '\n';
  }
  return out;
}

std::string render_json(const ComparisonReport& report) {
  json cols = json::array();
  for (const auto& c : report.columns)
    cols.push_back(json{{"name", c.name()}, {"method", to_string(c.method)}, {"subset", c.subset}});
  json cases = json::array();
  for (const auto& row : report.rows) {
    json cells = json::array();
    for (std::size_t c = 0; c < row.cells.size(); ++c) {
      const auto& cell = row.cells[c];
      json j{{"column", report.columns[c].name()}, {"status", cell.ok ? "ok" : "failed"}};
      if (cell.ok) {
        j["measured_deg"] = cell.measured_deg;
        j["abs_error_deg"] = std::abs(cell.measured_deg - row.ground_truth_deg);
      } else {
        j["message"] = cell.message;
      }
      cells.push_back(std::move(j));
    }
    cases.push_back(json{{"id", row.case_id}, {"theta_gt_deg", row.ground_truth_deg}, {"cells", cells}});
  }
  json summary = json::array();
  for (std::size_t c = 0; c < report.columns.size(); ++c)
    summary.push_back(json{{"column", report.columns[c].name()},
                           {"mean_abs_error_deg", number_or_null(report.mean_abs_error(c))},
                           {"max_abs_error_deg", number_or_null(report.max_abs_error(c))}});
  return json{{"seed", report.seed}, {"columns", cols}, {"cases", cases}, {"summary", summary}}.dump(2) + "\n";
}

ComparisonReport parse_report_json(const std::string& text, const std::filesystem::path& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, origin.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("columns") || !j.contains("cases") || !j.contains("seed"))
    detail::schema_fail(origin, "report needs 'seed', 'columns' and 'cases'");
  ComparisonReport r;
  if (!j["seed"].is_number_unsigned()) detail::schema_fail(origin, "'seed' must be an unsigned integer");
  r.seed = j["seed"].get<std::uint64_t>();
  for (const auto& c : j["columns"]) {
    if (!c.contains("method") || !c.contains("subset")) detail::schema_fail(origin, "column needs 'method' and 'subset'");
    r.columns.push_back({method_from_string(c["method"].get<std::string>()), c["subset"].get<std::string>()});
  }
  for (const auto& cj : j["cases"]) {
    if (!cj.contains("id") || !cj.contains("theta_gt_deg") || !cj.contains("cells"))
      detail::schema_fail(origin, "case needs 'id', 'theta_gt_deg' and 'cells'");
    ComparisonRow row;
    row.case_id = cj["id"].get<std::string>();
    row.ground_truth_deg = cj["theta_gt_deg"].get<double>();
    for (const auto& cell : cj["cells"]) {
      ComparisonCell c;
      c.ok = cell.value("status", "") == "ok";
      if (c.ok) {
        if (!cell.contains("measured_deg") || !cell["measured_deg"].is_number())
          detail::schema_fail(origin, "ok cell needs a numeric 'measured_deg'");
        c.measured_deg = cell["measured_deg"].get<double>();
      } else {
        c.message = cell.value("message", "");
      }
      row.cells.push_back(std::move(c));
    }
    if (row.cells.size() != r.columns.size()) detail::schema_fail(origin, "case '" + row.case_id + "' has the wrong cell count");
    r.rows.push_back(std::move(row));
  }
  return r;
}

ComparisonReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_report_json(ss.str(), path);
}

}  // namespace spinefuse
