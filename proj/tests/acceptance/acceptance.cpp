// One PASS/FAIL line per acceptance criterion. Optional argument: path of the spinefuse CLI,
// used for the determinism check (falls back to the library when absent).

#include <spinefuse/arap.hpp>
#include <spinefuse/pipeline.hpp>
#include <spinefuse/similarity.hpp>
#include <spinefuse/skinfit.hpp>
#include <spinefuse/synth.hpp>

#include "unit/bar.hpp"

#include <Eigen/Geometry>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

using namespace spinefuse;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double geodesic(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix();
}

Verdict similarity_recovery() {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(-1.0, 1.0), scale(0.5, 2.0);
  double worst_scale = 0, worst_rot = 0, worst_trans = 0;
  for (int i = 0; i < 1000; ++i) {
    Points src(5, 3);
    for (int r = 0; r < 5; ++r) src.row(r) << 150 * u(rng), 150 * u(rng), 300 * u(rng);
    SimilarityTransform t;
    t.scale = scale(rng);
    t.rotation = random_rotation(rng);
    Eigen::Vector3d dir(u(rng), u(rng), u(rng));
    t.translation = dir.normalized() * 100.0 * std::abs(u(rng));
    const Points dst = t.apply_rows(src);
    const auto est = weighted_similarity(src, dst, Eigen::VectorXd::Ones(5)).transform;
    worst_scale = std::max(worst_scale, std::abs(est.scale - t.scale) / t.scale);
    worst_rot = std::max(worst_rot, geodesic(est.rotation, t.rotation));
    worst_trans = std::max(worst_trans, (est.translation - t.translation).norm());
  }
  const double worst = std::max({worst_scale, worst_rot, worst_trans});
  return {worst < 1e-8, "max errors: scale " + fmt("%.2e", worst_scale) + ", rotation " + fmt("%.2e", worst_rot) +
                            " rad, translation " + fmt("%.2e", worst_trans) + " mm"};
}

TriMesh wavy_grid(int nx, int ny) {
  TriMesh m;
  m.vertices.resize(nx * ny, 3);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i)
      m.vertices.row(j * nx + i) << 2.0 * i, 2.0 * j, 3.0 * std::sin(i / 3.5) * std::cos(j / 2.5);
  }
  m.faces.resize(2 * (nx - 1) * (ny - 1), 3);
  int f = 0;
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = j * nx + i;
      m.faces.row(f++) << a, a + 1, a + nx + 1;
      m.faces.row(f++) << a, a + nx + 1, a + nx;
    }
  }
  return m;
}

// 40 x 25 = 1000 vertices, major radius 30 mm, minor radius 10 mm
TriMesh torus(int nu, int nv) {
  TriMesh m;
  m.vertices.resize(nu * nv, 3);
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      const double a = 2 * std::numbers::pi * i / nu, b = 2 * std::numbers::pi * j / nv;
      m.vertices.row(i * nv + j) << (30 + 10 * std::cos(b)) * std::cos(a), (30 + 10 * std::cos(b)) * std::sin(a),
          10 * std::sin(b);
    }
  }
  m.faces.resize(2 * nu * nv, 3);
  int f = 0;
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      const int a = i * nv + j, b = ((i + 1) % nu) * nv + j, c = ((i + 1) % nu) * nv + (j + 1) % nv,
                d = i * nv + (j + 1) % nv;
      m.faces.row(f++) << a, b, c;
      m.faces.row(f++) << a, c, d;
    }
  }
  return m;
}

bool monotone(const std::vector<double>& trace) {
  for (std::size_t k = 1; k < trace.size(); ++k) {
    if (trace[k] > trace[k - 1] * (1.0 + 1e-12) + 1e-12) return false;
  }
  return true;
}

Verdict arap_correctness() {
  // (a) handles on a rigid motion of a 1000-vertex torus
  const TriMesh ring = torus(40, 25);
  const Eigen::Matrix3d q(Eigen::AngleAxisd(40 * kDeg, Eigen::Vector3d(1, 2, 3).normalized()));
  const Eigen::Vector3d t(20, -5, 7);
  HandleMap rigid;
  for (int v : {0, 260, 512, 777}) rigid[v] = q * ring.vertices.row(v).transpose() + t;
  ArapConfig tight;
  tight.max_iters = 1000;
  tight.energy_rel_tol = 1e-12;
  const double rigid_energy = arap_deform(ring, rigid, tight).energy_trace.back();

  // (b) randomized handle problems
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int violations = 0;
  const TriMesh shapes[] = {icosphere(10.0, 2), testing::square_bar(), wavy_grid(12, 10)};
  for (int p = 0; p < 100; ++p) {
    TriMesh m = shapes[p % 3];
    for (Eigen::Index v = 0; v < m.vertex_count(); ++v) m.vertices.row(v) += 0.3 * Eigen::RowVector3d(u(rng), u(rng), u(rng));
    HandleMap h;
    const int count = 2 + p % 7;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(m.vertex_count()) - 1);
    while (static_cast<int>(h.size()) < count) {
      const int v = pick(rng);
      h[v] = m.vertices.row(v).transpose() + 6.0 * Eigen::Vector3d(u(rng), u(rng), u(rng));
    }
    const ArapResult r = arap_deform(m, h);
    if (r.monotonicity_violations != 0 || !monotone(r.energy_trace)) ++violations;
  }

  // (c) twisted bar against the scripted reference
  ArapConfig bar_cfg;
  bar_cfg.max_iters = 3000;
  bar_cfg.energy_rel_tol = 1e-10;
  const TriMesh bar = testing::square_bar();
  const double bar_energy = arap_deform(bar, testing::twisted_bar_handles(bar), bar_cfg).energy_trace.back();
  const double rel = std::abs(bar_energy - testing::kBarOracleEnergy) / testing::kBarOracleEnergy;

  return {rigid_energy < 1e-8 && violations == 0 && rel < 0.01,
          "rigid energy " + fmt("%.2e", rigid_energy) + " mm^2, monotonicity violations " +
              std::to_string(violations) + "/100, bar energy " + fmt("%.6f", bar_energy) + " vs reference " +
              fmt("%.6f", testing::kBarOracleEnergy) + " (" + fmt("%.3f", 100 * rel) + "%)"};
}

Verdict cobb_metric() {
  double worst = 0, worst_inv = 0;
  std::mt19937_64 rng(5);
  for (int k = 0; k <= 9; ++k) {
    SynthSpec s;
    s.theta_gt_deg = 5.0 * k;
    const SynthSpine sp = make_spine(s);
    const double a = cobb_angle(sp.spine).angle_deg;
    worst = std::max(worst, std::abs(a - s.theta_gt_deg));

    const Eigen::Matrix3d q = random_rotation(rng);
    const Eigen::Vector3d t = 200.0 * Eigen::Vector3d::Random();
    for (double scale : {1.0, 0.37, 2.9}) {
      SpineModel m = with_positions(sp.spine, ((scale * sp.spine.mesh.vertices) * q.transpose()).rowwise() + t.transpose());
      m.frame.origin = q * (scale * sp.spine.frame.origin) + t;
      m.frame.anterior = q * sp.spine.frame.anterior;
      m.frame.left = q * sp.spine.frame.left;
      m.frame.superior = q * sp.spine.frame.superior;
      worst_inv = std::max(worst_inv, std::abs(cobb_angle(m).angle_deg - a));
    }
  }
  return {worst < 0.1 && worst_inv < 1e-9,
          "sweep max |error| " + fmt("%.2e", worst) + " deg, rigid/scale invariance " + fmt("%.2e", worst_inv) + " deg"};
}

ComparisonReport battery(std::uint64_t seed, const CaseSpec& tmpl, std::vector<ComparisonColumn> columns) {
  BatchConfig b;
  b.seed = seed;
  b.case_template = tmpl;
  b.columns = std::move(columns);
  return run_comparison(b);
}

Verdict end_to_end() {
  double worst = 0;
  int failed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ComparisonReport r = battery(seed, CaseSpec{}, {{Method::Ours, "full"}});
    failed += r.failed_cells();
    worst = std::max(worst, r.max_abs_error(0));
  }
  return {failed == 0 && worst < 1.0,
          "ours max |error| " + fmt("%.3f", worst) + " deg over 6 cases x 5 seeds, failed cells " + std::to_string(failed)};
}

Verdict method_ordering() {
  // 60 degree misalignment over five batteries
  CaseSpec misaligned;
  misaligned.fixed_rotation_deg = 60.0;
  double ours = 0, feature = 0, icp = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ComparisonReport r = battery(seed, misaligned, {{Method::Ours, "full"}, {Method::FeatureOnly, "full"},
                                                          {Method::IcpArap, "full"}});
    ours += r.mean_abs_error(0) / 5;
    feature += r.mean_abs_error(1) / 5;
    icp += r.mean_abs_error(2) / 5;
  }

  CaseSpec noisy;
  noisy.noise_sigma = 2.0;
  double full = 0, reduced = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ComparisonReport r = battery(seed, noisy, {{Method::Ours, "full"}, {Method::Ours, "reduced"}});
    full += r.mean_abs_error(0) / 20;
    reduced += r.mean_abs_error(1) / 20;
  }
  const bool ok = ours < feature && ours < icp && full < reduced;
  return {ok, "60 deg mean |error|: ours " + fmt("%.3f", ours) + ", feature-only " + fmt("%.3f", feature) +
                  ", icp-arap " + fmt("%.3f", icp) + "; sigma 2 mm: full " + fmt("%.3f", full) + ", reduced " +
                  fmt("%.3f", reduced)};
}

bool frozen_descent(const SkinFitResult& r) {
  for (const auto& it : r.trace) {
    if (it.energy_after > it.energy_before * (1.0 + 1e-9) + 1e-12) return false;
  }
  return r.monotonicity_violations == 0;
}

Verdict skinfit_limits() {
  const TriMesh x = icosphere(2.0, 3);
  const TriMesh w = icosphere(1.0, 3);
  SkinFitConfig fit;
  fit.w_fit = 1.0;
  fit.w_reg = 1e-3;
  fit.outer_iters = 50;
  const SkinFitResult snug = fit_surface(x, w, fit);
  const double radial = std::abs(snug.mesh.vertices.rowwise().norm().mean() - 1.0) / 1.0;

  SkinFitConfig stiff = fit;
  stiff.w_reg = 1e3;
  const SkinFitResult held = fit_surface(x, w, stiff);
  const double disp = (held.mesh.vertices - x.vertices).rowwise().norm().mean() / 1.0;

  const bool descent = frozen_descent(snug) && frozen_descent(held);
  return {radial < 0.02 && disp < 0.05 && descent,
          "fit-dominated radial error " + fmt("%.3f", 100 * radial) + "% of target, regularized displacement " +
              fmt("%.3f", 100 * disp) + "% of gap, frozen-correspondence descent " + (descent ? "held" : "broken")};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism(const std::string& cli) {
  const auto root = std::filesystem::temp_directory_path() / ("spinefuse_accept_" + std::to_string(::getpid()));
  std::filesystem::remove_all(root);
  std::string a_csv, a_json, b_csv, b_json;
  if (!cli.empty()) {
    for (const char* run : {"a", "b"}) {
      const std::string cmd = "\"" + cli + "\" compare --seed 2024 --out \"" + (root / run).string() + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) {
        std::filesystem::remove_all(root);
        return {false, "compare run failed"};
      }
    }
    a_csv = slurp(root / "a" / "report.csv");
    a_json = slurp(root / "a" / "report.json");
    b_csv = slurp(root / "b" / "report.csv");
    b_json = slurp(root / "b" / "report.json");
  } else {
    BatchConfig b;
    b.seed = 2024;
    const ComparisonReport r1 = run_comparison(b), r2 = run_comparison(b);
    a_csv = render_csv(r1), b_csv = render_csv(r2);
    a_json = render_json(r1), b_json = render_json(r2);
  }
  std::filesystem::remove_all(root);
  const bool same = !a_csv.empty() && a_csv == b_csv && a_json == b_json;
  return {same, std::string(cli.empty() ? "library" : "CLI") + " re-run: CSV " + (a_csv == b_csv ? "identical" : "differs") +
                    ", JSON " + (a_json == b_json ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Verdict()> run;
  };
  const Criterion criteria[] = {
      {1, "similarity recovery", 5, similarity_recovery},
      {2, "ARAP correctness", 30, arap_correctness},
      {3, "Cobb metric", 5, cobb_metric},
      {4, "end-to-end pipeline", 120, end_to_end},
      {5, "method ordering", 0, method_ordering},
      {6, "skinfit limits", 60, skinfit_limits},
      {7, "determinism", 0, [&] { return determinism(cli); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s <= 0 || secs < c.budget_s;
    const bool pass = v.pass && in_time;
    failures += !pass;
    std::printf("%s criterion %d (%s): %s; %.2f s%s\n", pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), secs,
                c.budget_s > 0 ? (" of " + fmt("%.0f", c.budget_s) + " s budget").c_str() : "");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
