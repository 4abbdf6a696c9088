// cllmix: command-line front end.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numerical failure or non-convergence (results are still written).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cllmix/error.hpp"
#include "cllmix/io.hpp"
#include "cllmix/regpath.hpp"
#include "cllmix/simulate.hpp"
#include "cllmix/study.hpp"

namespace fs = std::filesystem;
using namespace cllmix;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct FitFlags {
  int starts = 5;
  std::uint64_t seed = 0;
  int max_iter = 500;
  double tol = 1e-7;
  double step_init = 0.1;
  int grid_points = kDefaultGridPoints;

  FitOptions options() const {
    FitOptions o;
    o.n_starts = starts;
    o.seed = seed;
    o.max_outer_iter = max_iter;
    o.tol = tol;
    o.step_init = step_init;
    return o;
  }
};

void add_fit_flags(CLI::App* app, FitFlags& f) {
  app->add_option("--starts", f.starts, "Cold starts per fit")->check(CLI::NonNegativeNumber);
  app->add_option("--seed", f.seed, "Seed for start jitter");
  app->add_option("--max-iter", f.max_iter, "Maximum EM iterations per start")->check(CLI::PositiveNumber);
  app->add_option("--tol", f.tol, "Relative objective change for convergence")->check(CLI::PositiveNumber);
  app->add_option("--step-init", f.step_init, "Initial proximal step size")->check(CLI::PositiveNumber);
  app->add_option("--grid-points", f.grid_points, "Quadrature nodes on [-8, 8]")->check(CLI::Range(3, 100000));
}

RunInfo run_info(const FitFlags& f) { return {f.grid_points, f.seed, "start s >= 1 jitter stream: derive_seed(seed, s)"}; }

std::string support_string(const Support& s, const std::vector<std::string>& names, int n_focal) {
  if (s.empty()) return "(none)";
  std::string out;
  for (const auto& c : s) {
    if (!out.empty()) out += ' ';
    out += c.item < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(c.item)]
                                                   : std::to_string(c.item + 1);
    if (n_focal > 1) out += ":" + std::to_string(c.focal);
  }
  return out;
}

void print_path(const PathResult& p, const std::vector<std::string>& names) {
  std::printf("%12s %5s %14s %14s %s\n", "lambda", "|S|", "loglik", "BIC", "");
  for (std::size_t m = 0; m < p.points.size(); ++m) {
    const auto& pt = p.points[m];
    std::printf("%12.6g %5zu %14.4f %14.4f %s\n", pt.lambda, pt.support.size(), pt.refit.loglik, pt.bic,
                static_cast<int>(m) == p.selected_index ? "*" : (pt.refit_ok ? "" : "refit failed"));
  }
  const auto& sel = p.selected();
  std::printf("selected lambda %.6g, BIC %.4f\n", sel.lambda, sel.bic);
  std::printf("support: %s\n", support_string(sel.support, names, p.n_focal).c_str());
}

fs::path truth_path_for(const fs::path& out) {
  fs::path t = out;
  t.replace_extension(".truth.json");
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent impact and DIF estimation under the CLL-Gumbel mixture model", "cllmix"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", "cllmix 0.1.0");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a Design A or B dataset");
  std::string sim_design = "A";
  int sim_n = 1000, sim_j = 25;
  double sim_pi = 0.3;
  std::uint64_t sim_seed = 0;
  std::string sim_out, sim_truth;
  sim->add_option("--design", sim_design, "A (impact + DIF) or B (impact only)")->required();
  sim->add_option("--n", sim_n, "Respondents")->check(CLI::PositiveNumber);
  sim->add_option("--pi", sim_pi, "Focal class proportion")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--j", sim_j, "Items")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed, "Random seed");
  sim->add_option("--out", sim_out, "Response CSV to write")->required();
  sim->add_option("--truth", sim_truth, "Truth JSON (default: <out>.truth.json)");

  // fit
  auto* fit = app.add_subcommand("fit", "Single penalised or constrained fit");
  std::string fit_data, fit_support, fit_out, fit_scale = "total";
  int fit_k = 1;
  std::optional<double> fit_lambda;
  FitFlags fit_flags;
  fit->add_option("--data", fit_data, "Response CSV")->required();
  fit->add_option("--k", fit_k, "Number of focal classes")->check(CLI::NonNegativeNumber);
  fit->add_option("--lambda", fit_lambda, "Penalty weight (penalised fit)")->check(CLI::NonNegativeNumber);
  fit->add_option("--support", fit_support, "Support file 'item,class' (constrained fit)");
  fit->add_option("--lambda-scale", fit_scale, "total or per-respondent")
      ->check(CLI::IsMember({"total", "per-respondent"}));
  add_fit_flags(fit, fit_flags);
  fit->add_option("--out", fit_out, "Result JSON to write")->required();

  // path
  auto* path = app.add_subcommand("path", "Two-stage lambda path with BIC selection");
  std::string path_data, path_out;
  int path_k = 1, path_m = kDefaultPathPoints;
  bool path_cold = false;
  FitFlags path_flags;
  path->add_option("--data", path_data, "Response CSV")->required();
  path->add_option("--k", path_k, "Number of focal classes")->check(CLI::NonNegativeNumber);
  path->add_option("--m", path_m, "Lambda grid points")->check(CLI::Range(2, 10000));
  path->add_flag("--no-warm-start", path_cold, "Fit every lambda from cold starts");
  add_fit_flags(path, path_flags);
  path->add_option("--out", path_out, "Path JSON to write")->required();

  // select-k
  auto* selk = app.add_subcommand("select-k", "Compare K = 0..k-max by BIC");
  std::string selk_data, selk_out;
  int selk_kmax = 2, selk_m = kDefaultPathPoints;
  FitFlags selk_flags;
  selk->add_option("--data", selk_data, "Response CSV")->required();
  selk->add_option("--k-max", selk_kmax, "Largest number of focal classes")->check(CLI::NonNegativeNumber);
  selk->add_option("--m", selk_m, "Lambda grid points")->check(CLI::Range(2, 10000));
  add_fit_flags(selk, selk_flags);
  selk->add_option("--out", selk_out, "Result JSON to write")->required();

  // study
  auto* study = app.add_subcommand("study", "Run a replication study from a manifest");
  std::string study_manifest, study_dir;
  int study_threads = default_thread_count();
  std::optional<int> study_reps;
  bool study_fresh = false;
  study->add_option("--manifest", study_manifest, "Manifest file")->required();
  study->add_option("--threads", study_threads, "Worker threads (env CLLMIX_THREADS)")->check(CLI::PositiveNumber);
  study->add_option("--reps", study_reps, "Override the manifest's replication count")->check(CLI::PositiveNumber);
  study->add_option("--out", study_dir, "Override the manifest's output directory");
  study->add_flag("--no-resume", study_fresh, "Rerun replications that already have results");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Recompute summaries from stored replications");
  std::string metrics_dir;
  metrics->add_option("--study", metrics_dir, "Study output directory")->required();

  // export
  auto* exp = app.add_subcommand("export", "Export a summary as CSV tables");
  std::string exp_summary, exp_style, exp_out, exp_cell;
  exp->add_option("--summary", exp_summary, "summary.json of a study")->required();
  exp->add_option("--style", exp_style, "table2, table3, itemgrid or roc")
      ->required()
      ->check(CLI::IsMember({"table2", "table3", "itemgrid", "roc"}));
  exp->add_option("--cell", exp_cell, "Cell label for roc, e.g. A_N1000_pi0.3");
  exp->add_option("--out", exp_out, "CSV to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sim) {
      SimDesign d;
      const Design kind = parse_design(sim_design);
      if (kind == Design::kCustom) throw UsageError("--design: simulate supports A or B");
      d = kind == Design::kA ? SimDesign::design_a(sim_n, sim_pi, sim_seed)
                             : SimDesign::design_b(sim_n, sim_pi, sim_seed);
      d.n_items = sim_j;
      if (kind == Design::kA) d.n_dif_items = std::min(d.n_dif_items, sim_j);
      const SimData data = generate(d);
      std::vector<std::string> names;
      for (int j = 1; j <= sim_j; ++j) names.push_back("item" + std::to_string(j));
      write_responses(ResponseMatrix(data.responses.data(), names), fs::path(sim_out));
      const fs::path truth = sim_truth.empty() ? truth_path_for(sim_out) : fs::path(sim_truth);
      write_truth(data.truth, d, truth);
      std::printf("wrote %s and %s\n", sim_out.c_str(), truth.string().c_str());
      return kExitOk;
    }

    if (*fit) {
      const ResponseMatrix y = read_responses(fit_data);
      const QuadratureGrid grid = build_grid(fit_flags.grid_points);
      FitOptions o = fit_flags.options();
      o.lambda_scale = fit_scale == "total" ? LambdaScale::kTotal : LambdaScale::kPerRespondent;
      FitResult r = [&] {
        if (!fit_support.empty()) {
          if (fit_lambda) throw UsageError("--lambda and --support are mutually exclusive");
          const Support s = read_support(fit_support, y.item_names(), y.n_items());
          return fit_constrained(y, fit_k, s, grid, o);
        }
        if (!fit_lambda) throw UsageError("fit needs --lambda (penalised) or --support (constrained)");
        return fit_penalized(y, fit_k, *fit_lambda, grid, o);
      }();
      write_fit(r, fit_out, run_info(fit_flags));
      std::printf("loglik %.6f  penalised objective %.6f  iterations %d  %s\n", r.loglik, r.penalized_objective,
                  r.n_outer_iters, r.converged ? "converged" : "NOT converged");
      std::printf("support: %s\n", support_string(r.support, y.item_names(), fit_k).c_str());
      if (r.class_collapse) std::printf("warning: a focal class collapsed (nu < 1e-3)\n");
      return r.converged ? kExitOk : kExitNumerical;
    }

    if (*path) {
      const ResponseMatrix y = read_responses(path_data);
      const QuadratureGrid grid = build_grid(path_flags.grid_points);
      PathOptions po;
      po.n_lambdas = path_m;
      po.warm_start = !path_cold;
      const PathResult p = two_stage_path(y, path_k, grid, path_flags.options(), po);
      write_path(p, path_out, run_info(path_flags));
      print_path(p, y.item_names());
      return p.selected_model().converged ? kExitOk : kExitNumerical;
    }

    if (*selk) {
      const ResponseMatrix y = read_responses(selk_data);
      const QuadratureGrid grid = build_grid(selk_flags.grid_points);
      std::vector<int> ks;
      for (int k = 0; k <= selk_kmax; ++k) ks.push_back(k);
      PathOptions po;
      po.n_lambdas = selk_m;
      const SelectKResult r = select_k(y, ks, grid, selk_flags.options(), po);
      write_json(envelope("select-k", to_json(r), run_info(selk_flags)), selk_out);
      std::printf("%8s %12s %5s %14s %14s\n", "classes", "lambda", "|S|", "loglik", "BIC");
      for (std::size_t i = 0; i < r.paths.size(); ++i) {
        const auto& s = r.paths[i].selected();
        std::printf("%8d %12.6g %5zu %14.4f %14.4f %s\n", r.candidates[i] + 1, s.lambda, s.support.size(),
                    s.refit.loglik, s.bic, static_cast<int>(i) == r.best ? "*" : "");
      }
      std::printf("selected: %d classes (K = %d)\n", r.best_k() + 1, r.best_k());
      return r.best_path().selected_model().converged ? kExitOk : kExitNumerical;
    }

    if (*study) {
      StudyManifest m = read_manifest(study_manifest);
      if (study_reps) m.n_replications = *study_reps;
      if (!study_dir.empty()) m.output_dir = study_dir;
      StudyOptions so;
      so.threads = study_threads;
      so.resume = !study_fresh;
      so.log = [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); };
      const StudySummary s = run_study(m, so);
      std::printf("%d run, %d resumed, %d failed; outputs in %s\n", s.n_run, s.n_skipped, s.n_failed,
                  m.output_dir.c_str());
      return s.n_failed > 0 ? kExitNumerical : kExitOk;
    }

    if (*metrics) {
      StudyManifest m = read_manifest(fs::path(metrics_dir) / "manifest.txt");
      m.output_dir = metrics_dir;
      const auto reports = summarize_study(m);
      if (reports.empty()) throw DataError(metrics_dir + ": no replication results found");
      for (const auto& w : write_study_outputs(reports, metrics_dir, RunInfo{m.grid_points, m.master_seed, kSeedRule})) std::fprintf(stderr, "note: %s\n", w.c_str());
      std::printf("%zu cells summarised into %s\n", reports.size(), metrics_dir.c_str());
      return kExitOk;
    }

    if (*exp) {
      const Json doc = read_json(exp_summary);
      std::vector<AggregateReport> reports;
      for (const auto& r : open_envelope(doc, "summary")) reports.push_back(report_from_json(r));
      const ExportStyle style = parse_export_style(exp_style);
      if (style == ExportStyle::kRoc) {
        if (exp_cell.empty()) throw UsageError("--cell is required for --style roc");
        std::vector<AggregateReport> one;
        for (const auto& r : reports) {
          SimDesign c;
          c.design = r.design;
          c.n = r.n;
          c.pi_focal = r.pi;
          if (cell_label(c) == exp_cell) one.push_back(r);
        }
        if (one.empty()) throw UsageError("--cell: no report for '" + exp_cell + "'");
        reports = std::move(one);
      }
      export_tables(reports, style, fs::path(exp_out));
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
