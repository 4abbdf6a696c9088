// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   acceptance [--only 1,2,...] [--work DIR] [--threads N]

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cllmix/em.hpp"
#include "cllmix/io.hpp"
#include "cllmix/likelihood.hpp"
#include "cllmix/metrics.hpp"
#include "cllmix/regpath.hpp"
#include "cllmix/rng.hpp"
#include "cllmix/simulate.hpp"
#include "cllmix/study.hpp"

namespace fs = std::filesystem;
using namespace cllmix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ModelParams random_params(Rng& rng, int n_items, int n_focal) {
  Eigen::VectorXd d(n_items);
  for (auto& x : d) x = uniform_between(rng, -1.5, 1.5);
  Eigen::MatrixXd delta(n_items, n_focal);
  for (auto& x : delta.reshaped()) x = uniform_between(rng, -1.0, 1.0);
  Eigen::VectorXd nu(n_focal + 1);
  for (auto& x : nu) x = uniform_between(rng, 0.2, 1.0);
  nu /= nu.sum();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n_focal + 1);
  Eigen::VectorXd sigma = Eigen::VectorXd::Ones(n_focal + 1);
  for (int k = 1; k <= n_focal; ++k) {
    mu(k) = uniform_between(rng, -1.0, 1.0);
    sigma(k) = uniform_between(rng, 0.6, 1.4);
  }
  return ModelParams(d, delta, nu, mu, sigma);
}

// ---------------------------------------------------------------------------
// Deterministic criteria

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto grid = build_grid();
  const double h = 1e-5;
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    Rng rng(derive_seed(1, inst));
    const ModelParams p = random_params(rng, 5, 1);
    const ResponseMatrix y = generate_custom(p, 50, derive_seed(2, inst)).responses;
    const EStepResult es = e_step(p, y, grid);
    const GradientBundle g = gradients(p, es.stats, grid);
    auto f = [&](const ModelParams& q) { return expected_complete_objective(q, es.stats, grid); };
    auto rel = [&](double a, double n) { worst = std::max(worst, std::abs(a - n) / std::max(1.0, std::abs(n))); };
    for (int j = 0; j < 5; ++j) {
      Eigen::VectorXd up = p.d(), dn = p.d();
      up(j) += h;
      dn(j) -= h;
      rel(g.d(j), (f(p.with_d(up)) - f(p.with_d(dn))) / (2 * h));
      Eigen::MatrixXd du = p.delta(), dd = p.delta();
      du(j, 0) += h;
      dd(j, 0) -= h;
      rel(g.delta(j, 0), (f(p.with_delta(du)) - f(p.with_delta(dd))) / (2 * h));
    }
    Eigen::VectorXd mu_up = p.mu(), mu_dn = p.mu(), s_up = p.sigma(), s_dn = p.sigma();
    mu_up(1) += h;
    mu_dn(1) -= h;
    s_up(1) += h;
    s_dn(1) -= h;
    rel(g.mu(0), (f(p.with_structure(mu_up, p.sigma())) - f(p.with_structure(mu_dn, p.sigma()))) / (2 * h));
    rel(g.sigma(0), (f(p.with_structure(p.mu(), s_up)) - f(p.with_structure(p.mu(), s_dn))) / (2 * h));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-5 && secs < 10.0, fmt("max relative error %.2e over 20 instances, %.2f s", worst, secs)};
}

Outcome em_monotonicity() {
  const auto grid = build_grid();
  double worst_allow = -std::numeric_limits<double>::infinity();
  double worst_ll = 0.0;
  int exhausted = 0;
  for (int inst = 0; inst < 50; ++inst) {
    Rng rng(derive_seed(3, inst));
    const ModelParams p = random_params(rng, 6, 1);
    const ResponseMatrix y = generate_custom(p, 100, derive_seed(4, inst)).responses;
    FitOptions o;
    o.n_starts = 1;
    o.seed = inst;
    o.max_outer_iter = 200;
    // Half the fits are unpenalised, where the objective is -log L itself.
    const double lambda = inst % 2 == 0 ? 0.0 : 3.0;
    const FitResult r = fit_penalized(y, 1, lambda, grid, o);
    exhausted += static_cast<int>(r.exhausted_iterations.size());
    for (std::size_t t = 1; t < r.trace.size(); ++t) {
      const double allowed = 5e-3 * (std::abs(r.trace[t - 1]) + 1.0);
      worst_allow = std::max(worst_allow, (r.trace[t] - r.trace[t - 1]) / allowed);
    }
    if (lambda == 0.0) {
      const std::set<int> skip(r.exhausted_iterations.begin(), r.exhausted_iterations.end());
      for (std::size_t t = 1; t < r.loglik_trace.size(); ++t)
        if (!skip.count(static_cast<int>(t))) worst_ll = std::max(worst_ll, r.loglik_trace[t - 1] - r.loglik_trace[t]);
    }
  }
  return {worst_allow <= 1.0 && worst_ll <= 1e-8,
          fmt("largest objective rise %.3g of the allowance; largest log-likelihood drop %.2e "
              "(lambda = 0 fits); %d exhausted line searches",
              std::max(worst_allow, 0.0), worst_ll, exhausted)};
}

Outcome quadrature_oracle() {
  Rng rng(5);
  const ModelParams p = random_params(rng, 10, 1);
  const ResponseMatrix y = generate_custom(p, 50, 6).responses;
  const auto a = marginal_loglik(p, y, build_grid(61));
  const auto b = marginal_loglik(p, y, build_grid(1001));
  const double worst = (a.per_respondent - b.per_respondent).cwiseAbs().maxCoeff();
  const double mean = std::abs(a.loglik - b.loglik) / 50.0;
  return {worst <= 5e-3, fmt("max per-respondent difference %.2e, mean %.2e", worst, mean)};
}

Outcome anchor_invariance() {
  const auto grid = build_grid();
  double worst = 0.0;
  for (int inst = 0; inst < 5; ++inst) {
    Rng rng(derive_seed(7, inst));
    const ModelParams p = random_params(rng, 8, 1);
    const ResponseMatrix y = generate_custom(p, 200, derive_seed(8, inst)).responses;
    const double base = marginal_loglik(p, y, grid).loglik;
    for (const double c : {-1.0, -0.3, 0.3, 1.0}) {
      Eigen::VectorXd mu = p.mu();
      mu(1) += c;
      const ModelParams q = p.with_structure(mu, p.sigma()).with_delta((p.delta().array() + c).matrix());
      worst = std::max(worst, std::abs(marginal_loglik(q, y, grid).loglik - base));
    }
  }
  return {worst < 1e-10, fmt("max |change| %.2e over 5 instances x 4 shifts", worst)};
}

Outcome label_permutation() {
  const auto grid = build_grid();
  double worst = 0.0;
  bool ordered = true;
  for (int inst = 0; inst < 5; ++inst) {
    Rng rng(derive_seed(9, inst));
    const ModelParams p = random_params(rng, 6, 3);
    const ResponseMatrix y = generate_custom(p, 150, derive_seed(10, inst)).responses;
    const double base = marginal_loglik(p, y, grid).loglik;
    for (const auto [a, b] : {std::pair{1, 2}, std::pair{1, 3}, std::pair{2, 3}})
      worst = std::max(worst, std::abs(marginal_loglik(p.swap_focal(a, b), y, grid).loglik - base));
    FitOptions o;
    o.n_starts = 1;
    o.max_outer_iter = 60;
    const FitResult r = fit_penalized(y, 3, 2.0, grid, o);
    for (int k = 1; k < 3; ++k) ordered = ordered && r.params.nu()(k) >= r.params.nu()(k + 1);
  }
  return {worst < 1e-12 && ordered,
          fmt("max |change| %.2e; fitted proportions %s", worst, ordered ? "ordered" : "NOT ordered")};
}

Outcome kkt_lambda_max() {
  const auto grid = build_grid();
  int empty = 0;
  std::string sizes;
  for (int inst = 0; inst < 10; ++inst) {
    const SimDesign d = inst % 2 == 0 ? SimDesign::design_a(500, 0.3, derive_seed(11, inst))
                                      : SimDesign::design_b(500, 0.3, derive_seed(11, inst));
    const ResponseMatrix y = generate(d).responses;
    FitOptions o;
    o.seed = inst;
    const FitResult base = fit_constrained(y, 1, {}, grid, o);
    const double lmax = lambda_max(base, y, grid);
    o.n_starts = 0;
    const FitResult r = fit_penalized(y, 1, lmax, grid, o, base.params);
    if (r.support.empty()) ++empty;
    sizes += (sizes.empty() ? "" : " ") + std::to_string(r.support.size());
  }
  return {empty == 10, fmt("%d/10 empty supports at lambda_max (sizes: %s)", empty, sizes.c_str())};
}

Outcome prox_identities() {
  const double a = soft_threshold(1.2, 0.5), b = soft_threshold(-0.3, 0.5);
  Eigen::MatrixXd delta(2, 1), grad(2, 1);
  delta << 2.8, -2.8;
  grad << -50.0, 50.0;
  const Eigen::MatrixXd out = prox_update(delta, grad, 1.0, 0.1, Mask::Constant(2, 1, true));
  const bool ok = std::abs(a - 0.7) < 1e-15 && b == 0.0 && out(0, 0) == 3.0 && out(1, 0) == -3.0;
  return {ok, fmt("S(1.2; 0.5) = %.17g, S(-0.3; 0.5) = %g, clipped step = (%g, %g)", a, b, out(0, 0), out(1, 0))};
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = s.str();
  }
  return out;
}

Outcome determinism(const fs::path& work) {
  std::istringstream text(
      "cllmix-manifest 1\n"
      "designs = A, B\n"
      "n = 200\n"
      "pi = 0.3\n"
      "reps = 4\n"
      "path_m = 5\n"
      "starts = 2\n"
      "master_seed = 2024\n");
  StudyManifest m = parse_manifest(text, "determinism");
  const fs::path dir = work / "determinism";
  m.output_dir = dir.string();
  StudyOptions so;
  so.resume = false;
  fs::remove_all(dir);
  so.threads = 1;
  run_study(m, so);
  const auto one = tree_contents(dir);
  fs::remove_all(dir);
  so.threads = 8;
  run_study(m, so);
  const auto eight = tree_contents(dir);
  return {one == eight && !one.empty(),
          fmt("%zu files at 1 thread, %zu at 8 threads, %s", one.size(), eight.size(),
              one == eight ? "byte-identical" : "DIFFERENT")};
}

Outcome estep_bruteforce() {
  const auto grid = build_grid(5);
  double worst = 0.0;
  const double ys[] = {1.0, 0.0};
  for (int inst = 0; inst < 4; ++inst) {
    Rng rng(derive_seed(12, inst));
    const ModelParams p = random_params(rng, 1, 1);
    Eigen::MatrixXd y(2, 1);
    y << ys[0], ys[1];
    const EStepResult es = e_step(p, ResponseMatrix(y), grid);
    for (int i = 0; i < 2; ++i) {
      std::vector<long double> joint;
      long double total = 0.0L;
      for (int k = 0; k < 2; ++k)
        for (int q = 0; q < 5; ++q) {
          const long double theta = static_cast<long double>(p.mu()(k)) + p.sigma()(k) * grid.nodes(q);
          const long double z = theta - p.d()(0) - p.shift(0, k);
          long double pr = -std::expm1(-std::exp(z));
          long double cq = std::exp(-std::exp(z));
          pr = std::clamp(pr, 1e-12L, 1.0L - 1e-12L);
          cq = std::clamp(cq, 1e-12L, 1.0L - 1e-12L);
          const long double v = p.nu()(k) * std::exp(static_cast<long double>(grid.log_weights(q))) *
                                (ys[i] == 1.0 ? pr : cq);
          joint.push_back(v);
          total += v;
        }
      for (int c = 0; c < 10; ++c)
        worst = std::max(worst, static_cast<double>(std::abs(joint[c] / total - es.posterior.w(i, c))));
    }
  }
  return {worst <= 1e-12, fmt("max |w - enumeration| %.2e over 4 instances", worst)};
}

// ---------------------------------------------------------------------------
// Replication criteria

struct Cells {
  std::map<std::string, AggregateReport> reports;
  std::string note;
};

Cells run_cells(const fs::path& work, int threads) {
  std::istringstream text(
      "cllmix-manifest 1\n"
      "designs = A, B\n"
      "n = 1000\n"
      "pi = 0.3\n"
      "reps = 20\n"
      "master_seed = 20240601\n");
  StudyManifest m = parse_manifest(text, "replication");
  SimDesign extra = SimDesign::design_a(1000, 0.1, 0);
  m.cells.push_back(extra);
  m.output_dir = (work / "replication").string();
  fs::remove_all(m.output_dir);
  StudyOptions so;
  so.threads = threads;
  so.resume = false;
  so.log = [](const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); };
  const auto t0 = std::chrono::steady_clock::now();
  const StudySummary s = run_study(m, so);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Cells out;
  for (std::size_t c = 0; c < m.cells.size(); ++c) out.reports[cell_label(m.cells[c])] = s.reports.at(c);
  out.note = fmt("%d replications in %.0f s, %d failed", s.n_run, secs, s.n_failed);
  return out;
}

Outcome design_a_detection(const AggregateReport& r) {
  const double tpr = r.tpr.value_or(0.0);
  double worst_bias = -std::numeric_limits<double>::infinity(), best_bias = 0.0, mean_bias = 0.0;
  for (int j = 0; j < 10; ++j) {
    worst_bias = std::max(worst_bias, r.errors.delta[j].bias);
    best_bias = std::min(best_bias, r.errors.delta[j].bias);
    mean_bias += r.errors.delta[j].bias / 10.0;
  }
  double d_rmse_max = 0.0, d_rmse_mean = 0.0;
  for (const auto& e : r.errors.d) {
    d_rmse_max = std::max(d_rmse_max, e.rmse);
    d_rmse_mean += e.rmse / static_cast<double>(r.errors.d.size());
  }
  const bool bias_ok = worst_bias < 0.0 && best_bias >= -0.25;
  const bool ok = tpr >= 0.90 && r.fpr <= 0.15 && bias_ok && d_rmse_max <= 0.15;
  return {ok, fmt("TPR %.3f, FPR %.3f; delta bias items 1-10 in [%.3f, %.3f] (mean %.3f); "
                  "d RMSE max %.3f (mean %.3f)",
                  tpr, r.fpr, best_bias, worst_bias, mean_bias, d_rmse_max, d_rmse_mean)};
}

Outcome design_a_structure(const AggregateReport& r) {
  const auto& e = r.errors;
  const bool ok = std::abs(e.pi.bias) <= 0.05 && e.pi.rmse <= 0.10 && std::abs(e.mu1.bias) <= 0.08 &&
                  e.mu1.rmse <= 0.20 && std::abs(e.sigma1.bias) <= 0.08 && e.sigma1.rmse <= 0.20;
  return {ok, fmt("pi bias %.3f rmse %.3f; mu1 bias %.3f rmse %.3f; sigma1 bias %.3f rmse %.3f", e.pi.bias,
                  e.pi.rmse, e.mu1.bias, e.mu1.rmse, e.sigma1.bias, e.sigma1.rmse)};
}

Outcome design_b_recovery(const AggregateReport& r) {
  const auto& e = r.errors;
  const bool ok = r.fpr <= 0.10 && std::abs(e.pi.bias) <= 0.08 && std::abs(e.mu1.bias) <= 0.08 &&
                  std::abs(e.sigma1.bias) <= 0.08;
  return {ok, fmt("FPR %.3f; bias pi %.3f, mu1 %.3f, sigma1 %.3f", r.fpr, e.pi.bias, e.mu1.bias, e.sigma1.bias)};
}

Outcome design_a_classification(const AggregateReport& r) {
  const double a = r.auc.value_or(0.0);
  return {r.classification_error <= 0.15 && a >= 0.80,
          fmt("MAP error %.3f (naive %.3f), AUC %.3f", r.classification_error, r.naive_error, a)};
}

Outcome design_b_auc(const AggregateReport& r) {
  const double a = r.auc.value_or(0.0);
  return {a >= 0.60 && a <= 0.75, fmt("AUC %.3f", a)};
}

Outcome k_selection(int threads) {
  const auto grid = build_grid();
  std::vector<int> chosen(10, -1);
  std::vector<std::jthread> pool;
  std::atomic<int> next{0};
  const auto t0 = std::chrono::steady_clock::now();
  auto work = [&] {
    for (int i = next++; i < 10; i = next++) {
      const SimData data = generate(SimDesign::design_a(3000, 0.3, derive_seed(15, i)));
      FitOptions o;
      o.seed = derive_seed(16, i);
      chosen[i] = select_k(data.responses, {0, 1, 2}, grid, o).best_k();
    }
  };
  for (int t = 0; t < std::max(1, threads); ++t) pool.emplace_back(work);
  pool.clear();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  int ones = 0;
  std::string list;
  for (const int k : chosen) {
    ones += k == 1;
    list += (list.empty() ? "" : " ") + std::to_string(k);
  }
  return {ones >= 7, fmt("K = 1 chosen in %d/10 (choices: %s), %.0f s", ones, list.c_str(), secs)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path work = fs::temp_directory_path() / "cllmix_acceptance";
  int threads = default_thread_count();
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream s(argv[++i]);
      std::string tok;
      while (std::getline(s, tok, ',')) only.insert(std::stoi(tok));
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--threads" && i + 1 < argc) {
      threads = std::stoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: acceptance [--only 1,2,...] [--work DIR] [--threads N]\n");
      return 1;
    }
  }
  fs::create_directories(work);
  auto wanted = [&](int c) { return only.empty() || only.count(c); };

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient correctness", gradient_check);
  report(2, "EM monotonicity", em_monotonicity);
  report(3, "quadrature oracle", quadrature_oracle);
  report(4, "anchor invariance", anchor_invariance);
  report(5, "label permutation", label_permutation);
  report(6, "KKT at lambda_max", kkt_lambda_max);
  report(7, "soft-threshold and clip", prox_identities);
  report(8, "study determinism", [&] { return determinism(work); });
  report(9, "E-step enumeration", estep_bruteforce);

  if (wanted(10) || wanted(11) || wanted(12) || wanted(13) || wanted(14)) {
    std::optional<Cells> cells;
    std::string err;
    try {
      cells = run_cells(work, threads);
      std::printf("     replication cells: %s\n", cells->note.c_str());
    } catch (const std::exception& e) {
      err = e.what();
    }
    auto cell = [&](const char* label, auto&& f) -> std::function<Outcome()> {
      return [&, label, f] {
        if (!cells) return Outcome{false, "study failed: " + err};
        return f(cells->reports.at(label));
      };
    };
    report(10, "Design A detection (N=1000, pi=0.3)", cell("A_N1000_pi0.3", design_a_detection));
    report(11, "Design A structure (N=1000, pi=0.3)", cell("A_N1000_pi0.3", design_a_structure));
    report(12, "Design B recovery (N=1000, pi=0.3)", cell("B_N1000_pi0.3", design_b_recovery));
    report(13, "Design A classification (N=1000, pi=0.1)", cell("A_N1000_pi0.1", design_a_classification));
    report(14, "Design B AUC plateau", cell("B_N1000_pi0.3", design_b_auc));
  }
  report(15, "K selection (N=3000)", [&] { return k_selection(threads); });

  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
