#include "cllmix/regpath.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "cllmix/error.hpp"

namespace cllmix {

int parameter_count(int n_items, int support_size, int n_focal) {
  return n_items + support_size + 3 * n_focal;
}

double bic(const FitResult& refit, int n_respondents) {
  const int card = parameter_count(refit.params.n_items(), static_cast<int>(refit.support.size()),
                                   refit.params.n_focal());
  return -2.0 * refit.loglik + std::log(static_cast<double>(n_respondents)) * card;
}

double lambda_max(const FitResult& impact_only, const ResponseMatrix& responses,
                  const QuadratureGrid& grid) {
  if (impact_only.params.n_focal() == 0) return 0.0;
  const EStepResult es = e_step(impact_only.params, responses, grid);
  const GradientBundle g = gradients(impact_only.params, es.stats, grid);
  return static_cast<double>(responses.n_respondents()) * g.delta.cwiseAbs().maxCoeff();
}

std::vector<double> geometric_grid(double hi, int n) {
  if (n < 2) throw ConfigError("lambda grid needs at least 2 points");
  if (!(hi > 0.0) || !std::isfinite(hi)) throw NumericalError("lambda_max must be positive and finite");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double log_hi = std::log(hi);
  const double span = std::log(kLambdaMinRatio);
  out.front() = hi;
  for (int m = 1; m + 1 < n; ++m) out[m] = std::exp(log_hi + span * m / (n - 1));
  out.back() = hi * kLambdaMinRatio;
  return out;
}

namespace {

FitResult impact_only_fit(const ResponseMatrix& responses, int n_focal, const QuadratureGrid& grid,
                          const FitOptions& opts) {
  FitOptions o = opts;
  o.candidate_set.reset();
  return fit_constrained(responses, n_focal, {}, grid, o);
}

FitOptions warm_only(FitOptions o) {
  o.n_starts = 0;
  return o;
}

}  // namespace

std::vector<double> lambda_grid(const ResponseMatrix& responses, int n_focal, int n_lambdas,
                                const QuadratureGrid& grid, const FitOptions& opts) {
  if (n_lambdas < 2) throw ConfigError("lambda grid needs at least 2 points");
  if (n_focal < 1) throw UsageError("lambda grid needs at least one focal class");
  const FitResult base = impact_only_fit(responses, n_focal, grid, opts);
  return geometric_grid(lambda_max(base, responses, grid), n_lambdas);
}

int select_by_bic(const std::vector<PathPoint>& points) {
  int best = -1;
  for (std::size_t m = 0; m < points.size(); ++m) {
    if (!points[m].refit_ok) continue;
    if (best < 0 || points[m].bic < points[static_cast<std::size_t>(best)].bic) best = static_cast<int>(m);
  }
  if (best < 0) throw NumericalError("no lambda on the path produced a usable refit");
  return best;
}

PathResult two_stage_path(const ResponseMatrix& responses, int n_focal, const QuadratureGrid& grid,
                          const FitOptions& opts, const PathOptions& path_opts) {
  validate(opts);
  if (n_focal < 0) throw UsageError("number of focal classes must be non-negative");
  const int N = responses.n_respondents();
  PathResult out;
  out.n_focal = n_focal;

  if (n_focal == 0) {
    FitResult fit = fit_constrained(responses, 0, {}, grid, opts);
    const double b = bic(fit, N);
    out.lambdas = {0.0};
    out.points.push_back(PathPoint{0.0, fit, {}, fit, b, true});
    return out;
  }

  // The grid is on the total scale; the engine is told so regardless of the
  // caller's setting.
  FitOptions fopts = opts;
  fopts.lambda_scale = LambdaScale::kTotal;

  const FitResult base = impact_only_fit(responses, n_focal, grid, fopts);
  out.lambdas = geometric_grid(lambda_max(base, responses, grid), path_opts.n_lambdas);

  std::map<Support, FitResult> cache;
  std::optional<ModelParams> previous = base.params;
  for (std::size_t m = 0; m < out.lambdas.size(); ++m) {
    const double lambda = out.lambdas[m];
    FitResult penalized = path_opts.warm_start
                              ? fit_penalized(responses, n_focal, lambda, grid,
                                              m == 0 ? fopts : warm_only(fopts), previous)
                              : fit_penalized(responses, n_focal, lambda, grid, fopts);
    if (path_opts.warm_start) previous = penalized.params;
    const Support support = penalized.support;

    std::optional<FitResult> refit;
    const auto hit = path_opts.cache_refits ? cache.find(support) : cache.end();
    // A cached refit is reused only if it is at least as good as what this
    // penalised fit would start from.
    if (hit != cache.end() && hit->second.loglik >= penalized.loglik) {
      refit = hit->second;
    } else {
      try {
        refit = fit_constrained(responses, n_focal, support, grid, warm_only(fopts), penalized.params);
        if (hit != cache.end() && hit->second.loglik > refit->loglik) refit = hit->second;
        if (path_opts.cache_refits) cache.insert_or_assign(support, *refit);
      } catch (const NumericalError&) {
      }
    }
    if (refit) {
      refit->support = support;
      refit->lambda = 0.0;
      const double b = bic(*refit, N);
      out.points.push_back(PathPoint{lambda, std::move(penalized), support, std::move(*refit), b, true});
    } else {
      FitResult copy = penalized;
      out.points.push_back(PathPoint{lambda, std::move(penalized), support, std::move(copy),
                                     std::numeric_limits<double>::infinity(), false});
    }
  }
  out.selected_index = select_by_bic(out.points);
  return out;
}

SelectKResult select_k(const ResponseMatrix& responses, const std::vector<int>& candidates,
                       const QuadratureGrid& grid, const FitOptions& opts, const PathOptions& path_opts) {
  if (candidates.empty()) throw UsageError("select_k needs at least one candidate K");
  SelectKResult out;
  out.candidates = candidates;
  for (const int k : candidates) {
    if (k < 0) throw UsageError("candidate K must be non-negative, got " + std::to_string(k));
    out.paths.push_back(two_stage_path(responses, k, grid, opts, path_opts));
  }
  for (std::size_t i = 1; i < out.paths.size(); ++i) {
    const double b = out.paths[i].selected().bic;
    const double cur = out.best_path().selected().bic;
    // Ties go to the smaller K.
    if (b < cur || (b == cur && candidates[i] < out.best_k())) out.best = static_cast<int>(i);
  }
  return out;
}

}  // namespace cllmix
