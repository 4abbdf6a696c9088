#include "cllmix/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cllmix/error.hpp"
#include "cllmix/link.hpp"
#include "cllmix/rng.hpp"
#include "detail/kernels.hpp"

namespace cllmix {

Eigen::MatrixXd PosteriorWeights::class_probabilities() const {
  Eigen::MatrixXd out(w.rows(), n_classes);
  for (int k = 0; k < n_classes; ++k) out.col(k) = w.middleCols(k * n_nodes, n_nodes).rowwise().sum();
  return out;
}

namespace {

// Posterior in cells x N layout plus the statistics accumulated from it.
struct ColumnEStep {
  Eigen::MatrixXd w;  // cells x N
  SufficientStats stats;
  LikelihoodValue likelihood;
};

ColumnEStep e_step_columns(const ModelParams& params, const ResponseMatrix& responses,
                           const QuadratureGrid& grid) {
  ColumnEStep out;
  out.w = detail::log_joint_by_column(params, responses, grid);
  const int N = responses.n_respondents();
  const int J = responses.n_items();
  const int C = params.n_classes();
  const auto G = grid.size();
  const auto cells = C * G;

  out.likelihood.per_respondent.resize(N);
  for (int i = 0; i < N; ++i) {
    auto col = out.w.col(i);
    const double top = col.maxCoeff();
    if (!std::isfinite(top)) {
      throw NumericalError("E-step: posterior of respondent " + std::to_string(i) + " is degenerate");
    }
    // Terms below exp(-600) relative to the mode are dropped: they are far
    // under double resolution and would otherwise produce subnormals.
    col = (col.array() - top < -600.0).select(0.0, (col.array() - top).exp());
    const double mass = col.sum();
    col /= mass;
    out.likelihood.per_respondent(i) = top + std::log(mass);
  }
  const Eigen::VectorXd s = out.w.rowwise().sum();
  Eigen::MatrixXd o_t(cells, J);
  o_t.noalias() = out.w * responses.data();
  out.likelihood.loglik = pairwise_sum(out.likelihood.per_respondent);
  out.stats.S = Eigen::Map<const Eigen::MatrixXd>(s.data(), G, C).transpose();
  out.stats.O = o_t.transpose();
  out.stats.n_respondents = N;
  return out;
}

}  // namespace

EStepResult e_step(const ModelParams& params, const ResponseMatrix& responses,
                   const QuadratureGrid& grid) {
  ColumnEStep cols = e_step_columns(params, responses, grid);
  EStepResult out;
  out.posterior.w = cols.w.transpose();
  out.posterior.n_classes = params.n_classes();
  out.posterior.n_nodes = static_cast<int>(grid.size());
  out.stats = std::move(cols.stats);
  out.likelihood = std::move(cols.likelihood);
  return out;
}

Eigen::VectorXd m_step_nu(const SufficientStats& stats, int n_respondents) {
  if (n_respondents < 1) throw UsageError("m_step_nu: need at least one respondent");
  Eigen::VectorXd mass = stats.S.rowwise().sum();
  // Dividing by the accumulated mass rather than N keeps the result on the
  // simplex to rounding; the two agree to ~1e-13.
  const double total = mass.sum();
  if (!(total > 0.0)) throw NumericalError("m_step_nu: posterior mass is zero");
  return mass / total;
}

GradientBundle gradients(const ModelParams& params, const SufficientStats& stats,
                         const QuadratureGrid& grid, GradientConvention convention) {
  const int J = params.n_items();
  const int K = params.n_focal();
  const auto G = grid.size();
  const double inv_n = 1.0 / static_cast<double>(stats.n_respondents);
  const bool printed = convention == GradientConvention::kPrinted;

  GradientBundle g;
  g.d = Eigen::VectorXd::Zero(J);
  g.delta = Eigen::MatrixXd::Zero(J, K);
  g.mu = Eigen::VectorXd::Zero(K);
  g.sigma = Eigen::VectorXd::Zero(K);

  for (int k = 0; k <= K; ++k) {
    const double mu = params.mu()(k);
    const double sigma = params.sigma()(k);
    for (Eigen::Index q = 0; q < G; ++q) {
      const double rho = grid.nodes(q);
      const double theta = mu + sigma * rho;
      const double mass = stats.S(k, q);
      const auto col = k * G + q;
      double node_sum = 0.0;
      for (int j = 0; j < J; ++j) {
        const double z = theta - params.d()(j) - params.shift(j, k);
        // dQ/dz = D * s with D = O - P S.
        const double r = (stats.O(j, col) - cll_prob(z) * mass) * cll_score(z);
        g.d(j) += printed ? -r : r;
        if (k > 0) g.delta(j, k - 1) += printed ? -r : r;
        node_sum += r;
      }
      if (k > 0) {
        g.mu(k - 1) -= node_sum;
        g.sigma(k - 1) -= node_sum * (printed ? (rho - mu) / sigma : rho);
      }
    }
  }
  g.d *= inv_n;
  g.delta *= inv_n;
  g.mu *= inv_n;
  g.sigma *= inv_n;
  return g;
}

double expected_complete_objective(const ModelParams& params, const SufficientStats& stats,
                                   const QuadratureGrid& grid) {
  const int J = params.n_items();
  const int C = params.n_classes();
  const auto G = grid.size();
  double total = 0.0;
  for (int k = 0; k < C; ++k) {
    const Eigen::VectorXd theta = class_nodes(grid, params.mu()(k), params.sigma()(k));
    const double log_nu = std::log(params.nu()(k));
    for (Eigen::Index q = 0; q < G; ++q) {
      const double mass = stats.S(k, q);
      if (mass == 0.0) continue;
      const auto col = k * G + q;
      double node = mass * log_nu;
      for (int j = 0; j < J; ++j) {
        const double z = theta(q) - params.d()(j) - params.shift(j, k);
        const double o = stats.O(j, col);
        node += o * std::log(cll_prob(z)) + (mass - o) * std::log(cll_prob_complement(z));
      }
      total += node;
    }
  }
  return -total / static_cast<double>(stats.n_respondents);
}

double soft_threshold(double x, double tau) {
  const double m = std::abs(x) - tau;
  return m > 0.0 ? std::copysign(m, x) : 0.0;
}

Eigen::MatrixXd prox_update(const Eigen::MatrixXd& delta, const Eigen::MatrixXd& grad, double alpha,
                            double lambda, const Mask& candidates) {
  if (!(alpha > 0.0)) throw UsageError("prox_update: alpha must be positive");
  if (!(lambda >= 0.0)) throw UsageError("prox_update: lambda must be non-negative");
  if (delta.rows() != grad.rows() || delta.cols() != grad.cols() || delta.rows() != candidates.rows() ||
      delta.cols() != candidates.cols()) {
    throw UsageError("prox_update: dimension mismatch");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(delta.rows(), delta.cols());
  const double tau = alpha * lambda;
  for (Eigen::Index j = 0; j < delta.rows(); ++j) {
    for (Eigen::Index k = 0; k < delta.cols(); ++k) {
      if (!candidates(j, k)) continue;
      out(j, k) = std::clamp(soft_threshold(delta(j, k) - alpha * grad(j, k), tau), -kDeltaBound,
                             kDeltaBound);
    }
  }
  return out;
}

void validate(const FitOptions& opts) {
  if (opts.max_outer_iter < 1) throw ConfigError("fit options: max_outer_iter must be positive");
  if (!(opts.tol > 0.0)) throw ConfigError("fit options: tol must be positive");
  if (opts.n_starts < 0) throw ConfigError("fit options: n_starts must be non-negative");
  if (!(opts.step_init > 0.0)) throw ConfigError("fit options: step_init must be positive");
  if (opts.inner_steps < 1) throw ConfigError("fit options: inner_steps must be positive");
  if (opts.line_search.max_halvings < 0 || !(opts.line_search.growth > 0.0)) {
    throw ConfigError("fit options: invalid line search settings");
  }
}

ModelParams initial_params(const ResponseMatrix& responses, int n_focal, int start_index,
                           std::uint64_t seed) {
  if (n_focal < 0) throw UsageError("number of focal classes must be non-negative");
  const int J = responses.n_items();
  const int C = n_focal + 1;
  const Eigen::VectorXd pbar = responses.proportions();
  Eigen::VectorXd d(J);
  for (int j = 0; j < J; ++j) {
    const double p = std::clamp(pbar(j), kProbFloor, 1.0 - kProbFloor);
    // Inverts the CLL at the mean of the reference Gumbel.
    d(j) = kEulerGamma - std::log(-std::log1p(-p));
  }
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(C);
  for (int k = 1; k < C; ++k) mu(k) = (k % 2 == 1) ? 0.5 : -0.5;
  if (start_index >= 1) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(start_index)));
    for (int j = 0; j < J; ++j) d(j) += 0.25 * standard_normal(rng);
    for (int k = 1; k < C; ++k) mu(k) = std::clamp(mu(k) + 0.25 * standard_normal(rng), -kMuBound, kMuBound);
  }
  return ModelParams(std::move(d), Eigen::MatrixXd::Zero(J, n_focal),
                     Eigen::VectorXd::Constant(C, 1.0 / C), std::move(mu), Eigen::VectorXd::Ones(C));
}

namespace {

struct Candidate {
  Eigen::VectorXd d;
  Eigen::MatrixXd delta;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
};

double internal_lambda(double lambda, LambdaScale scale, int n) {
  return scale == LambdaScale::kTotal ? lambda / static_cast<double>(n) : lambda;
}

double total_lambda(double lambda, LambdaScale scale, int n) {
  return scale == LambdaScale::kTotal ? lambda : lambda * static_cast<double>(n);
}

// One EM run from a single starting point. `lam` is per-respondent.
FitResult run_em(const ResponseMatrix& responses, const QuadratureGrid& grid, ModelParams params,
                 double lam, const Mask& candidates, const FitOptions& opts) {
  const int N = responses.n_respondents();
  const int K = params.n_focal();
  const double n = static_cast<double>(N);

  params = params.with_delta(params.delta().cwiseProduct(candidates.cast<double>()));

  FitResult result{.params = params};
  result.n_respondents = N;
  result.item_names = responses.item_names();

  std::vector<int> low_streak(K + 1, 0);
  std::vector<bool> frozen(K + 1, false);
  double alpha = opts.step_init;
  double previous = std::numeric_limits<double>::infinity();

  for (int it = 0;; ++it) {
    ColumnEStep es = e_step_columns(params, responses, grid);
    const double ll = es.likelihood.loglik;
    const double objective = -ll / n + lam * l1_norm(params.delta());
    result.trace.push_back(objective * n);
    result.loglik_trace.push_back(ll);
    result.loglik = ll;
    result.penalized_objective = objective * n;

    if (it > 0 && std::abs(previous - objective) <= opts.tol * std::abs(previous)) {
      result.converged = true;
      break;
    }
    if (it == opts.max_outer_iter) break;
    previous = objective;

    params = params.with_nu(m_step_nu(es.stats, N));
    for (int k = 1; k <= K; ++k) {
      low_streak[k] = params.nu()(k) < kCollapseThreshold ? low_streak[k] + 1 : 0;
      if (low_streak[k] >= kCollapsePatience) frozen[k] = true;
    }

    bool exhausted = false;
    for (int inner = 0; inner < opts.inner_steps; ++inner) {
      GradientBundle g = gradients(params, es.stats, grid);
      for (int k = 1; k <= K; ++k) {
        if (frozen[k]) {
          g.mu(k - 1) = 0.0;
          g.sigma(k - 1) = 0.0;
        }
      }
      const double smooth = expected_complete_objective(params, es.stats, grid);
      const double current = smooth + lam * l1_norm(params.delta());

      auto propose = [&](double step) {
        Candidate c;
        c.d = params.d() - step * g.d;
        c.delta = prox_update(params.delta(), g.delta, step, lam, candidates);
        c.mu = params.mu();
        c.sigma = params.sigma();
        for (int k = 1; k <= K; ++k) {
          c.mu(k) = std::clamp(params.mu()(k) - step * g.mu(k - 1), -kMuBound, kMuBound);
          c.sigma(k) = std::max(params.sigma()(k) - step * g.sigma(k - 1), kSigmaFloor);
        }
        const ModelParams trial(c.d, c.delta, params.nu(), c.mu, c.sigma);
        const double penalty = lam * l1_norm(c.delta);

        const Eigen::VectorXd dd = c.d - params.d();
        const Eigen::MatrixXd ddelta = c.delta - params.delta();
        const Eigen::VectorXd dmu = (c.mu - params.mu()).tail(K);
        const Eigen::VectorXd dsigma = (c.sigma - params.sigma()).tail(K);
        const double linear =
            g.d.dot(dd) + (K > 0 ? (g.delta.array() * ddelta.array()).sum() : 0.0) + g.mu.dot(dmu) +
            g.sigma.dot(dsigma);
        const double sq = dd.squaredNorm() + ddelta.squaredNorm() + dmu.squaredNorm() + dsigma.squaredNorm();

        TrialValue v;
        v.objective = expected_complete_objective(trial, es.stats, grid) + penalty;
        v.model = smooth + linear + sq / (2.0 * step) + penalty;
        return std::make_pair(std::move(c), v);
      };

      auto ls = line_search(current, propose, alpha, opts.line_search);
      if (ls.exhausted()) {
        exhausted = true;
        break;
      }
      alpha = ls.alpha;
      Candidate& c = *ls.accepted;
      params = ModelParams(std::move(c.d), std::move(c.delta), params.nu(), std::move(c.mu),
                           std::move(c.sigma));
    }
    if (exhausted) result.exhausted_iterations.push_back(it);
    ++result.n_outer_iters;
  }

  result.params = params.ordered_by_proportion();
  result.support = support_of(result.params.delta());
  for (int k = 1; k <= K; ++k) {
    if (frozen[k] || result.params.nu()(k) < kCollapseThreshold) result.class_collapse = true;
  }
  return result;
}

void check_warm_start(const std::optional<ModelParams>& warm, const ResponseMatrix& responses,
                      int n_focal) {
  if (!warm) return;
  if (warm->n_items() != responses.n_items() || warm->n_focal() != n_focal) {
    throw UsageError("warm start has J = " + std::to_string(warm->n_items()) + ", K = " +
                     std::to_string(warm->n_focal()) + "; expected J = " +
                     std::to_string(responses.n_items()) + ", K = " + std::to_string(n_focal));
  }
}

FitResult multi_start(const ResponseMatrix& responses, int n_focal, double lambda,
                      const Mask& candidates, const QuadratureGrid& grid, const FitOptions& opts,
                      const std::optional<ModelParams>& warm_start) {
  validate(opts);
  if (n_focal < 0) throw UsageError("number of focal classes must be non-negative");
  if (!(lambda >= 0.0)) throw UsageError("lambda must be non-negative");
  check_warm_start(warm_start, responses, n_focal);
  if (opts.n_starts == 0 && !warm_start) throw ConfigError("fit needs at least one start");

  const int N = responses.n_respondents();
  const double lam = std::isinf(lambda) ? std::numeric_limits<double>::infinity()
                                        : internal_lambda(lambda, opts.lambda_scale, N);
  // An infinite penalty pins every delta at zero.
  const Mask active = std::isinf(lam) ? Mask::Constant(candidates.rows(), candidates.cols(), false)
                                      : candidates;
  const double lam_eff = std::isinf(lam) ? 0.0 : lam;

  std::optional<FitResult> best;
  auto consider = [&](FitResult r) {
    if (!best || r.penalized_objective < best->penalized_objective) best = std::move(r);
  };

  int index = 0;
  if (warm_start) {
    FitResult r = run_em(responses, grid, *warm_start, lam_eff, active, opts);
    r.start_index = index++;
    consider(std::move(r));
  }
  for (int s = 0; s < opts.n_starts; ++s) {
    FitResult r = run_em(responses, grid, initial_params(responses, n_focal, s, opts.seed), lam_eff,
                         active, opts);
    r.start_index = index++;
    consider(std::move(r));
  }
  best->lambda = std::isinf(lambda) ? lambda : total_lambda(lambda, opts.lambda_scale, N);
  return std::move(*best);
}

}  // namespace

FitResult fit_penalized(const ResponseMatrix& responses, int n_focal, double lambda,
                        const QuadratureGrid& grid, const FitOptions& opts,
                        const std::optional<ModelParams>& warm_start) {
  Mask candidates = Mask::Constant(responses.n_items(), n_focal, true);
  if (opts.candidate_set) candidates = support_mask(*opts.candidate_set, responses.n_items(), n_focal);
  return multi_start(responses, n_focal, lambda, candidates, grid, opts, warm_start);
}

FitResult fit_constrained(const ResponseMatrix& responses, int n_focal, const Support& support,
                          const QuadratureGrid& grid, const FitOptions& opts,
                          const std::optional<ModelParams>& warm_start) {
  const Mask candidates = support_mask(support, responses.n_items(), n_focal);
  return multi_start(responses, n_focal, 0.0, candidates, grid, opts, warm_start);
}

Eigen::MatrixXd class_posterior(const ModelParams& params, const ResponseMatrix& responses,
                                const QuadratureGrid& grid) {
  return e_step(params, responses, grid).posterior.class_probabilities();
}

}  // namespace cllmix
