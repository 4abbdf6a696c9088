#pragma once

// Proximal EM for the l1-penalised CLL-Gumbel mixture.
//
// Internally the engine minimises the per-respondent objective
//   -(1/N) log L + (lambda/N) sum |delta|
// so that step sizes are comparable across sample sizes; FitResult reports
// the total-scale values (-log L, -log L + lambda sum |delta|).

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cllmix/likelihood.hpp"
#include "cllmix/params.hpp"
#include "cllmix/quadrature.hpp"

namespace cllmix {

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kCollapseThreshold = 1e-3;
inline constexpr int kCollapsePatience = 10;

// Joint posterior over (class, node). Column k * G + q of `w` holds class k
// at node q; each row sums to one.
struct PosteriorWeights {
  Eigen::MatrixXd w;  // N x (K+1)G
  int n_classes = 1;
  int n_nodes = 0;

  double operator()(int i, int k, int q) const { return w(i, k * n_nodes + q); }
  // N x (K+1) posterior class membership probabilities.
  Eigen::MatrixXd class_probabilities() const;
};

// S(k, q) = sum_i w_ikq; O(j, k*G + q) = sum_i y_ij w_ikq.
struct SufficientStats {
  Eigen::MatrixXd S;  // (K+1) x G
  Eigen::MatrixXd O;  // J x (K+1)G
  int n_respondents = 0;
};

struct EStepResult {
  PosteriorWeights posterior;
  SufficientStats stats;
  LikelihoodValue likelihood;  // at the parameters the E-step was run on
};

EStepResult e_step(const ModelParams& params, const ResponseMatrix& responses,
                   const QuadratureGrid& grid);

// Closed-form class proportion update.
Eigen::VectorXd m_step_nu(const SufficientStats& stats, int n_respondents);

// Gradient of -Q / N. mu and sigma hold the K focal entries only.
struct GradientBundle {
  Eigen::VectorXd d;
  Eigen::MatrixXd delta;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
};

// kDerived differentiates the discretised objective under the transformed
// nodes theta = mu + sigma * rho. kPrinted reproduces the alternative sign
// and standardisation convention (d, delta with a leading minus; sigma
// weighted by (rho - mu)/sigma) and exists for diagnostic comparison only.
enum class GradientConvention { kDerived, kPrinted };

GradientBundle gradients(const ModelParams& params, const SufficientStats& stats,
                         const QuadratureGrid& grid,
                         GradientConvention convention = GradientConvention::kDerived);

// -Q(params | previous) / N given the previous E-step statistics, omitting
// the constant quadrature-weight term.
double expected_complete_objective(const ModelParams& params, const SufficientStats& stats,
                                   const QuadratureGrid& grid);

double soft_threshold(double x, double tau);

// Proximal step on the DIF matrix: soft-threshold delta - alpha * grad at
// alpha * lambda, clip to [-3, 3]; entries outside `candidates` become 0.
// lambda must be on the same scale as grad (per-respondent inside the engine).
Eigen::MatrixXd prox_update(const Eigen::MatrixXd& delta, const Eigen::MatrixXd& grad, double alpha,
                            double lambda, const Mask& candidates);

// ---------------------------------------------------------------------------
// Backtracking line search

enum class AcceptRule {
  // Accept once the composite objective lies under its quadratic upper
  // model f(x) + g.dx + |dx|^2 / (2 alpha) + penalty(x'). Guarantees descent.
  kMajorization,
  // Accept once F' <= F + allowance * (|F| + 1).
  kAllowance,
};

struct LineSearchOptions {
  double growth = 1.15;
  int max_halvings = 40;
  double allowance = 5e-3;
  AcceptRule rule = AcceptRule::kMajorization;
};

struct TrialValue {
  double objective = 0.0;  // composite objective at the trial point
  double model = 0.0;      // quadratic upper model at the trial point (kMajorization)
};

template <typename Candidate>
struct LineSearchResult {
  std::optional<Candidate> accepted;  // empty when every trial was rejected
  double alpha = 0.0;                 // accepted step, or the smallest step tried
  int trials = 0;
  bool exhausted() const { return !accepted.has_value(); }
};

// Tries alpha_init * growth, then halves up to max_halvings times. `propose`
// maps a step size to std::pair<Candidate, TrialValue>.
template <typename Propose>
auto line_search(double current_objective, Propose&& propose, double alpha_init,
                 const LineSearchOptions& opts = {}) {
  using Candidate = typename std::invoke_result_t<Propose&, double>::first_type;
  LineSearchResult<Candidate> result;
  const double allowed = current_objective + opts.allowance * (std::abs(current_objective) + 1.0);
  double alpha = alpha_init * opts.growth;
  for (int h = 0; h <= opts.max_halvings; ++h, alpha *= 0.5) {
    auto [candidate, value] = propose(alpha);
    ++result.trials;
    result.alpha = alpha;
    if (!std::isfinite(value.objective)) continue;
    const bool ok =
        opts.rule == AcceptRule::kAllowance
            ? value.objective <= allowed
            : value.objective <= value.model + 1e-14 * (std::abs(current_objective) + 1.0);
    if (ok) {
      result.accepted = std::move(candidate);
      return result;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Fitting

enum class LambdaScale {
  kTotal,          // lambda multiplies sum |delta| against -log L
  kPerRespondent,  // lambda multiplies sum |delta| against -(1/N) log L
};

struct FitOptions {
  int max_outer_iter = 500;
  double tol = 1e-7;  // relative change of the penalised objective
  int n_starts = 5;   // cold starts; a warm start, when given, is tried in addition
  std::uint64_t seed = 0;
  double step_init = 0.1;
  std::optional<Support> candidate_set;  // default: every (item, focal class)
  int inner_steps = 1;                   // proximal-gradient steps per E-step
  LineSearchOptions line_search;
  LambdaScale lambda_scale = LambdaScale::kTotal;
};

void validate(const FitOptions& opts);

struct FitResult {
  ModelParams params;
  double lambda = 0.0;  // total scale
  double loglik = 0.0;
  double penalized_objective = 0.0;
  Support support;
  int n_outer_iters = 0;
  bool converged = false;
  std::vector<double> trace;         // penalised objective at every E-step
  std::vector<double> loglik_trace;  // log-likelihood at every E-step
  std::vector<int> exhausted_iterations;  // outer iterations whose line search found no step
  int start_index = 0;  // 0 is the warm start when one was supplied
  bool class_collapse = false;
  int n_respondents = 0;
  std::vector<std::string> item_names;

  friend bool operator==(const FitResult&, const FitResult&) = default;
};

// Deterministic starting values; start_index >= 1 adds N(0, 0.25^2) jitter to
// d and mu from a stream derived from `seed`.
ModelParams initial_params(const ResponseMatrix& responses, int n_focal, int start_index,
                           std::uint64_t seed);

FitResult fit_penalized(const ResponseMatrix& responses, int n_focal, double lambda,
                        const QuadratureGrid& grid, const FitOptions& opts,
                        const std::optional<ModelParams>& warm_start = std::nullopt);

// Unpenalised fit with delta fixed at zero outside `support`.
FitResult fit_constrained(const ResponseMatrix& responses, int n_focal, const Support& support,
                          const QuadratureGrid& grid, const FitOptions& opts,
                          const std::optional<ModelParams>& warm_start = std::nullopt);

// N x (K+1) posterior class probabilities at the given parameters.
Eigen::MatrixXd class_posterior(const ModelParams& params, const ResponseMatrix& responses,
                                const QuadratureGrid& grid);

}  // namespace cllmix
