#pragma once

#include <optional>
#include <vector>

#include "cllmix/em.hpp"

namespace cllmix {

inline constexpr int kDefaultPathPoints = 30;
inline constexpr double kLambdaMinRatio = 1e-3;

struct PathOptions {
  int n_lambdas = kDefaultPathPoints;
  // Warm-start each lambda from the previous solution. When false every
  // lambda is fitted from opts.n_starts cold starts.
  bool warm_start = true;
  // Reuse a constrained refit when a later lambda selects the same support.
  bool cache_refits = true;
  friend bool operator==(const PathOptions&, const PathOptions&) = default;
};

struct PathPoint {
  double lambda = 0.0;
  FitResult penalized;
  Support support;
  FitResult refit;
  double bic = 0.0;
  bool refit_ok = true;  // false when the refit threw; refit then holds the penalised fit

  friend bool operator==(const PathPoint&, const PathPoint&) = default;
};

struct PathResult {
  int n_focal = 0;
  std::vector<double> lambdas;  // decreasing
  std::vector<PathPoint> points;
  int selected_index = 0;

  const PathPoint& selected() const { return points.at(static_cast<std::size_t>(selected_index)); }
  const FitResult& selected_model() const { return selected().refit; }

  friend bool operator==(const PathResult&, const PathResult&) = default;
};

// Number of free parameters: J difficulties, |support| DIF effects, K
// proportions, K focal locations and K focal scales.
int parameter_count(int n_items, int support_size, int n_focal);

double bic(const FitResult& refit, int n_respondents);

// N * max |d(-Q/N)/d delta| at a delta = 0 fit: the smallest total-scale
// lambda at which zero DIF is a proximal fixed point.
double lambda_max(const FitResult& impact_only, const ResponseMatrix& responses,
                  const QuadratureGrid& grid);

// Geometric grid of n values from hi down to hi * kLambdaMinRatio.
std::vector<double> geometric_grid(double hi, int n);

// Fits the impact-only model and returns the grid below its lambda_max.
std::vector<double> lambda_grid(const ResponseMatrix& responses, int n_focal, int n_lambdas,
                                const QuadratureGrid& grid, const FitOptions& opts);

// Penalise-then-refit over the lambda grid and select by BIC. For K = 0
// there is no DIF to select and the path holds a single lambda = 0 point.
PathResult two_stage_path(const ResponseMatrix& responses, int n_focal, const QuadratureGrid& grid,
                          const FitOptions& opts, const PathOptions& path_opts = {});

// Index of the minimum BIC among selectable points; ties go to the larger
// lambda (earlier index).
int select_by_bic(const std::vector<PathPoint>& points);

struct SelectKResult {
  std::vector<PathResult> paths;  // one per candidate, in the order given
  std::vector<int> candidates;
  int best = 0;  // index into paths

  const PathResult& best_path() const { return paths.at(static_cast<std::size_t>(best)); }
  int best_k() const { return candidates.at(static_cast<std::size_t>(best)); }
};

SelectKResult select_k(const ResponseMatrix& responses, const std::vector<int>& candidates,
                       const QuadratureGrid& grid, const FitOptions& opts,
                       const PathOptions& path_opts = {});

}  // namespace cllmix
