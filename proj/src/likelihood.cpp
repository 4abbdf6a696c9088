#include "cllmix/likelihood.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cllmix/error.hpp"
#include "cllmix/link.hpp"
#include "detail/kernels.hpp"

namespace cllmix {

void check_dimensions(const ModelParams& params, const ResponseMatrix& responses) {
  if (params.n_items() != responses.n_items()) {
    throw UsageError("parameter item count " + std::to_string(params.n_items()) +
                     " does not match response columns " + std::to_string(responses.n_items()));
  }
}

ItemLogProbs item_log_probs(const ModelParams& params, const QuadratureGrid& grid) {
  const int J = params.n_items();
  const int C = params.n_classes();
  const auto G = grid.size();
  ItemLogProbs out;
  out.log_p.resize(J, C * G);
  out.log_q.resize(J, C * G);
  out.prob.resize(J, C * G);
  for (int k = 0; k < C; ++k) {
    const Eigen::VectorXd theta = class_nodes(grid, params.mu()(k), params.sigma()(k));
    for (Eigen::Index q = 0; q < G; ++q) {
      const auto col = k * G + q;
      for (int j = 0; j < J; ++j) {
        const double z = theta(q) - params.d()(j) - params.shift(j, k);
        const double p = cll_prob(z);
        out.prob(j, col) = p;
        out.log_p(j, col) = std::log(p);
        out.log_q(j, col) = std::log(cll_prob_complement(z));
      }
    }
  }
  return out;
}

namespace detail {

Eigen::MatrixXd log_joint_by_column(const ModelParams& params, const ResponseMatrix& responses,
                                    const QuadratureGrid& grid) {
  check_dimensions(params, responses);
  const ItemLogProbs lp = item_log_probs(params, grid);
  const int N = responses.n_respondents();
  const int C = params.n_classes();
  const auto G = grid.size();
  const auto cells = C * G;

  // base(c) = log prior of cell c plus the all-incorrect log likelihood;
  // each correct answer adds log_p - log_q for that item.
  Eigen::VectorXd base(cells);
  for (int k = 0; k < C; ++k) {
    const double log_nu = std::log(params.nu()(k));
    for (Eigen::Index q = 0; q < G; ++q) base(k * G + q) = log_nu + grid.log_weights(q);
  }
  base += lp.log_q.colwise().sum().transpose();
  const Eigen::MatrixXd gain = (lp.log_p - lp.log_q).transpose();  // cells x J

  Eigen::MatrixXd out(cells, N);
  out.noalias() = gain * responses.data().transpose();
  out.colwise() += base;
  return out;
}

Eigen::VectorXd column_log_sum_exp(const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.cols());
  for (Eigen::Index i = 0; i < m.cols(); ++i) {
    const double top = m.col(i).maxCoeff();
    if (!std::isfinite(top)) {
      out(i) = top;
      continue;
    }
    const auto shifted = m.col(i).array() - top;
    // Same cut-off as the E-step: terms under exp(-600) are dropped.
    out(i) = top + std::log((shifted < -600.0).select(0.0, shifted.exp()).sum());
  }
  return out;
}

}  // namespace detail

Eigen::MatrixXd log_joint(const ModelParams& params, const ResponseMatrix& responses,
                          const QuadratureGrid& grid) {
  return detail::log_joint_by_column(params, responses, grid).transpose();
}

Eigen::VectorXd row_log_sum_exp(const Eigen::MatrixXd& m) {
  return detail::column_log_sum_exp(m.transpose());
}

double pairwise_sum(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const auto n = v.size();
  if (n <= 8) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += v(i);
    return s;
  }
  const auto half = n / 2;
  return pairwise_sum(v.head(half)) + pairwise_sum(v.tail(n - half));
}

LikelihoodValue marginal_loglik(const ModelParams& params, const ResponseMatrix& responses,
                                const QuadratureGrid& grid) {
  const Eigen::MatrixXd lj = detail::log_joint_by_column(params, responses, grid);
  LikelihoodValue out;
  out.per_respondent = detail::column_log_sum_exp(lj);
  for (Eigen::Index i = 0; i < out.per_respondent.size(); ++i) {
    if (!std::isfinite(out.per_respondent(i))) {
      throw NumericalError("marginal log-likelihood is not finite for respondent " + std::to_string(i));
    }
  }
  out.loglik = pairwise_sum(out.per_respondent);
  return out;
}

double l1_norm(const Eigen::MatrixXd& delta) { return delta.size() == 0 ? 0.0 : delta.cwiseAbs().sum(); }

double penalized_objective(const ModelParams& params, const ResponseMatrix& responses,
                           const QuadratureGrid& grid, double lambda) {
  if (!(lambda >= 0.0)) throw UsageError("penalized_objective: lambda must be non-negative");
  const double nll = -marginal_loglik(params, responses, grid).loglik;
  if (lambda == 0.0) return nll;
  return nll + lambda * l1_norm(params.delta());
}

}  // namespace cllmix
