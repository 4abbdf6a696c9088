#pragma once

#include <Eigen/Dense>

#include "cllmix/params.hpp"
#include "cllmix/quadrature.hpp"

namespace cllmix {

struct LikelihoodValue {
  double loglik = 0.0;
  Eigen::VectorXd per_respondent;  // log marginal probability of each response vector
};

// Per-class log response probabilities on the quadrature grid. Column
// k * G + q refers to class k at node q.
struct ItemLogProbs {
  Eigen::MatrixXd log_p;  // J x (K+1)G, log P(Y = 1)
  Eigen::MatrixXd log_q;  // J x (K+1)G, log P(Y = 0)
  Eigen::MatrixXd prob;   // J x (K+1)G, clamped P(Y = 1)
};

ItemLogProbs item_log_probs(const ModelParams& params, const QuadratureGrid& grid);

// N x (K+1)G matrix of log(nu_k * omega_q * prod_j P^y (1-P)^(1-y)),
// accumulated in log space.
Eigen::MatrixXd log_joint(const ModelParams& params, const ResponseMatrix& responses,
                          const QuadratureGrid& grid);

// Row-wise log-sum-exp; rows whose entries are all -inf give -inf.
Eigen::VectorXd row_log_sum_exp(const Eigen::MatrixXd& m);

// Pairwise (tree) summation with a fixed split point, so the result depends
// only on the values and their order.
double pairwise_sum(const Eigen::Ref<const Eigen::VectorXd>& v);

LikelihoodValue marginal_loglik(const ModelParams& params, const ResponseMatrix& responses,
                                const QuadratureGrid& grid);

double l1_norm(const Eigen::MatrixXd& delta);

// -log L + lambda * sum |delta| on the total (not per-respondent) scale.
double penalized_objective(const ModelParams& params, const ResponseMatrix& responses,
                           const QuadratureGrid& grid, double lambda);

void check_dimensions(const ModelParams& params, const ResponseMatrix& responses);

}  // namespace cllmix
