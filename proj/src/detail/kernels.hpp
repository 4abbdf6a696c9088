#pragma once

// Internal kernels shared by the likelihood and EM modules. They work on the
// transposed layout (cells x respondents) so each respondent's column is
// contiguous.

#include <Eigen/Dense>

#include "cllmix/params.hpp"
#include "cllmix/quadrature.hpp"

namespace cllmix::detail {

Eigen::MatrixXd log_joint_by_column(const ModelParams& params, const ResponseMatrix& responses,
                                    const QuadratureGrid& grid);

Eigen::VectorXd column_log_sum_exp(const Eigen::MatrixXd& m);

}  // namespace cllmix::detail
