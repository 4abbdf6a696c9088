#include "cllmix/params.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cllmix/error.hpp"

namespace cllmix {

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw UsageError("ModelParams: " + msg); }

bool all_finite(const Eigen::MatrixXd& m) { return m.array().isFinite().all(); }

}  // namespace

ModelParams::ModelParams(Eigen::VectorXd d, Eigen::MatrixXd delta, Eigen::VectorXd nu,
                         Eigen::VectorXd mu, Eigen::VectorXd sigma)
    : d_(std::move(d)), delta_(std::move(delta)), nu_(std::move(nu)), mu_(std::move(mu)),
      sigma_(std::move(sigma)) {
  const auto J = d_.size();
  if (J < 1) invalid("need at least one item");
  if (delta_.rows() != J) invalid("delta must have one row per item");
  const auto classes = delta_.cols() + 1;
  if (nu_.size() != classes || mu_.size() != classes || sigma_.size() != classes) {
    invalid("nu, mu and sigma must have K+1 entries");
  }
  if (!all_finite(d_) || !all_finite(delta_) || !all_finite(nu_) || !all_finite(mu_) ||
      !all_finite(sigma_)) {
    invalid("non-finite entry");
  }
  if ((nu_.array() < 0.0).any()) invalid("negative class proportion");
  if (std::abs(nu_.sum() - 1.0) > kSimplexTol) invalid("class proportions must sum to one");
  if (mu_(0) != 0.0 || sigma_(0) != 1.0) invalid("reference class requires mu0 = 0, sigma0 = 1");
  if ((delta_.array().abs() > kDeltaBound).any()) invalid("|delta| exceeds 3");
  if ((sigma_.array() < kSigmaFloor).any()) invalid("sigma below the 0.05 floor");
}

ModelParams ModelParams::single_class(Eigen::VectorXd d) {
  const auto J = d.size();
  return ModelParams(std::move(d), Eigen::MatrixXd::Zero(J, 0), Eigen::VectorXd::Ones(1),
                     Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
}

ModelParams ModelParams::with_d(Eigen::VectorXd d) const {
  return ModelParams(std::move(d), delta_, nu_, mu_, sigma_);
}

ModelParams ModelParams::with_delta(Eigen::MatrixXd delta) const {
  return ModelParams(d_, std::move(delta), nu_, mu_, sigma_);
}

ModelParams ModelParams::with_nu(Eigen::VectorXd nu) const {
  return ModelParams(d_, delta_, std::move(nu), mu_, sigma_);
}

ModelParams ModelParams::with_structure(Eigen::VectorXd mu, Eigen::VectorXd sigma) const {
  return ModelParams(d_, delta_, nu_, std::move(mu), std::move(sigma));
}

ModelParams ModelParams::ordered_by_proportion() const {
  const int K = n_focal();
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return nu_(a) > nu_(b); });

  Eigen::MatrixXd delta(delta_.rows(), K);
  Eigen::VectorXd nu = nu_, mu = mu_, sigma = sigma_;
  for (int pos = 0; pos < K; ++pos) {
    const int src = order[pos];
    delta.col(pos) = delta_.col(src - 1);
    nu(pos + 1) = nu_(src);
    mu(pos + 1) = mu_(src);
    sigma(pos + 1) = sigma_(src);
  }
  return ModelParams(d_, std::move(delta), std::move(nu), std::move(mu), std::move(sigma));
}

ModelParams ModelParams::swap_focal(int a, int b) const {
  if (a < 1 || b < 1 || a > n_focal() || b > n_focal()) invalid("swap_focal index out of range");
  Eigen::MatrixXd delta = delta_;
  Eigen::VectorXd nu = nu_, mu = mu_, sigma = sigma_;
  delta.col(a - 1).swap(delta.col(b - 1));
  std::swap(nu(a), nu(b));
  std::swap(mu(a), mu(b));
  std::swap(sigma(a), sigma(b));
  return ModelParams(d_, std::move(delta), std::move(nu), std::move(mu), std::move(sigma));
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  return same_values(a.d_, b.d_) && same_values(a.delta_, b.delta_) && same_values(a.nu_, b.nu_) &&
         same_values(a.mu_, b.mu_) && same_values(a.sigma_, b.sigma_);
}

ResponseMatrix::ResponseMatrix(Eigen::MatrixXd data, std::vector<std::string> item_names)
    : data_(std::move(data)), item_names_(std::move(item_names)) {
  if (data_.rows() < 1 || data_.cols() < 1) throw UsageError("ResponseMatrix: need N >= 1 and J >= 1");
  for (Eigen::Index i = 0; i < data_.rows(); ++i) {
    for (Eigen::Index j = 0; j < data_.cols(); ++j) {
      const double v = data_(i, j);
      if (v != 0.0 && v != 1.0) {
        std::ostringstream os;
        os << "ResponseMatrix: entry (" << i << ", " << j << ") is not 0 or 1";
        throw UsageError(os.str());
      }
    }
  }
  if (!item_names_.empty() && static_cast<Eigen::Index>(item_names_.size()) != data_.cols()) {
    throw UsageError("ResponseMatrix: item name count does not match column count");
  }
}

ResponseMatrix ResponseMatrix::stacked(const ResponseMatrix& other) const {
  if (other.n_items() != n_items()) throw UsageError("ResponseMatrix::stacked: item count mismatch");
  Eigen::MatrixXd out(data_.rows() + other.data_.rows(), data_.cols());
  out << data_, other.data_;
  return ResponseMatrix(std::move(out), item_names_);
}

bool operator==(const ResponseMatrix& a, const ResponseMatrix& b) {
  return same_values(a.data_, b.data_) && a.item_names_ == b.item_names_;
}

Support support_of(const Eigen::MatrixXd& delta) {
  Support s;
  for (Eigen::Index j = 0; j < delta.rows(); ++j) {
    for (Eigen::Index k = 0; k < delta.cols(); ++k) {
      if (delta(j, k) != 0.0) s.push_back({static_cast<int>(j), static_cast<int>(k) + 1});
    }
  }
  return s;
}

Support all_cells(int n_items, int n_focal) {
  Support s;
  s.reserve(static_cast<std::size_t>(n_items) * n_focal);
  for (int j = 0; j < n_items; ++j) {
    for (int k = 1; k <= n_focal; ++k) s.push_back({j, k});
  }
  return s;
}

Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support_mask(const Support& s, int n_items,
                                                                 int n_focal) {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n_items, n_focal, false);
  for (const auto& c : s) {
    if (c.item < 0 || c.item >= n_items || c.focal < 1 || c.focal > n_focal) {
      throw UsageError("support cell (" + std::to_string(c.item) + ", " + std::to_string(c.focal) +
                       ") outside the J x K DIF matrix");
    }
    mask(c.item, c.focal - 1) = true;
  }
  return mask;
}

Support normalize(Support s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

}  // namespace cllmix
