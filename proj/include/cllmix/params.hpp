#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cllmix {

inline constexpr double kDeltaBound = 3.0;
inline constexpr double kSigmaFloor = 0.05;
inline constexpr double kMuBound = 4.0;
inline constexpr double kSimplexTol = 1e-12;

// Free parameters of the CLL-Gumbel mixture with K focal classes.
//
//   d      J       baseline item difficulties
//   delta  J x K   DIF shifts of the focal classes (the reference class has none)
//   nu     K+1     class proportions
//   mu     K+1     Gumbel locations, mu(0) == 0
//   sigma  K+1     Gumbel scales, sigma(0) == 1
//
// Immutable once constructed; the constructor enforces the identification
// constraints and bounds and throws UsageError otherwise.
class ModelParams {
 public:
  ModelParams(Eigen::VectorXd d, Eigen::MatrixXd delta, Eigen::VectorXd nu, Eigen::VectorXd mu,
              Eigen::VectorXd sigma);

  // Reference-only model with the given difficulties.
  static ModelParams single_class(Eigen::VectorXd d);

  int n_items() const { return static_cast<int>(d_.size()); }
  int n_focal() const { return static_cast<int>(delta_.cols()); }
  int n_classes() const { return n_focal() + 1; }

  const Eigen::VectorXd& d() const { return d_; }
  const Eigen::MatrixXd& delta() const { return delta_; }
  const Eigen::VectorXd& nu() const { return nu_; }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::VectorXd& sigma() const { return sigma_; }

  // Shift of item j in class k, zero for the reference class k = 0.
  double shift(int j, int k) const { return k == 0 ? 0.0 : delta_(j, k - 1); }

  ModelParams with_d(Eigen::VectorXd d) const;
  ModelParams with_delta(Eigen::MatrixXd delta) const;
  ModelParams with_nu(Eigen::VectorXd nu) const;
  ModelParams with_structure(Eigen::VectorXd mu, Eigen::VectorXd sigma) const;

  // Reorders focal classes so that nu(1) >= nu(2) >= ... >= nu(K). Ties keep
  // their current order.
  ModelParams ordered_by_proportion() const;

  // Swaps the complete parameter blocks of focal classes a and b (1-based).
  ModelParams swap_focal(int a, int b) const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);

 private:
  Eigen::VectorXd d_;
  Eigen::MatrixXd delta_;
  Eigen::VectorXd nu_;
  Eigen::VectorXd mu_;
  Eigen::VectorXd sigma_;
};

// N x J binary responses stored as doubles (0.0 / 1.0) so they feed dense
// products directly.
class ResponseMatrix {
 public:
  explicit ResponseMatrix(Eigen::MatrixXd data, std::vector<std::string> item_names = {});

  int n_respondents() const { return static_cast<int>(data_.rows()); }
  int n_items() const { return static_cast<int>(data_.cols()); }
  const Eigen::MatrixXd& data() const { return data_; }
  const std::vector<std::string>& item_names() const { return item_names_; }

  // Column means, i.e. observed proportion correct per item.
  Eigen::VectorXd proportions() const { return data_.colwise().mean().transpose(); }

  // Stacks the rows of `other` below this matrix.
  ResponseMatrix stacked(const ResponseMatrix& other) const;

  friend bool operator==(const ResponseMatrix& a, const ResponseMatrix& b);

 private:
  Eigen::MatrixXd data_;
  std::vector<std::string> item_names_;
};

// (item, focal class) pair; class is 1-based to match delta's column k-1.
struct DifCell {
  int item = 0;
  int focal = 1;
  friend auto operator<=>(const DifCell&, const DifCell&) = default;
};

using Support = std::vector<DifCell>;  // kept sorted and unique

Support support_of(const Eigen::MatrixXd& delta);
Support all_cells(int n_items, int n_focal);
Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support_mask(const Support& s, int n_items,
                                                                 int n_focal);
Support normalize(Support s);

// Exact equality including shape; Eigen's operator== asserts on mismatched sizes.
template <typename A, typename B>
bool same_values(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.derived().array() == b.derived().array()).all();
}

}  // namespace cllmix
