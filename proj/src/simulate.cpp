#include "cllmix/simulate.hpp"

#include <string>

#include "cllmix/error.hpp"
#include "cllmix/link.hpp"
#include "cllmix/rng.hpp"

namespace cllmix {

std::string to_string(Design d) {
  switch (d) {
    case Design::kA: return "A";
    case Design::kB: return "B";
    case Design::kCustom: return "custom";
  }
  return "?";
}

Design parse_design(const std::string& s) {
  if (s == "A" || s == "a") return Design::kA;
  if (s == "B" || s == "b") return Design::kB;
  if (s == "custom") return Design::kCustom;
  throw ConfigError("unknown design '" + s + "' (expected A, B or custom)");
}

SimDesign SimDesign::design_a(int n, double pi, std::uint64_t seed) {
  SimDesign d;
  d.design = Design::kA;
  d.n = n;
  d.pi_focal = pi;
  d.seed = seed;
  return d;
}

SimDesign SimDesign::design_b(int n, double pi, std::uint64_t seed) {
  SimDesign d = design_a(n, pi, seed);
  d.design = Design::kB;
  d.n_dif_items = 0;
  return d;
}

void validate(const SimDesign& d) {
  if (d.n < 1) throw ConfigError("design: N must be positive");
  if (d.n_items < 1) throw ConfigError("design: J must be positive");
  if (!(d.pi_focal > 0.0 && d.pi_focal < 1.0)) throw ConfigError("design: pi must lie in (0, 1)");
  if (d.n_dif_items < 0 || d.n_dif_items > d.n_items) {
    throw ConfigError("design: number of DIF items must lie in [0, J]");
  }
  if (d.design == Design::kB && d.n_dif_items != 0) throw ConfigError("design B has no DIF items");
  if (!(d.dif_range.lo < d.dif_range.hi) || !(d.d_range.lo < d.d_range.hi)) {
    throw ConfigError("design: ranges must be ordered lo < hi");
  }
  if (std::max(std::abs(d.dif_range.lo), std::abs(d.dif_range.hi)) > kDeltaBound) {
    throw ConfigError("design: DIF range exceeds the [-3, 3] bound");
  }
  if (!(d.focal_sigma >= kSigmaFloor)) throw ConfigError("design: focal sigma below 0.05");
}

namespace {

SimData sample(const ModelParams& params, int n, Rng& rng) {
  const int J = params.n_items();
  const int C = params.n_classes();
  SimTruth truth{params, Eigen::VectorXi(n), Eigen::VectorXd(n)};
  Eigen::MatrixXd y(n, J);
  for (int i = 0; i < n; ++i) {
    const double u = open_uniform(rng);
    int k = 0;
    double cum = params.nu()(0);
    while (k + 1 < C && u >= cum) cum += params.nu()(++k);
    // Guard against a tail class with zero mass picked up by rounding.
    while (k > 0 && params.nu()(k) == 0.0) --k;
    const double theta = gumbel_sample(params.mu()(k), params.sigma()(k), rng);
    truth.class_labels(i) = k;
    truth.thetas(i) = theta;
    for (int j = 0; j < J; ++j) {
      y(i, j) = open_uniform(rng) < irf(theta, params.d()(j), params.shift(j, k)) ? 1.0 : 0.0;
    }
  }
  return SimData{ResponseMatrix(std::move(y)), std::move(truth)};
}

}  // namespace

SimData generate(const SimDesign& design) {
  validate(design);
  Rng rng(design.seed);
  const int J = design.n_items;
  Eigen::VectorXd d(J);
  for (int j = 0; j < J; ++j) d(j) = uniform_between(rng, design.d_range.lo, design.d_range.hi);
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(J, 1);
  for (int j = 0; j < design.n_dif_items; ++j) {
    delta(j, 0) = uniform_between(rng, design.dif_range.lo, design.dif_range.hi);
  }
  Eigen::VectorXd nu(2), mu(2), sigma(2);
  nu << 1.0 - design.pi_focal, design.pi_focal;
  mu << 0.0, design.focal_mu;
  sigma << 1.0, design.focal_sigma;
  const ModelParams params(std::move(d), std::move(delta), std::move(nu), std::move(mu), std::move(sigma));
  return sample(params, design.n, rng);
}

SimData generate_custom(const ModelParams& params, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("generate_custom: N must be positive");
  Rng rng(seed);
  return sample(params, n, rng);
}

}  // namespace cllmix
