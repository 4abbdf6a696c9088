#pragma once

// Complementary log-log link and Gumbel latent-trait primitives. All functions
// are templated on the scalar type so they can be evaluated in extended
// precision when checking numerical behaviour.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "cllmix/error.hpp"

namespace cllmix {

// Response probabilities are clamped to [kProbFloor, 1 - kProbFloor] so that
// log-likelihood terms stay finite.
inline constexpr double kProbFloor = 1e-12;

inline constexpr double kEulerGamma = std::numbers::egamma;

template <typename Scalar>
inline void require_finite(Scalar z, const char* what) {
  if (!std::isfinite(z)) throw DomainError(std::string(what) + ": non-finite argument");
}

// F(z) = 1 - exp(-exp(z)), clamped.
template <typename Scalar>
Scalar cll_prob(Scalar z) {
  require_finite(z, "cll_prob");
  const Scalar p = -std::expm1(-std::exp(z));
  return std::clamp(p, Scalar(kProbFloor), Scalar(1) - Scalar(kProbFloor));
}

// 1 - F(z) = exp(-exp(z)), clamped. Evaluated directly rather than as
// 1 - cll_prob(z), which loses all precision in the upper tail.
template <typename Scalar>
Scalar cll_prob_complement(Scalar z) {
  require_finite(z, "cll_prob_complement");
  const Scalar q = std::exp(-std::exp(z));
  return std::clamp(q, Scalar(kProbFloor), Scalar(1) - Scalar(kProbFloor));
}

// Derivative of F: exp(z - exp(z)).
template <typename Scalar>
Scalar cll_density(Scalar z) {
  require_finite(z, "cll_density");
  return std::exp(z - std::exp(z));
}

// Score factor s(z) = F'(z) / [F(z)(1 - F(z))] with the clamped probabilities
// in the denominator. Tends to 1 as z -> -inf; past the upper clamp point
// (z > log(-log 1e-12) ~ 3.32) the numerator dominates and s decays to 0.
template <typename Scalar>
Scalar cll_score(Scalar z) {
  require_finite(z, "cll_score");
  return cll_density(z) / (cll_prob(z) * cll_prob_complement(z));
}

// P(Y = 1 | theta) for an item with difficulty d and class shift delta.
template <typename Scalar>
Scalar irf(Scalar theta, Scalar d, Scalar delta) {
  return cll_prob(theta - d - delta);
}

// Gumbel (maximum) density (1/sigma) exp(-z - exp(-z)), z = (theta - mu)/sigma.
template <typename Scalar>
Scalar gumbel_pdf(Scalar theta, Scalar mu, Scalar sigma) {
  if (!(sigma > Scalar(0))) throw DomainError("gumbel_pdf: sigma must be positive");
  const Scalar z = (theta - mu) / sigma;
  return std::exp(-z - std::exp(-z)) / sigma;
}

template <typename Scalar>
Scalar gumbel_log_pdf(Scalar theta, Scalar mu, Scalar sigma) {
  if (!(sigma > Scalar(0))) throw DomainError("gumbel_log_pdf: sigma must be positive");
  const Scalar z = (theta - mu) / sigma;
  return -z - std::exp(-z) - std::log(sigma);
}

template <typename Scalar>
Scalar gumbel_cdf(Scalar theta, Scalar mu, Scalar sigma) {
  if (!(sigma > Scalar(0))) throw DomainError("gumbel_cdf: sigma must be positive");
  return std::exp(-std::exp(-(theta - mu) / sigma));
}

// Inverse CDF: mu - sigma * log(-log(u)) for u in (0, 1).
template <typename Scalar>
Scalar gumbel_quantile(Scalar u, Scalar mu, Scalar sigma) {
  if (!(sigma > Scalar(0))) throw DomainError("gumbel_quantile: sigma must be positive");
  if (!(u > Scalar(0) && u < Scalar(1))) throw DomainError("gumbel_quantile: u must lie in (0, 1)");
  return mu - sigma * std::log(-std::log(u));
}

// Uniform on the open interval (0, 1) from the top 53 bits of a 64-bit engine.
// Independent of the standard library's distribution implementations, so
// simulated data are reproducible across toolchains.
template <typename Engine>
double open_uniform(Engine& rng) {
  static_assert(Engine::max() == std::numeric_limits<std::uint64_t>::max(),
                "open_uniform needs a full 64-bit engine");
  const std::uint64_t bits = rng() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

// Inverse-CDF Gumbel draw; consumes exactly one engine output.
template <typename Engine>
double gumbel_sample(double mu, double sigma, Engine& rng) {
  if (!(sigma > 0.0)) throw DomainError("gumbel_sample: sigma must be positive");
  return gumbel_quantile(open_uniform(rng), mu, sigma);
}

}  // namespace cllmix
