#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "cllmix/error.hpp"

namespace cllmix {

inline constexpr int kDefaultGridPoints = 61;
inline constexpr double kGridHalfWidth = 8.0;

// Fixed standardized grid on (-8, 8) with standard-Gumbel weights. Every
// class reuses the same nodes through the affine map theta = mu + sigma * rho,
// so the class densities enter only through the node locations.
//
// Weights are held in log space as well: the leftmost nodes carry weights
// near exp(-2300), which underflow to zero in double precision while their
// logarithms stay finite.
template <typename Scalar>
struct BasicQuadratureGrid {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector nodes;
  Vector weights;
  Vector log_weights;

  Eigen::Index size() const { return nodes.size(); }
  Scalar spacing() const { return nodes(1) - nodes(0); }
};

using QuadratureGrid = BasicQuadratureGrid<double>;

// Nodes rho_q = -8 + 16 q / (G + 1), q = 1..G (endpoints excluded); weights
// proportional to exp(-rho - exp(-rho)) and normalised to sum to one.
template <typename Scalar = double>
BasicQuadratureGrid<Scalar> build_grid(int n_nodes = kDefaultGridPoints) {
  if (n_nodes < 3) throw ConfigError("build_grid: need at least 3 nodes, got " + std::to_string(n_nodes));
  BasicQuadratureGrid<Scalar> g;
  g.nodes.resize(n_nodes);
  g.log_weights.resize(n_nodes);
  const Scalar width = Scalar(2 * kGridHalfWidth);
  for (int q = 0; q < n_nodes; ++q) {
    const Scalar rho = -Scalar(kGridHalfWidth) + width * Scalar(q + 1) / Scalar(n_nodes + 1);
    g.nodes(q) = rho;
    g.log_weights(q) = -rho - std::exp(-rho);
  }
  const Scalar top = g.log_weights.maxCoeff();
  const Scalar lse = top + std::log((g.log_weights.array() - top).exp().sum());
  g.log_weights.array() -= lse;
  g.weights = g.log_weights.array().exp();
  return g;
}

// Class-specific latent trait nodes mu + sigma * rho_q.
template <typename Scalar>
typename BasicQuadratureGrid<Scalar>::Vector class_nodes(const BasicQuadratureGrid<Scalar>& grid,
                                                         Scalar mu, Scalar sigma) {
  if (!(sigma > Scalar(0))) throw DomainError("class_nodes: sigma must be positive");
  return (grid.nodes.array() * sigma + mu).matrix();
}

}  // namespace cllmix
