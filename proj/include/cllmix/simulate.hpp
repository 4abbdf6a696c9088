#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "cllmix/params.hpp"

namespace cllmix {

enum class Design { kA, kB, kCustom };

std::string to_string(Design d);
Design parse_design(const std::string& s);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Two-class simulation design. Design A: items 1..n_dif_items carry a focal
// DIF shift drawn from dif_range. Design B: impact only.
struct SimDesign {
  Design design = Design::kA;
  int n = 1000;
  int n_items = 25;
  double pi_focal = 0.3;
  int n_dif_items = 10;
  Interval dif_range{0.5, 1.5};
  Interval d_range{-2.0, 2.0};
  double focal_mu = 0.75;
  double focal_sigma = 0.80;
  std::uint64_t seed = 0;

  static SimDesign design_a(int n, double pi, std::uint64_t seed);
  static SimDesign design_b(int n, double pi, std::uint64_t seed);

  friend bool operator==(const SimDesign&, const SimDesign&) = default;
};

void validate(const SimDesign& design);

struct SimTruth {
  ModelParams params;
  Eigen::VectorXi class_labels;  // 0 = reference
  Eigen::VectorXd thetas;

  friend bool operator==(const SimTruth& a, const SimTruth& b) {
    return a.params == b.params && same_values(a.class_labels, b.class_labels) &&
           same_values(a.thetas, b.thetas);
  }
};

struct SimData {
  ResponseMatrix responses;
  SimTruth truth;
};

// Draws item difficulties, DIF shifts, class labels, abilities and
// responses, in that order, from a single stream seeded by design.seed.
SimData generate(const SimDesign& design);

// Same pipeline with fixed generating parameters.
SimData generate_custom(const ModelParams& params, int n, std::uint64_t seed);

}  // namespace cllmix
