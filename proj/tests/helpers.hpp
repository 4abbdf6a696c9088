#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <Eigen/Dense>

#include "cllmix/params.hpp"
#include "cllmix/rng.hpp"
#include "cllmix/simulate.hpp"

namespace cllmix::testing {

// Parameters drawn inside the bounds the engine enforces, with every focal
// class carrying some DIF.
inline ModelParams random_params(Rng& rng, int n_items, int n_focal) {
  Eigen::VectorXd d(n_items);
  for (auto& x : d) x = uniform_between(rng, -1.5, 1.5);
  Eigen::MatrixXd delta(n_items, n_focal);
  for (auto& x : delta.reshaped()) x = uniform_between(rng, -1.0, 1.0);
  Eigen::VectorXd nu(n_focal + 1);
  for (auto& x : nu) x = uniform_between(rng, 0.2, 1.0);
  nu /= nu.sum();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n_focal + 1);
  Eigen::VectorXd sigma = Eigen::VectorXd::Ones(n_focal + 1);
  for (int k = 1; k <= n_focal; ++k) {
    mu(k) = uniform_between(rng, -1.0, 1.0);
    sigma(k) = uniform_between(rng, 0.6, 1.4);
  }
  return ModelParams(d, delta, nu, mu, sigma);
}

inline ResponseMatrix random_responses(const ModelParams& p, int n, std::uint64_t seed) {
  return generate_custom(p, n, seed).responses;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cllmix_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace cllmix::testing
