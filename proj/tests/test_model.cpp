#include <doctest.h>

#include <cmath>

#include "cllmix/em.hpp"
#include "cllmix/likelihood.hpp"
#include "cllmix/params.hpp"
#include "helpers.hpp"

using namespace cllmix;
using cllmix::testing::random_params;
using cllmix::testing::random_responses;

TEST_CASE("ModelParams enforces identification and bounds") {
  const Eigen::VectorXd d = Eigen::VectorXd::Zero(3);
  const Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(3, 1);
  CHECK_NOTHROW(ModelParams(d, delta, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 1)));
  // reference location and scale are pinned
  CHECK_THROWS_AS(ModelParams(d, delta, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.1, 1), Eigen::Vector2d(1, 1)),
                  UsageError);
  CHECK_THROWS_AS(ModelParams(d, delta, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0, 1), Eigen::Vector2d(2, 1)),
                  UsageError);
  CHECK_THROWS_AS(ModelParams(d, delta, Eigen::Vector2d(0.6, 0.5), Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 1)),
                  UsageError);
  CHECK_THROWS_AS(ModelParams(d, delta, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 0.01)),
                  UsageError);
  CHECK_THROWS_AS(ModelParams(d, Eigen::MatrixXd::Constant(3, 1, 3.5), Eigen::Vector2d(0.5, 0.5),
                              Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 1)),
                  UsageError);
  CHECK_THROWS_AS(ModelParams(d, Eigen::MatrixXd::Zero(2, 1), Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0, 1),
                              Eigen::Vector2d(1, 1)),
                  UsageError);

  const ModelParams one = ModelParams::single_class(d);
  CHECK(one.n_focal() == 0);
  CHECK(one.nu()(0) == 1.0);
}

TEST_CASE("support helpers") {
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(4, 2);
  delta(2, 0) = 0.4;
  delta(0, 1) = -0.1;
  const Support s = support_of(delta);
  REQUIRE(s.size() == 2);
  CHECK(s[0] == DifCell{0, 2});
  CHECK(s[1] == DifCell{2, 1});
  CHECK(all_cells(4, 2).size() == 8);
  const auto m = support_mask(s, 4, 2);
  CHECK(m(2, 0));
  CHECK(m(0, 1));
  CHECK(m.count() == 2);
  CHECK(normalize({{1, 1}, {0, 1}, {1, 1}}) == Support{{0, 1}, {1, 1}});
}

TEST_CASE("anchor shift of mu and delta leaves the likelihood unchanged") {
  Rng rng(11);
  const ModelParams p = random_params(rng, 6, 1);
  const ResponseMatrix y = random_responses(p, 80, 3);
  const auto grid = build_grid();
  const double base = marginal_loglik(p, y, grid).loglik;
  for (const double c : {-1.0, -0.3, 0.3, 1.0}) {
    Eigen::VectorXd mu = p.mu();
    mu(1) += c;
    const ModelParams q = p.with_structure(mu, p.sigma()).with_delta((p.delta().array() + c).matrix());
    CHECK(std::abs(marginal_loglik(q, y, grid).loglik - base) < 1e-10);
  }
}

TEST_CASE("swapping focal classes leaves the likelihood unchanged") {
  Rng rng(12);
  const ModelParams p = random_params(rng, 5, 3);
  const ResponseMatrix y = random_responses(p, 60, 4);
  const auto grid = build_grid();
  const double base = marginal_loglik(p, y, grid).loglik;
  const ModelParams q = p.swap_focal(1, 3);
  CHECK(q.nu()(1) == p.nu()(3));
  CHECK(same_values(q.delta().col(0), p.delta().col(2)));
  CHECK(std::abs(marginal_loglik(q, y, grid).loglik - base) < 1e-12);

  const ModelParams o = p.ordered_by_proportion();
  for (int k = 1; k < o.n_focal(); ++k) CHECK(o.nu()(k) >= o.nu()(k + 1));
  CHECK(std::abs(marginal_loglik(o, y, grid).loglik - base) < 1e-12);
}

TEST_CASE("pairwise summation is order-fixed and accurate") {
  Eigen::VectorXd v(1001);
  for (int i = 0; i < v.size(); ++i) v(i) = 1.0 / (i + 1);
  double naive = 0.0;
  for (const double x : v) naive += x;
  CHECK(pairwise_sum(v) == doctest::Approx(naive).epsilon(1e-14));
  CHECK(pairwise_sum(Eigen::VectorXd()) == 0.0);
}

TEST_CASE("penalised objective adds lambda times the l1 norm") {
  Rng rng(13);
  const ModelParams p = random_params(rng, 4, 2);
  const ResponseMatrix y = random_responses(p, 30, 5);
  const auto grid = build_grid();
  const double ll = marginal_loglik(p, y, grid).loglik;
  CHECK(penalized_objective(p, y, grid, 2.5) == doctest::Approx(-ll + 2.5 * p.delta().cwiseAbs().sum()));
  CHECK(l1_norm(p.delta()) == doctest::Approx(p.delta().cwiseAbs().sum()));
}

TEST_CASE("log-space likelihood survives extreme parameters") {
  Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(40, -3.0, 3.0);
  const ModelParams p(d, Eigen::MatrixXd::Constant(40, 1, 3.0), Eigen::Vector2d(0.999, 0.001),
                      Eigen::Vector2d(0.0, 4.0), Eigen::Vector2d(1.0, 0.05));
  const ResponseMatrix y(Eigen::MatrixXd::Ones(5, 40));
  const auto ll = marginal_loglik(p, y, build_grid());
  CHECK(std::isfinite(ll.loglik));
  CHECK(ll.per_respondent.allFinite());
}

TEST_CASE("analytic gradients match central differences of -Q/N") {
  const auto grid = build_grid();
  const double h = 1e-5;
  for (int inst = 0; inst < 5; ++inst) {
    Rng rng(100 + inst);
    const ModelParams p = random_params(rng, 5, 1);
    const ResponseMatrix y = random_responses(p, 50, 200 + inst);
    const EStepResult es = e_step(p, y, grid);
    const GradientBundle g = gradients(p, es.stats, grid);
    auto f = [&](const ModelParams& q) { return expected_complete_objective(q, es.stats, grid); };
    auto check = [&](double analytic, double numeric) {
      CHECK(std::abs(analytic - numeric) <= 1e-5 * std::max(1.0, std::abs(numeric)));
    };
    for (int j = 0; j < 5; ++j) {
      Eigen::VectorXd up = p.d(), dn = p.d();
      up(j) += h;
      dn(j) -= h;
      check(g.d(j), (f(p.with_d(up)) - f(p.with_d(dn))) / (2 * h));
      Eigen::MatrixXd du = p.delta(), dd = p.delta();
      du(j, 0) += h;
      dd(j, 0) -= h;
      check(g.delta(j, 0), (f(p.with_delta(du)) - f(p.with_delta(dd))) / (2 * h));
    }
    Eigen::VectorXd mu_up = p.mu(), mu_dn = p.mu();
    mu_up(1) += h;
    mu_dn(1) -= h;
    check(g.mu(0), (f(p.with_structure(mu_up, p.sigma())) - f(p.with_structure(mu_dn, p.sigma()))) / (2 * h));
    Eigen::VectorXd s_up = p.sigma(), s_dn = p.sigma();
    s_up(1) += h;
    s_dn(1) -= h;
    check(g.sigma(0), (f(p.with_structure(p.mu(), s_up)) - f(p.with_structure(p.mu(), s_dn))) / (2 * h));
  }
}

TEST_CASE("posterior rows sum to one and the nu update is their mean") {
  Rng rng(14);
  const ModelParams p = random_params(rng, 6, 2);
  const ResponseMatrix y = random_responses(p, 40, 6);
  const auto grid = build_grid();
  const EStepResult es = e_step(p, y, grid);
  const Eigen::VectorXd rows = es.posterior.w.rowwise().sum();
  CHECK((rows.array() - 1.0).abs().maxCoeff() < 1e-12);
  const Eigen::VectorXd nu = m_step_nu(es.stats, y.n_respondents());
  const Eigen::VectorXd expected = es.posterior.class_probabilities().colwise().mean().transpose();
  CHECK((nu - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(nu.sum() == doctest::Approx(1.0));
  CHECK(es.likelihood.loglik == doctest::Approx(marginal_loglik(p, y, grid).loglik).epsilon(1e-14));
}
