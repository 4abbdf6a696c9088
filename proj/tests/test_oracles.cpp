// Values frozen from tests/oracles/oracles.py (50-digit mpmath).

#include <doctest.h>

#include <array>
#include <cmath>

#include "cllmix/em.hpp"
#include "cllmix/likelihood.hpp"
#include "cllmix/link.hpp"
#include "cllmix/quadrature.hpp"

using namespace cllmix;

namespace {

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("cll link and score against mpmath") {
  struct Row {
    double z, f, s;
  };
  const std::array<Row, 5> rows{{
      {-3.0, 0.048568007099546592708, 1.0251000883321961719},
      {-0.5, 0.45476078810739494458, 1.3337356156780099543},
      {0.0, 0.6321205588285576784, 1.5819767068693264244},
      {0.7, 0.86651320334191613179, 2.3239723292200925557},
      {2.0, 0.9993820210106689065, 7.3936252039616873708},
  }};
  for (const auto& r : rows) {
    CAPTURE(r.z);
    CHECK(close_rel(cll_prob(r.z), r.f, 1e-15));
    CHECK(close_rel(cll_prob_complement(r.z), 1.0 - r.f, 1e-13));
    CHECK(close_rel(cll_score(r.z), r.s, 1e-13));
  }
}

TEST_CASE("cll probabilities are clamped in both tails") {
  CHECK(cll_prob(-40.0) == kProbFloor);
  CHECK(cll_prob(10.0) == 1.0 - kProbFloor);
  CHECK(cll_prob_complement(10.0) == kProbFloor);
  CHECK(std::isfinite(cll_score(10.0)));
  CHECK(cll_score(-20.0) == doctest::Approx(1.0).epsilon(1e-8));
  // Below the floor the clamped denominator takes over.
  CHECK(cll_score(-30.0) < 0.1);
  CHECK_THROWS_AS(cll_prob(std::nan("")), DomainError);
}

TEST_CASE("gumbel density, cdf and quantile against mpmath") {
  CHECK(close_rel(gumbel_pdf(0.4, 0.0, 1.0), 0.34289875646773180707, 1e-14));
  CHECK(close_rel(gumbel_cdf(0.4, 0.0, 1.0), 0.5115448336890415879, 1e-14));
  CHECK(close_rel(gumbel_pdf(-1.2, 0.75, 0.8), 0.00015320243400591675736, 1e-13));
  CHECK(close_rel(gumbel_cdf(-1.2, 0.75, 0.8), 0.000010709343595364130361, 1e-13));
  CHECK(close_rel(gumbel_pdf(3.0, -0.5, 1.7), 0.066068989697435045806, 1e-14));
  CHECK(close_rel(gumbel_cdf(3.0, -0.5, 1.7), 0.88020186657641315418, 1e-14));
  CHECK(close_rel(gumbel_quantile(0.05, 0.75, 0.8), -0.12775096029195896236, 1e-14));
  CHECK(close_rel(gumbel_quantile(0.5, 0.75, 0.8), 1.0432103364653314616, 1e-14));
  CHECK(close_rel(gumbel_quantile(0.95, 0.75, 0.8), 3.1261561992337316473, 1e-14));
  CHECK(std::log(gumbel_pdf(0.4, 0.0, 1.0)) == doctest::Approx(gumbel_log_pdf(0.4, 0.0, 1.0)));
  CHECK_THROWS_AS(gumbel_pdf(0.0, 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(gumbel_quantile(1.0, 0.0, 1.0), DomainError);
}

TEST_CASE("quadrature grid nodes and weights against mpmath") {
  const auto g = build_grid(5);
  const std::array<double, 5> nodes{-5.3333333333333333333, -2.6666666666666666667, 0.0, 2.6666666666666666667,
                                    5.3333333333333333333};
  const std::array<double, 5> weights{5.2604921967751069185e-88, 0.000018484140578776406707,
                                      0.84084492375500140738, 0.14815471954180877727,
                                      0.010981872562611038942};
  for (int q = 0; q < 5; ++q) {
    CHECK(g.nodes(q) == doctest::Approx(nodes[q]).epsilon(1e-15));
    CHECK(close_rel(g.weights(q) / weights[q], 1.0, 1e-12));
  }
  CHECK(g.weights.sum() == doctest::Approx(1.0).epsilon(1e-15));

  const auto g61 = build_grid();
  CHECK(g61.size() == 61);
  CHECK(close_rel(g61.weights(30), 0.094972770517438725554, 1e-13));
  CHECK(close_rel(g61.nodes.dot(g61.weights), 0.57405624801857750001, 1e-13));
  CHECK_THROWS_AS(build_grid(2), ConfigError);
}

TEST_CASE("E-step posterior equals brute-force enumeration") {
  const ModelParams p(Eigen::VectorXd::Constant(1, 0.3), Eigen::MatrixXd::Constant(1, 1, 0.7),
                      Eigen::Vector2d(0.6, 0.4), Eigen::Vector2d(0.0, 0.5), Eigen::Vector2d(1.0, 0.8));
  Eigen::MatrixXd y(2, 1);
  y << 1, 0;
  const ResponseMatrix r(y);
  const auto grid = build_grid(5);
  const EStepResult es = e_step(p, r, grid);

  const std::array<std::array<double, 10>, 2> expected{{
      {1.9572916825297976051e-90, 9.6648218360620281367e-7, 0.45854098071259085151, 0.1543961597090894536,
       0.011444783340480173155, 3.0965845133563607972e-90, 8.9020673048379364243e-7, 0.26566774769931459385,
       0.10231861628929072245, 0.0076298555603201154369},
      {7.4128232141032339769e-88, 0.000024828741074139674385, 0.56688271583329758092, 4.9075858463991678963e-6,
       1.5530554930095575819e-14, 4.9175684814576777216e-88, 0.000016218828076699926285,
       0.43223736130136568468, 0.00083396771031361137124, 1.035370328673038388e-14},
  }};
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 10; ++c) {
      CAPTURE(i);
      CAPTURE(c);
      CHECK(std::abs(es.posterior.w(i, c) - expected[i][c]) <= 1e-12);
    }
  CHECK(es.likelihood.per_respondent(0) == doctest::Approx(-0.55211368191346614559).epsilon(1e-13));
  CHECK(es.likelihood.per_respondent(1) == doctest::Approx(-0.85738902848614093949).epsilon(1e-13));
  CHECK(es.likelihood.loglik == doctest::Approx(-0.55211368191346614559 - 0.85738902848614093949).epsilon(1e-13));
}

TEST_CASE("fine quadrature approaches the continuous marginal") {
  // Continuous integral of one response pattern under the same parameters.
  const double continuous = -1.0146016979442099651;
  const ModelParams p(Eigen::Vector2d(-0.4, 0.9), Eigen::MatrixXd::Constant(2, 1, 0.7), Eigen::Vector2d(0.6, 0.4),
                      Eigen::Vector2d(0.0, 0.5), Eigen::Vector2d(1.0, 0.8));
  Eigen::MatrixXd y(1, 2);
  y << 1, 0;
  const double coarse = marginal_loglik(p, ResponseMatrix(y), build_grid(61)).loglik;
  const double fine = marginal_loglik(p, ResponseMatrix(y), build_grid(1001)).loglik;
  // The grid stops at 8 scale units; the Gumbel right tail beyond carries
  // about exp(-8) of mass, which bounds the fine-grid error.
  CHECK(std::abs(fine - continuous) < 5e-4);
  CHECK(std::abs(coarse - continuous) < 5e-3);
}
