#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "overscale/aggregation.hpp"

using namespace overscale;

namespace {

Eigen::MatrixXd random_pd(std::mt19937_64& gen, Eigen::Index L) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(L, L);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(gen);
  return a * a.transpose() / static_cast<double>(L) + 0.1 * Eigen::MatrixXd::Identity(L, L);
}

std::vector<double> random_simplex(std::mt19937_64& gen, std::size_t L) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> w(L);
  double s = 0;
  for (auto& v : w) s += (v = e(gen));
  for (auto& v : w) v /= s;
  return w;
}

ErrorCovariance cov2(double a, double b, double c) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, b, c;
  return {m};
}

}  // namespace

TEST(InverseVariance, Examples) {
  const std::vector<double> eq{0.3, 0.3, 0.3, 0.3};
  for (double w : inverse_variance_weights(eq).weights) EXPECT_DOUBLE_EQ(w, 0.25);
  const std::vector<double> s{1.0, 4.0};
  const auto w = inverse_variance_weights(s).weights;
  EXPECT_DOUBLE_EQ(w[0], 0.8);
  EXPECT_DOUBLE_EQ(w[1], 0.2);
  const std::vector<double> z{0.0, 0.5, 0.1};
  EXPECT_NEAR(inverse_variance_weights(z).weights[0], 1.0, 1e-9);
  EXPECT_THROW(inverse_variance_weights(std::vector<double>{}), std::invalid_argument);
}

TEST(Gls, ClosedForms) {
  const auto id = gls_weights({Eigen::MatrixXd::Identity(5, 5)});
  for (double w : id.weights) EXPECT_NEAR(w, 0.2, 1e-15);
  const auto d = cov2(1, 0, 4);
  const auto wd = gls_weights(d).weights;
  EXPECT_NEAR(wd[0], 0.8, 1e-15);
  EXPECT_NEAR(wd[1], 0.2, 1e-15);
  EXPECT_NEAR(quadratic_form(d.sigma, wd), 0.8, 1e-15);
  const auto c = cov2(1, 0.9, 1);
  const auto wc = gls_weights(c).weights;
  EXPECT_NEAR(wc[0], 0.5, 1e-15);
  EXPECT_NEAR(quadratic_form(c.sigma, wc), 0.95, 1e-15);
}

TEST(Gls, NegativeWeightsAllowed) {
  // Strongly correlated layers with unequal variance: the noisy one is shorted.
  const auto w = gls_weights(cov2(1, 1.2, 2)).weights;
  EXPECT_LT(w[1], 0.0);
  EXPECT_NEAR(w[0] + w[1], 1.0, 1e-12);
}

TEST(Gls, RejectsBadCovariances) {
  EXPECT_THROW(gls_weights(cov2(1, 1, 1)), std::domain_error);
  EXPECT_THROW(gls_weights(cov2(1, 0, 1e-13)), std::domain_error);
  Eigen::MatrixXd asym(2, 2);
  asym << 1, 0.2, 0.1, 1;
  EXPECT_THROW(gls_weights({asym}), std::invalid_argument);
}

TEST(Gls, OptimalAgainstRandomFeasibleWeights) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index L = 2 + rep % 7;
    const ErrorCovariance cov{random_pd(gen, L)};
    const auto w = gls_weights(cov).weights;
    double s = 0;
    for (double v : w) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
    const double best = quadratic_form(cov.sigma, w);
    for (int k = 0; k < 20; ++k) {
      std::vector<double> u(L);
      double t = 0;
      for (auto& v : u) t += (v = n(gen));
      for (auto& v : u) v -= (t - 1.0) / static_cast<double>(L);
      EXPECT_GE(quadratic_form(cov.sigma, u), best - 1e-12);
    }
  }
}

TEST(Gls, EqualsInverseVarianceForDiagonal) {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> u(0.01, 3.0);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index L = 1 + rep % 8;
    Eigen::VectorXd d(L);
    for (Eigen::Index i = 0; i < L; ++i) d[i] = u(gen);
    const auto g = gls_weights({d.asDiagonal()});
    const auto iv = inverse_variance_weights(std::vector<double>(d.data(), d.data() + L));
    for (Eigen::Index i = 0; i < L; ++i) EXPECT_NEAR(g.weights[i], iv.weights[i], 1e-10);
  }
}

TEST(Aggregate, Rounding) {
  const std::vector<double> uni{0.5, 0.5};
  EXPECT_EQ(aggregate_estimate(std::vector<double>{0.1, 0.3}, uni, 128), 26u);
  EXPECT_EQ(aggregate_estimate(std::vector<double>{1.0 / 128, 1.0 / 128}, uni, 128), 1u);
  const std::vector<double> neg{2.0, -1.0};
  EXPECT_EQ(aggregate_estimate(std::vector<double>{0.1, 0.9}, neg, 128), 1u);
  EXPECT_EQ(aggregate_estimate(std::vector<double>{0.9, 0.1}, neg, 128), 128u);
  EXPECT_THROW(aggregate_estimate(std::vector<double>{0.1}, uni, 128), std::invalid_argument);
}

TEST(Theorem2, ClosedFormCases) {
  const auto d = theorem2_mc_check(cov2(1, 0, 4), 100000, 1);
  EXPECT_TRUE(d.passed());
  EXPECT_NEAR(d.gls_theory, 0.8, 1e-15);
  EXPECT_LE(std::abs(d.gls_mse - 0.8), 4 * d.gls_stderr);
  const auto i4 = theorem2_mc_check({Eigen::MatrixXd::Identity(4, 4)}, 100000, 2);
  EXPECT_TRUE(i4.passed());
  EXPECT_LE(std::abs(i4.gls_mse - 0.25), 4 * i4.gls_stderr);
  EXPECT_EQ(i4.basis_mse.size(), 4u);
  EXPECT_EQ(i4.random_mse.size(), 50u);
  EXPECT_THROW(theorem2_mc_check(cov2(1, 1, 1), 100000, 1), std::domain_error);
  EXPECT_THROW(theorem2_mc_check(cov2(1, 0, 1), 100, 1), std::invalid_argument);
}

TEST(DiagSurrogate, Examples) {
  const std::vector<double> half{0.5, 0.5};
  const auto z = diag_surrogate_diagnostics(cov2(1, 0, 2), half);
  EXPECT_EQ(z.r_inf, 0.0);
  EXPECT_EQ(z.off_energy, 0.0);
  EXPECT_EQ(z.mse_dev, 0.0);
  EXPECT_TRUE(z.bounds_hold);
  const auto c = diag_surrogate_diagnostics(cov2(1, 0.5, 1), half);
  EXPECT_DOUBLE_EQ(c.r_inf, 0.5);
  EXPECT_DOUBLE_EQ(c.mse_dev, 0.25 / 0.5);
  EXPECT_TRUE(c.bounds_hold);
  EXPECT_THROW(diag_surrogate_diagnostics(cov2(1, 0.5, 1), std::vector<double>{1.0}), std::invalid_argument);
}

TEST(DiagSurrogate, HolderBoundOnRandomSimplexWeights) {
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 500; ++rep) {
    const Eigen::Index L = 2 + rep % 7;
    const ErrorCovariance cov{random_pd(gen, L)};
    const auto w = random_simplex(gen, L);
    const auto r = diag_surrogate_diagnostics(cov, w);
    EXPECT_TRUE(r.bounds_hold);
    // Independent recomputation of |w'Rw| and the row-sum norm.
    double wrw = 0, rinf = 0;
    for (Eigen::Index i = 0; i < L; ++i) {
      double row = 0;
      for (Eigen::Index j = 0; j < L; ++j) {
        if (i == j) continue;
        wrw += w[i] * cov.sigma(i, j) * w[j];
        row += std::abs(cov.sigma(i, j));
      }
      rinf = std::max(rinf, row);
    }
    EXPECT_NEAR(r.r_inf, rinf, 1e-12);
    EXPECT_LE(std::abs(wrw), rinf + 1e-12);
  }
}

TEST(Bundle, JsonRoundTrip) {
  EstimatorBundle b;
  b.layers = 2;
  b.dim = 3;
  b.hidden_ratio = 0.5;
  b.estimators = {init_estimator(3, 1, 1), init_estimator(3, 1, 2)};
  b.sigma_hat_sq = {0.1, 0.3};
  b.weights = inverse_variance_weights(b.sigma_hat_sq).weights;
  const auto text = to_canonical(bundle_to_json(b));
  const auto back = bundle_from_json(ordered_json::parse(text));
  ASSERT_EQ(back.estimators.size(), 2u);
  EXPECT_EQ(back.estimators[0], b.estimators[0]);
  EXPECT_EQ(back.estimators[1], b.estimators[1]);
  EXPECT_EQ(back.weights, b.weights);
  EXPECT_EQ(to_canonical(bundle_to_json(back)), text);
  auto bad = bundle_to_json(b);
  bad["weights"] = {0.5, 0.6};
  EXPECT_THROW(bundle_from_json(bad), SchemaError);
  bad = bundle_to_json(b);
  bad.erase("layers");
  EXPECT_THROW(bundle_from_json(bad), SchemaError);
}

TEST(Pipeline, SingleLayerAndMismatch) {
  FeatureDataset fs;
  fs.n_max = 64;
  fs.layers = 1;
  fs.dim = 2;
  fs.records.push_back({"a", {{0.0, 0.0}}, 0.5});
  auto e = zero_estimator(2, 1);
  const std::vector<MlpEstimator> ests{e};
  const std::vector<double> w{1.0};
  EXPECT_EQ(pipeline_estimate(fs, ests, w), (std::vector<std::size_t>{32}));
  const std::vector<MlpEstimator> two{e, e};
  const std::vector<double> w2{0.5, 0.5};
  EXPECT_THROW(pipeline_estimate(fs, two, w2), std::invalid_argument);
}
