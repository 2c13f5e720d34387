#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "overscale/estimator.hpp"

using namespace overscale;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& gen, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(gen);
  return m;
}

/// Central difference of the mean squared loss along one parameter.
/// `param` points into `e`.
double numeric_partial(MlpEstimator& e, double* param, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double h) {
  const double orig = *param;
  *param = orig + h;
  const double up = loss_and_gradient(e, x, y).loss;
  *param = orig - h;
  const double down = loss_and_gradient(e, x, y).loss;
  *param = orig;
  return (up - down) / (2 * h);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-6, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST(Mlp, ZeroParametersGiveHalf) {
  const auto e = zero_estimator(5, 2);
  EXPECT_EQ(mlp_forward(e, Eigen::VectorXd::Random(5)), 0.5);
}

TEST(Mlp, LargeBiasSaturates) {
  auto e = zero_estimator(3, 1);
  e.b2 = 20;
  EXPECT_GT(mlp_forward(e, Eigen::VectorXd::Ones(3)), 0.999);
  e.b2 = -800;
  const double v = mlp_forward(e, Eigen::VectorXd::Ones(3));
  EXPECT_GE(v, 0.0);
  EXPECT_FALSE(std::isnan(v));
}

TEST(Mlp, DimensionMismatch) {
  const auto e = zero_estimator(4, 2);
  EXPECT_THROW(mlp_forward(e, Eigen::VectorXd::Ones(3)), std::invalid_argument);
  EXPECT_THROW(hidden_size(7, 0.125), std::invalid_argument);
  EXPECT_EQ(hidden_size(64, 0.125), 8u);
}

TEST(Mlp, ForwardMatchesFormulaAndBatch) {
  std::mt19937_64 gen(1);
  const auto e = init_estimator(6, 3, 4);
  const Eigen::MatrixXd x = random_matrix(gen, 10, 6);
  const Eigen::VectorXd batch = mlp_predict(e, x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double z = e.b2;
    for (Eigen::Index k = 0; k < 3; ++k) z += e.w2[k] * std::max(0.0, e.w1.row(k).dot(x.row(i)) + e.b1[k]);
    EXPECT_NEAR(batch[i], 1.0 / (1.0 + std::exp(-z)), 1e-15);
    EXPECT_NEAR(mlp_forward(e, x.row(i).transpose()), batch[i], 1e-15);
  }
}

TEST(Mlp, InitWithinFanInBounds) {
  const auto e = init_estimator(16, 4, 3);
  EXPECT_LE(e.w1.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_LE(e.w2.cwiseAbs().maxCoeff(), 0.5);
  EXPECT_EQ(e, init_estimator(16, 4, 3));
  EXPECT_FALSE(e == init_estimator(16, 4, 5));
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(42);
  const double h = 1e-5;
  int checked = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const Eigen::Index d = 3 + inst % 5, hid = 1 + inst % 4, n = 1 + inst % 6;
    auto e = init_estimator(d, hid, 1000 + inst);
    const Eigen::MatrixXd x = random_matrix(gen, n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = std::uniform_real_distribution<double>(0, 1)(gen);
    // Skip instances with a pre-activation within 1e-3 of the ReLU kink.
    const Eigen::MatrixXd pre = (e.w1 * x.transpose()).colwise() + e.b1;
    if (pre.cwiseAbs().minCoeff() < 1e-3) continue;
    const auto g = loss_and_gradient(e, x, y).grad;
    auto copy = e;
    double worst = 0;
    for (Eigen::Index i = 0; i < copy.w1.size(); ++i) {
      worst = std::max(worst, rel_err(g.w1.data()[i], numeric_partial(copy, copy.w1.data() + i, x, y, h)));
    }
    for (Eigen::Index i = 0; i < copy.b1.size(); ++i) {
      worst = std::max(worst, rel_err(g.b1[i], numeric_partial(copy, copy.b1.data() + i, x, y, h)));
    }
    for (Eigen::Index i = 0; i < copy.w2.size(); ++i) {
      worst = std::max(worst, rel_err(g.w2[i], numeric_partial(copy, copy.w2.data() + i, x, y, h)));
    }
    worst = std::max(worst, rel_err(g.b2, numeric_partial(copy, &copy.b2, x, y, h)));
    EXPECT_LE(worst, 1e-4) << "instance " << inst;
    ++checked;
  }
  EXPECT_GE(checked, 50);
}

TEST(Train, ConstantHalfLabelsFromZeroReadout) {
  std::mt19937_64 gen(3);
  const Eigen::MatrixXd x = random_matrix(gen, 64, 8);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(64, 0.5);
  auto init = init_estimator(8, 2, 1);
  init.w2.setZero();
  init.b2 = 0;
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  const auto r = train_estimator(x, y, cfg, init);
  ASSERT_EQ(r.losses.size(), 10u);
  double prev = r.initial_loss;
  for (double l : r.losses) {
    EXPECT_LE(l, prev + 1e-15);
    prev = l;
  }
  EXPECT_LE(r.losses.back(), r.initial_loss);
}

TEST(Train, LossDecreasesOnLearnableTask) {
  std::mt19937_64 gen(4);
  const Eigen::MatrixXd x = random_matrix(gen, 256, 4);
  Eigen::VectorXd y(256);
  for (Eigen::Index i = 0; i < 256; ++i) y[i] = 1.0 / (1.0 + std::exp(-(x(i, 0) - 0.5 * x(i, 1))));
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-2;
  cfg.hidden_ratio = 1.0;
  const auto r = train_estimator(x, y, cfg);
  EXPECT_LT(r.losses.back(), 0.2 * r.initial_loss);
}

TEST(Train, MemorizesSingleSample) {
  Eigen::MatrixXd x(1, 4);
  x << 0.3, -1.0, 0.5, 2.0;
  Eigen::VectorXd y(1);
  y << 0.8;
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.learning_rate = 1e-2;
  cfg.hidden_ratio = 0.5;
  const auto r = train_estimator(x, y, cfg);
  EXPECT_LE(r.losses.back(), 1e-4);
}

TEST(Train, DeterministicPerSeed) {
  std::mt19937_64 gen(5);
  const Eigen::MatrixXd x = random_matrix(gen, 100, 8);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(100, 0.3);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 7;
  EXPECT_EQ(train_estimator(x, y, cfg).estimator, train_estimator(x, y, cfg).estimator);
}

TEST(Train, RejectsBadInputs) {
  TrainConfig cfg;
  EXPECT_THROW(train_estimator(Eigen::MatrixXd(0, 8), Eigen::VectorXd(0), cfg), std::invalid_argument);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 8);
  Eigen::VectorXd y(2);
  y << 0.5, 1.5;
  EXPECT_THROW(train_estimator(x, y, cfg), std::invalid_argument);
  y << 0.5, 0.5;
  x(0, 0) = std::nan("");
  EXPECT_THROW(train_estimator(x, y, cfg), TrainingError);
}

TEST(Validation, MseAndMae) {
  Eigen::VectorXd y(4), p(4);
  y << 0, 1, 0, 1;
  p.setConstant(0.5);
  EXPECT_DOUBLE_EQ(mean_squared_error(p, y), 0.25);
  EXPECT_DOUBLE_EQ(mean_absolute_error(p, y), 0.5);
  EXPECT_EQ(mean_squared_error(y, y), 0.0);
  EXPECT_THROW(mean_squared_error(Eigen::VectorXd(0), Eigen::VectorXd(0)), std::invalid_argument);
  // A zero network predicts 0.5 for every input.
  EXPECT_DOUBLE_EQ(validation_mse(zero_estimator(3, 1), Eigen::MatrixXd::Ones(4, 3), y), 0.25);
}
