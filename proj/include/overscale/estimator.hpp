#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "overscale/rng.hpp"

namespace overscale {

/// sigmoid(w2' relu(W1 h + b1) + b2)
struct MlpEstimator {
  Eigen::MatrixXd w1;  // h x d
  Eigen::VectorXd b1;  // h
  Eigen::VectorXd w2;  // h
  double b2 = 0.0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden() const noexcept { return static_cast<std::size_t>(w1.rows()); }

  bool operator==(const MlpEstimator& o) const {
    return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }
};

/// Gradients share the parameter layout.
using MlpGradient = MlpEstimator;

inline std::size_t hidden_size(std::size_t dim, double ratio) {
  if (!(ratio > 0.0)) throw std::invalid_argument("hidden ratio must be positive");
  const auto h = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(dim)));
  if (h < 1) throw std::invalid_argument("hidden ratio leaves no hidden units");
  return h;
}

inline MlpEstimator zero_estimator(std::size_t dim, std::size_t hidden) {
  return {Eigen::MatrixXd::Zero(hidden, dim), Eigen::VectorXd::Zero(hidden), Eigen::VectorXd::Zero(hidden), 0.0};
}

/// Each layer uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline MlpEstimator init_estimator(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
  Rng rng = Rng::keyed(seed, 0x6d6c70ULL);
  MlpEstimator e = zero_estimator(dim, hidden);
  const double a1 = 1.0 / std::sqrt(static_cast<double>(dim));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Eigen::Index i = 0; i < e.w1.size(); ++i) e.w1.data()[i] = rng.uniform(-a1, a1);
  for (Eigen::Index i = 0; i < e.b1.size(); ++i) e.b1[i] = rng.uniform(-a1, a1);
  for (Eigen::Index i = 0; i < e.w2.size(); ++i) e.w2[i] = rng.uniform(-a2, a2);
  e.b2 = rng.uniform(-a2, a2);
  return e;
}

inline double sigmoid(double z) noexcept {
  // Split form avoids overflow in exp for large |z|.
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

inline double mlp_forward(const MlpEstimator& est, const Eigen::Ref<const Eigen::VectorXd>& h) {
  if (static_cast<std::size_t>(h.size()) != est.dim()) {
    throw std::invalid_argument("feature dimension " + std::to_string(h.size()) + " does not match estimator dim " +
                                std::to_string(est.dim()));
  }
  const Eigen::VectorXd a = (est.w1 * h + est.b1).cwiseMax(0.0);
  return sigmoid(est.w2.dot(a) + est.b2);
}

/// Predictions for the rows of x (samples x d).
inline Eigen::VectorXd mlp_predict(const MlpEstimator& est, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != est.dim()) throw std::invalid_argument("feature dimension mismatch");
  const Eigen::MatrixXd a = ((est.w1 * x.transpose()).colwise() + est.b1).cwiseMax(0.0);
  Eigen::VectorXd z = (est.w2.transpose() * a).transpose();
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = sigmoid(z[i] + est.b2);
  return z;
}

struct LossGrad {
  double loss = 0.0;
  MlpGradient grad;
};

namespace detail {

// xt is d x B (one column per sample).
inline LossGrad loss_grad_cols(const MlpEstimator& est, const Eigen::MatrixXd& xt, const Eigen::VectorXd& y) {
  const auto n = static_cast<double>(xt.cols());
  const Eigen::MatrixXd pre = (est.w1 * xt).colwise() + est.b1;
  const Eigen::MatrixXd a = pre.cwiseMax(0.0);
  Eigen::VectorXd f = (est.w2.transpose() * a).transpose();
  Eigen::VectorXd dz(f.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double p = sigmoid(f[i] + est.b2);
    const double r = p - y[i];
    loss += r * r;
    dz[i] = 2.0 * r * p * (1.0 - p) / n;
  }
  LossGrad out;
  out.loss = loss / n;
  out.grad.w2 = a * dz;
  out.grad.b2 = dz.sum();
  const Eigen::MatrixXd dpre = (est.w2 * dz.transpose()).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  out.grad.w1 = dpre * xt.transpose();
  out.grad.b1 = dpre.rowwise().sum();
  return out;
}

}  // namespace detail

/// Mean squared loss over the rows of x and its analytic gradient.
inline LossGrad loss_and_gradient(const MlpEstimator& est, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size() || x.rows() == 0) throw std::invalid_argument("need matching, nonempty features and labels");
  if (static_cast<std::size_t>(x.cols()) != est.dim()) throw std::invalid_argument("feature dimension mismatch");
  return detail::loss_grad_cols(est, x.transpose(), y);
}

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 300;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double hidden_ratio = 0.125;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1 || epochs < 1) throw std::invalid_argument("batch_size and epochs must be positive");
    if (!(learning_rate > 0.0) || weight_decay < 0.0) throw std::invalid_argument("bad learning rate or weight decay");
    if (!(hidden_ratio > 0.0)) throw std::invalid_argument("hidden_ratio must be positive");
  }
};

struct TrainResult {
  MlpEstimator estimator;
  double initial_loss = 0.0;
  std::vector<double> losses;  // full training-set loss after each epoch
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t epoch) : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

namespace detail {

class AdamW {
 public:
  AdamW(const MlpEstimator& shape, const TrainConfig& cfg)
      : cfg_(cfg), m_(zero_estimator(shape.dim(), shape.hidden())), v_(m_) {}

  void step(MlpEstimator& p, const MlpGradient& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto update = [&](double* param, const double* grad, double* m, double* v, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n; ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        param[i] -= cfg_.learning_rate * (cfg_.weight_decay * param[i]);
        param[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
      }
    };
    update(p.w1.data(), g.w1.data(), m_.w1.data(), v_.w1.data(), p.w1.size());
    update(p.b1.data(), g.b1.data(), m_.b1.data(), v_.b1.data(), p.b1.size());
    update(p.w2.data(), g.w2.data(), m_.w2.data(), v_.w2.data(), p.w2.size());
    update(&p.b2, &g.b2, &m_.b2, &v_.b2, 1);
  }

 private:
  TrainConfig cfg_;
  MlpEstimator m_, v_;
  std::size_t t_ = 0;
};

}  // namespace detail

/// Minibatch AdamW on the mean squared loss, starting from `init`.
inline TrainResult train_estimator(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TrainConfig& cfg,
                                   MlpEstimator init) {
  cfg.validate();
  if (x.rows() == 0) throw std::invalid_argument("training set is empty");
  if (x.rows() != y.size()) throw std::invalid_argument("features and labels differ in length");
  if (static_cast<std::size_t>(x.cols()) != init.dim()) throw std::invalid_argument("feature dimension mismatch");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(y[i] >= 0.0 && y[i] <= 1.0)) throw std::invalid_argument("labels must lie in [0, 1]");
  }

  const Eigen::MatrixXd xt = x.transpose();
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::keyed(cfg.seed, 0x73687566ULL);

  TrainResult res;
  res.estimator = std::move(init);
  res.initial_loss = detail::loss_grad_cols(res.estimator, xt, y).loss;
  detail::AdamW opt(res.estimator, cfg);

  Eigen::MatrixXd xb(x.cols(), static_cast<Eigen::Index>(std::min(cfg.batch_size, n)));
  Eigen::VectorXd yb(xb.cols());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      xb.resize(x.cols(), static_cast<Eigen::Index>(len));
      yb.resize(static_cast<Eigen::Index>(len));
      for (std::size_t j = 0; j < len; ++j) {
        xb.col(static_cast<Eigen::Index>(j)) = xt.col(static_cast<Eigen::Index>(order[start + j]));
        yb[static_cast<Eigen::Index>(j)] = y[static_cast<Eigen::Index>(order[start + j])];
      }
      const auto lg = detail::loss_grad_cols(res.estimator, xb, yb);
      if (!std::isfinite(lg.loss)) throw TrainingError("loss is NaN at epoch " + std::to_string(epoch + 1), epoch + 1);
      opt.step(res.estimator, lg.grad);
    }
    const double loss = detail::loss_grad_cols(res.estimator, xt, y).loss;
    if (!std::isfinite(loss)) throw TrainingError("loss is NaN at epoch " + std::to_string(epoch + 1), epoch + 1);
    res.losses.push_back(loss);
  }
  return res;
}

inline TrainResult train_estimator(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TrainConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(x.cols());
  return train_estimator(x, y, cfg, init_estimator(d, hidden_size(d, cfg.hidden_ratio), cfg.seed));
}

inline double mean_squared_error(const Eigen::VectorXd& pred, const Eigen::VectorXd& y) {
  if (y.size() == 0) throw std::invalid_argument("validation set is empty");
  if (pred.size() != y.size()) throw std::invalid_argument("predictions and labels differ in length");
  return (pred - y).squaredNorm() / static_cast<double>(y.size());
}

inline double mean_absolute_error(const Eigen::VectorXd& pred, const Eigen::VectorXd& y) {
  if (y.size() == 0) throw std::invalid_argument("validation set is empty");
  if (pred.size() != y.size()) throw std::invalid_argument("predictions and labels differ in length");
  return (pred - y).cwiseAbs().mean();
}

/// Mean squared residual on the normalized scale.
inline double validation_mse(const MlpEstimator& est, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() == 0) throw std::invalid_argument("validation set is empty");
  return mean_squared_error(mlp_predict(est, x), y);
}

inline double validation_mae(const MlpEstimator& est, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() == 0) throw std::invalid_argument("validation set is empty");
  return mean_absolute_error(mlp_predict(est, x), y);
}

}  // namespace overscale
