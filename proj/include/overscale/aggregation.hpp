#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "overscale/canonical_json.hpp"
#include "overscale/estimator.hpp"
#include "overscale/parallel.hpp"
#include "overscale/rng.hpp"
#include "overscale/trace.hpp"
#include "overscale/trace_io.hpp"

namespace overscale {

inline constexpr double kEpsVar = 1e-12;
inline constexpr double kMaxCondition = 1e12;

struct LayerWeightVector {
  std::vector<double> weights;
  std::vector<double> sigma_hat_sq;
};

/// Layer error covariance, split as sigma = D + R (diagonal plus off-diagonal).
struct ErrorCovariance {
  Eigen::MatrixXd sigma;

  std::size_t layers() const noexcept { return static_cast<std::size_t>(sigma.rows()); }
  Eigen::MatrixXd d_part() const { return sigma.diagonal().asDiagonal(); }
  Eigen::MatrixXd r_part() const { return sigma - d_part(); }

  void check_symmetric() const {
    if (sigma.rows() == 0 || sigma.rows() != sigma.cols()) throw std::invalid_argument("covariance must be square, L >= 1");
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw std::invalid_argument("covariance not symmetric");
  }

  void check_pd() const {
    check_symmetric();
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw std::domain_error("covariance is not positive-definite");
  }
};

/// Second-moment matrix of per-layer residuals (rows = samples, cols = layers).
inline ErrorCovariance empirical_covariance(const Eigen::MatrixXd& residuals) {
  if (residuals.rows() == 0) throw std::invalid_argument("no residuals");
  return {residuals.transpose() * residuals / static_cast<double>(residuals.rows())};
}

/// w_l proportional to 1 / max(sigma_l^2, eps_var).
inline LayerWeightVector inverse_variance_weights(std::span<const double> sigma_hat_sq, double eps_var = kEpsVar) {
  if (sigma_hat_sq.empty()) throw std::invalid_argument("need at least one layer");
  LayerWeightVector out;
  out.sigma_hat_sq.assign(sigma_hat_sq.begin(), sigma_hat_sq.end());
  double total = 0.0;
  for (double s : sigma_hat_sq) {
    if (s < 0.0 || std::isnan(s)) throw std::invalid_argument("variances must be >= 0");
    out.weights.push_back(1.0 / std::max(s, eps_var));
    total += out.weights.back();
  }
  for (auto& w : out.weights) w /= total;
  return out;
}

/// Minimum-variance weights under sum(w) = 1: sigma^{-1} 1 / (1' sigma^{-1} 1).
inline LayerWeightVector gls_weights(const ErrorCovariance& cov) {
  cov.check_symmetric();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov.sigma, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) throw std::domain_error("covariance is not positive-definite");
  if (hi / lo > kMaxCondition) throw std::domain_error("covariance is ill-conditioned (condition > 1e12)");
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(cov.sigma.rows());
  const Eigen::VectorXd s = cov.sigma.llt().solve(ones);
  const Eigen::VectorXd w = s / ones.dot(s);
  LayerWeightVector out;
  out.weights.assign(w.data(), w.data() + w.size());
  for (Eigen::Index l = 0; l < cov.sigma.rows(); ++l) out.sigma_hat_sq.push_back(cov.sigma(l, l));
  return out;
}

inline double quadratic_form(const Eigen::MatrixXd& m, std::span<const double> w) {
  const Eigen::Map<const Eigen::VectorXd> v(w.data(), static_cast<Eigen::Index>(w.size()));
  if (v.size() != m.rows()) throw std::invalid_argument("weight length does not match covariance");
  return v.dot(m * v);
}

/// round(N_max * sum_l w_l est_l), clamped to [1, N_max].
inline std::size_t aggregate_estimate(std::span<const double> per_layer, std::span<const double> weights,
                                      std::size_t n_max) {
  if (per_layer.size() != weights.size() || weights.empty()) throw std::invalid_argument("one weight per layer required");
  double s = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) s += weights[l] * per_layer[l];
  const double budget = std::round(static_cast<double>(n_max) * s);
  if (!(budget >= 1.0)) return 1;
  return std::min(n_max, static_cast<std::size_t>(budget));
}

struct Theorem2Report {
  std::vector<double> gls_weights;
  double gls_theory = 0.0;    // w' sigma w
  double gls_mse = 0.0;       // empirical
  double gls_stderr = 0.0;
  std::vector<double> basis_mse;
  std::vector<double> random_mse;
  double worst_margin_se = 0.0;  // max over comparisons of (gls - other) / paired stderr
  bool beats_basis = false;
  bool beats_random = false;
  bool matches_theory = false;
  bool passed() const noexcept { return beats_basis && beats_random && matches_theory; }
};

/// Monte-Carlo check that GLS weights minimize aggregate MSE under unbiased
/// Gaussian layer errors with covariance sigma. All comparisons are paired on
/// the same error draws and allow 4 standard errors.
inline Theorem2Report theorem2_mc_check(const ErrorCovariance& cov, std::size_t trials, std::uint64_t seed,
                                        std::size_t random_vectors = 50) {
  cov.check_pd();
  if (trials < 10000) throw std::invalid_argument("theorem-2 check needs >= 1e4 trials");
  const auto L = static_cast<Eigen::Index>(cov.layers());
  const Eigen::MatrixXd chol = cov.sigma.llt().matrixL();

  Theorem2Report rep;
  rep.gls_weights = gls_weights(cov).weights;
  rep.gls_theory = quadratic_form(cov.sigma, rep.gls_weights);

  // Comparison weights: basis vectors first, then random feasible vectors.
  Rng rng = Rng::keyed(seed, 0x7468326dULL);
  std::vector<Eigen::VectorXd> others;
  for (Eigen::Index l = 0; l < L; ++l) others.push_back(Eigen::VectorXd::Unit(L, l));
  for (std::size_t k = 0; k < random_vectors; ++k) {
    Eigen::VectorXd u(L);
    if (k % 2 == 0) {  // simplex, Dirichlet(1)
      for (Eigen::Index l = 0; l < L; ++l) u[l] = -std::log(1.0 - rng.uniform());
      u /= u.sum();
    } else {  // affine
      for (Eigen::Index l = 0; l < L; ++l) u[l] = rng.normal();
      u.array() -= (u.sum() - 1.0) / static_cast<double>(L);
    }
    others.push_back(u);
  }
  const Eigen::Map<const Eigen::VectorXd> w(rep.gls_weights.data(), L);

  const std::size_t nc = others.size();
  double sum_g = 0.0, sum_g2 = 0.0;
  std::vector<double> sum_o(nc, 0.0), sum_d(nc, 0.0), sum_d2(nc, 0.0);
  Eigen::VectorXd z(L);
  for (std::size_t t = 0; t < trials; ++t) {
    for (Eigen::Index l = 0; l < L; ++l) z[l] = rng.normal();
    const Eigen::VectorXd e = chol * z;
    const double g = std::pow(w.dot(e), 2);
    sum_g += g;
    sum_g2 += g * g;
    for (std::size_t c = 0; c < nc; ++c) {
      const double o = std::pow(others[c].dot(e), 2);
      sum_o[c] += o;
      sum_d[c] += g - o;
      sum_d2[c] += (g - o) * (g - o);
    }
  }
  const auto n = static_cast<double>(trials);
  auto stderr_of = [n](double s, double s2) {
    const double mean = s / n;
    return std::sqrt(std::max(0.0, (s2 / n - mean * mean) / (n - 1.0)));
  };
  rep.gls_mse = sum_g / n;
  rep.gls_stderr = stderr_of(sum_g, sum_g2);
  rep.matches_theory = std::abs(rep.gls_mse - rep.gls_theory) <= 4.0 * rep.gls_stderr;
  rep.beats_basis = rep.beats_random = true;
  rep.worst_margin_se = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < nc; ++c) {
    const double diff = sum_d[c] / n;
    const double se = stderr_of(sum_d[c], sum_d2[c]);
    const bool ok = diff <= 4.0 * se + 1e-15;
    if (se > 0.0) rep.worst_margin_se = std::max(rep.worst_margin_se, diff / se);
    const bool basis = c < static_cast<std::size_t>(L);
    (basis ? rep.basis_mse : rep.random_mse).push_back(sum_o[c] / n);
    if (!ok) (basis ? rep.beats_basis : rep.beats_random) = false;
  }
  return rep;
}

struct DiagSurrogate {
  double r_inf = 0.0;       // max row sum of |R|
  double off_energy = 0.0;  // ||R||_F / ||sigma||_F
  double mse_dev = 0.0;     // |w'Rw| / (w'Dw)
  bool bounds_hold = false;
};

/// How far the diagonal-only MSE w'Dw can be from w'sigma w.
inline DiagSurrogate diag_surrogate_diagnostics(const ErrorCovariance& cov, std::span<const double> weights) {
  cov.check_symmetric();
  if (weights.size() != cov.layers()) throw std::invalid_argument("weight length does not match covariance");
  const Eigen::MatrixXd r = cov.r_part();
  const Eigen::MatrixXd d = cov.d_part();
  DiagSurrogate out;
  out.r_inf = r.cwiseAbs().rowwise().sum().maxCoeff();
  out.off_energy = r.norm() / cov.sigma.norm();
  const double wrw = quadratic_form(r, weights);
  const double wdw = quadratic_form(d, weights);
  const double wsw = quadratic_form(cov.sigma, weights);
  out.mse_dev = wdw > 0.0 ? std::abs(wrw) / wdw : 0.0;
  const double tol = 1e-12 * std::max(1.0, cov.sigma.cwiseAbs().maxCoeff());
  out.bounds_hold = std::abs(wrw) <= out.r_inf + tol && wsw >= wdw - out.r_inf - tol && wsw <= wdw + out.r_inf + tol;
  return out;
}

/// Trained per-layer estimators plus their aggregation weights.
struct EstimatorBundle {
  std::size_t layers = 0;
  std::size_t dim = 0;
  double hidden_ratio = 0.125;
  std::vector<MlpEstimator> estimators;
  std::vector<double> sigma_hat_sq;
  std::vector<double> weights;
};

/// Row-major feature matrix for one layer (records x dim).
inline Eigen::MatrixXd layer_matrix(const FeatureDataset& fs, std::size_t layer) {
  if (layer >= fs.layers) throw std::out_of_range("layer index out of range");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(fs.records.size()), static_cast<Eigen::Index>(fs.dim));
  for (std::size_t i = 0; i < fs.records.size(); ++i) {
    const auto& v = fs.records[i].layer_vectors.at(layer);
    if (v.size() != fs.dim) throw std::invalid_argument("feature vector has the wrong dimension");
    for (std::size_t j = 0; j < fs.dim; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
  }
  return x;
}

inline Eigen::VectorXd label_vector(const FeatureDataset& fs) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(fs.records.size()));
  for (std::size_t i = 0; i < fs.records.size(); ++i) {
    if (!fs.records[i].label) throw std::invalid_argument("record '" + fs.records[i].question_id + "' has no label");
    y[static_cast<Eigen::Index>(i)] = *fs.records[i].label;
  }
  return y;
}

/// Per-layer normalized predictions (records x layers).
inline Eigen::MatrixXd layer_predictions(const FeatureDataset& fs, std::span<const MlpEstimator> estimators) {
  if (estimators.size() != fs.layers) {
    throw std::invalid_argument("expected " + std::to_string(fs.layers) + " estimators, got " +
                                std::to_string(estimators.size()));
  }
  Eigen::MatrixXd p(static_cast<Eigen::Index>(fs.records.size()), static_cast<Eigen::Index>(fs.layers));
  for (std::size_t l = 0; l < fs.layers; ++l) {
    p.col(static_cast<Eigen::Index>(l)) = mlp_predict(estimators[l], layer_matrix(fs, l));
  }
  return p;
}

/// Integer budget per record: forward every layer, then aggregate.
inline std::vector<std::size_t> pipeline_estimate(const FeatureDataset& fs, std::span<const MlpEstimator> estimators,
                                                  std::span<const double> weights) {
  if (weights.size() != estimators.size()) throw std::invalid_argument("one weight per estimator required");
  const Eigen::MatrixXd p = layer_predictions(fs, estimators);
  std::vector<std::size_t> out;
  out.reserve(fs.records.size());
  std::vector<double> row(fs.layers);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (std::size_t l = 0; l < fs.layers; ++l) row[l] = p(i, static_cast<Eigen::Index>(l));
    out.push_back(aggregate_estimate(row, weights, fs.n_max));
  }
  return out;
}

struct TrainedLayers {
  EstimatorBundle bundle;
  std::vector<double> val_mae;
  std::vector<std::vector<double>> losses;
  Eigen::MatrixXd val_residuals;  // records x layers
};

/// Trains one estimator per layer, scores them on `val`, and sets
/// inverse-variance weights from the validation MSEs.
inline TrainedLayers train_layers(const FeatureDataset& train, const FeatureDataset& val, const TrainConfig& cfg) {
  if (train.layers != val.layers || train.dim != val.dim) throw std::invalid_argument("train/validation shapes differ");
  TrainedLayers out;
  out.bundle.layers = train.layers;
  out.bundle.dim = train.dim;
  out.bundle.hidden_ratio = cfg.hidden_ratio;
  const Eigen::VectorXd y = label_vector(train);
  const Eigen::VectorXd yv = label_vector(val);
  out.val_residuals.resize(yv.size(), static_cast<Eigen::Index>(train.layers));
  std::vector<TrainResult> results(train.layers);
  // Layers train independently; each writes only its own slot.
  parallel_for(train.layers, [&](std::size_t l) {
    TrainConfig c = cfg;
    c.seed = hash_combine(cfg.seed, l);
    results[l] = train_estimator(layer_matrix(train, l), y, c);
  });
  for (std::size_t l = 0; l < train.layers; ++l) {
    const Eigen::VectorXd pred = mlp_predict(results[l].estimator, layer_matrix(val, l));
    out.val_residuals.col(static_cast<Eigen::Index>(l)) = pred - yv;
    out.bundle.sigma_hat_sq.push_back(mean_squared_error(pred, yv));
    out.val_mae.push_back(mean_absolute_error(pred, yv));
    out.bundle.estimators.push_back(std::move(results[l].estimator));
    out.losses.push_back(std::move(results[l].losses));
  }
  out.bundle.weights = inverse_variance_weights(out.bundle.sigma_hat_sq).weights;
  return out;
}

namespace detail {

inline ordered_json vec_json(const double* p, Eigen::Index n) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < n; ++i) a.push_back(p[i]);
  return a;
}

}  // namespace detail

inline ordered_json bundle_to_json(const EstimatorBundle& b) {
  ordered_json j = ordered_json::object();
  j["layers"] = b.layers;
  j["dim"] = b.dim;
  j["hidden_ratio"] = b.hidden_ratio;
  ordered_json ests = ordered_json::array();
  for (const auto& e : b.estimators) {
    ordered_json ej = ordered_json::object();
    ordered_json w1 = ordered_json::array();
    for (Eigen::Index r = 0; r < e.w1.rows(); ++r) {
      const Eigen::RowVectorXd row = e.w1.row(r);
      w1.push_back(detail::vec_json(row.data(), row.size()));
    }
    ej["w1"] = std::move(w1);
    ej["b1"] = detail::vec_json(e.b1.data(), e.b1.size());
    ej["w2"] = detail::vec_json(e.w2.data(), e.w2.size());
    ej["b2"] = e.b2;
    ests.push_back(std::move(ej));
  }
  j["estimators"] = std::move(ests);
  j["sigma_hat_sq"] = b.sigma_hat_sq;
  j["weights"] = b.weights;
  return j;
}

inline EstimatorBundle bundle_from_json(const ordered_json& j) {
  detail::FieldReader r{"estimator bundle"};
  if (!j.is_object()) r.fail("<root>", "expected an object");
  EstimatorBundle b;
  const auto layers = r.integer(r.require(j, "layers"), "layers");
  const auto dim = r.integer(r.require(j, "dim"), "dim");
  if (layers < 1 || dim < 1) r.fail("layers", "layers and dim must be >= 1");
  b.layers = static_cast<std::size_t>(layers);
  b.dim = static_cast<std::size_t>(dim);
  b.hidden_ratio = r.number(r.require(j, "hidden_ratio"), "hidden_ratio");
  if (!(b.hidden_ratio > 0.0)) r.fail("hidden_ratio", "must be positive");
  const auto& ests = r.require(j, "estimators");
  if (!ests.is_array() || ests.size() != b.layers) r.fail("estimators", "expected one entry per layer");
  for (const auto& ej : ests) {
    const auto& w1 = r.require(ej, "w1");
    if (!w1.is_array() || w1.empty()) r.fail("w1", "expected a nonempty matrix");
    const auto h = static_cast<Eigen::Index>(w1.size());
    MlpEstimator e = zero_estimator(b.dim, static_cast<std::size_t>(h));
    for (Eigen::Index row = 0; row < h; ++row) {
      const auto v = r.numbers(w1[static_cast<std::size_t>(row)], "w1");
      if (v.size() != b.dim) r.fail("w1", "row length does not match dim");
      for (std::size_t c = 0; c < b.dim; ++c) e.w1(row, static_cast<Eigen::Index>(c)) = v[c];
    }
    const auto b1 = r.numbers(r.require(ej, "b1"), "b1");
    const auto w2 = r.numbers(r.require(ej, "w2"), "w2");
    if (b1.size() != static_cast<std::size_t>(h) || w2.size() != static_cast<std::size_t>(h)) {
      r.fail("b1", "b1 and w2 must match the hidden size");
    }
    e.b1 = Eigen::Map<const Eigen::VectorXd>(b1.data(), h);
    e.w2 = Eigen::Map<const Eigen::VectorXd>(w2.data(), h);
    e.b2 = r.number(r.require(ej, "b2"), "b2");
    b.estimators.push_back(std::move(e));
  }
  b.sigma_hat_sq = r.numbers(r.require(j, "sigma_hat_sq"), "sigma_hat_sq");
  b.weights = r.numbers(r.require(j, "weights"), "weights");
  if (b.sigma_hat_sq.size() != b.layers) r.fail("sigma_hat_sq", "expected one entry per layer");
  if (b.weights.size() != b.layers) r.fail("weights", "expected one entry per layer");
  double total = 0.0;
  for (double w : b.weights) total += w;
  if (std::abs(total - 1.0) > 1e-9) r.fail("weights", "must sum to 1");
  return b;
}

inline void save_bundle(const EstimatorBundle& b, const std::string& path) {
  write_text_file(path, to_canonical(bundle_to_json(b)) + "\n");
}

inline EstimatorBundle load_bundle(const std::string& path) { return bundle_from_json(parse_json_file(path)); }

}  // namespace overscale
