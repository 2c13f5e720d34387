#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "overscale/metrics.hpp"
#include "overscale/policies.hpp"
#include "overscale/rng.hpp"
#include "overscale/trace.hpp"

namespace overscale {

/// Planted feature task for exercising the estimator pipeline without a model.
///
/// Each question has a latent z ~ N(0, I_k) and label y = clamp(g(z), 1/N_max, 1)
/// with g(z) = sigmoid(theta'z + c). Its trace is built so that its prefix-vote
/// curve peaks first at k = floor(N_max * y) (or the nearest integer under
/// StepRule::Round); steps below 3 get a flat trace with N* = 1 since a
/// first-seen vote cannot flip at N = 2. Layer l sees A_l z + b_l plus
/// N(0, noise_l^2) per coordinate.
enum class StepRule { Floor, Round };

struct PlantedSpec {
  std::size_t dim = 64;
  std::vector<double> layer_noise{1.0, 0.6, 0.3, 0.1, 0.05, 0.2};
  std::size_t latent_dim = 4;
  double theta_norm = 2.0;
  double offset = -3.0;
  std::size_t n_max = 64;
  std::size_t falling_plateau = 4;  // gold leads the first 2 * plateau draws
  StepRule step_rule = StepRule::Floor;
  std::size_t n_train = 5000;
  std::size_t n_val = 5000;
  std::size_t n_test = 2000;
  std::uint64_t seed = 0;

  std::size_t layers() const noexcept { return layer_noise.size(); }
};

struct PlantedSplit {
  FeatureDataset features;
  TraceDataset traces;  // paired with features by position and question_id
  std::vector<std::size_t> n_star;  // realized prefix-curve optimum of each trace
};

struct PlantedBenchmark {
  PlantedSplit train, val, test;
};

enum class PlantedShape { Always, Never, Falling, Rising };

/// Recorded draws whose first-seen prefix vote is wrong before `k` and right
/// from `k` on (k >= 3): a, g, fillers..., g, g, ...
inline QuestionTrace rising_trace(std::string id, std::size_t k, std::size_t n_max) {
  if (k < 3 || k > n_max) throw std::invalid_argument("rising step must lie in [3, N_max]");
  QuestionTrace t;
  t.question_id = std::move(id);
  t.gold = 0;
  t.draws.assign(n_max, 0);
  t.draws[0] = 1;
  for (std::size_t i = 2; i + 1 < k; ++i) t.draws[i] = static_cast<AnswerId>(i);
  return t;
}

inline QuestionTrace flat_trace(std::string id, PlantedShape shape, std::size_t n_max, std::size_t plateau) {
  QuestionTrace t;
  t.question_id = std::move(id);
  t.draws.assign(n_max, 0);
  if (shape == PlantedShape::Always) {
    t.gold = 0;
  } else if (shape == PlantedShape::Never) {
    t.gold = std::nullopt;
  } else {
    t.gold = 0;
    for (std::size_t i = std::min(plateau, n_max); i < n_max; ++i) t.draws[i] = 1;
    if (plateau >= n_max && n_max > 1) t.draws.back() = 1;  // keep the second answer present
  }
  return t;
}

namespace detail {

struct PlantedWorld {
  std::vector<double> theta;
  std::vector<std::vector<double>> a;  // per layer, dim x latent (row-major)
  std::vector<std::vector<double>> b;  // per layer, dim
};

inline PlantedWorld planted_world(const PlantedSpec& s) {
  Rng rng = Rng::keyed(s.seed, 0x776f726cULL);
  PlantedWorld w;
  double norm = 0.0;
  for (std::size_t i = 0; i < s.latent_dim; ++i) {
    w.theta.push_back(rng.normal());
    norm += w.theta.back() * w.theta.back();
  }
  for (auto& t : w.theta) t *= s.theta_norm / std::sqrt(norm);
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.latent_dim));
  for (std::size_t l = 0; l < s.layers(); ++l) {
    std::vector<double> a(s.dim * s.latent_dim), b(s.dim);
    for (auto& v : a) v = rng.normal() * scale;
    for (auto& v : b) v = 0.1 * rng.normal();
    w.a.push_back(std::move(a));
    w.b.push_back(std::move(b));
  }
  return w;
}

inline PlantedSplit planted_split(const PlantedSpec& s, const PlantedWorld& w, std::size_t count, std::uint64_t tag,
                                  const char* prefix) {
  PlantedSplit out;
  out.features.n_max = out.traces.n_max = s.n_max;
  out.features.layers = s.layers();
  out.features.dim = s.dim;
  for (std::size_t q = 0; q < count; ++q) {
    Rng rng = Rng::keyed(s.seed, tag, q);
    std::vector<double> z(s.latent_dim);
    double score = s.offset;
    for (std::size_t i = 0; i < s.latent_dim; ++i) {
      z[i] = rng.normal();
      score += w.theta[i] * z[i];
    }
    const double g = sigmoid(score);
    char id[32];
    std::snprintf(id, sizeof id, "%s%05zu", prefix, q);

    const double y = std::clamp(g, 1.0 / static_cast<double>(s.n_max), 1.0);
    const double scaled = static_cast<double>(s.n_max) * y;
    const auto k = static_cast<std::size_t>(s.step_rule == StepRule::Floor ? std::floor(scaled) : std::round(scaled));
    QuestionTrace t = k < 3 ? flat_trace(id, static_cast<PlantedShape>(rng.below(3)), s.n_max, s.falling_plateau)
                            : rising_trace(id, std::min(k, s.n_max), s.n_max);

    LayerFeatureSet rec;
    rec.question_id = id;
    rec.label = y;
    for (std::size_t l = 0; l < s.layers(); ++l) {
      std::vector<double> v(s.dim);
      for (std::size_t j = 0; j < s.dim; ++j) {
        double x = w.b[l][j];
        for (std::size_t i = 0; i < s.latent_dim; ++i) x += w.a[l][j * s.latent_dim + i] * z[i];
        v[j] = x + s.layer_noise[l] * rng.normal();
      }
      rec.layer_vectors.push_back(std::move(v));
    }
    out.features.records.push_back(std::move(rec));
    out.traces.traces.push_back(std::move(t));
    out.n_star.push_back(sample_optimal_n(prefix_vote_curve(out.traces.traces.back())).n_star);
  }
  return out;
}

}  // namespace detail

inline PlantedBenchmark planted_benchmark(const PlantedSpec& s) {
  if (s.dim < 1 || s.layers() < 1 || s.latent_dim < 1 || s.n_max < 1) throw std::invalid_argument("bad planted spec");
  const auto w = detail::planted_world(s);
  return {detail::planted_split(s, w, s.n_train, 1, "tr"), detail::planted_split(s, w, s.n_val, 2, "va"),
          detail::planted_split(s, w, s.n_test, 3, "te")};
}

}  // namespace overscale
