#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "overscale/rng.hpp"
#include "overscale/taxonomy.hpp"
#include "overscale/trace.hpp"
#include "overscale/vote.hpp"

namespace overscale {

/// Per-question answer distribution: one decode yields answer j with
/// probability p[j]; gold_index is the correct answer.
struct CategoricalAnswerModel {
  std::vector<double> p;
  std::size_t gold_index = 0;

  void validate() const {
    if (p.empty()) throw std::invalid_argument("categorical model needs at least one answer");
    if (gold_index >= p.size()) throw std::invalid_argument("gold index outside the answer set");
    double sum = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw std::invalid_argument("negative or NaN probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("probabilities do not sum to 1");
  }
};

struct MarginStats {
  double margin = 1.0;  // p_gold - strongest competitor
  double gap = 1.0;     // top-two gap
};

inline MarginStats margin_stats(const CategoricalAnswerModel& model) {
  model.validate();
  if (model.p.size() == 1) return {1.0, 1.0};
  double competitor = 0.0;
  for (std::size_t j = 0; j < model.p.size(); ++j) {
    if (j != model.gold_index) competitor = std::max(competitor, model.p[j]);
  }
  std::vector<double> sorted = model.p;
  std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end(), std::greater<>());
  return {model.p[model.gold_index] - competitor, sorted[0] - sorted[1]};
}

/// n_max i.i.d. draws. Answers that never occur are dropped and the rest
/// relabelled densely in model order; answer_labels keeps the model index.
inline QuestionTrace sample_trace(const CategoricalAnswerModel& model, std::size_t n_max, std::uint64_t seed,
                                  std::string question_id = "q") {
  model.validate();
  if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
  Rng rng(seed);
  std::vector<double> cdf(model.p.size());
  std::partial_sum(model.p.begin(), model.p.end(), cdf.begin());
  std::vector<std::size_t> raw(n_max);
  for (auto& d : raw) {
    const double u = rng.uniform() * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t j = static_cast<std::size_t>(it - cdf.begin());
    if (j >= model.p.size()) j = model.p.size() - 1;
    while (model.p[j] == 0.0) --j;  // u landed on a zero-width bucket edge
    d = j;
  }
  std::vector<bool> used(model.p.size(), false);
  for (auto j : raw) used[j] = true;
  std::vector<AnswerId> remap(model.p.size(), 0);
  std::map<AnswerId, std::string> labels;
  AnswerId next = 0;
  for (std::size_t j = 0; j < model.p.size(); ++j) {
    if (!used[j]) continue;
    remap[j] = next;
    labels[next] = "a" + std::to_string(j);
    ++next;
  }
  QuestionTrace t;
  t.question_id = std::move(question_id);
  t.draws.reserve(n_max);
  for (auto j : raw) t.draws.push_back(remap[j]);
  if (used[model.gold_index]) t.gold = remap[model.gold_index];
  t.answer_labels = std::move(labels);
  return t;
}

inline constexpr std::size_t kMvDpMaxAnswers = 8;
inline constexpr std::size_t kMvDpMaxBudget = 64;
inline constexpr double kMvBruteForceMaxOutcomes = 5e6;

/// Exact Pr(majority vote over n i.i.d. draws picks gold); fractional credit
/// on ties. Conditions on the gold count t and builds the exponential
/// generating polynomial of the other answers capped at t, tracking how many
/// of them reach exactly t. FirstSeen gives the same value: with i.i.d. draws
/// every tied leader is equally likely to appear first.
inline double exact_mv_accuracy(const CategoricalAnswerModel& model, std::size_t n,
                                TieRule tie = TieRule::Fractional) {
  (void)tie;
  model.validate();
  const std::size_t m = model.p.size();
  if (n < 1) throw std::invalid_argument("budget must be >= 1");
  if (m > kMvDpMaxAnswers || n > kMvDpMaxBudget) {
    throw std::invalid_argument("exact majority-vote DP limited to m <= 8 and n <= 64");
  }
  std::vector<long double> fact(n + 1, 1.0L);
  for (std::size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * static_cast<long double>(i);
  auto term = [&](double prob, std::size_t k) -> long double {
    return std::pow(static_cast<long double>(prob), static_cast<long double>(k)) / fact[k];
  };

  const std::size_t g = model.gold_index;
  long double acc = 0.0L;
  std::vector<std::vector<long double>> poly, next;
  for (std::size_t t = 1; t <= n; ++t) {
    const std::size_t max_deg = n - t;
    poly.assign(max_deg + 1, std::vector<long double>(m, 0.0L));
    poly[0][0] = 1.0L;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == g) continue;
      next.assign(max_deg + 1, std::vector<long double>(m, 0.0L));
      for (std::size_t s = 0; s <= max_deg; ++s) {
        for (std::size_t r = 0; r < m; ++r) {
          const long double base = poly[s][r];
          if (base == 0.0L) continue;
          for (std::size_t k = 0; k <= t && s + k <= max_deg; ++k) {
            next[s + k][r + (k == t ? 1 : 0)] += base * term(model.p[j], k);
          }
        }
      }
      poly.swap(next);
    }
    long double credit = 0.0L;
    for (std::size_t r = 0; r < m; ++r) credit += poly[max_deg][r] / static_cast<long double>(r + 1);
    acc += term(model.p[g], t) * credit;
  }
  return static_cast<double>(std::min(1.0L, acc * fact[n]));
}

/// Enumerates all m^n outcome sequences and applies the vote literally.
/// Independent of the DP; feasible only for small m^n.
inline double brute_force_mv_accuracy(const CategoricalAnswerModel& model, std::size_t n,
                                      TieRule tie = TieRule::Fractional) {
  model.validate();
  const std::size_t m = model.p.size();
  if (n < 1) throw std::invalid_argument("budget must be >= 1");
  if (std::pow(static_cast<double>(m), static_cast<double>(n)) > kMvBruteForceMaxOutcomes) {
    throw std::invalid_argument("brute-force majority vote limited to m^n <= 5e6 outcomes");
  }
  std::vector<AnswerId> seq(n, 0);
  const GoldAnswer gold = static_cast<AnswerId>(model.gold_index);
  long double acc = 0.0L;
  while (true) {
    long double prob = 1.0L;
    for (auto a : seq) prob *= model.p[a];
    if (prob > 0.0L) acc += prob * vote(seq, gold, tie).credit;
    std::size_t i = 0;
    while (i < n && ++seq[i] == m) seq[i++] = 0;
    if (i == n) break;
  }
  return static_cast<double>(acc);
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::uint64_t trials = 0;
};

/// Simulated majority-vote accuracy for sizes beyond the exact DP.
inline MonteCarloEstimate mc_mv_accuracy(const CategoricalAnswerModel& model, std::size_t n, std::uint64_t trials,
                                         std::uint64_t seed, TieRule tie = TieRule::Fractional) {
  model.validate();
  if (n < 1 || trials < 1) throw std::invalid_argument("budget and trial count must be >= 1");
  std::vector<double> cdf(model.p.size());
  std::partial_sum(model.p.begin(), model.p.end(), cdf.begin());
  std::vector<AnswerId> seq(n);
  const GoldAnswer gold = static_cast<AnswerId>(model.gold_index);
  double sum = 0.0, sum_sq = 0.0;
  for (std::uint64_t r = 0; r < trials; ++r) {
    Rng rng = Rng::keyed(seed, n, r);
    for (auto& a : seq) {
      const double u = rng.uniform() * cdf.back();
      auto j = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      if (j >= model.p.size()) j = model.p.size() - 1;
      while (model.p[j] == 0.0) --j;
      a = static_cast<AnswerId>(j);
    }
    const double c = vote(seq, gold, tie).credit;
    sum += c;
    sum_sq += c * c;
  }
  MonteCarloEstimate e;
  e.trials = trials;
  e.mean = sum / static_cast<double>(trials);
  const double var = std::max(0.0, sum_sq / static_cast<double>(trials) - e.mean * e.mean);
  e.stderr_ = std::sqrt(var / static_cast<double>(trials));
  return e;
}

/// 1 - (m-1) exp(-n margin^2 / 2), clamped at 0. Requires a positive margin.
inline double union_bound_lower(const CategoricalAnswerModel& model, std::size_t n) {
  if (n < 1) throw std::invalid_argument("budget must be >= 1");
  const auto stats = margin_stats(model);
  if (!(stats.margin > 0.0)) throw std::domain_error("union bound needs a positive margin");
  const double m = static_cast<double>(model.p.size());
  return std::max(0.0, 1.0 - (m - 1.0) * std::exp(-static_cast<double>(n) * stats.margin * stats.margin / 2.0));
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Recipe for a synthetic dataset with planted sample types.
struct SynthSpec {
  std::array<std::size_t, 5> counts{};  // questions per type, indexed by type_index
  std::size_t n_max = 128;
  std::uint64_t seed = 0;
  Range decreasing_margin{-0.30, -0.15};
  Range increasing_margin{0.15, 0.30};
  double nonmonotonic_gap = 0.02;
  std::size_t max_answers = 3;  // answers per question for types 3-5 (>= 2)
};

struct SynthDataset {
  TraceDataset dataset;
  std::vector<SampleType> intended;
  std::vector<CategoricalAnswerModel> models;
};

namespace detail {

/// Gold at index 0 with probability p_gold, the strongest competitor at
/// p_gold - margin, and the remainder on a third answer no larger than the
/// competitor (when m >= 3).
inline CategoricalAnswerModel model_with_margin(double margin, std::size_t m, Rng& rng) {
  CategoricalAnswerModel model;
  model.gold_index = 0;
  if (m <= 2) {
    const double pg = (1.0 + margin) / 2.0;
    model.p = {pg, 1.0 - pg};
    return model;
  }
  // Feasible p_gold: remainder 1 - 2 p_gold + margin in [0, p_gold - margin].
  const double lo = std::max((1.0 + 2.0 * margin) / 3.0, 1e-3);
  const double hi = (1.0 + margin) / 2.0;
  const double pg = lo + (hi - lo) * rng.uniform(0.1, 0.9);
  const double pc = pg - margin;
  model.p = {pg, pc, std::max(0.0, 1.0 - pg - pc)};
  const double sum = model.p[0] + model.p[1] + model.p[2];
  model.p[2] += 1.0 - sum;
  return model;
}

}  // namespace detail

inline void validate_synth_spec(const SynthSpec& spec) {
  if (spec.n_max < 1) throw std::invalid_argument("synth: n_max must be >= 1");
  if (spec.max_answers < 2) throw std::invalid_argument("synth: max_answers must be >= 2");
  const auto& d = spec.decreasing_margin;
  const auto& u = spec.increasing_margin;
  if (!(d.lo <= d.hi && d.hi < 0.0 && d.lo > -1.0)) {
    throw std::invalid_argument("synth: decreasing margins must lie in (-1, 0)");
  }
  if (!(u.lo <= u.hi && u.lo > 0.0 && u.hi < 1.0)) {
    throw std::invalid_argument("synth: increasing margins must lie in (0, 1)");
  }
  if (!(spec.nonmonotonic_gap >= 0.0 && spec.nonmonotonic_gap < 1.0)) {
    throw std::invalid_argument("synth: non-monotonic gap must lie in [0, 1)");
  }
}

/// Per-type answer model:
///  1: point mass on gold;  2: gold has probability 0;
///  3: margin drawn from decreasing_margin;  4: margin from increasing_margin;
///  5: top-two gap at most nonmonotonic_gap with gold one of the two.
inline CategoricalAnswerModel synth_model(SampleType type, const SynthSpec& spec, Rng& rng) {
  CategoricalAnswerModel model;
  switch (type) {
    case SampleType::AlwaysCorrect:
      model.p = {1.0};
      return model;
    case SampleType::AlwaysWrong: {
      const double a = rng.uniform(0.5, 0.9);
      model.p = {0.0, a, 1.0 - a};
      return model;
    }
    case SampleType::ApproxDecreasing:
      return detail::model_with_margin(rng.uniform(spec.decreasing_margin.lo, spec.decreasing_margin.hi),
                                       spec.max_answers, rng);
    case SampleType::ApproxIncreasing:
      return detail::model_with_margin(rng.uniform(spec.increasing_margin.lo, spec.increasing_margin.hi),
                                       spec.max_answers, rng);
    case SampleType::NonMonotonic: {
      const double gap = rng.uniform(0.0, spec.nonmonotonic_gap);
      const double margin = rng.uniform() < 0.5 ? gap : -gap;
      return detail::model_with_margin(margin, spec.max_answers, rng);
    }
  }
  return model;
}

/// Samples one trace per requested question. Question q uses a seed derived
/// from (spec.seed, q), so traces do not depend on generation order.
inline SynthDataset synth_dataset(const SynthSpec& spec) {
  validate_synth_spec(spec);
  SynthDataset out;
  out.dataset.n_max = spec.n_max;
  out.dataset.sampling_config.seed = static_cast<std::int64_t>(spec.seed);
  std::size_t q = 0;
  for (auto type : kAllSampleTypes) {
    for (std::size_t i = 0; i < spec.counts[type_index(type)]; ++i, ++q) {
      Rng model_rng = Rng::keyed(spec.seed, 0x6d6f64656cULL, q);
      auto model = synth_model(type, spec, model_rng);
      char id[32];
      std::snprintf(id, sizeof id, "q%05zu", q);
      out.dataset.traces.push_back(sample_trace(model, spec.n_max, hash_combine(spec.seed, q), id));
      out.intended.push_back(type);
      out.models.push_back(std::move(model));
    }
  }
  return out;
}

}  // namespace overscale
