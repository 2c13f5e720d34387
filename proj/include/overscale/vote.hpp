#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "overscale/canonical_json.hpp"
#include "overscale/parallel.hpp"
#include "overscale/rng.hpp"
#include "overscale/trace.hpp"

namespace overscale {

enum class TieRule {
  /// Gold tied with t-1 other leaders earns 1/t.
  Fractional,
  /// The tied leader whose first occurrence comes earliest wins.
  FirstSeen,
};

inline std::string to_string(TieRule t) { return t == TieRule::Fractional ? "fractional" : "first-seen"; }

inline TieRule tie_rule_from_string(const std::string& s) {
  if (s == "fractional") return TieRule::Fractional;
  if (s == "first-seen") return TieRule::FirstSeen;
  throw std::invalid_argument("unknown tie rule '" + s + "' (expected fractional or first-seen)");
}

struct VoteResult {
  AnswerId leader = 0;  // first-seen leader; the answer a deployed system would emit
  double credit = 0.0;
};

/// Majority vote over `answers` in the given order.
inline VoteResult vote(std::span<const AnswerId> answers, GoldAnswer gold, TieRule tie) {
  if (answers.empty()) throw std::invalid_argument("majority vote over an empty answer list");
  AnswerId m = 0;
  for (AnswerId a : answers) m = std::max<AnswerId>(m, a + 1);
  std::vector<std::size_t> counts(m, 0);
  std::vector<std::size_t> first(m, answers.size());
  for (std::size_t i = 0; i < answers.size(); ++i) {
    ++counts[answers[i]];
    first[answers[i]] = std::min(first[answers[i]], i);
  }
  const std::size_t top = *std::max_element(counts.begin(), counts.end());
  VoteResult r;
  std::size_t leader_pos = answers.size();
  std::size_t leaders = 0;
  for (AnswerId a = 0; a < m; ++a) {
    if (counts[a] != top) continue;
    ++leaders;
    if (first[a] < leader_pos) {
      leader_pos = first[a];
      r.leader = a;
    }
  }
  if (!gold || *gold >= m || counts[*gold] != top) return r;
  r.credit = tie == TieRule::Fractional ? 1.0 / static_cast<double>(leaders) : (r.leader == *gold ? 1.0 : 0.0);
  return r;
}

inline double majority_vote(std::span<const AnswerId> answers, GoldAnswer gold, TieRule tie) {
  return vote(answers, gold, tie).credit;
}

enum class CurveMethod { Subsample, Exact, Prefix };

inline std::string to_string(CurveMethod m) {
  switch (m) {
    case CurveMethod::Subsample: return "SUBSAMPLE";
    case CurveMethod::Exact: return "EXACT";
    case CurveMethod::Prefix: return "PREFIX";
  }
  return "?";
}

struct EstimatorMeta {
  CurveMethod method = CurveMethod::Subsample;
  std::uint64_t m_draws = 0;  // tau for SUBSAMPLE, 0 otherwise
  std::int64_t seed = 0;

  bool operator==(const EstimatorMeta&) const = default;
};

/// A_x(N) for N = 1..n_max.
struct BudgetAccuracyCurve {
  std::vector<double> values;  // values[N-1]
  EstimatorMeta meta;

  std::size_t n_max() const noexcept { return values.size(); }

  /// 1-based access.
  double at(std::size_t n) const {
    if (n < 1 || n > values.size()) {
      throw std::out_of_range("budget " + std::to_string(n) + " outside [1, " + std::to_string(values.size()) + "]");
    }
    return values[n - 1];
  }

  bool operator==(const BudgetAccuracyCurve&) const = default;
};

struct SubsampleParams {
  std::uint64_t tau = 100000;
  std::int64_t seed = 0;
  TieRule tie = TieRule::Fractional;
};

/// Subset counts above this are never enumerated, whatever tau is.
inline constexpr std::uint64_t kEnumerationCap = 200000;

/// Largest number of distinct answers the exact subset DP accepts.
inline constexpr std::size_t kExactMaxAnswers = 12;

namespace detail {

using u128 = unsigned __int128;

/// C(n, k) as long double, saturating is not needed for n <= a few thousand.
inline long double binom_ld(std::size_t n, std::size_t k) {
  if (k > n) return 0.0L;
  k = std::min(k, n - k);
  long double r = 1.0L;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
  return std::round(r);
}

/// Pascal triangle up to row n.
template <class W>
std::vector<std::vector<W>> pascal(std::size_t n) {
  std::vector<std::vector<W>> c(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    c[i].assign(i + 1, W(1));
    for (std::size_t k = 1; k < i; ++k) c[i][k] = c[i - 1][k - 1] + c[i - 1][k];
  }
  return c;
}

/// Weights of outcomes in which gold ties for the top with exactly t-1 others
/// (t = 1 is an outright win), indexed by t; everything else earns nothing.
template <class W>
struct CreditTally {
  std::vector<W> by_ties;
  W total{};

  explicit CreditTally(std::size_t max_ties = 1) : by_ties(max_ties + 1, W{}) {}

  void add(std::size_t ties, W weight) {
    if (ties >= by_ties.size()) by_ties.resize(ties + 1, W{});
    by_ties[ties] += weight;
  }

  /// Expected credit with fractional tie credit. Identical tallies always map
  /// to identical doubles.
  double value() const {
    long double acc = 0.0L;
    for (std::size_t t = 1; t < by_ties.size(); ++t) {
      acc += static_cast<long double>(by_ties[t]) / static_cast<long double>(t);
    }
    return static_cast<double>(acc / static_cast<long double>(total));
  }
};

/// Credit tally for a single vote given answer counts. For FirstSeen,
/// `first_pos` gives each answer's earliest position in the subset.
inline std::size_t tie_class(std::span<const std::uint32_t> counts, AnswerId gold, TieRule tie,
                             std::span<const std::size_t> first_pos = {}) {
  const std::uint32_t g = counts[gold];
  if (g == 0) return 0;
  std::size_t ties = 1;
  for (std::size_t a = 0; a < counts.size(); ++a) {
    if (a == gold) continue;
    if (counts[a] > g) return 0;
    if (counts[a] == g) {
      if (tie == TieRule::FirstSeen) {
        if (first_pos[a] < first_pos[gold]) return 0;
      } else {
        ++ties;
      }
    }
  }
  return ties;
}

/// Enumerates all n-subsets of positions, keeping the recorded order within
/// each subset.
inline CreditTally<u128> enumerate_subsets(const QuestionTrace& trace, std::size_t n, TieRule tie) {
  const std::size_t total = trace.draws.size();
  const std::size_t m = trace.num_answers();
  CreditTally<u128> tally(m);
  std::vector<std::uint32_t> counts(m, 0);
  std::vector<std::size_t> first(m, total);
  const AnswerId gold = *trace.gold;
  std::uint64_t leaves = 0;

  auto rec = [&](auto&& self, std::size_t start, std::size_t depth) -> void {
    if (depth == n) {
      ++leaves;
      if (const auto t = tie_class(counts, gold, tie, first); t > 0) tally.add(t, 1);
      return;
    }
    for (std::size_t i = start; i + (n - depth) <= total; ++i) {
      const AnswerId a = trace.draws[i];
      const bool opened = counts[a]++ == 0;
      if (opened) first[a] = i;
      self(self, i + 1, depth + 1);
      --counts[a];
      if (opened) first[a] = total;
    }
  };
  rec(rec, 0, 0);
  tally.total = leaves;
  return tally;
}

/// Monte-Carlo subsets. Replicate r draws its subset from a stream keyed by
/// (seed, question id, n, r).
inline CreditTally<u128> sample_subsets(const QuestionTrace& trace, std::size_t n, const SubsampleParams& p) {
  const std::size_t total = trace.draws.size();
  const std::size_t m = trace.num_answers();
  const AnswerId gold = *trace.gold;
  CreditTally<u128> tally(m);
  const std::uint64_t qkey = hash_string(trace.question_id);

  std::vector<std::uint32_t> full(m, 0);
  for (AnswerId a : trace.draws) ++full[a];

  std::vector<std::uint32_t> counts(m, 0);
  std::vector<std::size_t> first(m, total);
  std::vector<std::uint32_t> pos(total);
  for (std::size_t i = 0; i < total; ++i) pos[i] = static_cast<std::uint32_t>(i);
  std::vector<std::uint32_t> swaps(total);

  // For fractional credit only counts matter, so draw the smaller of the
  // subset and its complement.
  const bool use_complement = p.tie == TieRule::Fractional && (total - n) < n;
  const std::size_t k = use_complement ? total - n : n;

  for (std::uint64_t r = 0; r < p.tau; ++r) {
    Rng rng = Rng::keyed(static_cast<std::uint64_t>(p.seed), qkey, n, r);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(total - i);
      swaps[i] = static_cast<std::uint32_t>(j);
      std::swap(pos[i], pos[j]);
    }
    if (use_complement) {
      counts = full;
      for (std::size_t i = 0; i < k; ++i) --counts[trace.draws[pos[i]]];
    } else {
      std::fill(counts.begin(), counts.end(), 0u);
      if (p.tie == TieRule::FirstSeen) std::fill(first.begin(), first.end(), total);
      for (std::size_t i = 0; i < k; ++i) {
        const AnswerId a = trace.draws[pos[i]];
        ++counts[a];
        first[a] = std::min<std::size_t>(first[a], pos[i]);
      }
    }
    if (const auto t = tie_class(counts, gold, p.tie, first); t > 0) tally.add(t, 1);
    for (std::size_t i = k; i-- > 0;) std::swap(pos[i], pos[swaps[i]]);
  }
  tally.total = p.tau;
  return tally;
}

/// Exact expected credit under uniform n-subsets for every n in [n_lo, n_hi],
/// from answer counts alone. Conditions on the gold count t; for each t a
/// product of per-answer generating polynomials (degree = draws taken, second
/// index = how many other answers hit exactly t) is built with every other
/// answer capped at t.
template <class W>
std::vector<CreditTally<W>> exact_tallies(std::span<const std::size_t> counts, std::size_t gold, std::size_t n_lo,
                                          std::size_t n_hi) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  const std::size_t m = counts.size();
  const auto C = pascal<W>(total);
  auto choose = [&](std::size_t a, std::size_t b) -> W { return b > a ? W{} : C[a][b]; };

  std::vector<CreditTally<W>> out;
  out.reserve(n_hi - n_lo + 1);
  for (std::size_t n = n_lo; n <= n_hi; ++n) {
    CreditTally<W> t(m);
    t.total = choose(total, n);
    out.push_back(std::move(t));
  }

  const std::size_t cg = counts[gold];
  std::vector<std::vector<W>> poly, next;
  for (std::size_t t = 1; t <= std::min(cg, n_hi); ++t) {
    const std::size_t max_deg = n_hi - t;
    poly.assign(max_deg + 1, std::vector<W>(m, W{}));
    poly[0][0] = W(1);
    std::size_t deg = 0;
    std::size_t ties_cap = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == gold || counts[j] == 0) continue;
      const std::size_t kmax = std::min(counts[j], t);
      const std::size_t new_deg = std::min(max_deg, deg + kmax);
      const std::size_t new_ties = ties_cap + (counts[j] >= t ? 1 : 0);
      next.assign(new_deg + 1, std::vector<W>(m, W{}));
      for (std::size_t s = 0; s <= deg; ++s) {
        for (std::size_t r = 0; r <= ties_cap; ++r) {
          const W base = poly[s][r];
          if (base == W{}) continue;
          for (std::size_t k = 0; k <= kmax && s + k <= new_deg; ++k) {
            next[s + k][r + (k == t ? 1 : 0)] += base * choose(counts[j], k);
          }
        }
      }
      poly.swap(next);
      deg = new_deg;
      ties_cap = new_ties;
    }
    const W gold_ways = choose(cg, t);
    for (std::size_t s = 0; s <= deg; ++s) {
      const std::size_t n = t + s;
      if (n < n_lo || n > n_hi) continue;
      for (std::size_t r = 0; r <= ties_cap; ++r) {
        if (poly[s][r] != W{}) out[n - n_lo].add(r + 1, gold_ways * poly[s][r]);
      }
    }
  }
  return out;
}

inline void check_exact_inputs(std::span<const std::size_t> counts, GoldAnswer gold, std::size_t n) {
  if (counts.size() > kExactMaxAnswers) {
    throw std::invalid_argument("exact subset DP supports at most " + std::to_string(kExactMaxAnswers) +
                                " distinct answers, got " + std::to_string(counts.size()));
  }
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw std::invalid_argument("answer counts sum to zero");
  if (n < 1 || n > total) {
    throw std::out_of_range("budget " + std::to_string(n) + " outside [1, " + std::to_string(total) + "]");
  }
  if (gold && *gold >= counts.size()) throw std::invalid_argument("gold index outside the count vector");
}

// C(130, 65) is the largest central binomial that fits in 128 bits.
inline constexpr std::size_t kExactIntegerLimit = 130;

}  // namespace detail

/// Exact E[credit] over uniform n-subsets of a pool with the given answer
/// counts. Subsets carry no draw order here, so FirstSeen is evaluated under a
/// uniformly random arrival order, which gives each tied leader an equal
/// chance and coincides with Fractional.
inline double exact_subset_accuracy(std::span<const std::size_t> counts, GoldAnswer gold, std::size_t n,
                                    TieRule tie = TieRule::Fractional) {
  (void)tie;
  detail::check_exact_inputs(counts, gold, n);
  if (!gold) return 0.0;
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total <= detail::kExactIntegerLimit) return detail::exact_tallies<detail::u128>(counts, *gold, n, n)[0].value();
  return detail::exact_tallies<long double>(counts, *gold, n, n)[0].value();
}

/// Exact A_x(N) for every N = 1..n_max.
inline BudgetAccuracyCurve exact_budget_accuracy_curve(const QuestionTrace& trace) {
  BudgetAccuracyCurve curve;
  curve.meta = {CurveMethod::Exact, 0, 0};
  const std::size_t total = trace.draws.size();
  if (!trace.gold) {
    curve.values.assign(total, 0.0);
    return curve;
  }
  const auto counts = answer_counts(trace);
  detail::check_exact_inputs(counts, trace.gold, total);
  curve.values.reserve(total);
  if (total <= detail::kExactIntegerLimit) {
    for (const auto& t : detail::exact_tallies<detail::u128>(counts, *trace.gold, 1, total)) {
      curve.values.push_back(t.value());
    }
  } else {
    for (const auto& t : detail::exact_tallies<long double>(counts, *trace.gold, 1, total)) {
      curve.values.push_back(t.value());
    }
  }
  return curve;
}

/// True when subsample_accuracy enumerates every subset instead of sampling.
inline bool enumerates_exactly(std::size_t n_max, std::size_t n, std::uint64_t tau) {
  const long double subsets = detail::binom_ld(n_max, n);
  return subsets <= static_cast<long double>(std::min<std::uint64_t>(tau, kEnumerationCap));
}

/// Average vote credit over M = min(tau, C(N_max, n)) subsets of size n drawn
/// without replacement; all subsets are enumerated when that is cheap.
inline double subsample_accuracy(const QuestionTrace& trace, std::size_t n, const SubsampleParams& params) {
  if (params.tau < 1) throw std::invalid_argument("tau must be >= 1");
  if (n < 1 || n > trace.draws.size()) {
    throw std::out_of_range("budget " + std::to_string(n) + " outside [1, " + std::to_string(trace.draws.size()) +
                            "]");
  }
  if (!trace.gold) return 0.0;
  if (enumerates_exactly(trace.draws.size(), n, params.tau)) {
    return detail::enumerate_subsets(trace, n, params.tie).value();
  }
  return detail::sample_subsets(trace, n, params).value();
}

inline BudgetAccuracyCurve budget_accuracy_curve(const QuestionTrace& trace, const SubsampleParams& params) {
  BudgetAccuracyCurve curve;
  curve.meta = {CurveMethod::Subsample, params.tau, params.seed};
  curve.values.resize(trace.draws.size());
  for (std::size_t n = 1; n <= trace.draws.size(); ++n) curve.values[n - 1] = subsample_accuracy(trace, n, params);
  return curve;
}

/// Curves for a whole dataset. Work is split over (question, n) pairs; every
/// value is computed independently, so results are the same for any thread
/// count.
inline std::vector<BudgetAccuracyCurve> build_curves(const TraceDataset& ds, const SubsampleParams& params,
                                                     bool exact = false) {
  std::vector<BudgetAccuracyCurve> curves(ds.traces.size());
  if (exact) {
    parallel_for(ds.traces.size(), [&](std::size_t q) { curves[q] = exact_budget_accuracy_curve(ds.traces[q]); });
    return curves;
  }
  for (auto& c : curves) {
    c.meta = {CurveMethod::Subsample, params.tau, params.seed};
    c.values.assign(ds.n_max, 0.0);
  }
  const std::size_t jobs = ds.traces.size() * ds.n_max;
  parallel_for(jobs, [&](std::size_t job) {
    const std::size_t q = job / ds.n_max;
    const std::size_t n = job % ds.n_max + 1;
    curves[q].values[n - 1] = subsample_accuracy(ds.traces[q], n, params);
  });
  return curves;
}

/// "question_id,N,accuracy" rows.
inline std::string curves_to_csv(const TraceDataset& ds, std::span<const BudgetAccuracyCurve> curves) {
  std::string out = "question_id,N,accuracy\n";
  for (std::size_t q = 0; q < curves.size(); ++q) {
    for (std::size_t n = 1; n <= curves[q].n_max(); ++n) {
      out += ds.traces[q].question_id;
      out += ',';
      out += std::to_string(n);
      out += ',';
      out += format_double(curves[q].at(n));
      out += '\n';
    }
  }
  return out;
}

}  // namespace overscale
