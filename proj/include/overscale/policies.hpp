#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "overscale/canonical_json.hpp"
#include "overscale/metrics.hpp"
#include "overscale/trace.hpp"
#include "overscale/vote.hpp"

namespace overscale {

/// Result of replaying one budget policy on one question.
struct PolicyOutcome {
  std::string question_id;
  std::optional<AnswerId> final_answer;
  double credit = 0.0;
  std::size_t samples_used = 0;
  std::size_t rounds_used = 0;  // sequential decode batches

  bool operator==(const PolicyOutcome&) const = default;
};

using Outcomes = std::vector<PolicyOutcome>;

namespace detail {

/// Vote state over a growing prefix of recorded draws.
class RunningVote {
 public:
  explicit RunningVote(const QuestionTrace& trace)
      : trace_(trace), counts_(trace.num_answers(), 0), first_(trace.num_answers(), trace.draws.size()) {}

  void take(std::size_t k = 1) {
    for (std::size_t i = 0; i < k && used_ < trace_.draws.size(); ++i, ++used_) {
      const AnswerId a = trace_.draws[used_];
      ++counts_[a];
      first_[a] = std::min(first_[a], used_);
    }
  }

  std::size_t used() const noexcept { return used_; }

  /// First-seen leader among the answers with the top count.
  AnswerId leader() const {
    AnswerId best = 0;
    for (AnswerId a = 1; a < counts_.size(); ++a) {
      if (counts_[a] > counts_[best] || (counts_[a] == counts_[best] && first_[a] < first_[best])) best = a;
    }
    return best;
  }

  /// (top count, largest count among the other answers)
  std::pair<std::size_t, std::size_t> top_two() const {
    const AnswerId lead = leader();
    std::size_t second = 0;
    for (AnswerId a = 0; a < counts_.size(); ++a) {
      if (a != lead) second = std::max(second, counts_[a]);
    }
    return {counts_[lead], second};
  }

  double credit(TieRule tie) const {
    if (!trace_.gold) return 0.0;
    const auto g = *trace_.gold;
    const std::size_t top = counts_[leader()];
    if (counts_[g] != top) return 0.0;
    if (tie == TieRule::FirstSeen) return leader() == g ? 1.0 : 0.0;
    std::size_t ties = 0;
    for (auto c : counts_) ties += c == top ? 1 : 0;
    return 1.0 / static_cast<double>(ties);
  }

  PolicyOutcome outcome(TieRule tie, std::size_t rounds) const {
    return {trace_.question_id, leader(), credit(tie), used_, rounds};
  }

 private:
  const QuestionTrace& trace_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> first_;
  std::size_t used_ = 0;
};

inline bool unanimous(std::span<const AnswerId> block) {
  return std::adjacent_find(block.begin(), block.end(), std::not_equal_to<>()) == block.end();
}

inline PolicyOutcome prefix_outcome(const QuestionTrace& trace, std::size_t n, TieRule tie) {
  RunningVote v(trace);
  v.take(n);
  return v.outcome(tie, 1);
}

}  // namespace detail

/// Vote credit over the first N recorded draws, for N = 1..N_max. These are the
/// curves under which replayed fixed-budget policies are compared.
inline BudgetAccuracyCurve prefix_vote_curve(const QuestionTrace& trace, TieRule tie = TieRule::FirstSeen) {
  BudgetAccuracyCurve curve;
  curve.meta = {CurveMethod::Prefix, 0, 0};
  detail::RunningVote v(trace);
  for (std::size_t n = 1; n <= trace.draws.size(); ++n) {
    v.take();
    curve.values.push_back(v.credit(tie));
  }
  return curve;
}

inline std::vector<BudgetAccuracyCurve> prefix_vote_curves(const TraceDataset& ds, TieRule tie = TieRule::FirstSeen) {
  std::vector<BudgetAccuracyCurve> out;
  out.reserve(ds.traces.size());
  for (const auto& t : ds.traces) out.push_back(prefix_vote_curve(t, tie));
  return out;
}

/// Standard parallel thinking: every question votes over its first n draws.
inline Outcomes run_std_pt(const TraceDataset& ds, std::size_t n, TieRule tie = TieRule::FirstSeen) {
  if (n < 1 || n > ds.n_max) throw std::out_of_range("std-pt budget outside [1, N_max]");
  Outcomes out;
  for (const auto& t : ds.traces) out.push_back(detail::prefix_outcome(t, n, tie));
  return out;
}

/// Per-question budgets known in advance (one decode batch each).
inline Outcomes run_t2(const TraceDataset& ds, std::span<const std::size_t> estimates, TieRule tie = TieRule::FirstSeen) {
  if (estimates.size() != ds.traces.size()) throw std::invalid_argument("one budget estimate per question required");
  Outcomes out;
  for (std::size_t q = 0; q < ds.traces.size(); ++q) {
    if (estimates[q] < 1 || estimates[q] > ds.n_max) {
      throw std::out_of_range("estimate for '" + ds.traces[q].question_id + "' outside [1, N_max]");
    }
    out.push_back(detail::prefix_outcome(ds.traces[q], estimates[q], tie));
  }
  return out;
}

/// Each question uses its own sample-optimal budget from `curves`.
inline Outcomes run_oracle(const TraceDataset& ds, std::span<const BudgetAccuracyCurve> curves,
                           double eps_acc = kDefaultEpsAcc, TieRule tie = TieRule::FirstSeen) {
  if (curves.size() != ds.traces.size()) throw std::invalid_argument("missing curve for some question");
  std::vector<std::size_t> budgets;
  for (const auto& c : curves) budgets.push_back(sample_optimal_n(c, eps_acc).n_star);
  return run_t2(ds, budgets, tie);
}

/// Adaptive-Consistency: one draw per round; stop once the posterior
/// probability that the leader beats the runner-up, I_{1/2}(v2 + 1, v1 + 1),
/// reaches conf_threshold, or at min(L, N_max) draws.
inline Outcomes run_ac(const TraceDataset& ds, std::size_t max_budget = 40, double conf_threshold = 0.95,
                       TieRule tie = TieRule::FirstSeen) {
  if (max_budget < 1) throw std::invalid_argument("AC budget must be >= 1");
  const std::size_t cap = std::min(max_budget, ds.n_max);
  Outcomes out;
  for (const auto& t : ds.traces) {
    detail::RunningVote v(t);
    while (v.used() < cap) {
      v.take();
      const auto [v1, v2] = v.top_two();
      const double confidence =
          boost::math::ibeta(static_cast<double>(v2 + 1), static_cast<double>(v1 + 1), 0.5);
      if (confidence >= conf_threshold) break;
    }
    out.push_back(v.outcome(tie, v.used()));
  }
  return out;
}

/// Early-Stopping Self-Consistency: windows of w draws per round; a unanimous
/// window ends sampling with its answer, otherwise vote over everything drawn
/// once min(L, N_max) is reached.
inline Outcomes run_esc(const TraceDataset& ds, std::size_t window = 5, std::size_t max_budget = 40,
                        TieRule tie = TieRule::FirstSeen) {
  if (window < 1 || max_budget < window) throw std::invalid_argument("ESC needs 1 <= w <= L");
  const std::size_t cap = std::min(max_budget, ds.n_max);
  Outcomes out;
  for (const auto& t : ds.traces) {
    detail::RunningVote v(t);
    std::size_t rounds = 0;
    std::optional<PolicyOutcome> early;
    while (v.used() < cap) {
      const std::size_t start = v.used();
      const std::size_t take = std::min(window, cap - start);
      v.take(take);
      ++rounds;
      const std::span<const AnswerId> block(t.draws.data() + start, take);
      if (take == window && detail::unanimous(block)) {
        const AnswerId a = block.front();
        early = PolicyOutcome{t.question_id, a, t.gold && *t.gold == a ? 1.0 : 0.0, v.used(), rounds};
        break;
      }
    }
    out.push_back(early ? *early : v.outcome(tie, rounds));
  }
  return out;
}

/// Difficulty used for DSC ordering: the recorded field, else one minus the
/// leader's share of the full trace.
inline double difficulty_of(const QuestionTrace& t) {
  if (t.difficulty) return *t.difficulty;
  const auto counts = answer_counts(t);
  const auto top = *std::max_element(counts.begin(), counts.end());
  return 1.0 - static_cast<double>(top) / static_cast<double>(t.draws.size());
}

/// Difficulty-Adaptive Self-Consistency, replayed.
///  1. Order questions hardest first (stable on ties).
///  2. Draw one w-block per question in that order; stop the scan after k
///     consecutive unanimous blocks.
///  3. Questions past the stopping point use one draw. The others keep
///     doubling their block count (1, 2, 4, ... blocks in total) until the
///     newest w-block is unanimous or min(L, N_max) draws are used.
/// rounds_used counts w-blocks (a truncated last block counts as one).
inline Outcomes run_dsc(const TraceDataset& ds, std::size_t window = 4, std::size_t k_consecutive = 32,
                        std::size_t max_budget = 40, TieRule tie = TieRule::FirstSeen) {
  if (window < 1 || k_consecutive < 1 || max_budget < 1) throw std::invalid_argument("DSC parameters must be >= 1");
  const std::size_t cap = std::min(max_budget, ds.n_max);
  const std::size_t block = std::min(window, cap);
  const std::size_t nq = ds.traces.size();

  std::vector<std::size_t> order(nq);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> difficulty(nq);
  for (std::size_t q = 0; q < nq; ++q) difficulty[q] = difficulty_of(ds.traces[q]);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return difficulty[a] > difficulty[b]; });

  auto block_unanimous = [&](const QuestionTrace& t, std::size_t start, std::size_t len) {
    return detail::unanimous(std::span<const AnswerId>(t.draws.data() + start, len));
  };

  // Stage 2: sequential scan.
  std::size_t scanned = nq;
  std::size_t run = 0;
  for (std::size_t i = 0; i < nq; ++i) {
    if (block_unanimous(ds.traces[order[i]], 0, block)) {
      if (++run == k_consecutive) {
        scanned = i + 1;
        break;
      }
    } else {
      run = 0;
    }
  }

  Outcomes out(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    const auto& t = ds.traces[order[i]];
    detail::RunningVote v(t);
    if (i >= scanned) {
      v.take(1);
      out[order[i]] = v.outcome(tie, 1);
      continue;
    }
    v.take(block);
    std::size_t rounds = 1;
    std::size_t blocks_total = 1;
    bool stable = block_unanimous(t, 0, block);
    while (!stable && v.used() < cap) {
      const std::size_t add = blocks_total;  // double the number of blocks
      for (std::size_t b = 0; b < add && v.used() < cap; ++b) {
        const std::size_t start = v.used();
        const std::size_t len = std::min(window, cap - start);
        v.take(len);
        ++rounds;
        stable = len == window && block_unanimous(t, start, len);
      }
      blocks_total += add;
    }
    out[order[i]] = v.outcome(tie, rounds);
  }
  return out;
}

struct CostReport {
  double mean_samples = 0.0;
  double mean_rounds = 0.0;
  double c_mem_proxy = 1.0;   // mean samples relative to the baseline
  double c_time_proxy = 1.0;  // mean rounds relative to the baseline
  double accuracy = 0.0;
};

inline double mean_credit(std::span<const PolicyOutcome> outcomes) {
  if (outcomes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& o : outcomes) s += o.credit;
  return s / static_cast<double>(outcomes.size());
}

inline CostReport cost_report(std::span<const PolicyOutcome> outcomes, std::span<const PolicyOutcome> baseline) {
  std::vector<std::string> a, b;
  for (const auto& o : outcomes) a.push_back(o.question_id);
  for (const auto& o : baseline) b.push_back(o.question_id);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw std::invalid_argument("cost report over mismatched question sets");
  if (outcomes.empty()) throw std::invalid_argument("cost report over an empty question set");

  auto means = [](std::span<const PolicyOutcome> os) {
    double s = 0.0, r = 0.0;
    for (const auto& o : os) {
      s += static_cast<double>(o.samples_used);
      r += static_cast<double>(o.rounds_used);
    }
    return std::pair{s / static_cast<double>(os.size()), r / static_cast<double>(os.size())};
  };
  const auto [s, r] = means(outcomes);
  const auto [bs, br] = means(baseline);
  CostReport rep;
  rep.mean_samples = s;
  rep.mean_rounds = r;
  rep.c_mem_proxy = s / bs;
  rep.c_time_proxy = r / br;
  rep.accuracy = mean_credit(outcomes);
  return rep;
}

/// "question_id,final_answer,credit,samples_used,rounds_used" rows.
inline std::string outcomes_to_csv(std::span<const PolicyOutcome> outcomes) {
  std::string out = "question_id,final_answer,credit,samples_used,rounds_used\n";
  for (const auto& o : outcomes) {
    out += o.question_id + ',';
    if (o.final_answer) out += std::to_string(*o.final_answer);
    out += ',' + format_double(o.credit) + ',' + std::to_string(o.samples_used) + ',' +
           std::to_string(o.rounds_used) + '\n';
  }
  return out;
}

}  // namespace overscale
