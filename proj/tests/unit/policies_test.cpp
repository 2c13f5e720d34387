#include <gtest/gtest.h>

#include <random>

#include "overscale/categorical.hpp"
#include "overscale/metrics.hpp"
#include "overscale/policies.hpp"
#include "test_util.hpp"

using namespace overscale;

namespace {

QuestionTrace trace(std::string id, GoldAnswer gold, std::vector<AnswerId> draws) {
  QuestionTrace t;
  t.question_id = std::move(id);
  t.gold = gold;
  t.draws = std::move(draws);
  return t;
}

TraceDataset dataset(std::vector<QuestionTrace> ts) {
  TraceDataset ds;
  ds.n_max = ts.front().draws.size();
  ds.traces = std::move(ts);
  return ds;
}

std::vector<AnswerId> alternating(std::size_t n) {
  std::vector<AnswerId> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<AnswerId>(i % 2);
  return v;
}

}  // namespace

TEST(PrefixCurve, IncrementalMatchesDirectVote) {
  std::mt19937_64 gen(2);
  for (int rep = 0; rep < 20; ++rep) {
    const auto t = testutil::random_trace(gen, 25, 4);
    for (auto tie : {TieRule::FirstSeen, TieRule::Fractional}) {
      const auto c = prefix_vote_curve(t, tie);
      EXPECT_EQ(c.meta.method, CurveMethod::Prefix);
      for (std::size_t n = 1; n <= 25; ++n) {
        EXPECT_EQ(c.at(n), majority_vote(std::span(t.draws).first(n), t.gold, tie));
      }
    }
  }
}

TEST(StdPt, PrefixVote) {
  const auto ds = dataset({trace("a", 1, {0, 1, 1, 0, 0}), trace("b", 0, {0, 1, 1, 1, 1})});
  auto o = run_std_pt(ds, 1);
  EXPECT_EQ(o[0].credit, 0.0);
  EXPECT_EQ(o[1].credit, 1.0);
  o = run_std_pt(ds, 5);
  EXPECT_EQ(o[0].credit, 0.0);
  EXPECT_EQ(o[0].samples_used, 5u);
  EXPECT_EQ(o[0].rounds_used, 1u);
  EXPECT_EQ(*o[1].final_answer, 1u);
  EXPECT_THROW(run_std_pt(ds, 0), std::out_of_range);
  EXPECT_THROW(run_std_pt(ds, 6), std::out_of_range);
}

TEST(Oracle, UsesOwnOptimum) {
  const auto ds = dataset({trace("t1", 0, std::vector<AnswerId>(8, 0)), trace("t2", std::nullopt, std::vector<AnswerId>(8, 0)),
                           trace("up", 0, {1, 0, 0, 0, 0, 0, 0, 0})});
  const auto curves = prefix_vote_curves(ds);
  const auto o = run_oracle(ds, curves);
  EXPECT_EQ(o[0].samples_used, 1u);
  EXPECT_EQ(o[0].credit, 1.0);
  EXPECT_EQ(o[1].samples_used, 1u);
  EXPECT_EQ(o[1].credit, 0.0);
  EXPECT_EQ(o[2].samples_used, 3u);  // first-seen tie at 2 still favours the first answer
  EXPECT_EQ(o[2].credit, 1.0);
  EXPECT_THROW(run_oracle(ds, std::span(curves).first(2)), std::invalid_argument);
}

TEST(Oracle, DominatesStdPtAtSystemOptimum) {
  SynthSpec spec;
  spec.counts = {5, 5, 10, 10, 5};
  spec.n_max = 48;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    spec.seed = seed;
    const auto ds = synth_dataset(spec).dataset;
    const auto curves = prefix_vote_curves(ds);
    const auto n_d = system_optimal_n(curves);
    const auto oracle = run_oracle(ds, curves);
    const auto std_pt = run_std_pt(ds, n_d);
    EXPECT_GE(mean_credit(oracle), mean_credit(std_pt) - 1e-12);
    const auto rep = cost_report(oracle, std_pt);
    EXPECT_DOUBLE_EQ(rep.c_mem_proxy, overscaling_index(curves).index);
  }
}

TEST(Ac, UnanimousStopsAtFour) {
  const auto ds = dataset({trace("u", 0, std::vector<AnswerId>(64, 0))});
  const auto o = run_ac(ds, 40, 0.95);
  EXPECT_EQ(o[0].samples_used, 4u);
  EXPECT_EQ(o[0].rounds_used, 4u);
  EXPECT_EQ(o[0].credit, 1.0);
  // 0.9375 at three draws is the first value to clear 0.93.
  EXPECT_EQ(run_ac(ds, 40, 0.93)[0].samples_used, 3u);
}

TEST(Ac, AlternatingNeverConfident) {
  const auto ds = dataset({trace("alt", 0, alternating(64))});
  EXPECT_EQ(run_ac(ds, 40, 0.95)[0].samples_used, 40u);
  EXPECT_EQ(run_ac(ds, 100, 0.95)[0].samples_used, 64u);  // capped at N_max
  EXPECT_THROW(run_ac(ds, 0, 0.95), std::invalid_argument);
}

TEST(Ac, MoreLeaderDrawsNeverCostMore) {
  // Two answers with 0 leading every prefix; turning runner-up draws into
  // leader draws can only raise the confidence at every prefix.
  std::mt19937_64 gen(8);
  int checked = 0;
  for (int rep = 0; rep < 400; ++rep) {
    std::vector<AnswerId> d(40);
    for (auto& a : d) a = gen() % 5 < 3 ? 0 : 1;
    int lead = 0;
    bool leads = true;
    for (auto a : d) {
      lead += a == 0 ? 1 : -1;
      leads = leads && lead >= 0;
    }
    if (!leads) continue;
    auto better = d;
    for (auto& a : better) {
      if (a == 1 && gen() % 3 == 0) a = 0;
    }
    if (std::count(better.begin(), better.end(), 1u) == 0) continue;
    const auto o = run_ac(dataset({trace("a", 0, d), trace("b", 0, better)}), 40, 0.95);
    EXPECT_LE(o[1].samples_used, o[0].samples_used);
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

TEST(Esc, UnanimousWindowStops) {
  std::vector<AnswerId> d(40, 1);
  for (std::size_t i = 0; i < 5; ++i) d[i] = 0;
  const auto ds = dataset({trace("u", 0, d)});
  const auto o = run_esc(ds, 5, 40);
  EXPECT_EQ(o[0].samples_used, 5u);
  EXPECT_EQ(o[0].rounds_used, 1u);
  EXPECT_EQ(o[0].credit, 1.0);
  EXPECT_EQ(run_esc(dataset({trace("x", 0, alternating(40))}), 1, 40)[0].samples_used, 1u);
}

TEST(Esc, AlternatingUsesWholeBudget) {
  const auto ds = dataset({trace("alt", 1, alternating(64))});
  const auto o = run_esc(ds, 5, 40);
  EXPECT_EQ(o[0].samples_used, 40u);
  EXPECT_EQ(o[0].rounds_used, 8u);
  EXPECT_EQ(*o[0].final_answer, 0u);  // 20-20 tie, answer 0 seen first
  // Partial last window: L = 42 takes 8 full windows and one of 2.
  const auto p = run_esc(ds, 5, 42);
  EXPECT_EQ(p[0].samples_used, 42u);
  EXPECT_EQ(p[0].rounds_used, 9u);
  EXPECT_THROW(run_esc(ds, 5, 4), std::invalid_argument);
}

TEST(Dsc, AllUnanimousStopsScanAfterK) {
  std::vector<QuestionTrace> ts;
  for (int q = 0; q < 10; ++q) ts.push_back(trace("q" + std::to_string(q), 0, std::vector<AnswerId>(40, 0)));
  const auto o = run_dsc(dataset(ts), 4, 3, 40);
  // Equal difficulty keeps input order; the first three are scanned.
  for (int q = 0; q < 3; ++q) EXPECT_EQ(o[q].samples_used, 4u);
  for (int q = 3; q < 10; ++q) EXPECT_EQ(o[q].samples_used, 1u);
}

TEST(Dsc, NoUnanimityDoublesToCap) {
  const auto o = run_dsc(dataset({trace("a", 0, alternating(64)), trace("b", 1, alternating(64))}), 4, 32, 40);
  for (const auto& r : o) {
    EXPECT_EQ(r.samples_used, 40u);
    EXPECT_EQ(r.rounds_used, 10u);  // blocks of 4: 1 + 1 + 2 + 4 + 2 (cut by the cap)
  }
}

TEST(Dsc, DoublingStopsOnUnanimousNewestBlock) {
  // First block mixed, second block unanimous: 8 draws, 2 blocks.
  std::vector<AnswerId> d(40, 0);
  d[1] = 1;
  const auto o = run_dsc(dataset({trace("a", 0, d)}), 4, 32, 40);
  EXPECT_EQ(o[0].samples_used, 8u);
  EXPECT_EQ(o[0].rounds_used, 2u);
  // Mixed, mixed, then unanimous blocks 3-4: doubling goes 1 -> 2 -> 4 blocks.
  std::vector<AnswerId> e(40, 0);
  e[1] = 1;
  e[5] = 1;
  const auto p = run_dsc(dataset({trace("b", 0, e)}), 4, 32, 40);
  EXPECT_EQ(p[0].samples_used, 16u);
  EXPECT_EQ(p[0].rounds_used, 4u);
}

TEST(Dsc, DifficultyOrdering) {
  // Hardest first: the field overrides the proxy.
  auto easy = trace("easy", 0, std::vector<AnswerId>(40, 0));
  auto hard = trace("hard", 0, std::vector<AnswerId>(40, 0));
  easy.difficulty = 0.1;
  hard.difficulty = 0.9;
  const auto o = run_dsc(dataset({easy, hard}), 4, 1, 40);
  EXPECT_EQ(o[1].samples_used, 4u);  // scanned first, stops the scan
  EXPECT_EQ(o[0].samples_used, 1u);
  EXPECT_DOUBLE_EQ(difficulty_of(trace("p", 0, {0, 0, 1, 2})), 0.5);
}

TEST(T2, RoundsAndRange) {
  const auto ds = dataset({trace("a", 0, {1, 0, 0, 0}), trace("b", 0, {0, 0, 0, 0})});
  const std::vector<std::size_t> est{3, 4};
  const auto o = run_t2(ds, est);
  for (const auto& r : o) EXPECT_EQ(r.rounds_used, 1u);
  EXPECT_EQ(o[0].samples_used, 3u);
  const std::vector<std::size_t> bad{0, 4};
  EXPECT_THROW(run_t2(ds, bad), std::out_of_range);
  // Equal budgets reproduce Std-PT.
  const std::vector<std::size_t> two{2, 2};
  EXPECT_EQ(run_t2(ds, two), run_std_pt(ds, 2));
}

TEST(Cost, RatiosAndMismatch) {
  const auto ds = dataset({trace("a", 0, std::vector<AnswerId>(40, 0)), trace("b", 0, alternating(40))});
  const auto base = run_std_pt(ds, 10);
  const auto self = cost_report(base, base);
  EXPECT_EQ(self.c_mem_proxy, 1.0);
  EXPECT_EQ(self.c_time_proxy, 1.0);
  const auto ac = cost_report(run_ac(ds, 40, 0.95), base);
  EXPECT_DOUBLE_EQ(ac.mean_samples, (4.0 + 40.0) / 2.0);
  EXPECT_DOUBLE_EQ(ac.c_time_proxy, 22.0);
  const auto other = run_std_pt(dataset({trace("z", 0, {0, 0})}), 1);
  EXPECT_THROW(cost_report(other, base), std::invalid_argument);
}

TEST(Cost, OutcomeCsv) {
  const auto ds = dataset({trace("a", std::nullopt, {0, 0})});
  EXPECT_EQ(outcomes_to_csv(run_std_pt(ds, 2)),
            "question_id,final_answer,credit,samples_used,rounds_used\na,0,0,2,1\n");
}
