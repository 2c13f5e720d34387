#include <gtest/gtest.h>

#include <cmath>

#include "overscale/taxonomy.hpp"

using namespace overscale;

namespace {

BudgetAccuracyCurve curve(std::vector<double> v) { return {std::move(v), {}}; }

BudgetAccuracyCurve from_fn(std::size_t n_max, double (*f)(double)) {
  std::vector<double> v;
  for (std::size_t n = 1; n <= n_max; ++n) v.push_back(f(static_cast<double>(n)));
  return curve(v);
}

}  // namespace

TEST(Taxonomy, ConstantCurves) {
  EXPECT_EQ(classify(curve(std::vector<double>(16, 1.0))), SampleType::AlwaysCorrect);
  EXPECT_EQ(classify(curve(std::vector<double>(16, 0.0))), SampleType::AlwaysWrong);
  // Precedence: a flat curve passes both monotone tests but is not type 3/4.
  EXPECT_EQ(classify(curve(std::vector<double>(4, 1.0))), SampleType::AlwaysCorrect);
}

TEST(Taxonomy, MonotoneShapes) {
  EXPECT_EQ(classify(from_fn(64, [](double n) { return 1.0 - std::exp(-n / 10); })), SampleType::ApproxIncreasing);
  EXPECT_EQ(classify(from_fn(64, [](double n) { return std::exp(-n / 10); })), SampleType::ApproxDecreasing);
}

TEST(Taxonomy, OscillatingIsNonMonotonic) {
  // Period 2 * step: lagged differences alternate in sign.
  const auto c = from_fn(64, [](double n) { return 0.5 + 0.3 * std::sin(n * 3.14159265358979 / 8.0); });
  EXPECT_EQ(classify(c), SampleType::NonMonotonic);
}

TEST(Taxonomy, BothDirectionsUseNetChange) {
  // Mostly flat with one step up: every lagged difference is >= 0 and 87% are
  // exactly 0, so both tests pass; the net change decides.
  std::vector<double> v(16, 0.2);
  for (std::size_t i = 14; i < 16; ++i) v[i] = 0.4;
  EXPECT_EQ(classify(curve(v)), SampleType::ApproxIncreasing);
  std::vector<double> d(16, 0.4);
  for (std::size_t i = 14; i < 16; ++i) d[i] = 0.2;
  EXPECT_EQ(classify(curve(d)), SampleType::ApproxDecreasing);
}

TEST(Taxonomy, StepBounds) {
  const auto c = curve({0.1, 0.2, 0.3});
  MonotonicityParams p;
  p.step = 3;
  EXPECT_THROW(approx_monotone(c, 1, p), std::invalid_argument);
  EXPECT_EQ(classify(c, p), SampleType::NonMonotonic);
  EXPECT_THROW(approx_monotone(c, 0, {}), std::invalid_argument);
  EXPECT_EQ(MonotonicityParams{}.step_for(128), 11u);
}

TEST(Taxonomy, ThresholdCountsAgreeingPairs) {
  // step 1, 10 pairs, 8 up and 2 down: exactly at the 0.8 threshold.
  const auto c = curve({0, 1, 2, 1, 2, 3, 4, 3, 4, 5, 6});
  MonotonicityParams p;
  p.step = 1;
  EXPECT_TRUE(approx_monotone(c, 1, p));
  p.threshold = 0.81;
  EXPECT_FALSE(approx_monotone(c, 1, p));
}

TEST(Taxonomy, PartitionProportions) {
  std::vector<SampleType> t{SampleType::AlwaysCorrect, SampleType::ApproxIncreasing, SampleType::ApproxIncreasing,
                            SampleType::NonMonotonic};
  const auto p = partition(t);
  EXPECT_DOUBLE_EQ(p.proportions[0], 0.25);
  EXPECT_DOUBLE_EQ(p.proportions[3], 0.5);
  EXPECT_EQ(p.members[3], (std::vector<std::size_t>{1, 2}));
  double s = 0;
  for (double x : p.proportions) s += x;
  EXPECT_DOUBLE_EQ(s, 1.0);
  EXPECT_THROW(partition(std::vector<SampleType>{}), std::invalid_argument);
  EXPECT_THROW(sample_type_from_number(6), std::invalid_argument);
}
