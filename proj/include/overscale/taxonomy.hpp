#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "overscale/vote.hpp"

namespace overscale {

/// Five-way partition of budget-accuracy curves.
enum class SampleType {
  AlwaysCorrect = 1,         // A(N) == 1
  AlwaysWrong = 2,           // A(N) == 0
  ApproxDecreasing = 3,
  ApproxIncreasing = 4,
  NonMonotonic = 5,
};

inline constexpr std::array<SampleType, 5> kAllSampleTypes = {
    SampleType::AlwaysCorrect, SampleType::AlwaysWrong, SampleType::ApproxDecreasing, SampleType::ApproxIncreasing,
    SampleType::NonMonotonic};

/// 0-based slot for per-type arrays.
constexpr std::size_t type_index(SampleType t) noexcept { return static_cast<std::size_t>(t) - 1; }

constexpr int type_number(SampleType t) noexcept { return static_cast<int>(t); }

inline SampleType sample_type_from_number(int n) {
  if (n < 1 || n > 5) throw std::invalid_argument("sample type must be in 1..5, got " + std::to_string(n));
  return static_cast<SampleType>(n);
}

struct MonotonicityParams {
  std::size_t step = 0;  // 0 means floor(sqrt(N_max))
  double threshold = 0.80;
  double const_tol = 1e-9;

  std::size_t step_for(std::size_t n_max) const {
    return step != 0 ? step : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_max))));
  }
};

/// Fraction of lagged differences A(i+s) - A(i), i = 1..N_max-s, whose sign
/// agrees with `direction` (zero counts as agreeing), compared to threshold.
inline bool approx_monotone(const BudgetAccuracyCurve& curve, int direction, const MonotonicityParams& params = {}) {
  if (direction != 1 && direction != -1) throw std::invalid_argument("direction must be +1 or -1");
  const std::size_t n_max = curve.n_max();
  const std::size_t s = params.step_for(n_max);
  if (s < 1 || s >= n_max) {
    throw std::invalid_argument("monotonicity step " + std::to_string(s) + " must be in [1, N_max) with N_max = " +
                                std::to_string(n_max));
  }
  const std::size_t pairs = n_max - s;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double diff = curve.values[i + s] - curve.values[i];
    if (direction * diff >= 0.0) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(pairs) >= params.threshold;
}

/// Precedence: constant-one, constant-zero, then one-sided monotonicity. A
/// curve passing both directions is assigned by the sign of A(N_max) - A(1).
inline SampleType classify(const BudgetAccuracyCurve& curve, const MonotonicityParams& params = {}) {
  bool all_one = true;
  bool all_zero = true;
  for (double v : curve.values) {
    all_one = all_one && v >= 1.0 - params.const_tol;
    all_zero = all_zero && v <= params.const_tol;
  }
  if (all_one) return SampleType::AlwaysCorrect;
  if (all_zero) return SampleType::AlwaysWrong;

  const std::size_t s = params.step_for(curve.n_max());
  if (s < 1 || s >= curve.n_max()) return SampleType::NonMonotonic;

  const bool up = approx_monotone(curve, +1, params);
  const bool down = approx_monotone(curve, -1, params);
  if (up && !down) return SampleType::ApproxIncreasing;
  if (down && !up) return SampleType::ApproxDecreasing;
  if (up && down) {
    const double net = curve.values.back() - curve.values.front();
    if (net > 0.0) return SampleType::ApproxIncreasing;
    if (net < 0.0) return SampleType::ApproxDecreasing;
  }
  return SampleType::NonMonotonic;
}

struct Partition {
  std::array<double, 5> proportions{};
  std::array<std::vector<std::size_t>, 5> members;  // indices into the input
  std::vector<SampleType> types;                     // per input curve
};

inline Partition partition(std::span<const SampleType> types) {
  if (types.empty()) throw std::invalid_argument("partition of an empty curve set");
  Partition p;
  p.types.assign(types.begin(), types.end());
  for (std::size_t i = 0; i < types.size(); ++i) p.members[type_index(types[i])].push_back(i);
  for (std::size_t k = 0; k < 5; ++k) {
    p.proportions[k] = static_cast<double>(p.members[k].size()) / static_cast<double>(types.size());
  }
  return p;
}

inline Partition partition(std::span<const BudgetAccuracyCurve> curves, const MonotonicityParams& params = {}) {
  std::vector<SampleType> types;
  types.reserve(curves.size());
  for (const auto& c : curves) types.push_back(classify(c, params));
  return partition(types);
}

}  // namespace overscale
