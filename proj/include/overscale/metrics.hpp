#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "overscale/taxonomy.hpp"
#include "overscale/vote.hpp"

namespace overscale {

inline constexpr double kDefaultEpsAcc = 1e-9;

struct OptimalN {
  std::size_t n_star = 1;
  double max_acc = 0.0;
};

/// Smallest N whose accuracy is within eps_acc of the curve maximum.
inline OptimalN sample_optimal_n(std::span<const double> values, double eps_acc = kDefaultEpsAcc) {
  if (values.empty()) throw std::invalid_argument("empty curve");
  OptimalN r;
  r.max_acc = values[0];
  for (double v : values) r.max_acc = std::max(r.max_acc, v);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= r.max_acc - eps_acc) {
      r.n_star = i + 1;
      break;
    }
  }
  return r;
}

inline OptimalN sample_optimal_n(const BudgetAccuracyCurve& curve, double eps_acc = kDefaultEpsAcc) {
  return sample_optimal_n(curve.values, eps_acc);
}

/// Pointwise mean over curves (summed in input order).
inline std::vector<double> mean_curve(std::span<const BudgetAccuracyCurve> curves) {
  if (curves.empty()) throw std::invalid_argument("mean of an empty curve set");
  const std::size_t n_max = curves.front().n_max();
  std::vector<double> mean(n_max, 0.0);
  for (const auto& c : curves) {
    if (c.n_max() != n_max) throw std::invalid_argument("curves have different N_max");
    for (std::size_t i = 0; i < n_max; ++i) mean[i] += c.values[i];
  }
  for (double& v : mean) v /= static_cast<double>(curves.size());
  return mean;
}

inline std::vector<double> mean_curve(std::span<const BudgetAccuracyCurve> curves,
                                      std::span<const std::size_t> members) {
  std::vector<BudgetAccuracyCurve> subset;
  subset.reserve(members.size());
  for (auto i : members) subset.push_back(curves[i]);
  return mean_curve(subset);
}

/// N_D: smallest N maximizing the dataset-mean curve.
inline std::size_t system_optimal_n(std::span<const BudgetAccuracyCurve> curves, double eps_acc = kDefaultEpsAcc) {
  return sample_optimal_n(mean_curve(curves), eps_acc).n_star;
}

/// A(n2) - A(n1).
inline double gain(const BudgetAccuracyCurve& curve, std::size_t n1, std::size_t n2) {
  return curve.at(n2) - curve.at(n1);
}

inline double gain(std::span<const double> values, std::size_t n1, std::size_t n2) {
  if (n1 < 1 || n2 < 1 || n1 > values.size() || n2 > values.size()) throw std::out_of_range("gain budget out of range");
  return values[n2 - 1] - values[n1 - 1];
}

struct OverscalingReport {
  double n_star_dataset = 1.0;  // mean of per-question N*
  std::size_t n_system = 1;     // N_D
  double index = 1.0;           // n_star_dataset / n_system
  std::array<std::optional<double>, 5> per_type_n_star;  // empty class -> nullopt
  std::array<double, 5> proportions{};
  std::vector<std::size_t> n_star;  // per question
  std::vector<double> mean_accuracy;
};

inline OverscalingReport overscaling_index(std::span<const BudgetAccuracyCurve> curves,
                                           std::span<const SampleType> types, double eps_acc = kDefaultEpsAcc) {
  if (curves.empty()) throw std::invalid_argument("overscaling index of an empty dataset");
  if (types.size() != curves.size()) throw std::invalid_argument("one sample type per curve required");
  OverscalingReport r;
  r.mean_accuracy = mean_curve(curves);
  r.n_system = sample_optimal_n(r.mean_accuracy, eps_acc).n_star;
  std::array<double, 5> sums{};
  std::array<std::size_t, 5> sizes{};
  double total = 0.0;
  for (std::size_t q = 0; q < curves.size(); ++q) {
    const std::size_t ns = sample_optimal_n(curves[q], eps_acc).n_star;
    r.n_star.push_back(ns);
    total += static_cast<double>(ns);
    sums[type_index(types[q])] += static_cast<double>(ns);
    ++sizes[type_index(types[q])];
  }
  r.n_star_dataset = total / static_cast<double>(curves.size());
  r.index = r.n_star_dataset / static_cast<double>(r.n_system);
  for (std::size_t k = 0; k < 5; ++k) {
    r.proportions[k] = static_cast<double>(sizes[k]) / static_cast<double>(curves.size());
    if (sizes[k] > 0) r.per_type_n_star[k] = sums[k] / static_cast<double>(sizes[k]);
  }
  return r;
}

inline OverscalingReport overscaling_index(std::span<const BudgetAccuracyCurve> curves,
                                           const MonotonicityParams& params = {}, double eps_acc = kDefaultEpsAcc) {
  const auto part = partition(curves, params);
  return overscaling_index(curves, part.types, eps_acc);
}

/// Quantities entering the overscaling upper bound.
struct Theorem1Inputs {
  double kappa = 1.0;         // N*_{D3} + N*_{D5} - 1
  double delta = std::numeric_limits<double>::infinity();
  double p4 = 0.0;
  double n_star_d4 = 1.0;     // class mean of N* over type 4
  std::size_t n_star_d4_grid = 1;  // ceil(n_star_d4): where class gains are evaluated
};

struct Theorem1Report {
  Theorem1Inputs inputs;
  double phi = 1.0;
  double m_d = 1.0;
  bool indicator = false;  // p4 * delta > 1 - p4
  bool holds = true;
  bool assumptions_met = false;
  std::array<bool, 5> empty_class{};
  std::array<double, 5> class_n_star{};  // empty classes report 1
  std::array<double, 5> gain_to_n4{};    // Delta_{D_i}(1, N4)
  std::array<double, 5> gain_after_n4{}; // Delta_{D_i}(N4, N_max)
  OverscalingReport overscaling;
};

/// phi(p4) = (kappa + p4 (N4 - kappa)) / (1 + (N4 - 1) 1{p4 delta > 1 - p4}).
inline double overscaling_bound(double kappa, double delta, double p4, double n_star_d4, bool* fired = nullptr) {
  const bool ind = p4 > 0.0 && p4 * delta > 1.0 - p4;
  if (fired) *fired = ind;
  return (kappa + p4 * (n_star_d4 - kappa)) / (1.0 + (n_star_d4 - 1.0) * (ind ? 1.0 : 0.0));
}

/// Evaluates the overscaling upper bound on a classified dataset.
///
/// Class gains use the class-mean curves at the integer budget
/// ceil(N*_{D4}); empty classes contribute N* = 1 and zero gain. The ratio in
/// delta is +inf where the type-3 loss is zero, and N = ceil(N*_{D4}) itself
/// (a 0/0 term) is excluded from the infimum.
inline Theorem1Report theorem1_check(std::span<const BudgetAccuracyCurve> curves, std::span<const SampleType> types,
                                     double eps_acc = kDefaultEpsAcc) {
  if (curves.empty()) throw std::invalid_argument("theorem check on an empty dataset");
  Theorem1Report rep;
  rep.overscaling = overscaling_index(curves, types, eps_acc);
  const auto part = partition(types);
  const std::size_t n_max = curves.front().n_max();

  std::array<std::vector<double>, 5> class_curve;
  for (std::size_t k = 0; k < 5; ++k) {
    rep.empty_class[k] = part.members[k].empty();
    rep.class_n_star[k] = rep.overscaling.per_type_n_star[k].value_or(1.0);
    class_curve[k] = rep.empty_class[k] ? std::vector<double>(n_max, 0.0) : mean_curve(curves, part.members[k]);
  }

  auto& in = rep.inputs;
  const auto k3 = type_index(SampleType::ApproxDecreasing);
  const auto k4 = type_index(SampleType::ApproxIncreasing);
  const auto k5 = type_index(SampleType::NonMonotonic);
  in.kappa = rep.class_n_star[k3] + rep.class_n_star[k5] - 1.0;
  in.p4 = part.proportions[k4];
  in.n_star_d4 = rep.class_n_star[k4];
  in.n_star_d4_grid = std::min<std::size_t>(n_max, static_cast<std::size_t>(std::ceil(in.n_star_d4)));
  const std::size_t n4 = in.n_star_d4_grid;

  for (std::size_t k = 0; k < 5; ++k) {
    rep.gain_to_n4[k] = gain(class_curve[k], 1, n4);
    rep.gain_after_n4[k] = gain(class_curve[k], n4, n_max);
  }

  in.delta = std::numeric_limits<double>::infinity();
  if (!rep.empty_class[k3]) {
    for (std::size_t n = 1; n < n4; ++n) {
      const double loss = -gain(class_curve[k3], n, n4);
      if (loss <= 0.0) continue;
      in.delta = std::min(in.delta, gain(class_curve[k4], n, n4) / loss);
    }
  }

  bool ok = !rep.empty_class[k4];
  for (std::size_t n = 1; n <= n4 && ok; ++n) {
    for (auto k : {type_index(SampleType::AlwaysCorrect), type_index(SampleType::AlwaysWrong), k5}) {
      if (std::abs(gain(class_curve[k], n, n4)) > eps_acc) ok = false;
    }
    if (n < n4) {
      if (!(gain(class_curve[k4], n, n4) > 0.0)) ok = false;
      if (gain(class_curve[k3], n, n4) > 0.0) ok = false;
    }
  }
  rep.assumptions_met = ok;

  rep.phi = overscaling_bound(in.kappa, in.delta, in.p4, in.n_star_d4, &rep.indicator);
  rep.m_d = rep.overscaling.index;
  rep.holds = rep.m_d <= rep.phi + eps_acc;
  return rep;
}

inline Theorem1Report theorem1_check(std::span<const BudgetAccuracyCurve> curves,
                                     const MonotonicityParams& params = {}, double eps_acc = kDefaultEpsAcc) {
  const auto part = partition(curves, params);
  return theorem1_check(curves, part.types, eps_acc);
}

}  // namespace overscale
