#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "overscale/canonical_json.hpp"
#include "overscale/categorical.hpp"
#include "overscale/trace_io.hpp"
#include "overscale/metrics.hpp"
#include "overscale/policies.hpp"
#include "overscale/taxonomy.hpp"
#include "overscale/trace.hpp"
#include "overscale/vote.hpp"

namespace overscale {

/// Finite numbers as-is; infinities and NaN as strings so the canonical writer
/// accepts them.
inline ordered_json number_or_tag(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline ordered_json curves_to_json(const TraceDataset& ds, std::span<const BudgetAccuracyCurve> curves,
                                   const ordered_json& config) {
  ordered_json j = ordered_json::object();
  j["config"] = config;
  j["n_max"] = ds.n_max;
  ordered_json arr = ordered_json::array();
  for (std::size_t q = 0; q < curves.size(); ++q) {
    ordered_json c = ordered_json::object();
    c["question_id"] = ds.traces[q].question_id;
    c["method"] = to_string(curves[q].meta.method);
    c["m_draws"] = curves[q].meta.m_draws;
    c["seed"] = curves[q].meta.seed;
    c["values"] = curves[q].values;
    arr.push_back(std::move(c));
  }
  j["curves"] = std::move(arr);
  return j;
}

struct Analysis {
  std::vector<SampleType> types;
  Partition part;
  Theorem1Report theorem1;
};

inline Analysis analyze_curves(std::span<const BudgetAccuracyCurve> curves, const MonotonicityParams& params,
                               double eps_acc) {
  Analysis a;
  a.part = partition(curves, params);
  a.types = a.part.types;
  a.theorem1 = theorem1_check(curves, std::span<const SampleType>(a.types), eps_acc);
  return a;
}

inline ordered_json analysis_to_json(const TraceDataset& ds, const Analysis& a, const ordered_json& config) {
  const auto& ov = a.theorem1.overscaling;
  const auto& t1 = a.theorem1;
  ordered_json j = ordered_json::object();
  j["config"] = config;
  j["n_max"] = ds.n_max;
  j["questions"] = ds.traces.size();

  ordered_json taxonomy = ordered_json::object();
  taxonomy["proportions"] = a.part.proportions;
  ordered_json counts = ordered_json::array();
  for (const auto& m : a.part.members) counts.push_back(m.size());
  taxonomy["counts"] = std::move(counts);
  j["taxonomy"] = std::move(taxonomy);

  ordered_json o = ordered_json::object();
  o["n_star_dataset"] = ov.n_star_dataset;
  o["n_system"] = ov.n_system;
  o["overscaling_index"] = ov.index;
  o["overscaled"] = ov.index < 1.0;
  ordered_json per_type = ordered_json::array();
  for (const auto& v : ov.per_type_n_star) per_type.push_back(v ? ordered_json(*v) : ordered_json(nullptr));
  o["per_type_n_star"] = std::move(per_type);
  j["overscaling"] = std::move(o);

  ordered_json th = ordered_json::object();
  th["kappa"] = t1.inputs.kappa;
  th["delta"] = number_or_tag(t1.inputs.delta);
  th["p4"] = t1.inputs.p4;
  th["n_star_d4"] = t1.inputs.n_star_d4;
  th["gain_budget"] = t1.inputs.n_star_d4_grid;
  th["indicator"] = t1.indicator;
  th["phi"] = t1.phi;
  th["m_d"] = t1.m_d;
  th["assumptions_met"] = t1.assumptions_met;
  th["holds"] = t1.holds;
  th["class_n_star"] = t1.class_n_star;
  th["gain_to_n4"] = t1.gain_to_n4;
  th["gain_after_n4"] = t1.gain_after_n4;
  j["theorem1"] = std::move(th);

  ordered_json qs = ordered_json::array();
  for (std::size_t q = 0; q < ds.traces.size(); ++q) {
    ordered_json e = ordered_json::object();
    e["question_id"] = ds.traces[q].question_id;
    e["type"] = type_number(a.types[q]);
    e["n_star"] = ov.n_star[q];
    qs.push_back(std::move(e));
  }
  j["per_question"] = std::move(qs);
  j["mean_accuracy"] = ov.mean_accuracy;
  return j;
}

/// "question_id,type,n_star"
inline std::string partition_csv(const TraceDataset& ds, const Analysis& a) {
  std::string out = "question_id,type,n_star\n";
  for (std::size_t q = 0; q < ds.traces.size(); ++q) {
    out += ds.traces[q].question_id + ',' + std::to_string(type_number(a.types[q])) + ',' +
           std::to_string(a.theorem1.overscaling.n_star[q]) + '\n';
  }
  return out;
}

/// Type breakdown: "type,count,proportion,mean_n_star" (empty mean when the class is empty).
inline std::string type_table_csv(const Analysis& a) {
  std::string out = "type,count,proportion,mean_n_star\n";
  for (auto t : kAllSampleTypes) {
    const auto k = type_index(t);
    const auto& ns = a.theorem1.overscaling.per_type_n_star[k];
    out += std::to_string(type_number(t)) + ',' + std::to_string(a.part.members[k].size()) + ',' +
           format_double(a.part.proportions[k]) + ',' + (ns ? format_double(*ns) : std::string()) + '\n';
  }
  return out;
}

/// Dataset-mean curve plus per-type class means: "N,mean,type1,...,type5".
inline std::string mean_curve_csv(std::span<const BudgetAccuracyCurve> curves, const Analysis& a) {
  std::string out = "N,mean,type1,type2,type3,type4,type5\n";
  const auto& mean = a.theorem1.overscaling.mean_accuracy;
  std::array<std::vector<double>, 5> cls;
  for (auto t : kAllSampleTypes) {
    const auto k = type_index(t);
    if (!a.part.members[k].empty()) cls[k] = mean_curve(curves, a.part.members[k]);
  }
  for (std::size_t n = 1; n <= mean.size(); ++n) {
    out += std::to_string(n) + ',' + format_double(mean[n - 1]);
    for (const auto& c : cls) out += ',' + (c.empty() ? std::string() : format_double(c[n - 1]));
    out += '\n';
  }
  return out;
}

inline std::string index_csv_header() { return "dataset,questions,n_star_dataset,n_system,overscaling_index,phi,holds\n"; }

/// One row of the per-dataset overscaling summary.
inline std::string index_csv_row(const std::string& name, const TraceDataset& ds, const Analysis& a) {
  const auto& ov = a.theorem1.overscaling;
  return name + ',' + std::to_string(ds.traces.size()) + ',' + format_double(ov.n_star_dataset) + ',' +
         std::to_string(ov.n_system) + ',' + format_double(ov.index) + ',' + format_double(a.theorem1.phi) + ',' +
         (a.theorem1.holds ? "true" : "false") + '\n';
}

inline ordered_json cost_to_json(const CostReport& c) {
  ordered_json j = ordered_json::object();
  j["c_mem"] = c.c_mem_proxy;
  j["c_time"] = c.c_time_proxy;
  j["accuracy"] = c.accuracy;
  j["mean_samples"] = c.mean_samples;
  j["mean_rounds"] = c.mean_rounds;
  return j;
}

inline ordered_json synth_spec_to_json(const SynthSpec& s) {
  ordered_json j = ordered_json::object();
  j["counts"] = s.counts;
  j["n_max"] = s.n_max;
  j["seed"] = s.seed;
  j["decreasing_margin"] = {s.decreasing_margin.lo, s.decreasing_margin.hi};
  j["increasing_margin"] = {s.increasing_margin.lo, s.increasing_margin.hi};
  j["nonmonotonic_gap"] = s.nonmonotonic_gap;
  j["max_answers"] = s.max_answers;
  return j;
}

/// "counts" is required; every other field falls back to the SynthSpec default.
inline SynthSpec synth_spec_from_json(const ordered_json& j) {
  detail::FieldReader r{"synth spec"};
  if (!j.is_object()) r.fail("<root>", "expected an object");
  SynthSpec s;
  const auto& counts = r.require(j, "counts");
  if (!counts.is_array() || counts.size() != 5) r.fail("counts", "expected 5 per-type counts");
  for (std::size_t k = 0; k < 5; ++k) {
    const auto c = r.integer(counts[k], "counts");
    if (c < 0) r.fail("counts", "must be >= 0");
    s.counts[k] = static_cast<std::size_t>(c);
  }
  auto count_field = [&](const char* name, std::size_t& dst) {
    if (auto it = j.find(name); it != j.end()) {
      const auto v = r.integer(*it, name);
      if (v < 1) r.fail(name, "must be >= 1");
      dst = static_cast<std::size_t>(v);
    }
  };
  count_field("n_max", s.n_max);
  count_field("max_answers", s.max_answers);
  if (auto it = j.find("seed"); it != j.end()) s.seed = static_cast<std::uint64_t>(r.integer(*it, "seed"));
  auto range_field = [&](const char* name, Range& dst) {
    if (auto it = j.find(name); it != j.end()) {
      const auto v = r.numbers(*it, name);
      if (v.size() != 2) r.fail(name, "expected [lo, hi]");
      dst = {v[0], v[1]};
    }
  };
  range_field("decreasing_margin", s.decreasing_margin);
  range_field("increasing_margin", s.increasing_margin);
  if (auto it = j.find("nonmonotonic_gap"); it != j.end()) s.nonmonotonic_gap = r.number(*it, "nonmonotonic_gap");
  try {
    validate_synth_spec(s);
  } catch (const std::invalid_argument& e) {
    r.fail("<spec>", e.what());
  }
  return s;
}

/// "question_id,intended_type"
inline std::string intended_types_csv(const SynthDataset& sd) {
  std::string out = "question_id,intended_type\n";
  for (std::size_t q = 0; q < sd.intended.size(); ++q) {
    out += sd.dataset.traces[q].question_id + ',' + std::to_string(type_number(sd.intended[q])) + '\n';
  }
  return out;
}

}  // namespace overscale
