#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "overscale/errors.hpp"

namespace overscale {

/// Dense per-question index of a canonical answer.
using AnswerId = std::uint32_t;

/// Gold answer; std::nullopt when the gold answer was never sampled.
using GoldAnswer = std::optional<AnswerId>;

struct SamplingConfig {
  int top_k = 20;
  double top_p = 0.95;
  double temperature = 0.6;
  std::string model_name = "synthetic";
  std::int64_t seed = 0;

  bool operator==(const SamplingConfig&) const = default;
};

/// One question's recorded answers. `draws` holds N_max canonical answer ids
/// in decode order.
struct QuestionTrace {
  std::string question_id;
  GoldAnswer gold;
  std::vector<AnswerId> draws;
  std::optional<std::vector<double>> confidences;
  std::optional<double> difficulty;
  std::optional<std::map<AnswerId, std::string>> answer_labels;

  std::size_t n_max() const noexcept { return draws.size(); }

  /// Number of distinct answers (ids are dense, so this is max id + 1).
  std::size_t num_answers() const noexcept {
    AnswerId m = 0;
    for (AnswerId a : draws) m = std::max<AnswerId>(m, a + 1);
    return m;
  }

  bool operator==(const QuestionTrace&) const = default;
};

struct TraceDataset {
  std::vector<QuestionTrace> traces;
  SamplingConfig sampling_config;
  std::size_t n_max = 1;

  bool operator==(const TraceDataset&) const = default;
};

/// Last-token hidden states of one question, one vector per layer.
struct LayerFeatureSet {
  std::string question_id;
  std::vector<std::vector<double>> layer_vectors;
  std::optional<double> label;

  bool operator==(const LayerFeatureSet&) const = default;
};

struct FeatureDataset {
  std::size_t n_max = 1;
  SamplingConfig sampling_config;
  std::size_t layers = 1;
  std::size_t dim = 1;
  std::vector<LayerFeatureSet> records;

  bool operator==(const FeatureDataset&) const = default;
};

/// c[j] = number of draws equal to j; length is the number of distinct answers.
inline std::vector<std::size_t> answer_counts(const QuestionTrace& trace) {
  std::vector<std::size_t> counts(trace.num_answers(), 0);
  for (AnswerId a : trace.draws) ++counts[a];
  return counts;
}

/// Throws SchemaError naming the question and field when `trace` breaks an
/// invariant. `expected_n_max` of 0 skips the length check.
inline void validate_trace(const QuestionTrace& trace, std::size_t expected_n_max = 0) {
  auto fail = [&](const std::string& field, const std::string& what) {
    throw SchemaError("trace '" + trace.question_id + "', field '" + field + "': " + what);
  };
  if (trace.draws.empty()) fail("draws", "must contain at least one draw");
  if (expected_n_max != 0 && trace.draws.size() != expected_n_max) {
    fail("draws", "has " + std::to_string(trace.draws.size()) + " entries but n_max is " +
                      std::to_string(expected_n_max));
  }
  const std::size_t m = trace.num_answers();
  std::vector<bool> seen(m, false);
  for (AnswerId a : trace.draws) seen[a] = true;
  for (std::size_t j = 0; j < m; ++j) {
    if (!seen[j]) fail("draws", "answer ids are not dense: id " + std::to_string(j) + " never drawn");
  }
  if (trace.gold && *trace.gold >= m) {
    fail("gold", "id " + std::to_string(*trace.gold) + " never drawn; use null for an unsampled gold");
  }
  if (trace.confidences) {
    if (trace.confidences->size() != trace.draws.size()) fail("confidences", "length differs from draws");
    for (double c : *trace.confidences) {
      if (!(c >= 0.0 && c <= 1.0)) fail("confidences", "value outside [0,1]");
    }
  }
  if (trace.answer_labels) {
    for (const auto& [id, label] : *trace.answer_labels) {
      if (id >= m) fail("answer_labels", "id " + std::to_string(id) + " out of range");
    }
  }
}

inline void validate_dataset(const TraceDataset& ds) {
  if (ds.n_max < 1) throw SchemaError("n_max must be >= 1");
  std::unordered_set<std::string> ids;
  for (const auto& t : ds.traces) {
    validate_trace(t, ds.n_max);
    if (!ids.insert(t.question_id).second) {
      throw SchemaError("trace '" + t.question_id + "', field 'question_id': duplicate id");
    }
  }
}

inline void validate_features(const FeatureDataset& fs) {
  if (fs.layers < 1) throw SchemaError("layers must be >= 1");
  if (fs.dim < 1) throw SchemaError("dim must be >= 1");
  std::unordered_set<std::string> ids;
  for (const auto& r : fs.records) {
    auto fail = [&](const std::string& field, const std::string& what) {
      throw SchemaError("record '" + r.question_id + "', field '" + field + "': " + what);
    };
    if (!ids.insert(r.question_id).second) fail("question_id", "duplicate id");
    if (r.layer_vectors.size() != fs.layers) fail("vectors", "expected " + std::to_string(fs.layers) + " layers");
    for (const auto& v : r.layer_vectors) {
      if (v.size() != fs.dim) fail("vectors", "expected dimension " + std::to_string(fs.dim));
    }
    if (r.label && !(*r.label >= 0.0 && *r.label <= 1.0)) fail("label", "outside [0,1]");
  }
}

}  // namespace overscale
