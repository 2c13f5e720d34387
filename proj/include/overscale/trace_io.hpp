#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "overscale/canonical_json.hpp"
#include "overscale/trace.hpp"

namespace overscale {

inline constexpr int kFormatVersion = 1;

namespace detail {

struct FieldReader {
  std::string context;  // e.g. "trace 'q1'"

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw SchemaError(context + ", field '" + field + "': " + what);
  }

  const ordered_json& require(const ordered_json& obj, const std::string& field) const {
    if (!obj.is_object()) fail(field, "enclosing value is not an object");
    auto it = obj.find(field);
    if (it == obj.end()) fail(field, "missing");
    return *it;
  }

  std::int64_t integer(const ordered_json& v, const std::string& field) const {
    if (!v.is_number_integer()) fail(field, "expected an integer");
    return v.get<std::int64_t>();
  }

  double number(const ordered_json& v, const std::string& field) const {
    if (!v.is_number()) fail(field, "expected a number");
    return v.get<double>();
  }

  std::string string(const ordered_json& v, const std::string& field) const {
    if (!v.is_string()) fail(field, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const ordered_json& v, const std::string& field) const {
    if (!v.is_array()) fail(field, "expected an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) out.push_back(number(e, field));
    return out;
  }
};

inline ordered_json sampling_config_to_json(const SamplingConfig& c) {
  ordered_json j = ordered_json::object();
  j["top_k"] = c.top_k;
  j["top_p"] = c.top_p;
  j["temperature"] = c.temperature;
  j["model_name"] = c.model_name;
  j["seed"] = c.seed;
  return j;
}

inline SamplingConfig sampling_config_from_json(const ordered_json& j) {
  const FieldReader r{"sampling_config"};
  SamplingConfig c;
  const auto k = r.integer(r.require(j, "top_k"), "top_k");
  if (k < 1 || k > std::numeric_limits<int>::max()) r.fail("top_k", "must be a positive integer");
  c.top_k = static_cast<int>(k);
  c.top_p = r.number(r.require(j, "top_p"), "top_p");
  if (!(c.top_p > 0.0 && c.top_p <= 1.0)) r.fail("top_p", "must lie in (0,1]");
  c.temperature = r.number(r.require(j, "temperature"), "temperature");
  if (!(c.temperature > 0.0)) r.fail("temperature", "must be positive");
  c.model_name = r.string(r.require(j, "model_name"), "model_name");
  c.seed = r.integer(r.require(j, "seed"), "seed");
  return c;
}

inline std::size_t read_envelope(const ordered_json& root, const FieldReader& r) {
  if (!root.is_object()) r.fail("<root>", "expected an object");
  const auto version = r.integer(r.require(root, "format_version"), "format_version");
  if (version != kFormatVersion) r.fail("format_version", "unsupported version " + std::to_string(version));
  const auto n_max = r.integer(r.require(root, "n_max"), "n_max");
  if (n_max < 1) r.fail("n_max", "must be >= 1");
  return static_cast<std::size_t>(n_max);
}

}  // namespace detail

inline ordered_json trace_to_json(const QuestionTrace& t) {
  ordered_json j = ordered_json::object();
  j["question_id"] = t.question_id;
  j["gold"] = t.gold ? ordered_json(*t.gold) : ordered_json(nullptr);
  j["draws"] = t.draws;
  if (t.confidences) {
    ordered_json arr = ordered_json::array();
    for (double c : *t.confidences) arr.push_back(c);
    j["confidences"] = std::move(arr);
  }
  if (t.difficulty) j["difficulty"] = *t.difficulty;
  if (t.answer_labels) {
    ordered_json labels = ordered_json::object();
    for (const auto& [id, text] : *t.answer_labels) labels[std::to_string(id)] = text;
    j["answer_labels"] = std::move(labels);
  }
  return j;
}

inline QuestionTrace trace_from_json(const ordered_json& j, std::size_t index) {
  detail::FieldReader r{"trace #" + std::to_string(index)};
  QuestionTrace t;
  t.question_id = r.string(r.require(j, "question_id"), "question_id");
  r.context = "trace '" + t.question_id + "'";

  const auto& gold = r.require(j, "gold");
  if (!gold.is_null()) {
    const auto g = r.integer(gold, "gold");
    if (g < 0 || g > std::numeric_limits<AnswerId>::max()) r.fail("gold", "must be a non-negative id or null");
    t.gold = static_cast<AnswerId>(g);
  }

  const auto& draws = r.require(j, "draws");
  if (!draws.is_array()) r.fail("draws", "expected an array");
  t.draws.reserve(draws.size());
  for (const auto& d : draws) {
    const auto a = r.integer(d, "draws");
    if (a < 0 || a > std::numeric_limits<AnswerId>::max()) r.fail("draws", "ids must be non-negative");
    t.draws.push_back(static_cast<AnswerId>(a));
  }

  if (auto it = j.find("confidences"); it != j.end()) t.confidences = r.numbers(*it, "confidences");
  if (auto it = j.find("difficulty"); it != j.end()) t.difficulty = r.number(*it, "difficulty");
  if (auto it = j.find("answer_labels"); it != j.end()) {
    if (!it->is_object()) r.fail("answer_labels", "expected an object");
    std::map<AnswerId, std::string> labels;
    for (auto e = it->begin(); e != it->end(); ++e) {
      AnswerId id = 0;
      try {
        std::size_t used = 0;
        const unsigned long v = std::stoul(e.key(), &used);
        if (used != e.key().size() || v > std::numeric_limits<AnswerId>::max()) throw std::invalid_argument("");
        id = static_cast<AnswerId>(v);
      } catch (const std::exception&) {
        r.fail("answer_labels", "key '" + e.key() + "' is not an answer id");
      }
      labels[id] = r.string(e.value(), "answer_labels");
    }
    t.answer_labels = std::move(labels);
  }
  return t;
}

inline ordered_json dataset_to_json(const TraceDataset& ds) {
  ordered_json j = ordered_json::object();
  j["format_version"] = kFormatVersion;
  j["n_max"] = ds.n_max;
  j["sampling_config"] = detail::sampling_config_to_json(ds.sampling_config);
  ordered_json traces = ordered_json::array();
  for (const auto& t : ds.traces) traces.push_back(trace_to_json(t));
  j["traces"] = std::move(traces);
  return j;
}

inline TraceDataset dataset_from_json(const ordered_json& root) {
  const detail::FieldReader r{"trace file"};
  TraceDataset ds;
  ds.n_max = detail::read_envelope(root, r);
  ds.sampling_config = detail::sampling_config_from_json(r.require(root, "sampling_config"));
  const auto& traces = r.require(root, "traces");
  if (!traces.is_array()) r.fail("traces", "expected an array");
  ds.traces.reserve(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) ds.traces.push_back(trace_from_json(traces[i], i));
  validate_dataset(ds);
  return ds;
}

inline std::string serialize_traces(const TraceDataset& ds) { return to_canonical(dataset_to_json(ds)); }

inline TraceDataset load_traces(const std::string& path) { return dataset_from_json(parse_json_file(path)); }

inline void save_traces(const TraceDataset& ds, const std::string& path) {
  write_text_file(path, serialize_traces(ds));
}

inline ordered_json features_to_json(const FeatureDataset& fs) {
  ordered_json j = ordered_json::object();
  j["format_version"] = kFormatVersion;
  j["n_max"] = fs.n_max;
  j["sampling_config"] = detail::sampling_config_to_json(fs.sampling_config);
  j["layers"] = fs.layers;
  j["dim"] = fs.dim;
  ordered_json records = ordered_json::array();
  for (const auto& r : fs.records) {
    ordered_json rec = ordered_json::object();
    rec["question_id"] = r.question_id;
    ordered_json vectors = ordered_json::array();
    for (const auto& v : r.layer_vectors) {
      ordered_json arr = ordered_json::array();
      for (double x : v) arr.push_back(x);
      vectors.push_back(std::move(arr));
    }
    rec["vectors"] = std::move(vectors);
    if (r.label) rec["label"] = *r.label;
    records.push_back(std::move(rec));
  }
  j["records"] = std::move(records);
  return j;
}

inline FeatureDataset features_from_json(const ordered_json& root) {
  const detail::FieldReader r{"feature file"};
  FeatureDataset fs;
  fs.n_max = detail::read_envelope(root, r);
  fs.sampling_config = detail::sampling_config_from_json(r.require(root, "sampling_config"));
  const auto layers = r.integer(r.require(root, "layers"), "layers");
  const auto dim = r.integer(r.require(root, "dim"), "dim");
  if (layers < 1) r.fail("layers", "must be >= 1");
  if (dim < 1) r.fail("dim", "must be >= 1");
  fs.layers = static_cast<std::size_t>(layers);
  fs.dim = static_cast<std::size_t>(dim);
  const auto& records = r.require(root, "records");
  if (!records.is_array()) r.fail("records", "expected an array");
  for (std::size_t i = 0; i < records.size(); ++i) {
    detail::FieldReader rr{"record #" + std::to_string(i)};
    LayerFeatureSet rec;
    rec.question_id = rr.string(rr.require(records[i], "question_id"), "question_id");
    rr.context = "record '" + rec.question_id + "'";
    const auto& vectors = rr.require(records[i], "vectors");
    if (!vectors.is_array()) rr.fail("vectors", "expected an array of arrays");
    for (const auto& v : vectors) rec.layer_vectors.push_back(rr.numbers(v, "vectors"));
    if (auto it = records[i].find("label"); it != records[i].end()) rec.label = rr.number(*it, "label");
    fs.records.push_back(std::move(rec));
  }
  validate_features(fs);
  return fs;
}

inline std::string serialize_features(const FeatureDataset& fs) { return to_canonical(features_to_json(fs)); }

inline FeatureDataset load_features(const std::string& path) { return features_from_json(parse_json_file(path)); }

inline void save_features(const FeatureDataset& fs, const std::string& path) {
  write_text_file(path, serialize_features(fs));
}

}  // namespace overscale
