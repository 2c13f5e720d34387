// overscale_lab: budget-accuracy curves, taxonomy and overscaling analysis,
// replayed budget policies, and per-layer budget estimators.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "overscale/overscale.hpp"

namespace fs = std::filesystem;
using namespace overscale;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_json(const std::string& path, const ordered_json& j) { write_text_file(path, to_canonical(j) + "\n"); }

TieRule parse_tie(const std::string& s) {
  try {
    return tie_rule_from_string(s);
  } catch (const std::exception&) {
    throw UsageError("--tie-rule must be 'fractional' or 'first-seen'");
  }
}

/// Fills options that were not given on the command line from a JSON object
/// whose keys are long option names ("tie-rule" or "tie_rule").
void apply_config_file(CLI::App& sub, const std::string& path) {
  const auto j = parse_json_file(path);
  if (!j.is_object()) throw SchemaError("config file '" + path + "': expected an object");
  for (const auto& [key, value] : j.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = sub.get_option_no_throw("--" + name);
    if (opt == nullptr || name == "config") {
      throw SchemaError("config file '" + path + "': unknown key '" + key + "' for '" + sub.get_name() + "'");
    }
    if (opt->count() > 0) continue;  // flags win
    std::vector<std::string> items;
    if (value.is_array()) {
      for (const auto& v : value) items.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else {
      items.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
    for (const auto& it : items) opt->add_result(it);
    opt->run_callback();
  }
}

// ---------------------------------------------------------------------------

struct CurveOpts {
  std::string traces, out;
  std::int64_t seed = 0;
  std::uint64_t tau = 100000;
  std::string tie = "fractional";
  bool exact = false;

  SubsampleParams params() const { return {tau, seed, parse_tie(tie)}; }

  ordered_json to_json() const {
    ordered_json j = ordered_json::object();
    j["traces"] = traces;
    j["seed"] = seed;
    j["tau"] = tau;
    j["tie_rule"] = tie;
    j["exact"] = exact;
    return j;
  }
};

void add_curve_flags(CLI::App* sub, CurveOpts& o) {
  sub->add_option("--seed", o.seed, "subsampling seed");
  sub->add_option("--tau", o.tau, "subsample draws per budget")->check(CLI::PositiveNumber);
  sub->add_option("--tie-rule", o.tie, "fractional | first-seen");
  sub->add_flag("--exact", o.exact, "exact expectation instead of subsampling");
}

std::vector<BudgetAccuracyCurve> curves_for(const TraceDataset& ds, const CurveOpts& o) {
  return build_curves(ds, o.params(), o.exact);
}

int cmd_curves(const CurveOpts& o) {
  const auto ds = load_traces(o.traces);
  const auto curves = curves_for(ds, o);
  ensure_dir(o.out);
  write_text_file(join(o.out, "curves.csv"), curves_to_csv(ds, curves));
  write_json(join(o.out, "curves.json"), curves_to_json(ds, curves, o.to_json()));
  return 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeOpts {
  CurveOpts curve;
  std::size_t step = 0;
  double threshold = 0.8;
  double eps_acc = kDefaultEpsAcc;

  const std::string& out_dir() const { return curve.out; }

  ordered_json to_json(const std::string& traces) const {
    ordered_json j = curve.to_json();
    j["traces"] = traces;
    j["step"] = step;
    j["threshold"] = threshold;
    j["eps_acc"] = eps_acc;
    return j;
  }
};

int cmd_analyze(const AnalyzeOpts& o) {
  std::vector<fs::path> files;
  if (fs::is_directory(o.curve.traces)) {
    for (const auto& e : fs::directory_iterator(o.curve.traces)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .json trace files in '" + o.curve.traces + "'");
  } else {
    files.emplace_back(o.curve.traces);
  }
  ensure_dir(o.out_dir());
  const MonotonicityParams mp{o.step, o.threshold};
  std::string index = index_csv_header();
  for (const auto& f : files) {
    const auto ds = load_traces(f.string());
    const auto curves = curves_for(ds, o.curve);
    const auto a = analyze_curves(curves, mp, o.eps_acc);
    const std::string stem = f.stem().string();
    write_json(join(o.out_dir(), stem + ".analysis.json"), analysis_to_json(ds, a, o.to_json(f.string())));
    write_text_file(join(o.out_dir(), stem + ".partition.csv"), partition_csv(ds, a));
    write_text_file(join(o.out_dir(), stem + ".types.csv"), type_table_csv(a));
    write_text_file(join(o.out_dir(), stem + ".mean_curve.csv"), mean_curve_csv(curves, a));
    index += index_csv_row(stem, ds, a);
  }
  write_text_file(join(o.out_dir(), "overscaling_index.csv"), index);
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthOpts {
  std::string spec, out;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthOpts& o) {
  SynthSpec spec = synth_spec_from_json(parse_json_file(o.spec));
  if (o.seed) spec.seed = *o.seed;
  const auto sd = synth_dataset(spec);
  ensure_dir(o.out);
  save_traces(sd.dataset, join(o.out, "traces.json"));
  write_text_file(join(o.out, "intended_types.csv"), intended_types_csv(sd));
  ordered_json j = ordered_json::object();
  j["config"] = synth_spec_to_json(spec);
  j["questions"] = sd.dataset.traces.size();
  write_json(join(o.out, "synth.json"), j);
  return 0;
}

// ---------------------------------------------------------------------------

struct PolicyOpts {
  std::string traces, out, budgets;
  std::vector<std::string> policies;
  std::optional<std::size_t> n, window;
  std::size_t max_budget = 40;
  std::size_t k_consecutive = 32;
  double conf_threshold = 0.95;
  std::string tie = "first-seen";
  double eps_acc = kDefaultEpsAcc;
};

std::vector<std::size_t> read_budgets(const std::string& path, const TraceDataset& ds) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "question_id,budget") throw SchemaError("budget file '" + path + "': expected header question_id,budget");
  std::map<std::string, std::size_t> by_id;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw SchemaError("budget file '" + path + "': malformed row '" + line + "'");
    try {
      std::size_t used = 0;
      const std::string num = line.substr(comma + 1);
      const auto v = std::stoull(num, &used);
      if (used != num.size()) throw std::invalid_argument("trailing characters");
      by_id[line.substr(0, comma)] = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw SchemaError("budget file '" + path + "': bad budget in row '" + line + "'");
    }
  }
  std::vector<std::size_t> out;
  for (const auto& t : ds.traces) {
    auto it = by_id.find(t.question_id);
    if (it == by_id.end()) throw SchemaError("budget file '" + path + "': no budget for '" + t.question_id + "'");
    out.push_back(it->second);
  }
  return out;
}

int cmd_policies(PolicyOpts o) {
  const auto ds = load_traces(o.traces);
  const TieRule tie = parse_tie(o.tie);
  const auto curves = prefix_vote_curves(ds, tie);
  const std::size_t n_d = system_optimal_n(curves, o.eps_acc);
  const std::size_t n = o.n.value_or(n_d);
  if (o.policies.empty()) {
    o.policies = {"std-pt", "oracle", "ac", "esc", "dsc"};
    if (!o.budgets.empty()) o.policies.push_back("t2");
  }
  const auto baseline = run_std_pt(ds, n, tie);

  ordered_json config = ordered_json::object();
  config["traces"] = o.traces;
  config["policies"] = o.policies;
  config["n"] = n;
  config["window"] = o.window ? ordered_json(*o.window) : ordered_json(nullptr);
  config["max_budget"] = o.max_budget;
  config["k_consecutive"] = o.k_consecutive;
  config["conf_threshold"] = o.conf_threshold;
  config["tie_rule"] = o.tie;
  config["eps_acc"] = o.eps_acc;
  config["budgets"] = o.budgets;

  ensure_dir(o.out);
  ordered_json summary = ordered_json::object();
  summary["config"] = config;
  summary["baseline"] = {{"policy", "std-pt"}, {"n", n}, {"n_system", n_d}};
  ordered_json results = ordered_json::object();
  for (const auto& p : o.policies) {
    Outcomes out;
    if (p == "std-pt") {
      out = baseline;
    } else if (p == "oracle") {
      out = run_oracle(ds, curves, o.eps_acc, tie);
    } else if (p == "ac") {
      out = run_ac(ds, o.max_budget, o.conf_threshold, tie);
    } else if (p == "esc") {
      out = run_esc(ds, o.window.value_or(5), o.max_budget, tie);
    } else if (p == "dsc") {
      out = run_dsc(ds, o.window.value_or(4), o.k_consecutive, o.max_budget, tie);
    } else if (p == "t2") {
      if (o.budgets.empty()) throw UsageError("policy t2 needs --budgets (output of 'estimate')");
      const auto b = read_budgets(o.budgets, ds);
      out = run_t2(ds, b, tie);
    } else {
      throw UsageError("unknown policy '" + p + "'");
    }
    write_text_file(join(o.out, "outcomes_" + p + ".csv"), outcomes_to_csv(out));
    results[p] = cost_to_json(cost_report(out, baseline));
  }
  summary["policies"] = std::move(results);
  write_json(join(o.out, "policies_summary.json"), summary);
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string features, val_features, out, bundle;
  double val_fraction = 0.2;
  TrainConfig cfg;
};

/// Splits off the trailing fraction of records for validation.
std::pair<FeatureDataset, FeatureDataset> holdout(const FeatureDataset& all, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("--val-fraction must lie in (0, 1)");
  const auto n = all.records.size();
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
  if (n_val >= n) throw UsageError("too few records to hold out a validation set");
  FeatureDataset tr = all, va = all;
  tr.records.assign(all.records.begin(), all.records.end() - static_cast<std::ptrdiff_t>(n_val));
  va.records.assign(all.records.end() - static_cast<std::ptrdiff_t>(n_val), all.records.end());
  return {tr, va};
}

int cmd_train(const TrainOpts& o) {
  const auto all = load_features(o.features);
  FeatureDataset train, val;
  if (o.val_features.empty()) {
    std::tie(train, val) = holdout(all, o.val_fraction);
  } else {
    train = all;
    val = load_features(o.val_features);
  }
  const auto tl = train_layers(train, val, o.cfg);
  ensure_dir(o.out);
  const std::string bundle_path = o.bundle.empty() ? join(o.out, "bundle.json") : o.bundle;
  save_bundle(tl.bundle, bundle_path);

  ordered_json config = ordered_json::object();
  config["features"] = o.features;
  config["val_features"] = o.val_features;
  config["val_fraction"] = o.val_features.empty() ? ordered_json(o.val_fraction) : ordered_json(nullptr);
  config["seed"] = o.cfg.seed;
  config["epochs"] = o.cfg.epochs;
  config["batch_size"] = o.cfg.batch_size;
  config["lr"] = o.cfg.learning_rate;
  config["weight_decay"] = o.cfg.weight_decay;
  config["hidden_ratio"] = o.cfg.hidden_ratio;
  ordered_json rep = ordered_json::object();
  rep["config"] = config;
  rep["bundle"] = bundle_path;
  rep["val_mse"] = tl.bundle.sigma_hat_sq;
  rep["val_mae"] = tl.val_mae;
  rep["weights"] = tl.bundle.weights;
  const auto best = static_cast<std::size_t>(
      std::min_element(tl.bundle.sigma_hat_sq.begin(), tl.bundle.sigma_hat_sq.end()) - tl.bundle.sigma_hat_sq.begin());
  rep["best_layer"] = best;
  ordered_json final_loss = ordered_json::array();
  for (const auto& l : tl.losses) final_loss.push_back(l.back());
  rep["final_train_loss"] = std::move(final_loss);
  write_json(join(o.out, "train_report.json"), rep);
  return 0;
}

struct EstimateOpts {
  std::string features, bundle, out;
};

int cmd_estimate(const EstimateOpts& o) {
  const auto fset = load_features(o.features);
  const auto b = load_bundle(o.bundle);
  if (b.layers != fset.layers || b.dim != fset.dim) throw SchemaError("bundle shape does not match the feature file");
  const auto budgets = pipeline_estimate(fset, b.estimators, b.weights);
  ensure_dir(o.out);
  std::string csv = "question_id,budget\n";
  for (std::size_t i = 0; i < budgets.size(); ++i) csv += fset.records[i].question_id + ',' + std::to_string(budgets[i]) + '\n';
  write_text_file(join(o.out, "budgets.csv"), csv);

  ordered_json rep = ordered_json::object();
  rep["config"] = {{"features", o.features}, {"bundle", o.bundle}};
  rep["n_max"] = fset.n_max;
  rep["mean_budget"] = budgets.empty() ? 0.0
                                       : static_cast<double>(std::accumulate(budgets.begin(), budgets.end(), std::size_t{0})) /
                                             static_cast<double>(budgets.size());
  const bool labelled = std::all_of(fset.records.begin(), fset.records.end(), [](const auto& r) { return r.label.has_value(); });
  if (labelled && !budgets.empty()) {
    double mae = 0.0;
    for (std::size_t i = 0; i < budgets.size(); ++i) {
      mae += std::abs(static_cast<double>(budgets[i]) / static_cast<double>(fset.n_max) - *fset.records[i].label);
    }
    rep["budget_mae"] = mae / static_cast<double>(budgets.size());
  }
  write_json(join(o.out, "estimate_report.json"), rep);
  return 0;
}

struct PlantedOpts {
  std::string out;
  PlantedSpec spec;
};

int cmd_planted(const PlantedOpts& o) {
  const auto b = planted_benchmark(o.spec);
  ensure_dir(o.out);
  save_features(b.train.features, join(o.out, "train_features.json"));
  save_features(b.val.features, join(o.out, "val_features.json"));
  save_features(b.test.features, join(o.out, "test_features.json"));
  save_traces(b.test.traces, join(o.out, "test_traces.json"));
  return 0;
}

void emit_error(const std::string& kind, const std::string& message) {
  ordered_json j = ordered_json::object();
  j["error"] = {{"kind", kind}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"overscale_lab: parallel-thinking budget analysis"};
  app.require_subcommand(1);
  std::string config_path;

  auto with_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file of option values; flags take precedence");
    return sub;
  };

  CurveOpts curves;
  auto* s_curves = with_common(app.add_subcommand("curves", "budget-accuracy curve per question"));
  s_curves->add_option("--traces", curves.traces, "trace file")->required();
  s_curves->add_option("--out", curves.out, "output directory")->required();
  add_curve_flags(s_curves, curves);

  AnalyzeOpts analyze;
  auto* s_an = with_common(app.add_subcommand("analyze", "taxonomy, overscaling index and bound check"));
  s_an->add_option("--traces", analyze.curve.traces, "trace file or directory of trace files")->required();
  s_an->add_option("--out", analyze.curve.out, "output directory")->required();
  add_curve_flags(s_an, analyze.curve);
  s_an->add_option("--step", analyze.step, "lag for the monotonicity test (0 = floor(sqrt(N_max)))");
  s_an->add_option("--threshold", analyze.threshold, "monotone fraction threshold")->check(CLI::Range(0.0, 1.0));
  s_an->add_option("--eps-acc", analyze.eps_acc, "tolerance for reaching the curve maximum");

  SynthOpts synth;
  auto* s_syn = with_common(app.add_subcommand("synth", "synthetic traces with planted types"));
  s_syn->add_option("--spec", synth.spec, "JSON spec")->required();
  s_syn->add_option("--out", synth.out, "output directory")->required();
  s_syn->add_option("--seed", synth.seed, "overrides the spec seed");

  PolicyOpts pol;
  auto* s_pol = with_common(app.add_subcommand("policies", "replay budget policies over recorded draws"));
  s_pol->add_option("--traces", pol.traces, "trace file")->required();
  s_pol->add_option("--out", pol.out, "output directory")->required();
  s_pol->add_option("--policy", pol.policies, "std-pt, oracle, ac, esc, dsc, t2 (repeatable)")
      ->check(CLI::IsMember({"std-pt", "oracle", "ac", "esc", "dsc", "t2"}));
  s_pol->add_option("--n", pol.n, "Std-PT budget (default: system-optimal N)");
  s_pol->add_option("--window", pol.window, "ESC/DSC window (defaults 5 and 4)");
  s_pol->add_option("--max-budget", pol.max_budget, "per-question cap L");
  s_pol->add_option("--k-consecutive", pol.k_consecutive, "DSC scan stop run length");
  s_pol->add_option("--conf-threshold", pol.conf_threshold, "AC stopping confidence");
  s_pol->add_option("--tie-rule", pol.tie, "fractional | first-seen");
  s_pol->add_option("--budgets", pol.budgets, "budgets.csv from 'estimate' (for t2)");
  s_pol->add_option("--eps-acc", pol.eps_acc, "tolerance for reaching the curve maximum");

  TrainOpts tr;
  auto* s_tr = with_common(app.add_subcommand("train", "train per-layer budget estimators"));
  s_tr->add_option("--features", tr.features, "training feature file")->required();
  s_tr->add_option("--out", tr.out, "output directory")->required();
  s_tr->add_option("--val-features", tr.val_features, "validation feature file");
  s_tr->add_option("--val-fraction", tr.val_fraction, "trailing fraction held out when no validation file");
  s_tr->add_option("--bundle", tr.bundle, "bundle path (default <out>/bundle.json)");
  s_tr->add_option("--seed", tr.cfg.seed);
  s_tr->add_option("--epochs", tr.cfg.epochs)->check(CLI::PositiveNumber);
  s_tr->add_option("--batch-size", tr.cfg.batch_size)->check(CLI::PositiveNumber);
  s_tr->add_option("--lr", tr.cfg.learning_rate)->check(CLI::PositiveNumber);
  s_tr->add_option("--weight-decay", tr.cfg.weight_decay)->check(CLI::NonNegativeNumber);
  s_tr->add_option("--hidden-ratio", tr.cfg.hidden_ratio)->check(CLI::PositiveNumber);

  EstimateOpts est;
  auto* s_est = with_common(app.add_subcommand("estimate", "per-question budgets from a trained bundle"));
  s_est->add_option("--features", est.features, "feature file")->required();
  s_est->add_option("--bundle", est.bundle, "bundle from 'train'")->required();
  s_est->add_option("--out", est.out, "output directory")->required();

  PlantedOpts pl;
  auto* s_pl = with_common(app.add_subcommand("planted", "planted feature benchmark with paired test traces"));
  s_pl->add_option("--out", pl.out, "output directory")->required();
  s_pl->add_option("--seed", pl.spec.seed);
  s_pl->add_option("--n", pl.spec.n_max, "N_max of the paired traces")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
    for (auto* sub : app.get_subcommands()) {
      if (!config_path.empty()) apply_config_file(*sub, config_path);
    }
    if (s_curves->parsed()) return cmd_curves(curves);
    if (s_an->parsed()) return cmd_analyze(analyze);
    if (s_syn->parsed()) return cmd_synth(synth);
    if (s_pol->parsed()) return cmd_policies(pol);
    if (s_tr->parsed()) return cmd_train(tr);
    if (s_est->parsed()) return cmd_estimate(est);
    if (s_pl->parsed()) return cmd_planted(pl);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 1;
  } catch (const SchemaError& e) {
    emit_error("schema", e.what());
    return 2;
  } catch (const IoError& e) {
    emit_error("io", e.what());
    return 1;
  } catch (const UsageError& e) {
    emit_error("usage", e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("runtime", e.what());
    return 1;
  }
}
