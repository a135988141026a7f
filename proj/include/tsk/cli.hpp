#pragma once

// Subcommands behind the `tsk` executable. Each command takes a resolved
// RunConfig, so tests can drive them in-process without going through argv.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "tsk/config.hpp"
#include "tsk/dataset.hpp"
#include "tsk/diagnostics.hpp"
#include "tsk/error.hpp"
#include "tsk/finite_diff.hpp"
#include "tsk/hsweep.hpp"
#include "tsk/init.hpp"
#include "tsk/io.hpp"
#include "tsk/model.hpp"
#include "tsk/trainer.hpp"

namespace tsk::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config -> library structs

inline LossSpec loss_spec(const RunConfig& cfg) {
  const std::string& s = cfg.str("train.loss");
  if (s == "ce") return {LossKind::SoftmaxCrossEntropy};
  if (s == "mse") return {LossKind::MeanSquaredError};
  throw ConfigError("train.loss: expected ce or mse, found '" + s + "'");
}

inline int to_int(const RunConfig& cfg, std::string_view key) {
  const long long v = cfg.integer(key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ConfigError(std::string(key) + " is out of range");
  return static_cast<int>(v);
}

inline SplitSpec split_spec(const RunConfig& cfg) {
  SplitSpec s;
  s.train_fraction = cfg.real("split.train_fraction");
  s.validation_fraction_of_train = cfg.real("split.validation_fraction");
  s.allow_empty_test = cfg.boolean("split.allow_empty_test");
  s.seed = cfg.unsigned_integer("run.seed");
  return s;
}

inline InitSpec init_spec(const RunConfig& cfg) {
  InitSpec s;
  s.h = cfg.real("init.h");
  s.sigma_spread = cfg.real("init.sigma_spread");
  s.kmeans_iters = to_int(cfg, "init.kmeans_iters");
  s.kmeans_restarts = to_int(cfg, "init.kmeans_restarts");
  s.seed = cfg.unsigned_integer("run.seed");
  if (s.kmeans_iters < 1 || s.kmeans_restarts < 1) throw ConfigError("k-means iterations and restarts must be positive");
  return s;
}

inline TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.real("train.learning_rate");
  t.batch_size = cfg.integer("train.batch_size");
  t.max_epochs = to_int(cfg, "train.max_epochs");
  t.patience = to_int(cfg, "train.patience");
  t.adam_beta1 = cfg.real("train.beta1");
  t.adam_beta2 = cfg.real("train.beta2");
  t.adam_eps = cfg.real("train.adam_eps");
  t.seed = cfg.unsigned_integer("run.seed");
  t.loss = loss_spec(cfg);
  t.validate();
  return t;
}

inline std::vector<DefuzzVariant> variant_list(const RunConfig& cfg, std::string_view key) {
  std::vector<DefuzzVariant> out;
  for (const auto& name : cfg.list(key)) out.push_back(parse_variant(name));
  if (out.empty()) throw ConfigError(std::string(key) + " lists no variants");
  return out;
}

inline std::vector<Index> index_list(const RunConfig& cfg, std::string_view key) {
  std::vector<Index> out;
  for (long long v : cfg.int_list(key)) out.push_back(static_cast<Index>(v));
  return out;
}

inline Dataset load_data(const RunConfig& cfg) {
  const std::string& path = cfg.str("data.path");
  if (path.empty()) throw ConfigError("data.path is required");
  const std::string& format = cfg.str("data.format");
  if (format == "sparse") return load_sparse_index_value(path);
  CsvOptions opts;
  if (format == "csv-header")
    opts.format = CsvFormat::WithHeader;
  else if (format != "csv")
    throw ConfigError("data.format: expected csv, csv-header or sparse, found '" + format + "'");
  opts.label_column = to_int(cfg, "data.label_column");
  if (const auto& name = cfg.str("data.label_name"); !name.empty()) opts.label_name = name;
  return load_dense(path, opts);
}

// ---------------------------------------------------------------------------
// Output helpers

inline fs::path prepare_out_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.str("run.out_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  std::ofstream out(dir / "config.txt");
  if (!out) throw ConfigError("cannot write to output directory '" + dir.string() + "'");
  cfg.write(out);
  return dir;
}

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Commands

/// Split, normalize on the training part, initialize, train with early
/// stopping, then evaluate the restored model on the held-out test rows.
inline int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const Dataset data = load_data(cfg);
  const SplitSpec sp = split_spec(cfg);
  const InitSpec is = init_spec(cfg);
  const TrainConfig tc = train_config(cfg);
  const DefuzzVariant variant = parse_variant(cfg.str("model.variant"));
  const Index rules = cfg.integer("model.rules");
  if (rules < 1) throw ConfigError("model.rules must be positive");

  const SplitResult parts = split(data, sp);
  auto [tr, others, norm] = zscore_fit_transform(parts.train, {parts.val, parts.test});
  const Dataset& val = others[0];
  const Dataset& test = others[1];

  const auto t0 = std::chrono::steady_clock::now();
  TskModel model = init_model(tr, rules, variant, is);
  model.set_log_epsilon(cfg.real("model.log_epsilon"));
  const double init_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  DiagnosticsRecorder recorder(tr.features, {cfg.boolean("diag.landscape"), cfg.real("diag.eta"), tc.loss});
  TrainObserver* observers[] = {&recorder};
  const TrainResult res = train(std::move(model), tr, val, tc, observers);

  json report = to_json(res.report);
  report["variant"] = std::string(to_string(variant));
  report["shape"] = {{"rules", rules}, {"inputs", tr.dim()}, {"classes", tr.num_classes}};
  report["n_train"] = tr.size();
  report["n_val"] = val.size();
  report["n_test"] = test.size();
  if (!test.empty()) {
    const Evaluation ev = evaluate(res.model, test, tc.loss);
    report["test_accuracy"] = ev.accuracy;
    report["test_loss"] = ev.loss;
  } else {
    report["test_accuracy"] = nullptr;
    report["test_loss"] = nullptr;
  }

  const fs::path dir = prepare_out_dir(cfg);
  save_checkpoint((dir / "checkpoint.json").string(), Checkpoint{res.model, norm, data.class_values});
  save_json((dir / "report.json").string(), report);
  save_json((dir / "timing.json").string(),
            json{{"init_seconds", init_seconds}, {"train_seconds", res.report.wall_time_seconds}});
  {
    auto f = open_output(dir / "diagnostics.csv");
    write_tidy_csv(f, diagnostics_rows(recorder.epochs(), variant, res.model.shape(), is.h));
  }
  if (cfg.boolean("diag.landscape")) {
    auto f = open_output(dir / "landscape.csv");
    write_landscape_csv(f, recorder.batches(), variant, res.model.shape(), is.h);
  }
  if (!parts.test.empty()) {
    auto f = open_output(dir / "test_split.csv");
    write_dense(f, parts.test, false);
  }

  out << "best epoch " << res.report.best_epoch << ", val accuracy " << res.report.best_val_accuracy;
  if (!test.empty()) out << ", test accuracy " << report["test_accuracy"].get<double>();
  out << "\nwrote " << dir.string() << '\n';
  return kExitOk;
}

/// Labels are matched to the checkpoint's classes by their raw values.
inline int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const std::string& ck_path = cfg.str("eval.checkpoint");
  if (ck_path.empty()) throw ConfigError("eval.checkpoint is required");
  const Checkpoint ck = load_checkpoint(ck_path);
  Dataset data = load_data(cfg);
  if (data.empty()) throw PreconditionError("evaluation dataset is empty");
  ck.model.check_batch(data.features);

  const Index c = ck.model.num_classes();
  for (int& y : data.labels) {
    const long long raw = data.class_values.empty() ? y : data.class_values[static_cast<std::size_t>(y)];
    if (ck.class_values.empty()) {
      if (raw < 0 || raw >= c) throw SchemaError("label " + std::to_string(raw) + " is not a checkpoint class");
      y = static_cast<int>(raw);
    } else {
      const auto it = std::find(ck.class_values.begin(), ck.class_values.end(), raw);
      if (it == ck.class_values.end()) throw SchemaError("label " + std::to_string(raw) + " is not a checkpoint class");
      y = static_cast<int>(it - ck.class_values.begin());
    }
  }
  data.num_classes = static_cast<int>(c);
  data.class_values = ck.class_values;
  if (cfg.boolean("eval.normalize") && ck.norm) ck.norm->apply(data);

  const Evaluation ev = evaluate(ck.model, data, loss_spec(cfg));
  out << json{{"accuracy", ev.accuracy}, {"loss", ev.loss}, {"n", data.size()}}.dump() << '\n';
  return kExitOk;
}

inline SweepSpec sweep_spec(const RunConfig& cfg) {
  SweepSpec s;
  s.dims = index_list(cfg, "sweep.dims");
  s.rule_counts = index_list(cfg, "sweep.rules");
  s.h_values = cfg.real_list("sweep.h");
  s.epochs_at.clear();
  for (long long e : cfg.int_list("sweep.epochs_at")) s.epochs_at.push_back(static_cast<int>(e));
  s.repeats = to_int(cfg, "sweep.repeats");
  s.seed = cfg.unsigned_integer("run.seed");
  s.n_samples = cfg.integer("sweep.n_samples");
  s.sigma_spread = cfg.real("init.sigma_spread");
  s.kmeans_iters = to_int(cfg, "sweep.kmeans_iters");
  s.kmeans_restarts = to_int(cfg, "sweep.kmeans_restarts");
  s.learning_rate = cfg.real("train.learning_rate");
  s.batch_size = cfg.integer("train.batch_size");
  s.validate();
  return s;
}

/// Fired-rule counts on random-label synthetic data over the D x R x h grid.
inline int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  const SweepSpec spec = sweep_spec(cfg);
  const auto variants = variant_list(cfg, "sweep.variants");
  const int jobs = to_int(cfg, "run.jobs");

  std::vector<TidyRow> tidy;
  json summary = json::array();
  for (DefuzzVariant v : variants) {
    const auto rows = saturation_sweep(spec, v, jobs);
    const auto t = sweep_rows(rows, v);
    tidy.insert(tidy.end(), t.begin(), t.end());
    const auto s = summarize_sweep(rows);
    for (auto& e : to_json(std::span<const SweepSummary>(s), v)) summary.push_back(std::move(e));
  }

  const fs::path dir = prepare_out_dir(cfg);
  {
    auto f = open_output(dir / "sweep.csv");
    write_tidy_csv(f, tidy);
  }
  save_json((dir / "summary.json").string(), summary);
  out << tidy.size() << " rows\nwrote " << dir.string() << '\n';
  return kExitOk;
}

inline HSweepSpec hsweep_spec(const RunConfig& cfg) {
  HSweepSpec s;
  s.variants = variant_list(cfg, "hsweep.variants");
  s.h_values = cfg.real_list("hsweep.h");
  s.repeats = to_int(cfg, "hsweep.repeats");
  s.rules = cfg.integer("model.rules");
  s.log_epsilon = cfg.real("model.log_epsilon");
  s.split = split_spec(cfg);
  s.init = init_spec(cfg);
  s.train = train_config(cfg);
  s.seed = cfg.unsigned_integer("run.seed");
  s.validate();
  return s;
}

/// Test accuracy versus the width location h for each listed variant.
inline int cmd_hsweep(const RunConfig& cfg, std::ostream& out) {
  const HSweepSpec spec = hsweep_spec(cfg);
  const Dataset data = load_data(cfg);
  const auto rows = h_sensitivity(data, spec);
  const auto summary = summarize_h_sweep(rows);

  const fs::path dir = prepare_out_dir(cfg);
  {
    // One row per h, one column of mean test accuracy per variant.
    auto f = open_output(dir / "accuracy_vs_h.csv");
    f << 'h';
    for (DefuzzVariant v : spec.variants) f << ',' << to_string(v);
    f << '\n';
    for (double h : spec.h_values) {
      f << format_real(h);
      for (DefuzzVariant v : spec.variants)
        for (const HSweepSummary& s : summary)
          if (s.variant == v && s.h == h) f << ',' << format_real(s.mean_test_accuracy);
      f << '\n';
    }
  }
  {
    std::vector<TidyRow> tidy;
    for (const HSweepRow& r : rows)
      for (const auto& [metric, value] : {std::pair{"test_accuracy", r.test_accuracy}, std::pair{"test_loss", r.test_loss},
                                          std::pair{"val_accuracy", r.val_accuracy}})
        tidy.push_back({std::string(to_string(r.variant)), data.dim(), spec.rules, r.h, r.best_epoch, r.repeat, metric,
                        value});
    auto f = open_output(dir / "hsweep.csv");
    write_tidy_csv(f, tidy);
  }
  json js = json::array();
  for (const HSweepSummary& s : summary)
    js.push_back({{"variant", std::string(to_string(s.variant))}, {"h", s.h},
                  {"mean_test_accuracy", s.mean_test_accuracy}});
  save_json((dir / "summary.json").string(), js);

  for (DefuzzVariant v : spec.variants)
    out << to_string(v) << ": accuracy spread over h " << accuracy_spread(summary, v) << '\n';
  out << "wrote " << dir.string() << '\n';
  return kExitOk;
}

/// Gaussian synthetic data written as a headerless CSV, label last.
inline int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const std::string& labeling = cfg.str("synth.labeling");
  Labeling lab;
  if (labeling == "random")
    lab = Labeling::Random;
  else if (labeling == "cluster-separable")
    lab = Labeling::ClusterSeparable;
  else
    throw ConfigError("synth.labeling: expected random or cluster-separable, found '" + labeling + "'");
  SynthOptions opts;
  opts.mu = cfg.real("synth.mu");
  opts.block_width = cfg.integer("synth.block_width");
  const Dataset ds = synth_gaussian(cfg.integer("synth.n"), cfg.integer("synth.d"), to_int(cfg, "synth.c"),
                                    cfg.unsigned_integer("run.seed"), lab, opts);

  const fs::path path = cfg.str("synth.out");
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  {
    auto f = open_output(path);
    write_dense(f, ds, false);
  }
  {
    auto f = open_output(path.string() + ".config.txt");
    cfg.write(f);
  }
  out << "wrote " << ds.size() << " x " << ds.dim() << " to " << path.string() << '\n';
  return kExitOk;
}

/// Analytic gradients against central differences on random models.
/// Exits 2 if any configuration exceeds the tolerance.
inline int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  GradCheckSpec spec;
  spec.configs = to_int(cfg, "gradcheck.configs");
  spec.dims = index_list(cfg, "gradcheck.dims");
  spec.rules = index_list(cfg, "gradcheck.rules");
  spec.classes = index_list(cfg, "gradcheck.classes");
  spec.batch = cfg.integer("gradcheck.batch");
  spec.step = cfg.real("gradcheck.step");
  spec.tolerance = cfg.real("gradcheck.tolerance");
  spec.max_coords = cfg.integer("gradcheck.max_coords");
  spec.seed = cfg.unsigned_integer("run.seed");

  int failures = 0;
  for (const GradCheckRow& r : run_gradcheck(spec)) {
    out << r.index << ' ' << to_string(r.variant) << ' ' << r.shape.str() << " coords=" << r.result.coords_checked
        << " max_rel_err=" << r.result.max_relative_error << (r.passed ? " ok" : " FAIL") << '\n';
    failures += r.passed ? 0 : 1;
  }
  out << (failures == 0 ? "all configurations within " : std::to_string(failures) + " configurations exceed ")
      << spec.tolerance << '\n';
  return failures == 0 ? kExitOk : kExitInternal;
}

// ---------------------------------------------------------------------------
// Entry point

namespace detail {

inline std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

// Short spellings for the most common keys.
inline const std::map<std::string, std::string, std::less<>> kAliases = {
    {"data.path", "--data"},     {"run.out_dir", "--out"},     {"run.seed", "--seed"},
    {"run.jobs", "--jobs"},      {"model.variant", "--variant"}, {"model.rules", "--rules"},
    {"eval.checkpoint", "--checkpoint"},
};

}  // namespace detail

/// Parses `args` (without the program name), runs the selected command and
/// maps errors to exit codes: 1 for bad input or configuration, 2 for
/// numerical failures and anything unexpected.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"TSK fuzzy classifier: training, evaluation and saturation diagnostics", "tsk"};
  app.require_subcommand(1);

  using Command = int (*)(const RunConfig&, std::ostream&);
  const std::pair<const char*, Command> commands[] = {
      {"train", cmd_train}, {"eval", cmd_eval},   {"sweep", cmd_sweep},
      {"hsweep", cmd_hsweep}, {"synth", cmd_synth}, {"gradcheck", cmd_gradcheck},
  };
  const char* descriptions[] = {
      "train a model and write checkpoint, report and diagnostics",
      "evaluate a checkpoint on a dataset",
      "fired-rule saturation sweep on random synthetic data",
      "test accuracy versus the width location h",
      "write a synthetic Gaussian dataset",
      "compare analytic and finite-difference gradients",
  };

  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> given;
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i].first, descriptions[i]);
    sub->add_option("--config", config_path, "key = value config file; flags override it");
    for (const ConfigKey& k : kConfigKeys) {
      std::string names = "--" + std::string(k.key);
      if (const auto a = detail::kAliases.find(k.key); a != detail::kAliases.end()) names += "," + a->second;
      std::string& slot = values[std::string(k.key)];
      CLI::Option* opt = sub->add_option(names, slot, std::string(k.help));
      opt->default_str(std::string(k.default_value));
      given.emplace_back(std::string(k.key), opt);
    }
    subs.push_back(sub);
  }

  std::vector<const char*> argv{"tsk"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUser;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& [key, opt] : given)
      if (opt->count() > 0) cfg.set(key, values[key]);
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return commands[i].second(cfg, out);
    return kExitUser;
  } catch (const NumericError& e) {
    err << "error: " << detail::one_line(e.what()) << '\n';
    return kExitInternal;
  } catch (const Error& e) {
    err << "error: " << detail::one_line(e.what()) << '\n';
    return kExitUser;
  } catch (const std::exception& e) {
    err << "internal error: " << detail::one_line(e.what()) << '\n';
    return kExitInternal;
  }
}

inline int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace tsk::cli
