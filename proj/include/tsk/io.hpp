#pragma once

// JSON serialization for checkpoints, normalization statistics, training
// reports and sweep summaries. Doubles are written in shortest round-trip
// form, so finite parameters reload bit-exactly.

#include <json.hpp>

#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsk/dataset.hpp"
#include "tsk/diagnostics.hpp"
#include "tsk/error.hpp"
#include "tsk/model.hpp"
#include "tsk/trainer.hpp"

namespace tsk {

using json = nlohmann::json;

inline constexpr const char* kCheckpointFormat = "tsk-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline json to_array(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

template <class Derived>
inline json to_array(const Eigen::MatrixBase<Derived>& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return json(std::move(out));
}

inline std::vector<double> read_array(const json& j, const char* key, std::size_t expected) {
  if (!j.contains(key) || !j.at(key).is_array()) throw SchemaError(std::string("checkpoint is missing '") + key + "'");
  std::vector<double> v;
  for (const auto& e : j.at(key)) {
    if (!e.is_number()) throw SchemaError(std::string("checkpoint field '") + key + "' holds a non-number");
    v.push_back(e.get<double>());
  }
  if (v.size() != expected)
    throw SchemaError(std::string("checkpoint field '") + key + "' has " + std::to_string(v.size()) +
                      " entries, expected " + std::to_string(expected));
  return v;
}

}  // namespace detail

inline json to_json(const NormStats& s) {
  return json{{"mean", detail::to_array(s.mean)}, {"stdev", detail::to_array(s.stdev)}};
}

inline NormStats norm_stats_from_json(const json& j) {
  const std::size_t d = j.at("mean").size();
  const auto mean = detail::read_array(j, "mean", d);
  const auto stdev = detail::read_array(j, "stdev", d);
  NormStats s;
  s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Index>(d));
  s.stdev = Eigen::Map<const Vector>(stdev.data(), static_cast<Index>(d));
  return s;
}

struct Checkpoint {
  TskModel model;
  std::optional<NormStats> norm;
  std::vector<long long> class_values;
};

/// Consequents are written in (rule, input, class) order, input 0 being the bias.
inline json to_json(const Checkpoint& ck) {
  const TskModel& m = ck.model;
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["shape"] = {{"rules", m.num_rules()}, {"inputs", m.input_dim()}, {"classes", m.num_classes()}};
  j["variant"] = std::string(to_string(m.variant()));
  j["log_epsilon"] = m.log_epsilon();
  j["centers"] = detail::to_array(m.centers());
  j["widths"] = detail::to_array(m.widths());
  j["consequents"] = detail::to_array(m.consequent_params());
  j["norm"] = ck.norm ? to_json(*ck.norm) : json(nullptr);
  j["class_values"] = ck.class_values;
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", std::string()) != kCheckpointFormat) throw SchemaError("not a tsk checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw SchemaError("unsupported checkpoint version");
  const json& s = j.at("shape");
  const Shape shape{s.at("rules").get<Index>(), s.at("inputs").get<Index>(), s.at("classes").get<Index>()};
  Checkpoint ck{TskModel(shape, parse_variant(j.at("variant").get<std::string>())), std::nullopt, {}};
  ck.model.set_log_epsilon(j.at("log_epsilon").get<double>());
  const auto ad = static_cast<std::size_t>(shape.antecedent_size());
  const auto centers = detail::read_array(j, "centers", ad);
  const auto widths = detail::read_array(j, "widths", ad);
  const auto cons = detail::read_array(j, "consequents", static_cast<std::size_t>(shape.consequent_size()));
  Vector& theta = ck.model.flat();
  std::copy(centers.begin(), centers.end(), theta.data());
  std::copy(widths.begin(), widths.end(), theta.data() + ad);
  std::copy(cons.begin(), cons.end(), theta.data() + 2 * ad);
  if (j.contains("norm") && !j.at("norm").is_null()) {
    ck.norm = norm_stats_from_json(j.at("norm"));
    if (ck.norm->mean.size() != shape.inputs) throw SchemaError("checkpoint normalization does not match D");
  }
  if (j.contains("class_values")) ck.class_values = j.at("class_values").get<std::vector<long long>>();
  return ck;
}

inline void save_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) { save_json(path, to_json(ck)); }

inline Checkpoint load_checkpoint(const std::string& path) {
  try {
    return checkpoint_from_json(load_json(path));
  } catch (const json::exception& e) {
    throw SchemaError("malformed checkpoint '" + path + "': " + e.what());
  }
}

/// Wall time is left out so that reruns with the same seed produce
/// byte-identical reports.
inline json to_json(const TrainReport& r) {
  json epochs = json::array();
  for (const EpochStats& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_accuracy", e.val_accuracy},
                      {"val_loss", e.val_loss}});
  return json{{"epochs", std::move(epochs)},
              {"best_epoch", r.best_epoch},
              {"best_val_accuracy", r.best_val_accuracy},
              {"best_val_loss", r.best_val_loss},
              {"restored_best", r.restored_best},
              {"stopped_early", r.stopped_early},
              {"effective_batch_size", r.effective_batch_size}};
}

inline json to_json(std::span<const SweepSummary> rows, DefuzzVariant variant) {
  json out = json::array();
  for (const SweepSummary& s : rows)
    out.push_back({{"variant", std::string(to_string(variant))},
                   {"D", s.dim},
                   {"R", s.rules},
                   {"h", s.h},
                   {"epoch", s.epoch},
                   {"mean_fired_rules", s.mean},
                   {"p5", s.percentiles[0]},
                   {"p25", s.percentiles[1]},
                   {"p50", s.percentiles[2]},
                   {"p75", s.percentiles[3]},
                   {"p95", s.percentiles[4]}});
  return out;
}

}  // namespace tsk
