#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tsk/dataset.hpp"
#include "tsk/error.hpp"
#include "tsk/gradients.hpp"
#include "tsk/model.hpp"
#include "tsk/rng.hpp"

namespace tsk {

struct TrainConfig {
  double learning_rate = 0.01;
  Index batch_size = 512;
  int max_epochs = 200;
  int patience = 20;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  LossSpec loss{};

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
    if (patience < 1) throw ConfigError("patience must be positive");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
      throw ConfigError("Adam betas must lie in (0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  }
};

/// Requested size, or min(n_train, 60) when the request exceeds the set.
inline Index effective_batch_size(Index requested, Index n_train) {
  if (requested < 1 || n_train < 1) throw PreconditionError("batch size and training size must be positive");
  return requested <= n_train ? requested : std::min<Index>(n_train, 60);
}

/// Adam with bias correction over the flat parameter vector.
class AdamState {
 public:
  AdamState(Index num_params, double beta1, double beta2, double eps)
      : m_(Vector::Zero(num_params)), v_(Vector::Zero(num_params)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Vector& theta, const Vector& grad, double lr) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    theta.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  std::int64_t steps() const { return t_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }

 private:
  Vector m_;
  Vector v_;
  double beta1_;
  double beta2_;
  double eps_;
  std::int64_t t_ = 0;
};

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

inline Evaluation evaluate(const TskModel& model, const Dataset& ds, const LossSpec& loss = {}) {
  if (ds.empty()) throw PreconditionError("cannot evaluate on an empty dataset");
  model.check_batch(ds.features);
  const Prediction p = predict_batch(model, ds.features);
  Index correct = 0;
  double total = 0.0;
  for (Index n = 0; n < ds.size(); ++n) {
    const int y = ds.labels[static_cast<std::size_t>(n)];
    if (p.labels[static_cast<std::size_t>(n)] == y) ++correct;
    total += detail::output_loss(p.scores.row(n).transpose(), y, loss.kind, nullptr);
  }
  const double n = static_cast<double>(ds.size());
  return {static_cast<double>(correct) / n, total / n};
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  double best_val_loss = 0.0;
  bool restored_best = false;
  bool stopped_early = false;
  Index effective_batch_size = 0;
  double wall_time_seconds = 0.0;
};

struct BatchEvent {
  int epoch = 0;
  std::size_t batch = 0;
  const TskModel& model;
  const Matrix& xs;
  std::span<const int> ys;
  double loss = 0.0;
  const GradientSet& grads;
};

struct EpochEvent {
  int epoch = 0;  ///< 0 is the initial model, before any update
  const TskModel& model;
  const EpochStats* stats = nullptr;
};

/// Diagnostic callback invoked synchronously on the training thread.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_epoch(const EpochEvent&) {}
  /// Called after the gradient is computed and before the update is applied.
  virtual void on_batch(const BatchEvent&) {}
};

namespace detail {

class EpochRunner {
 public:
  EpochRunner(TskModel& model, const Dataset& data, const TrainConfig& cfg, std::span<TrainObserver* const> observers)
      : model_(model),
        data_(data),
        cfg_(cfg),
        observers_(observers),
        adam_(model.shape().num_params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
        rng_(derive_seed(cfg.seed, "train/shuffle")),
        batch_(effective_batch_size(cfg.batch_size, data.size())),
        order_(static_cast<std::size_t>(data.size())) {
    std::iota(order_.begin(), order_.end(), Index{0});
  }

  Index batch_size() const { return batch_; }

  /// One pass over reshuffled data, keeping the last partial batch.
  double run_epoch(int epoch) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    double loss_sum = 0.0;
    Index seen = 0;
    std::size_t batch_no = 0;
    for (Index start = 0; start < data_.size(); start += batch_, ++batch_no) {
      const Index len = std::min(batch_, data_.size() - start);
      xs_.resize(len, data_.dim());
      ys_.resize(static_cast<std::size_t>(len));
      for (Index i = 0; i < len; ++i) {
        const Index row = order_[static_cast<std::size_t>(start + i)];
        xs_.row(i) = data_.features.row(row);
        ys_[static_cast<std::size_t>(i)] = data_.labels[static_cast<std::size_t>(row)];
      }
      LossAndGrad lg;
      try {
        lg = loss_and_grad(model_, xs_, ys_, cfg_.loss, batch_no);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
      }
      for (TrainObserver* o : observers_) o->on_batch(BatchEvent{epoch, batch_no, model_, xs_, ys_, lg.loss, lg.grads});
      adam_.step(model_.flat(), lg.grads.flat(), cfg_.learning_rate);
      if (!model_.flat().allFinite())
        throw NumericError("epoch " + std::to_string(epoch) + ": non-finite parameters after batch " +
                           std::to_string(batch_no));
      loss_sum += lg.loss * static_cast<double>(len);
      seen += len;
    }
    return loss_sum / static_cast<double>(seen);
  }

 private:
  TskModel& model_;
  const Dataset& data_;
  const TrainConfig& cfg_;
  std::span<TrainObserver* const> observers_;
  AdamState adam_;
  Rng rng_;
  Index batch_;
  std::vector<Index> order_;
  Matrix xs_;
  std::vector<int> ys_;
};

inline void check_training_inputs(const TskModel& model, const Dataset& train) {
  if (train.empty()) throw PreconditionError("training set is empty");
  model.check_batch(train.features);
  if (train.num_classes > model.num_classes())
    throw ShapeError("data has " + std::to_string(train.num_classes) + " classes but the model outputs " +
                     std::to_string(model.num_classes()));
}

}  // namespace detail

struct TrainResult {
  TskModel model;
  TrainReport report;
};

/// Mini-batch Adam with validation-accuracy early stopping.
///
/// An epoch improves on the best so far when its validation accuracy is
/// higher, or equal with a lower validation loss. Training stops after
/// `patience` epochs without improvement, and the parameters from the best
/// epoch are returned.
inline TrainResult train(TskModel model, const Dataset& train_set, const Dataset& val, const TrainConfig& cfg,
                         std::span<TrainObserver* const> observers = {}) {
  cfg.validate();
  detail::check_training_inputs(model, train_set);
  if (val.empty()) throw PreconditionError("validation set is empty");
  model.check_batch(val.features);

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res{model, {}};
  detail::EpochRunner runner(model, train_set, cfg, observers);
  res.report.effective_batch_size = runner.batch_size();
  for (TrainObserver* o : observers) o->on_epoch(EpochEvent{0, model, nullptr});

  double best_acc = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = runner.run_epoch(epoch);
    const Evaluation ev = evaluate(model, val, cfg.loss);
    st.val_accuracy = ev.accuracy;
    st.val_loss = ev.loss;
    res.report.epochs.push_back(st);
    for (TrainObserver* o : observers) o->on_epoch(EpochEvent{epoch, model, &res.report.epochs.back()});

    if (st.val_accuracy > best_acc || (st.val_accuracy == best_acc && st.val_loss < best_loss)) {
      best_acc = st.val_accuracy;
      best_loss = st.val_loss;
      res.report.best_epoch = epoch;
      res.model = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      res.report.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  res.report.best_val_accuracy = best_acc;
  res.report.best_val_loss = best_loss;
  res.report.restored_best = res.report.best_epoch != static_cast<int>(res.report.epochs.size());
  res.report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// Trains for exactly `epochs` passes with no validation. Observers see
/// epoch 0 (initial model) and every completed epoch.
inline TskModel fit_epochs(TskModel model, const Dataset& data, const TrainConfig& cfg, int epochs,
                           std::span<TrainObserver* const> observers = {}) {
  cfg.validate();
  detail::check_training_inputs(model, data);
  detail::EpochRunner runner(model, data, cfg, observers);
  for (TrainObserver* o : observers) o->on_epoch(EpochEvent{0, model, nullptr});
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = runner.run_epoch(epoch);
    for (TrainObserver* o : observers) o->on_epoch(EpochEvent{epoch, model, &st});
  }
  return model;
}

}  // namespace tsk
