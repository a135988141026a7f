#include <gtest/gtest.h>

#include "tsk/finite_diff.hpp"
#include "tsk/init.hpp"
#include "tsk/trainer.hpp"

using namespace tsk;

namespace {

Dataset line_data(std::initializer_list<double> xs, std::initializer_list<int> ys) {
  Dataset ds;
  ds.features.resize(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double x : xs) ds.features(i++, 0) = x;
  ds.labels = ys;
  ds.num_classes = 2;
  return ds;
}

struct Prepared {
  Dataset train, val, test;
};

Prepared separable(Index n, Index d, std::uint64_t seed) {
  const Dataset ds = synth_gaussian(n, d, 2, seed, Labeling::ClusterSeparable);
  const SplitResult parts = split(ds, SplitSpec{0.7, 0.1, seed, false});
  auto [tr, others, stats] = zscore_fit_transform(parts.train, {parts.val, parts.test});
  return {std::move(tr), std::move(others[0]), std::move(others[1])};
}

}  // namespace

TEST(BatchSize, FallsBackWhenTheRequestExceedsTheData) {
  EXPECT_EQ(effective_batch_size(512, 10000), 512);
  EXPECT_EQ(effective_batch_size(512, 43), 43);
  EXPECT_EQ(effective_batch_size(512, 300), 60);
  EXPECT_EQ(effective_batch_size(512, 512), 512);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  AdamState adam(3, 0.9, 0.999, 1e-8);
  Vector theta(3);
  theta << 1.0, -2.0, 3.0;
  const Vector before = theta;
  adam.step(theta, Vector::Zero(3), 0.1);
  EXPECT_EQ(theta, before);
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
  // Bias correction makes the first step lr * g / (|g| + eps).
  AdamState adam(2, 0.9, 0.999, 1e-8);
  Vector theta = Vector::Zero(2);
  Vector g(2);
  g << 4.0, -0.5;
  adam.step(theta, g, 0.01);
  EXPECT_NEAR(theta(0), -0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_NEAR(theta(1), 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, MinimizesAQuadratic) {
  AdamState adam(2, 0.9, 0.999, 1e-8);
  Vector theta(2);
  theta << 3.0, -1.0;
  for (int i = 0; i < 3000; ++i) adam.step(theta, 2.0 * theta, 0.01);
  EXPECT_LT(theta.norm(), 1e-2);
}

TEST(Train, ZeroLearningRateKeepsTheInitialModel) {
  const Prepared p = separable(200, 4, 3);
  InitSpec is;
  is.seed = 3;
  const TskModel init = init_model(p.train, 3, DefuzzVariant::HTSK, is);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.max_epochs = 30;
  cfg.patience = 5;
  const TrainResult res = train(init, p.train, p.val, cfg);
  EXPECT_EQ(res.model.flat(), init.flat());
  EXPECT_EQ(res.report.best_epoch, 1);
  EXPECT_EQ(res.report.epochs.size(), 6u);
  EXPECT_TRUE(res.report.stopped_early);
}

TEST(Train, PatienceOneStopsAfterTheFirstWorseEpoch) {
  // The validation labels are the reverse of the training labels, so every
  // update that helps training hurts validation.
  const Dataset tr = line_data({-2, -1, -0.5, 0.5, 1, 2}, {0, 0, 0, 1, 1, 1});
  const Dataset val = line_data({-1.5, -0.25, 0.25, 1.5}, {1, 1, 0, 0});
  TskModel m(Shape{1, 1, 2}, DefuzzVariant::VanillaSoftmax);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.patience = 1;
  cfg.max_epochs = 50;
  const TrainResult res = train(m, tr, val, cfg);
  ASSERT_EQ(res.report.epochs.size(), 2u);
  EXPECT_LE(res.report.epochs[1].val_accuracy, res.report.epochs[0].val_accuracy);
  EXPECT_GT(res.report.epochs[1].val_loss, res.report.epochs[0].val_loss);
  EXPECT_EQ(res.report.best_epoch, 1);
  EXPECT_TRUE(res.report.stopped_early);
  EXPECT_TRUE(res.report.restored_best);
}

TEST(Train, SeparableTaskReachesHighValidationAccuracy) {
  const Prepared p = separable(600, 10, 4);
  InitSpec is;
  is.seed = 4;
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.seed = 4;
  const TrainResult res = train(init_model(p.train, 2, DefuzzVariant::HTSK, is), p.train, p.val, cfg);
  EXPECT_GE(res.report.best_val_accuracy, 0.95);
  EXPECT_LE(res.report.epochs.size(), 50u);
}

TEST(Train, SameSeedSameReport) {
  const Prepared p = separable(300, 6, 5);
  InitSpec is;
  is.seed = 5;
  TrainConfig cfg;
  cfg.max_epochs = 15;
  cfg.batch_size = 32;
  cfg.seed = 5;
  const TskModel init = init_model(p.train, 4, DefuzzVariant::LogTSK, is);
  const TrainResult a = train(init, p.train, p.val, cfg);
  const TrainResult b = train(init, p.train, p.val, cfg);
  EXPECT_EQ(a.model.flat(), b.model.flat());
  ASSERT_EQ(a.report.epochs.size(), b.report.epochs.size());
  for (std::size_t i = 0; i < a.report.epochs.size(); ++i) {
    EXPECT_EQ(a.report.epochs[i].train_loss, b.report.epochs[i].train_loss);
    EXPECT_EQ(a.report.epochs[i].val_loss, b.report.epochs[i].val_loss);
  }
}

TEST(Train, EmptyValidationIsRejected) {
  const Prepared p = separable(100, 3, 6);
  Dataset empty = p.val.subset(std::vector<Index>{});
  EXPECT_THROW(train(TskModel(Shape{2, 3, 2}, DefuzzVariant::HTSK), p.train, empty, TrainConfig{}), PreconditionError);
}

TEST(Train, ObserversSeeEveryBatch) {
  struct Counter : TrainObserver {
    int epochs = 0, batches = 0;
    void on_epoch(const EpochEvent&) override { ++epochs; }
    void on_batch(const BatchEvent&) override { ++batches; }
  } counter;
  const Prepared p = separable(200, 3, 7);
  TrainConfig cfg;
  cfg.batch_size = 50;
  TrainObserver* obs[] = {&counter};
  const TskModel m = fit_epochs(TskModel(Shape{2, 3, 2}, DefuzzVariant::HTSK), p.train, cfg, 3, obs);
  // 126 training rows in batches of 50: 3 batches per epoch, last one partial.
  EXPECT_EQ(p.train.size(), 126);
  EXPECT_EQ(counter.epochs, 4);
  EXPECT_EQ(counter.batches, 9);
  EXPECT_TRUE(m.flat().allFinite());
}

TEST(Evaluate, PerfectAndComplement) {
  Rng rng(8);
  const TskModel m = random_model(Shape{3, 2, 2}, DefuzzVariant::HTSK, rng);
  Dataset ds;
  ds.features.resize(40, 2);
  std::normal_distribution<double> normal;
  for (auto& x : ds.features.reshaped()) x = normal(rng);
  ds.num_classes = 2;
  ds.labels = predict_batch(m, ds.features).labels;
  EXPECT_EQ(evaluate(m, ds).accuracy, 1.0);

  // Balanced relabelling, then flip every label.
  for (std::size_t i = 0; i < ds.labels.size(); ++i) ds.labels[i] = static_cast<int>(i % 2);
  const double acc = evaluate(m, ds).accuracy;
  for (int& y : ds.labels) y = 1 - y;
  EXPECT_DOUBLE_EQ(evaluate(m, ds).accuracy, 1.0 - acc);
  EXPECT_EQ(evaluate(m, ds).loss, evaluate(m, ds).loss);
}
