#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tsk/finite_diff.hpp"
#include "tsk/io.hpp"

using namespace tsk;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tsk_io_" + name)).string();
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(1);
  for (DefuzzVariant v : kAllVariants) {
    TskModel m = random_model(Shape{4, 3, 2}, v, rng);
    m.flat()(0) = 0.1 + 0.2;
    m.flat()(1) = std::nextafter(1.0, 2.0);
    m.flat()(2) = -4.9e-324;
    m.set_log_epsilon(1e-9);
    NormStats norm;
    norm.mean = Vector::LinSpaced(3, -1.0, 1.0 / 3.0);
    norm.stdev = Vector::Constant(3, 0.7);
    const std::string path = temp_path("ck.json");
    save_checkpoint(path, Checkpoint{m, norm, {-1, 7}});
    const Checkpoint back = load_checkpoint(path);
    EXPECT_EQ(back.model.shape(), m.shape());
    EXPECT_EQ(back.model.variant(), v);
    EXPECT_EQ(back.model.log_epsilon(), 1e-9);
    EXPECT_EQ(std::memcmp(back.model.flat().data(), m.flat().data(), sizeof(double) * m.flat().size()), 0);
    ASSERT_TRUE(back.norm.has_value());
    EXPECT_EQ(back.norm->mean, norm.mean);
    EXPECT_EQ(back.class_values, (std::vector<long long>{-1, 7}));
  }
}

TEST(Checkpoint, WithoutNormalization) {
  const TskModel m(Shape{1, 2, 3}, DefuzzVariant::LogTSK);
  const Checkpoint back = checkpoint_from_json(to_json(Checkpoint{m, std::nullopt, {}}));
  EXPECT_FALSE(back.norm.has_value());
  EXPECT_EQ(back.model.flat(), m.flat());
}

TEST(Checkpoint, MalformedFilesAreSchemaErrors) {
  const TskModel m(Shape{2, 2, 2}, DefuzzVariant::HTSK);
  json j = to_json(Checkpoint{m, std::nullopt, {}});
  j["centers"].erase(0);
  EXPECT_THROW(checkpoint_from_json(j), SchemaError);

  json k = to_json(Checkpoint{m, std::nullopt, {}});
  k["format"] = "something-else";
  EXPECT_THROW(checkpoint_from_json(k), SchemaError);

  const std::string path = temp_path("bad.json");
  std::ofstream(path) << "{\"format\": \"tsk-checkpoint\", \"version\": 1}";
  EXPECT_THROW(load_checkpoint(path), SchemaError);
  std::ofstream(path) << "{not json";
  EXPECT_THROW(load_checkpoint(path), ParseError);
}

TEST(Report, OmitsWallTime) {
  TrainReport r;
  r.epochs.push_back({1, 0.5, 0.75, 0.6});
  r.best_epoch = 1;
  r.wall_time_seconds = 12.5;
  const json j = to_json(r);
  EXPECT_FALSE(j.contains("wall_time_seconds"));
  EXPECT_EQ(j["epochs"][0]["val_accuracy"], 0.75);
  TrainReport r2 = r;
  r2.wall_time_seconds = 99.0;
  EXPECT_EQ(to_json(r2).dump(), j.dump());
}
