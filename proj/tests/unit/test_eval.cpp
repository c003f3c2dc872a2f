#include <gtest/gtest.h>

#include <cmath>

#include "fmprune/error.hpp"
#include "fmprune/eval.hpp"
#include "test_support.hpp"

namespace fmprune {
namespace {

using testing::Rng;
using testing::TempDir;

// Identity classifier: N inputs, N classes, scores equal the input values.
NetworkModel identity_classifier(std::size_t classes) {
  NetworkModel m = parse_config("[net]\nheight=1\nwidth=1\nchannels=" +
                                std::to_string(classes) +
                                "\n[connected]\noutput=" + std::to_string(classes) +
                                "\nactivation=linear\n");
  Rng rng(0);
  testing::fill_weights(m, rng);
  WeightBlock& w = *m.layers[0].weights;
  std::fill(w.coefficients.begin(), w.coefficients.end(), 0.0f);
  for (std::size_t i = 0; i < classes; ++i) w.coefficients[i * classes + i] = 1.0f;
  std::fill(w.biases.begin(), w.biases.end(), 0.0f);
  return m;
}

Tensor scores(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n, 1, 1}, std::move(v));
}

TEST(Classify, HandComputedTwoClassRanking) {
  NetworkModel m = identity_classifier(2);
  m.layers[0].weights->coefficients = {2.0f, -1.0f, 0.5f, 1.0f};
  m.layers[0].weights->biases = {0.0f, 0.25f};
  // logits: [2*0.2 - 0.7, 0.5*0.2 + 0.7 + 0.25] = [-0.3, 1.05]
  const auto ranked = classify(m, scores({0.2f, 0.7f}));
  ASSERT_EQ(ranked.size(), 2u);
  EXPECT_EQ(ranked[0].label, 1u);
  const double p1 = 1.0 / (1.0 + std::exp(-0.3 - 1.05));
  EXPECT_NEAR(ranked[0].score, p1, 1e-6);
  EXPECT_NEAR(ranked[1].score, 1.0 - p1, 1e-6);
}

TEST(Classify, UniformScoresRankByIndex) {
  const auto ranked = classify(identity_classifier(5), scores({1, 1, 1, 1, 1}));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(ranked[i].label, i);
    EXPECT_FLOAT_EQ(ranked[i].score, 0.2f);
  }
}

TEST(Classify, ZeroEpsilonMatchesUnpruned) {
  Rng rng(1);
  PruneConfig cfg;
  cfg.mode = PruneMode::literal_eq1;
  for (int trial = 0; trial < 20; ++trial) {
    const NetworkModel m = testing::random_relu_network(rng);
    const Tensor x = testing::random_tensor(m.input, rng);
    const auto a = classify(m, x);
    const auto b = classify(m, x, cfg);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].label, b[i].label);
      EXPECT_EQ(a[i].score, b[i].score);
    }
  }
}

TEST(Manifest, ParseAndValidate) {
  const DatasetManifest m =
      parse_manifest("# comment\na.bin\t1\n\n/abs/b.bin\t0\n", "cat\ndog\n", "/data");
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries[0].image, std::filesystem::path("/data/a.bin"));
  EXPECT_EQ(m.entries[1].image, std::filesystem::path("/abs/b.bin"));
  EXPECT_EQ(m.class_names, (std::vector<std::string>{"cat", "dog"}));
  EXPECT_THROW((void)parse_manifest("a\t2\n", "cat\ndog\n", "/"), ParseError);
  EXPECT_THROW((void)parse_manifest("a\t0\na\t1\n", "cat\ndog\n", "/"), ParseError);
  EXPECT_THROW((void)parse_manifest("a 0\n", "cat\n", "/"), ParseError);
  EXPECT_THROW((void)parse_manifest("a\tx\n", "cat\n", "/"), ParseError);
}

// Writes images and a manifest into `dir`; returns the manifest.
DatasetManifest write_dataset(const TempDir& dir,
                              const std::vector<std::pair<Tensor, std::size_t>>& items,
                              std::size_t classes) {
  std::string manifest;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string name = "img" + std::to_string(i) + ".bin";
    write_raw_tensor(dir.path() / name, items[i].first);
    manifest += name + "\t" + std::to_string(items[i].second) + "\n";
  }
  const auto path = dir.write("manifest.txt", manifest);
  return load_manifest(path, {}, classes);
}

TEST(Evaluate, SingleCorrectImage) {
  TempDir dir("eval1");
  const auto manifest = write_dataset(dir, {{scores({0, 3, 1}), 1}}, 3);
  const EvalResult r = evaluate(identity_classifier(3), manifest, {});
  EXPECT_EQ(r.accuracy, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(r.evaluated, 1u);
}

TEST(Evaluate, CorrectAtRankThree) {
  TempDir dir("eval2");
  const auto manifest = write_dataset(
      dir, {{scores({5, 1, 2, 3, 4, 0}), 0}, {scores({5, 1, 3, 4, 2, 0}), 2}}, 6);
  const EvalResult r = evaluate(identity_classifier(6), manifest, {});
  EXPECT_EQ(r.accuracy, (std::vector<double>{0.5, 1.0}));
}

TEST(Evaluate, UnreadableImagesAreReported) {
  TempDir dir("eval3");
  auto manifest = write_dataset(dir, {{scores({1, 0}), 0}}, 2);
  manifest.entries.push_back({dir.path() / "missing.bin", 1});
  dir.write("short.bin", "abc");
  manifest.entries.push_back({dir.path() / "short.bin", 1});
  const EvalResult r = evaluate(identity_classifier(2), manifest, {});
  EXPECT_EQ(r.evaluated, 1u);
  ASSERT_EQ(r.skipped.size(), 2u);
  EXPECT_EQ(r.skipped[0].image.filename(), "missing.bin");
  EXPECT_EQ(r.accuracy[0], 1.0);
  EXPECT_THROW((void)evaluate(identity_classifier(2), DatasetManifest{}, {}),
               std::invalid_argument);
}

TEST(Evaluate, DeterministicAcrossWorkersAndOrder) {
  Rng rng(2);
  TempDir dir("eval4");
  const NetworkModel m = testing::random_relu_network(rng);
  const std::size_t classes = m.output().volume();
  std::vector<std::pair<Tensor, std::size_t>> items;
  for (int i = 0; i < 24; ++i) {
    items.emplace_back(testing::random_tensor(m.input, rng), testing::pick(rng, 0, classes - 1));
  }
  const DatasetManifest manifest = write_dataset(dir, items, classes);
  PruneConfig cfg;
  cfg.mode = PruneMode::literal_eq1;
  cfg.epsilon = 0.05f;
  const EvalResult serial = evaluate(m, manifest, cfg, {{1, 2, 3, 5}, 1});
  const EvalResult parallel = evaluate(m, manifest, cfg, {{1, 2, 3, 5}, 4});
  EXPECT_EQ(serial.accuracy, parallel.accuracy);
  EXPECT_EQ(to_json(savings_ratio(serial.loads)), to_json(savings_ratio(parallel.loads)));
  for (std::size_t i = 1; i < serial.accuracy.size(); ++i) {
    EXPECT_LE(serial.accuracy[i - 1], serial.accuracy[i]);
  }
  DatasetManifest shuffled = manifest;
  std::shuffle(shuffled.entries.begin(), shuffled.entries.end(), rng);
  const EvalResult permuted = evaluate(m, shuffled, cfg, {{1, 2, 3, 5}, 3});
  EXPECT_EQ(permuted.accuracy, serial.accuracy);
  EXPECT_EQ(savings_ratio(permuted.loads).channels_skipped,
            savings_ratio(serial.loads).channels_skipped);
}

TEST(Sweep, ZeroEpsilonHasNoDelta) {
  Rng rng(3);
  TempDir dir("sweep1");
  const NetworkModel m = testing::random_relu_network(rng);
  const std::size_t classes = m.output().volume();
  std::vector<std::pair<Tensor, std::size_t>> items;
  for (int i = 0; i < 8; ++i) {
    items.emplace_back(testing::random_tensor(m.input, rng), testing::pick(rng, 0, classes - 1));
  }
  const DatasetManifest manifest = write_dataset(dir, items, classes);
  const std::vector<float> eps{0.0f};
  const SweepResult r = epsilon_sweep(m, manifest, eps);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].top1_loss, 0.0);
  EXPECT_EQ(r.rows[0].top5_loss, 0.0);
  // Load reduction equals the exact-zero fraction of conv inputs after the first.
  std::uint64_t zero = 0;
  std::uint64_t total = 0;
  for (const auto& [x, label] : items) {
    const auto inputs = testing::conv_inputs(m, x);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      total += inputs[i].second.channels();
      if (i > 0) zero += testing::exact_zero_channels(inputs[i].second);
    }
  }
  EXPECT_EQ(r.rows[0].load_reduction, static_cast<double>(zero) / static_cast<double>(total));
}

// Layer 1 reads 4 channels; channel 3 is the constant 0.05.
NetworkModel constant_channel_net() {
  NetworkModel m = parse_config(
      "[net]\nheight=3\nwidth=3\nchannels=1\n"
      "[convolutional]\nfilters=4\nsize=1\nactivation=relu\n"
      "[convolutional]\nfilters=2\nsize=1\nactivation=linear\n");
  Rng rng(4);
  testing::fill_weights(m, rng);
  WeightBlock& w = *m.layers[0].weights;
  w.coefficients = {1, 1, 1, 0};
  w.biases = {1, 1, 1, 0.05f};
  return m;
}

TEST(Sweep, ConstantChannelJumpsByOneOverC) {
  TempDir dir("sweep2");
  const NetworkModel m = constant_channel_net();
  const DatasetManifest manifest =
      write_dataset(dir, {{Tensor(m.input, 0.5f), 0}, {Tensor(m.input, 0.25f), 1}}, 2);
  const std::vector<float> eps{0.0f, 0.04f, 0.05f, 0.1f};
  const SweepResult r = epsilon_sweep(m, manifest, eps);
  ASSERT_EQ(r.rows.size(), 4u);
  for (const SweepRow& row : r.rows) {
    ASSERT_EQ(row.savings.layers.size(), 2u);
    const double expected = row.epsilon >= 0.05f ? 0.25 : 0.0;
    EXPECT_EQ(row.savings.layers[1].saved_fraction, expected) << row.epsilon;
    EXPECT_EQ(row.savings.layers[0].saved_fraction, 0.0);
  }
  EXPECT_EQ(r.rows[2].load_reduction - r.rows[1].load_reduction, 1.0 / 5.0);
  const std::vector<float> unsorted{0.1f, 0.0f};
  EXPECT_THROW((void)epsilon_sweep(m, manifest, unsorted), std::invalid_argument);
}

TEST(Compare, ZeroEpsilonIdenticalProbabilities) {
  Rng rng(5);
  const NetworkModel m = testing::random_relu_network(rng);
  std::vector<LabeledImage> images;
  for (int i = 0; i < 6; ++i) {
    images.push_back({"im" + std::to_string(i), testing::random_tensor(m.input, rng),
                      testing::pick(rng, 0, m.output().volume() - 1)});
  }
  PruneConfig cfg;
  cfg.mode = PruneMode::literal_eq1;
  for (const ImageComparison& c : compare_per_image(m, images, cfg)) {
    EXPECT_EQ(c.probability_unpruned, c.probability_pruned);
  }
}

TEST(Compare, SavedLoadsWithoutProbabilityChange) {
  // Channel 3 carries 0.05 but its pointwise weights are zero, so pruning it
  // changes nothing downstream while still saving a load.
  NetworkModel m = constant_channel_net();
  WeightBlock& w = *m.layers[1].weights;
  w.coefficients = {0.5f, -0.5f, 1.0f, 0.0f, -1.0f, 0.25f, 0.75f, 0.0f};
  PruneConfig cfg;
  cfg.mode = PruneMode::literal_eq1;
  cfg.epsilon = 0.1f;
  const std::vector<LabeledImage> images{{"a", Tensor(m.input, 0.5f), 1}};
  const auto rows = compare_per_image(m, images, cfg);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].probability_pruned, rows[0].probability_unpruned);
  EXPECT_EQ(rows[0].channels_skipped, 1u);
  EXPECT_EQ(rows[0].channels_total, 5u);
}

}  // namespace
}  // namespace fmprune
