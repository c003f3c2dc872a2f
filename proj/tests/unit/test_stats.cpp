#include <gtest/gtest.h>

#include <sstream>

#include "fmprune/error.hpp"
#include "fmprune/stats.hpp"
#include "test_support.hpp"

namespace fmprune {
namespace {

using testing::Rng;

// Single 1x1 conv over 3 channels: exactly three coefficients.
NetworkModel three_weights(std::vector<float> coeffs) {
  NetworkModel m = parse_config(
      "[net]\nheight=2\nwidth=2\nchannels=3\n[convolutional]\nfilters=1\nsize=1\n"
      "activation=linear\n");
  Rng rng(0);
  testing::fill_weights(m, rng);
  m.layers[0].weights->coefficients = std::move(coeffs);
  return m;
}

std::vector<float> all_coefficients(const NetworkModel& m, bool conv_only) {
  std::vector<float> out;
  for (const Layer& l : m.layers) {
    if (!l.weights) continue;
    if (conv_only && l.spec.kind != LayerKind::convolutional) continue;
    out.insert(out.end(), l.weights->coefficients.begin(), l.weights->coefficients.end());
  }
  return out;
}

TEST(WeightSparsity, DirectCount) {
  const std::vector<float> ts{0.0f, 0.005f};
  const SparsityReport r = weight_sparsity(three_weights({0.0f, 0.004f, 0.5f}), ts);
  EXPECT_EQ(r.all_parameters, (std::vector<double>{1.0 / 3.0, 2.0 / 3.0}));
  EXPECT_EQ(r.conv_kernels, r.all_parameters);
  EXPECT_EQ(r.all_parameter_count, 3u);
}

TEST(WeightSparsity, AllZeroModel) {
  const auto ts = default_sparsity_thresholds();
  const SparsityReport r = weight_sparsity(three_weights({0, 0, 0}), ts);
  for (double f : r.all_parameters) EXPECT_EQ(f, 1.0);
}

TEST(WeightSparsity, MatchesSortOracle) {
  Rng rng(1000);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkModel m = parse_config(
        "[net]\nheight=6\nwidth=6\nchannels=4\n"
        "[convolutional]\nfilters=8\nsize=3\npad=1\nbatch_normalize=1\nactivation=leaky\n"
        "[convolutional]\nfilters=8\ngroups=8\nsize=3\npad=1\nactivation=relu\n"
        "[avgpool]\n[connected]\noutput=10\nactivation=linear\n");
    testing::fill_weights(m, rng, 0.3f);
    // Snap some coefficients onto exact threshold values to exercise ties.
    const auto ts = default_sparsity_thresholds();
    for (Layer& l : m.layers) {
      if (!l.weights) continue;
      for (float& c : l.weights->coefficients) {
        if (testing::pick(rng, 0, 9) == 0) c = ts[testing::pick(rng, 0, ts.size() - 1)];
      }
    }
    const SparsityReport r = weight_sparsity(m, ts);
    EXPECT_EQ(r.all_parameters, testing::sorted_fraction_oracle(all_coefficients(m, false), ts));
    EXPECT_EQ(r.conv_kernels, testing::sorted_fraction_oracle(all_coefficients(m, true), ts));
    EXPECT_EQ(r.all_parameter_count, 288u + 72u + 80u);
    for (std::size_t i = 1; i < ts.size(); ++i) {
      EXPECT_LE(r.all_parameters[i - 1], r.all_parameters[i]);
      EXPECT_LE(r.conv_kernels[i - 1], r.conv_kernels[i]);
    }
  }
}

TEST(WeightSparsity, Errors) {
  const NetworkModel m = three_weights({1, 2, 3});
  const std::vector<float> unsorted{0.1f, 0.0f};
  EXPECT_THROW((void)weight_sparsity(m, unsorted), std::invalid_argument);
  const std::vector<float> ok{0.1f};
  EXPECT_THROW((void)weight_sparsity(parse_config("[net]\nheight=1\nwidth=1\nchannels=1\n"
                                                  "[convolutional]\nfilters=1\nsize=1\n"
                                                  "activation=relu\n"),
                                     ok),
               ModelError);
}

TEST(WeightSparsity, CsvHasOneColumnPerThreshold) {
  const auto ts = default_sparsity_thresholds();
  ASSERT_EQ(ts.size(), 9u);
  std::ostringstream os;
  write_csv(os, weight_sparsity(three_weights({0, 1, 2}), ts));
  std::istringstream in(os.str());
  std::string header, row1, row2, extra;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_FALSE(std::getline(in, extra));
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 9);
  EXPECT_EQ(row1.rfind("all_parameters,", 0), 0u);
  EXPECT_EQ(row2.rfind("conv_kernels,", 0), 0u);
}

TEST(Thresholds, ParseList) {
  EXPECT_EQ(parse_threshold_list("0,0.1"), (std::vector<float>{0.0f, 0.1f}));
  EXPECT_THROW((void)parse_threshold_list(""), std::invalid_argument);
  EXPECT_THROW((void)parse_threshold_list("0,abc"), std::invalid_argument);
}

TEST(Grades, Classification) {
  EXPECT_EQ(grade_accuracy_drop(0.005, 0.0), AccuracyGrade::green);
  EXPECT_EQ(grade_accuracy_drop(-0.02, -0.02), AccuracyGrade::green);
  EXPECT_EQ(grade_accuracy_drop(0.01, 0.0), AccuracyGrade::yellow);
  EXPECT_EQ(grade_accuracy_drop(0.0, 0.3), AccuracyGrade::yellow);
  EXPECT_EQ(grade_accuracy_drop(0.02, 0.01), AccuracyGrade::red);
}

TEST(StaticPrune, ThresholdApplication) {
  const NetworkModel m = three_weights({0.004f, -0.02f, 0.5f});
  const NetworkModel p = static_prune(m, 0.005f);
  EXPECT_EQ(p.layers[0].weights->coefficients, (std::vector<float>{0.0f, -0.02f, 0.5f}));
  EXPECT_EQ(m.layers[0].weights->coefficients[0], 0.004f);
  EXPECT_EQ(p.layers[0].weights->biases, m.layers[0].weights->biases);
}

TEST(StaticPrune, ZeroEpsilonIsByteIdentical) {
  Rng rng(3);
  NetworkModel m = testing::random_relu_network(rng);
  m.layers[0].weights->coefficients[0] = -0.0f;
  EXPECT_EQ(save_weights(static_prune(m, 0.0f)), save_weights(m));
}

TEST(StaticPrune, IdempotentAndDefinitional) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const NetworkModel m = testing::random_relu_network(rng);
    const float eps = testing::uniform(rng, 0.0f, 0.3f);
    const NetworkModel once = static_prune(m, eps);
    EXPECT_EQ(save_weights(static_prune(once, eps)), save_weights(once));
    const float zero = 0.0f;
    EXPECT_EQ(weight_sparsity(once, std::span(&zero, 1)).all_parameters[0],
              weight_sparsity(m, std::span(&eps, 1)).all_parameters[0]);
  }
}

TEST(StaticPrune, NoCoefficientsInBandKeepsForward) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    NetworkModel m = testing::random_relu_network(rng);
    for (Layer& l : m.layers) {
      if (!l.weights) continue;
      for (float& c : l.weights->coefficients) {
        if (std::fabs(c) <= 0.05f) c = 0.0f;
      }
    }
    const Tensor x = testing::random_tensor(m.input, rng);
    EXPECT_TRUE(bitwise_equal(forward(static_prune(m, 0.05f), x), forward(m, x)));
  }
}

TEST(ActivationSparsity, ReluZeroCountMatchesPreActivationOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const NetworkModel m = testing::random_relu_network(rng);
    std::vector<Tensor> images{testing::random_tensor(m.input, rng),
                               testing::random_tensor(m.input, rng)};
    std::uint64_t nonpositive = 0;
    std::uint64_t total = 0;
    for (const Tensor& img : images) {
      Tensor x = img;
      for (const Layer& l : m.layers) {
        if (l.spec.kind == LayerKind::convolutional) {
          Layer linear = l;
          linear.spec.activation = Activation::linear;
          const Tensor pre = layer_forward(x, linear);
          for (float v : pre.data()) nonpositive += v <= 0.0f;
          total += pre.size();
        }
        x = layer_forward(x, l);
      }
    }
    const std::vector<float> ts{0.0f, 0.1f, 1.0f};
    const ActivationSparsity r = activation_sparsity(m, images, ts);
    EXPECT_EQ(r.elements, total);
    EXPECT_EQ(r.fractions[0], static_cast<double>(nonpositive) / static_cast<double>(total));
    EXPECT_LE(r.fractions[0], r.fractions[1]);
    EXPECT_LE(r.fractions[1], r.fractions[2]);
  }
}

TEST(ActivationSparsity, LinearIdentityOnOnes) {
  NetworkModel m = three_weights({1.0f, 0.0f, 0.0f});
  m.layers[0].weights->biases = {0.0f};
  const std::vector<Tensor> images{Tensor(m.input, 1.0f)};
  const std::vector<float> ts{0.5f};
  EXPECT_EQ(activation_sparsity(m, images, ts).fractions[0], 0.0);
  EXPECT_THROW((void)activation_sparsity(m, std::span<const Tensor>{}, ts),
               std::invalid_argument);
}

TEST(Cost, FormulaExamples) {
  const NetworkModel full = parse_config(
      "[net]\nheight=4\nwidth=4\nchannels=3\n"
      "[convolutional]\nfilters=8\nsize=3\npad=1\nactivation=relu\n");
  EXPECT_EQ(compute_cost(full).layers[0].macs, 3456u);
  const NetworkModel dw = parse_config(
      "[net]\nheight=4\nwidth=4\nchannels=3\n"
      "[convolutional]\nfilters=3\ngroups=3\nsize=3\npad=1\nactivation=relu\n");
  EXPECT_EQ(compute_cost(dw).layers[0].macs, 432u);
}

TEST(Cost, DepthwiseIsOneOverO) {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t c = testing::pick(rng, 1, 16);
    const std::size_t side = testing::pick(rng, 3, 20);
    const std::size_t k = std::vector<std::size_t>{1, 3, 5}[testing::pick(rng, 0, 2)];
    auto cfg = [&](std::size_t groups) {
      std::ostringstream os;
      os << "[net]\nheight=" << side << "\nwidth=" << side << "\nchannels=" << c
         << "\n[convolutional]\nfilters=" << c << "\ngroups=" << groups << "\nsize=" << k
         << "\npad=1\nactivation=relu\n";
      return compute_cost(parse_config(os.str())).layers[0].macs;
    };
    EXPECT_EQ(cfg(c) * c, cfg(1));
  }
}

// Hand-summed MobileNet-like stack on a 3x8x8 input:
//   conv 3->8 k3 s2 p1 : out 8x4x4, A=16, MACs 3*9*8*16  = 3456
//   dw   8->8 k3 g8    : A=16,            MACs 8*9*16    = 1152
//   pw   8->16 k1      : A=16,            MACs 8*16*16   = 2048
//   avgpool, connected 16->10             MACs 160
TEST(Cost, MobileNetLikeStackHandTotals) {
  const NetworkModel m = parse_config(
      "[net]\nheight=8\nwidth=8\nchannels=3\n"
      "[convolutional]\nfilters=8\nsize=3\nstride=2\npad=1\nactivation=relu\n"
      "[convolutional]\nfilters=8\ngroups=8\nsize=3\npad=1\nactivation=relu\n"
      "[convolutional]\nfilters=16\nsize=1\nactivation=relu\n"
      "[avgpool]\n[connected]\noutput=10\nactivation=linear\n");
  const CostModel cost = compute_cost(m);
  EXPECT_EQ(cost.total_macs, 3456u + 1152u + 2048u + 160u);
  EXPECT_EQ(cost.total_kernel_coeffs, 216u + 72u + 128u + 160u);
  EXPECT_EQ(cost.total_fmap_elements, 192u + 128u + 128u + 16u);
  EXPECT_DOUBLE_EQ(cost.layers[1].fmap_to_kernel_ratio, 128.0 / 72.0);
}

}  // namespace
}  // namespace fmprune
