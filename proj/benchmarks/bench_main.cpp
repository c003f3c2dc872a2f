#include <benchmark/benchmark.h>

#include <random>
#include <sstream>

#include "fmprune/inference.hpp"
#include "fmprune/model.hpp"
#include "fmprune/pruning.hpp"

namespace {

using namespace fmprune;

void randomize(NetworkModel& m, std::mt19937& rng) {
  std::uniform_real_distribution<float> w(-0.2f, 0.2f);
  for (Layer& l : m.layers) {
    if (!l.spec.has_weights()) continue;
    WeightBlock b;
    b.out_channels = l.spec.kind == LayerKind::connected ? l.spec.outputs : l.spec.filters;
    b.in_channels_per_group = l.spec.kind == LayerKind::connected
                                  ? l.spec.input.volume()
                                  : l.spec.input.channels / l.spec.groups;
    b.kernel_size = l.spec.kind == LayerKind::connected ? 1 : l.spec.size;
    b.coefficients.resize(b.coefficient_count());
    for (float& c : b.coefficients) c = w(rng);
    b.biases.resize(b.out_channels);
    for (float& c : b.biases) c = w(rng) - 0.1f;
    l.weights = std::move(b);
  }
}

Tensor random_input(Shape s, std::mt19937& rng) {
  Tensor t(s);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (float& v : t.data()) v = d(rng);
  return t;
}

Layer conv_layer(std::size_t c, std::size_t side, std::size_t filters, std::size_t k,
                 std::size_t groups, std::mt19937& rng) {
  std::ostringstream cfg;
  cfg << "[net]\nchannels=" << c << "\nheight=" << side << "\nwidth=" << side
      << "\n[convolutional]\nfilters=" << filters << "\nsize=" << k << "\ngroups=" << groups
      << "\npad=1\nactivation=relu\n";
  NetworkModel m = parse_config(cfg.str());
  randomize(m, rng);
  return m.layers.front();
}

void BM_ConvReference(benchmark::State& state) {
  std::mt19937 rng(1);
  const auto c = static_cast<std::size_t>(state.range(0));
  const Layer l = conv_layer(c, 28, c, 3, 1, rng);
  const Tensor x = random_input(l.spec.input, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv_forward_reference(x, l));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c * c * 9 * 28 * 28));
}
BENCHMARK(BM_ConvReference)->Arg(8)->Arg(32);

void BM_ConvFast(benchmark::State& state) {
  std::mt19937 rng(1);
  const auto c = static_cast<std::size_t>(state.range(0));
  const Layer l = conv_layer(c, 28, c, 3, 1, rng);
  const Tensor x = random_input(l.spec.input, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv_forward_fast(x, l));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c * c * 9 * 28 * 28));
}
BENCHMARK(BM_ConvFast)->Arg(8)->Arg(32);

void BM_MarkZeroChannels(benchmark::State& state) {
  std::mt19937 rng(2);
  Tensor x = random_input({64, 56, 56}, rng);
  for (std::size_t c = 0; c < 64; c += 2) {
    for (float& v : x.channel_plane(c)) v *= 0.01f;
  }
  const ProcessorCapability cap{static_cast<std::size_t>(state.range(0)),
                                static_cast<std::size_t>(state.range(0))};
  for (auto _ : state) benchmark::DoNotOptimize(mark_zero_channels(x, 0.05f, cap));
}
BENCHMARK(BM_MarkZeroChannels)->Arg(1)->Arg(4)->Arg(16);

// Fraction of skipped input channels given in percent by the argument.
void BM_PrunedConv(benchmark::State& state) {
  std::mt19937 rng(3);
  const Layer l = conv_layer(32, 28, 32, 3, 1, rng);
  Tensor x = random_input(l.spec.input, rng);
  const auto skip = static_cast<std::size_t>(state.range(0)) * 32 / 100;
  for (std::size_t c = 0; c < skip; ++c) {
    for (float& v : x.channel_plane(c)) v = 0.0f;
  }
  const ChannelMarkTable marks = mark_zero_channels(x, 0.0f, {});
  for (auto _ : state) benchmark::DoNotOptimize(pruned_conv_forward(x, marks, l));
}
BENCHMARK(BM_PrunedConv)->Arg(0)->Arg(25)->Arg(50);

void BM_ForwardMobileNetLike(benchmark::State& state) {
  std::mt19937 rng(4);
  NetworkModel m = parse_config(
      "[net]\nheight=64\nwidth=64\nchannels=3\n"
      "[convolutional]\nfilters=16\nsize=3\nstride=2\npad=1\nactivation=relu\n"
      "[convolutional]\nfilters=16\ngroups=16\nsize=3\npad=1\nactivation=relu\n"
      "[convolutional]\nfilters=32\nsize=1\nactivation=relu\n"
      "[convolutional]\nfilters=32\ngroups=32\nsize=3\nstride=2\npad=1\nactivation=relu\n"
      "[convolutional]\nfilters=64\nsize=1\nactivation=relu\n"
      "[avgpool]\n[connected]\noutput=10\nactivation=linear\n[softmax]\n");
  randomize(m, rng);
  const Tensor x = random_input(m.input, rng);
  PruneConfig cfg;
  cfg.mode = state.range(0) ? PruneMode::literal_eq1 : PruneMode::off;
  cfg.epsilon = 0.1f;
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, x, cfg));
}
BENCHMARK(BM_ForwardMobileNetLike)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
