#include "fmprune/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "conv_kernel.hpp"
#include "fmprune/error.hpp"
#include "fmprune/pruning.hpp"

namespace fmprune {

std::string_view to_string(PruneMode mode) noexcept {
  switch (mode) {
    case PruneMode::off: return "off";
    case PruneMode::literal_eq1: return "literal_eq1";
    case PruneMode::magnitude: return "magnitude";
  }
  return "unknown";
}

PruneMode parse_prune_mode(std::string_view text) {
  if (text == "off") return PruneMode::off;
  if (text == "literal" || text == "literal_eq1") return PruneMode::literal_eq1;
  if (text == "magnitude") return PruneMode::magnitude;
  throw std::invalid_argument("unknown prune mode '" + std::string(text) +
                              "' (expected off, literal or magnitude)");
}

void PruneConfig::validate() const {
  if (!(epsilon >= 0.0f)) {
    throw std::invalid_argument("epsilon must be >= 0");
  }
  if (!(leak > 0.0f && leak < 1.0f)) {
    throw std::invalid_argument("leak must lie in (0, 1)");
  }
  capability.validate();
}

namespace {

float plain_leaky(float x, float leak) noexcept {
  if (x > 0.0f) return x;
  if (x == 0.0f) return 0.0f;
  return leak * x;
}

}  // namespace

float epsilon_activate(float x, const PruneConfig& cfg) noexcept {
  switch (cfg.mode) {
    case PruneMode::off:
      return plain_leaky(x, cfg.leak);
    case PruneMode::literal_eq1:
      if (x > cfg.epsilon) return x;
      if (x >= -cfg.leak * cfg.epsilon) return 0.0f;
      return cfg.leak * x;
    case PruneMode::magnitude: {
      const float y = plain_leaky(x, cfg.leak);
      return std::fabs(y) > cfg.epsilon ? y : 0.0f;
    }
  }
  return x;
}

float activate(float x, Activation act, const PruneConfig& cfg) noexcept {
  switch (act) {
    case Activation::linear:
      return x;
    case Activation::relu: {
      const float threshold = cfg.pruning() ? cfg.epsilon : 0.0f;
      return x > threshold ? x : 0.0f;
    }
    case Activation::leaky:
      return epsilon_activate(x, cfg);
  }
  return x;
}

namespace detail {

void check_conv(const Tensor& input, const Layer& layer) {
  if (layer.spec.kind != LayerKind::convolutional) {
    throw ShapeError("layer is not convolutional");
  }
  if (!layer.weights) throw ModelError("convolution has no weights loaded");
  if (input.shape() != layer.spec.input) {
    std::ostringstream msg;
    msg << "convolution expects input " << layer.spec.input << ", got "
        << input.shape();
    throw ShapeError(msg.str());
  }
  if (layer.spec.groups == 0 || input.channels() % layer.spec.groups != 0) {
    throw ShapeError("groups must divide the input channels");
  }
}

float conv_epilogue(float acc, std::size_t filter, const Layer& layer,
                    const PruneConfig& cfg) noexcept {
  const WeightBlock& w = *layer.weights;
  float v;
  if (w.batch_norm) {
    const BatchNormParams& bn = *w.batch_norm;
    v = (acc - bn.rolling_mean[filter]) /
            std::sqrt(bn.rolling_variance[filter] + kBatchNormEpsilon) *
            bn.scales[filter] +
        w.biases[filter];
  } else {
    v = acc + w.biases[filter];
  }
  return activate(v, layer.spec.activation, cfg);
}

Tensor conv_unrolled(const Tensor& input, const Layer& layer,
                     const PruneConfig& cfg,
                     std::span<const std::uint8_t> skip) {
  check_conv(input, layer);
  const LayerSpec& spec = layer.spec;
  const WeightBlock& w = *layer.weights;
  const std::size_t k = spec.size;
  const std::size_t kk = k * k;
  const std::size_t in_h = input.height();
  const std::size_t in_w = input.width();
  const std::size_t out_h = spec.output.height;
  const std::size_t out_w = spec.output.width;
  const std::size_t pixels = out_h * out_w;
  const std::size_t in_per_group = input.channels() / spec.groups;
  const std::size_t out_per_group = spec.filters / spec.groups;
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);

  Tensor out(spec.output);
  std::vector<float> columns(kk * pixels);
  std::vector<float> acc(out_per_group * pixels);

  for (std::size_t g = 0; g < spec.groups; ++g) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    for (std::size_t cl = 0; cl < in_per_group; ++cl) {
      const std::size_t c = g * in_per_group + cl;
      if (!skip.empty() && skip[c]) continue;

      const auto plane = input.channel_plane(c);
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          float* row = columns.data() + (ky * k + kx) * pixels;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * spec.stride + ky) - pad;
            const bool row_ok =
                iy >= 0 && iy < static_cast<std::ptrdiff_t>(in_h);
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * spec.stride + kx) - pad;
              const bool ok =
                  row_ok && ix >= 0 && ix < static_cast<std::ptrdiff_t>(in_w);
              row[oy * out_w + ox] =
                  ok ? plane[static_cast<std::size_t>(iy) * in_w +
                             static_cast<std::size_t>(ix)]
                     : 0.0f;
            }
          }
        }
      }

      for (std::size_t fl = 0; fl < out_per_group; ++fl) {
        const std::size_t f = g * out_per_group + fl;
        const float* weights = w.coefficients.data() + (f * in_per_group + cl) * kk;
        float* a = acc.data() + fl * pixels;
        for (std::size_t r = 0; r < kk; ++r) {
          const float wv = weights[r];
          const float* src = columns.data() + r * pixels;
          for (std::size_t p = 0; p < pixels; ++p) a[p] += wv * src[p];
        }
      }
    }

    for (std::size_t fl = 0; fl < out_per_group; ++fl) {
      const std::size_t f = g * out_per_group + fl;
      auto dst = out.channel_plane(f);
      const float* a = acc.data() + fl * pixels;
      for (std::size_t p = 0; p < pixels; ++p) {
        dst[p] = conv_epilogue(a[p], f, layer, cfg);
      }
    }
  }
  return out;
}

}  // namespace detail

Tensor conv_forward_reference(const Tensor& input, const Layer& layer,
                              const PruneConfig& cfg) {
  detail::check_conv(input, layer);
  const LayerSpec& spec = layer.spec;
  const WeightBlock& w = *layer.weights;
  const std::size_t in_per_group = input.channels() / spec.groups;
  const std::size_t out_per_group = spec.filters / spec.groups;
  const auto in_h = static_cast<std::ptrdiff_t>(input.height());
  const auto in_w = static_cast<std::ptrdiff_t>(input.width());
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);

  Tensor out(spec.output);
  for (std::size_t f = 0; f < spec.filters; ++f) {
    const std::size_t g = f / out_per_group;
    for (std::size_t oy = 0; oy < spec.output.height; ++oy) {
      for (std::size_t ox = 0; ox < spec.output.width; ++ox) {
        float acc = 0.0f;
        for (std::size_t cl = 0; cl < in_per_group; ++cl) {
          const std::size_t c = g * in_per_group + cl;
          for (std::size_t ky = 0; ky < spec.size; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy) * stride - pad +
                static_cast<std::ptrdiff_t>(ky);
            if (iy < 0 || iy >= in_h) continue;
            for (std::size_t kx = 0; kx < spec.size; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox) * stride - pad +
                  static_cast<std::ptrdiff_t>(kx);
              if (ix < 0 || ix >= in_w) continue;
              acc += w.weight(f, cl, ky, kx) *
                     input(c, static_cast<std::size_t>(iy),
                           static_cast<std::size_t>(ix));
            }
          }
        }
        out(f, oy, ox) = detail::conv_epilogue(acc, f, layer, cfg);
      }
    }
  }
  return out;
}

Tensor conv_forward_fast(const Tensor& input, const Layer& layer,
                         const PruneConfig& cfg) {
  return detail::conv_unrolled(input, layer, cfg, {});
}

Tensor maxpool_forward(const Tensor& input, std::size_t size,
                       std::size_t stride, std::size_t padding) {
  if (size == 0 || stride == 0) {
    throw ShapeError("pool size and stride must be >= 1");
  }
  const std::size_t span_h = input.height() + padding;
  const std::size_t span_w = input.width() + padding;
  if (span_h < size || span_w < size) {
    throw ShapeError("pool window exceeds the input");
  }
  const Shape out_shape{input.channels(), (span_h - size) / stride + 1,
                        (span_w - size) / stride + 1};
  const auto offset = -static_cast<std::ptrdiff_t>(padding / 2);
  const auto in_h = static_cast<std::ptrdiff_t>(input.height());
  const auto in_w = static_cast<std::ptrdiff_t>(input.width());

  Tensor out(out_shape);
  for (std::size_t c = 0; c < out_shape.channels; ++c) {
    for (std::size_t oy = 0; oy < out_shape.height; ++oy) {
      for (std::size_t ox = 0; ox < out_shape.width; ++ox) {
        float best = -std::numeric_limits<float>::max();
        for (std::size_t n = 0; n < size; ++n) {
          const std::ptrdiff_t iy =
              offset + static_cast<std::ptrdiff_t>(oy * stride + n);
          if (iy < 0 || iy >= in_h) continue;
          for (std::size_t m = 0; m < size; ++m) {
            const std::ptrdiff_t ix =
                offset + static_cast<std::ptrdiff_t>(ox * stride + m);
            if (ix < 0 || ix >= in_w) continue;
            best = std::max(best, input(c, static_cast<std::size_t>(iy),
                                        static_cast<std::size_t>(ix)));
          }
        }
        out(c, oy, ox) = best;
      }
    }
  }
  return out;
}

Tensor maxpool_forward(const Tensor& input, std::size_t size,
                       std::size_t stride) {
  return maxpool_forward(input, size, stride, size - 1);
}

Tensor avgpool_forward(const Tensor& input) {
  Tensor out(Shape{input.channels(), 1, 1});
  for (std::size_t c = 0; c < input.channels(); ++c) {
    double sum = 0.0;
    for (float v : input.channel_plane(c)) sum += v;
    out(c, 0, 0) = static_cast<float>(sum / static_cast<double>(input.shape().plane()));
  }
  return out;
}

Tensor connected_forward(const Tensor& input, const Layer& layer,
                         const PruneConfig& cfg) {
  if (layer.spec.kind != LayerKind::connected) {
    throw ShapeError("layer is not connected");
  }
  if (!layer.weights) throw ModelError("connected layer has no weights loaded");
  const WeightBlock& w = *layer.weights;
  if (input.size() != w.in_channels_per_group) {
    throw ShapeError("connected layer expects " +
                     std::to_string(w.in_channels_per_group) +
                     " inputs, got " + std::to_string(input.size()));
  }
  const auto x = input.data();
  Tensor out(Shape{w.out_channels, 1, 1});
  for (std::size_t o = 0; o < w.out_channels; ++o) {
    const float* row = w.coefficients.data() + o * x.size();
    float acc = 0.0f;
    for (std::size_t j = 0; j < x.size(); ++j) acc += row[j] * x[j];
    out(o, 0, 0) = activate(acc + w.biases[o], layer.spec.activation, cfg);
  }
  return out;
}

Tensor softmax_forward(const Tensor& input) {
  const auto x = input.data();
  const float peak = *std::max_element(x.begin(), x.end());
  std::vector<double> e(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<double>(x[i]) - peak);
    sum += e[i];
  }
  Tensor out(input.shape());
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = static_cast<float>(e[i] / sum);
  }
  return out;
}

Tensor layer_forward(const Tensor& input, const Layer& layer,
                     const PruneConfig& cfg) {
  const LayerSpec& spec = layer.spec;
  if (input.shape() != spec.input) {
    std::ostringstream msg;
    msg << to_string(spec.kind) << " layer expects input " << spec.input
        << ", got " << input.shape();
    throw ShapeError(msg.str());
  }
  switch (spec.kind) {
    case LayerKind::convolutional:
      return conv_forward_fast(input, layer, cfg);
    case LayerKind::maxpool:
      return maxpool_forward(input, spec.size, spec.stride, spec.padding);
    case LayerKind::avgpool:
      return avgpool_forward(input);
    case LayerKind::connected:
      return connected_forward(input, layer, cfg);
    case LayerKind::softmax:
      return softmax_forward(input);
  }
  throw ModelError("unknown layer kind");
}

Tensor forward(const NetworkModel& model, const Tensor& input,
               const PruneConfig& cfg, LoadRecorder* recorder,
               const LayerObserver& observer) {
  cfg.validate();
  if (input.shape() != model.input) {
    std::ostringstream msg;
    msg << "network expects input " << model.input << ", got "
        << input.shape();
    throw ShapeError(msg.str());
  }
  if (recorder) recorder->begin_image();

  Tensor x = input;
  bool at_network_input = true;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    if (layer.spec.kind == LayerKind::convolutional) {
      const bool scan =
          cfg.pruning() && (!at_network_input || cfg.prune_network_input);
      const ChannelMarkTable marks =
          scan ? mark_zero_channels(x, cfg.epsilon, cfg.capability)
               : unmarked(x, cfg.capability);
      x = pruned_conv_forward(x, marks, layer, cfg, recorder, i);
    } else {
      x = layer_forward(x, layer, cfg);
    }
    at_network_input = false;
    if (observer) observer(i, layer, x);
  }
  return x;
}

}  // namespace fmprune
