#pragma once

// Shared fixtures and independent oracles for the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fmprune/file_io.hpp"
#include "fmprune/inference.hpp"
#include "fmprune/model.hpp"
#include "fmprune/tensor.hpp"

namespace fmprune::testing {

using Rng = std::mt19937;

inline float uniform(Rng& rng, float lo, float hi) {
  return std::uniform_real_distribution<float>(lo, hi)(rng);
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f,
                            float hi = 1.0f) {
  Tensor t(shape);
  for (float& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

// Fills every weighted layer with uniform coefficients and biases.
inline void fill_weights(NetworkModel& model, Rng& rng, float scale = 0.5f) {
  for (Layer& layer : model.layers) {
    if (!layer.spec.has_weights()) continue;
    WeightBlock w;
    if (layer.spec.kind == LayerKind::convolutional) {
      w.out_channels = layer.spec.filters;
      w.in_channels_per_group = layer.spec.input.channels / layer.spec.groups;
      w.kernel_size = layer.spec.size;
    } else {
      w.out_channels = layer.spec.outputs;
      w.in_channels_per_group = layer.spec.input.volume();
      w.kernel_size = 1;
    }
    w.coefficients.resize(w.coefficient_count());
    for (float& c : w.coefficients) c = uniform(rng, -scale, scale);
    w.biases.resize(w.out_channels);
    for (float& b : w.biases) b = uniform(rng, -0.1f, 0.1f);
    if (layer.spec.batch_normalize) {
      BatchNormParams bn;
      for (std::size_t f = 0; f < w.out_channels; ++f) {
        bn.scales.push_back(uniform(rng, 0.5f, 2.0f));
        bn.rolling_mean.push_back(uniform(rng, -0.5f, 0.5f));
        bn.rolling_variance.push_back(uniform(rng, 0.1f, 2.0f));
      }
      w.batch_norm = std::move(bn);
    }
    layer.weights = std::move(w);
  }
}

// A standalone convolution layer with random weights.
inline Layer random_conv(Shape in, std::size_t filters, std::size_t size,
                         std::size_t stride, std::size_t padding,
                         std::size_t groups, Activation act, Rng& rng) {
  std::ostringstream cfg;
  cfg << "[net]\nchannels=" << in.channels << "\nheight=" << in.height
      << "\nwidth=" << in.width << "\n[convolutional]\nfilters=" << filters
      << "\nsize=" << size << "\nstride=" << stride << "\npadding=" << padding
      << "\ngroups=" << groups << "\nactivation=" << to_string(act) << "\n";
  NetworkModel m = parse_config(cfg.str());
  fill_weights(m, rng);
  return m.layers.front();
}

// Random network of 1..max_convs convolutions (channels <= 8) with optional
// max pooling in between, ending in global average pooling and softmax. Some
// filters get a large negative bias so that relu silences whole channels.
inline NetworkModel random_relu_network(Rng& rng, std::size_t max_convs = 4,
                                        Activation act = Activation::relu) {
  const std::size_t convs = pick(rng, 1, max_convs);
  std::size_t side = pick(rng, 6, 14);
  std::ostringstream cfg;
  cfg << "[net]\nchannels=" << pick(rng, 1, 8) << "\nheight=" << side
      << "\nwidth=" << side << "\n";
  for (std::size_t i = 0; i < convs; ++i) {
    const std::size_t k = std::vector<std::size_t>{1, 3, 5}[pick(rng, 0, 2)];
    cfg << "[convolutional]\nfilters=" << pick(rng, 1, 8) << "\nsize=" << k
        << "\nstride=1\npad=1\nactivation=" << to_string(act) << "\n";
    if (side >= 6 && pick(rng, 0, 2) == 0) {
      cfg << "[maxpool]\nsize=2\nstride=2\n";
      side = (side + 1) / 2;
    }
  }
  cfg << "[avgpool]\n[softmax]\n";
  NetworkModel model = parse_config(cfg.str());
  fill_weights(model, rng);
  for (Layer& layer : model.layers) {
    if (layer.spec.kind != LayerKind::convolutional) continue;
    for (float& b : layer.weights->biases) {
      if (pick(rng, 0, 3) == 0) b = -100.0f;
    }
  }
  return model;
}

// Runs forward unpruned and returns the input each convolution consumed,
// paired with its layer index.
inline std::vector<std::pair<std::size_t, Tensor>> conv_inputs(
    const NetworkModel& model, const Tensor& image) {
  std::vector<std::pair<std::size_t, Tensor>> out;
  Tensor x = image;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (model.layers[i].spec.kind == LayerKind::convolutional) {
      out.emplace_back(i, x);
    }
    x = layer_forward(x, model.layers[i]);
  }
  return out;
}

// Whole-channel oracle: plane max |v| <= eps, by direct scan of the flat data.
inline std::vector<bool> whole_channel_marks(const Tensor& t, float eps) {
  std::vector<bool> marks(t.channels(), true);
  const auto data = t.data();
  const std::size_t plane = t.height() * t.width();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (std::fabs(data[i]) > eps) marks[i / plane] = false;
  }
  return marks;
}

// Counts channels whose values are all exactly zero.
inline std::size_t exact_zero_channels(const Tensor& t) {
  const auto marks = whole_channel_marks(t, 0.0f);
  return static_cast<std::size_t>(std::count(marks.begin(), marks.end(), true));
}

// Per output element of a linear convolution: sum of |w| over the skipped
// channels' in-range taps feeding that element.
inline std::vector<double> skipped_weight_mass(const Layer& layer,
                                               const std::vector<bool>& skipped) {
  const LayerSpec& s = layer.spec;
  const WeightBlock& w = *layer.weights;
  const std::size_t ipg = s.input.channels / s.groups;
  const std::size_t opg = s.filters / s.groups;
  std::vector<double> mass(s.output.volume(), 0.0);
  for (std::size_t f = 0; f < s.filters; ++f) {
    const std::size_t g = f / opg;
    for (std::size_t oy = 0; oy < s.output.height; ++oy) {
      for (std::size_t ox = 0; ox < s.output.width; ++ox) {
        double m = 0.0;
        for (std::size_t cl = 0; cl < ipg; ++cl) {
          if (!skipped[g * ipg + cl]) continue;
          for (std::size_t ky = 0; ky < s.size; ++ky) {
            for (std::size_t kx = 0; kx < s.size; ++kx) {
              const long iy = static_cast<long>(oy * s.stride + ky) -
                              static_cast<long>(s.padding);
              const long ix = static_cast<long>(ox * s.stride + kx) -
                              static_cast<long>(s.padding);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.input.height) ||
                  ix >= static_cast<long>(s.input.width)) {
                continue;
              }
              m += std::fabs(w.weight(f, cl, ky, kx));
            }
          }
        }
        mass[(f * s.output.height + oy) * s.output.width + ox] = m;
      }
    }
  }
  return mass;
}

// Fraction of |v| <= t for each t, by sorting magnitudes and binary search.
inline std::vector<double> sorted_fraction_oracle(std::vector<float> values,
                                                  const std::vector<float>& ts) {
  for (float& v : values) v = std::fabs(v);
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  for (float t : ts) {
    const auto n = std::upper_bound(values.begin(), values.end(), t) - values.begin();
    out.push_back(values.empty() ? 0.0
                                 : static_cast<double>(n) /
                                       static_cast<double>(values.size()));
  }
  return out;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("fmprune_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path write(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    write_file_bytes(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                  text.size()));
    return p;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace fmprune::testing
