#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmprune/tensor.hpp"

namespace fmprune {

enum class LayerKind { convolutional, maxpool, avgpool, connected, softmax };
enum class Activation { linear, relu, leaky };

[[nodiscard]] std::string_view to_string(LayerKind kind) noexcept;
[[nodiscard]] std::string_view to_string(Activation act) noexcept;

// One layer of a network description. Fields that do not apply to `kind` keep
// their defaults. `input` and `output` are resolved by parse_config.
struct LayerSpec {
  LayerKind kind = LayerKind::convolutional;

  // convolutional: filters/size/stride/padding/groups/batch_normalize.
  // maxpool: size/stride/padding (padding is the Darknet total, default
  // size-1).
  std::size_t filters = 1;
  std::size_t size = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  bool batch_normalize = false;

  // connected
  std::size_t outputs = 0;

  Activation activation = Activation::linear;

  Shape input{};
  Shape output{};

  [[nodiscard]] bool has_weights() const noexcept {
    return kind == LayerKind::convolutional || kind == LayerKind::connected;
  }
  // groups == input channels (and > 1 channel).
  [[nodiscard]] bool is_depthwise() const noexcept;
  [[nodiscard]] bool is_pointwise() const noexcept;
};

struct BatchNormParams {
  std::vector<float> scales;
  std::vector<float> rolling_mean;
  std::vector<float> rolling_variance;
};

// Filter bank of a convolutional or connected layer. Connected layers use
// in_channels_per_group = inputs and kernel_size = 1.
struct WeightBlock {
  std::size_t out_channels = 0;
  std::size_t in_channels_per_group = 0;
  std::size_t kernel_size = 1;
  std::vector<float> coefficients;  // O x (I/g) x K x K
  std::vector<float> biases;        // O
  std::optional<BatchNormParams> batch_norm;

  [[nodiscard]] std::size_t coefficient_count() const noexcept {
    return out_channels * in_channels_per_group * kernel_size * kernel_size;
  }
  [[nodiscard]] std::size_t filter_volume() const noexcept {
    return in_channels_per_group * kernel_size * kernel_size;
  }
  // Coefficient w(f, c_local, ky, kx).
  [[nodiscard]] float weight(std::size_t f, std::size_t c_local,
                             std::size_t ky, std::size_t kx) const noexcept {
    return coefficients[((f * in_channels_per_group + c_local) * kernel_size +
                         ky) *
                            kernel_size +
                        kx];
  }

  // Throws ModelError when array lengths disagree with the declared shape.
  void validate() const;
};

struct Layer {
  LayerSpec spec;
  std::optional<WeightBlock> weights;
};

// Darknet weights-file header. `seen` is read and carried through so a
// rewritten file keeps the original header bytes.
struct WeightsHeader {
  std::int32_t major = 0;
  std::int32_t minor = 2;
  std::int32_t revision = 0;
  std::uint64_t seen = 0;

  [[nodiscard]] bool wide_seen() const noexcept {
    return major * 10 + minor >= 2;
  }
  [[nodiscard]] std::size_t byte_size() const noexcept {
    return 12 + (wide_seen() ? 8 : 4);
  }
};

struct NetworkModel {
  Shape input{};
  std::vector<Layer> layers;
  WeightsHeader header{};

  [[nodiscard]] Shape output() const noexcept {
    return layers.empty() ? input : layers.back().spec.output;
  }
  [[nodiscard]] bool weights_loaded() const noexcept;
};

// Number of f32 values load_weights reads for one layer.
[[nodiscard]] std::size_t weight_value_count(const LayerSpec& spec) noexcept;

// Parses a Darknet-style description. Sections: [net]/[network] first, then
// [convolutional], [maxpool], [avgpool], [connected], [softmax]. Unknown keys
// are skipped and reported through `warnings` when supplied; unknown sections
// throw ParseError. The result has shapes resolved and no weights.
[[nodiscard]] NetworkModel parse_config(
    std::string_view text, std::vector<std::string>* warnings = nullptr);

// Fills every WeightBlock from a Darknet .weights stream. Throws ParseError on
// a truncated stream, trailing bytes or an implausible header.
[[nodiscard]] NetworkModel load_weights(std::span<const std::uint8_t> bytes,
                                        NetworkModel skeleton);

// Inverse of load_weights.
[[nodiscard]] std::vector<std::uint8_t> save_weights(const NetworkModel& model);

// Epsilon used by batch normalization, both folded and unfolded.
inline constexpr float kBatchNormEpsilon = 1e-6f;

// Absorbs batch-norm statistics into coefficients and biases:
//   m = scale / sqrt(var + eps), w' = w * m, b' = bias - mean * m.
// Throws ModelError on negative variance.
[[nodiscard]] NetworkModel fold_batch_norm(NetworkModel model);

}  // namespace fmprune
