#pragma once

#include <cstddef>
#include <functional>
#include <string_view>

#include "fmprune/capability.hpp"
#include "fmprune/model.hpp"
#include "fmprune/tensor.hpp"

namespace fmprune {

class LoadRecorder;

enum class PruneMode {
  off,          // plain named activations, no channel skipping
  literal_eq1,  // x if x > eps; 0 if -leak*eps <= x <= eps; leak*x otherwise
  magnitude,    // y = leaky(x); y if |y| > eps, else 0
};

[[nodiscard]] std::string_view to_string(PruneMode mode) noexcept;
// Accepts "off", "literal", "literal_eq1", "magnitude"; throws
// std::invalid_argument otherwise.
[[nodiscard]] PruneMode parse_prune_mode(std::string_view text);

struct PruneConfig {
  float epsilon = 0.0f;
  float leak = 0.01f;
  PruneMode mode = PruneMode::off;
  // Also mark channels of the network input (the image) before the first
  // convolution. Off by default: only layer outputs are pruned.
  bool prune_network_input = false;
  ProcessorCapability capability{};

  [[nodiscard]] bool pruning() const noexcept { return mode != PruneMode::off; }
  // Throws std::invalid_argument unless epsilon >= 0, 0 < leak < 1 and the
  // capability is valid.
  void validate() const;
};

// Epsilon-pruned leaky activation for cfg.mode literal_eq1 or magnitude.
// With mode off it returns the plain leaky value.
[[nodiscard]] float epsilon_activate(float x, const PruneConfig& cfg) noexcept;

// Applies a layer's named activation under cfg. relu layers prune with a zero
// leak (x > eps ? x : 0); leaky layers use epsilon_activate; linear layers are
// left untouched in every mode.
[[nodiscard]] float activate(float x, Activation act,
                             const PruneConfig& cfg) noexcept;

// Direct nested-loop convolution with zero padding, followed by (unfolded)
// batch norm or bias, then the activation. Throws ShapeError.
[[nodiscard]] Tensor conv_forward_reference(const Tensor& input,
                                            const Layer& layer,
                                            const PruneConfig& cfg = {});

// Same contract as conv_forward_reference, computed by unrolling input
// patches per channel and accumulating them as a matrix product.
[[nodiscard]] Tensor conv_forward_fast(const Tensor& input, const Layer& layer,
                                       const PruneConfig& cfg = {});

// Darknet max pooling: output = (W + padding - size) / stride + 1 with the
// window origin shifted by -padding/2; out-of-range taps are ignored.
[[nodiscard]] Tensor maxpool_forward(const Tensor& input, std::size_t size,
                                     std::size_t stride, std::size_t padding);
[[nodiscard]] Tensor maxpool_forward(const Tensor& input, std::size_t size,
                                     std::size_t stride);

// Global average per channel; output C x 1 x 1.
[[nodiscard]] Tensor avgpool_forward(const Tensor& input);

// Fully connected over the flattened input; output outputs x 1 x 1.
[[nodiscard]] Tensor connected_forward(const Tensor& input, const Layer& layer,
                                       const PruneConfig& cfg = {});

// Softmax over all elements; shape preserved.
[[nodiscard]] Tensor softmax_forward(const Tensor& input);

// Runs one layer without channel marking.
[[nodiscard]] Tensor layer_forward(const Tensor& input, const Layer& layer,
                                   const PruneConfig& cfg = {});

// Receives each layer's output as forward produces it.
using LayerObserver =
    std::function<void(std::size_t layer_index, const Layer&, const Tensor&)>;

// Runs the whole network. With pruning enabled every convolution input that is
// a layer output is scanned with mark_zero_channels and the convolution skips
// the marked channels. When a recorder is supplied forward opens a new image
// on it and logs one load entry per convolution.
[[nodiscard]] Tensor forward(const NetworkModel& model, const Tensor& input,
                             const PruneConfig& cfg = {},
                             LoadRecorder* recorder = nullptr,
                             const LayerObserver& observer = {});

}  // namespace fmprune
