#pragma once

#include <cstdint>
#include <span>

#include "fmprune/inference.hpp"
#include "fmprune/model.hpp"
#include "fmprune/tensor.hpp"

namespace fmprune::detail {

// Throws ShapeError unless `layer` is a convolution with weights whose input
// shape matches `input`.
void check_conv(const Tensor& input, const Layer& layer);

// Batch norm (when unfolded) or bias, then the activation.
float conv_epilogue(float acc, std::size_t filter, const Layer& layer,
                    const PruneConfig& cfg) noexcept;

// Patch-unrolled convolution. Channels with skip[c] != 0 are never read; the
// result equals the convolution of the input with those planes zeroed.
// An empty `skip` reads every channel.
Tensor conv_unrolled(const Tensor& input, const Layer& layer,
                     const PruneConfig& cfg,
                     std::span<const std::uint8_t> skip);

}  // namespace fmprune::detail
