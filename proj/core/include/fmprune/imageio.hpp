#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fmprune/tensor.hpp"

namespace fmprune {

// Interleaved 8-bit RGB.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> samples;  // 3 * width * height

  [[nodiscard]] std::uint8_t sample(std::size_t x, std::size_t y,
                                    std::size_t channel) const noexcept {
    return samples[(y * width + x) * 3 + channel];
  }
};

// Binary PPM (P6, maxval 255). Throws ParseError on a bad magic, another
// maxval or truncated pixel data.
[[nodiscard]] RawImage load_ppm(std::span<const std::uint8_t> bytes);
[[nodiscard]] std::vector<std::uint8_t> encode_ppm(const RawImage& image);

// Bilinear resize to target.height x target.width with corner-aligned
// sampling, planar RGB, values divided by 255. target.channels must be 3.
[[nodiscard]] Tensor to_input_tensor(const RawImage& image, Shape target);

// Loads a network input from disk: .ppm files are decoded and resized, any
// other extension is read as a raw tensor and must already match `target`.
[[nodiscard]] Tensor load_input_tensor(const std::filesystem::path& path,
                                       Shape target);

}  // namespace fmprune
