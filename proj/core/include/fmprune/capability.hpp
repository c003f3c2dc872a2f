#pragma once

#include <cstddef>
#include <string_view>

namespace fmprune {

// Largest plane tile (h rows by w columns) a compute unit handles at once.
struct ProcessorCapability {
  std::size_t h = 16;
  std::size_t w = 16;

  [[nodiscard]] std::size_t tile() const noexcept { return h * w; }
  // Throws std::invalid_argument unless h, w >= 1.
  void validate() const;
};

// Parses "HxW" (e.g. "16x16"); throws std::invalid_argument.
[[nodiscard]] ProcessorCapability parse_capability(std::string_view text);

}  // namespace fmprune
