#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "fmprune/capability.hpp"
#include "fmprune/inference.hpp"
#include "fmprune/model.hpp"
#include "fmprune/tensor.hpp"

namespace fmprune {

// Per-channel zero marks. Each channel plane is cut into `parts` consecutive
// runs of h*w elements in scan order (the last run may be short). A part flag
// is set when every element of the run is within epsilon of zero; the channel
// flag is set when all of its part flags are.
class ChannelMarkTable {
 public:
  ChannelMarkTable() = default;
  ChannelMarkTable(std::size_t channels, std::size_t parts);

  [[nodiscard]] std::size_t channels() const noexcept { return channels_; }
  [[nodiscard]] std::size_t parts() const noexcept { return parts_; }

  [[nodiscard]] bool part_marked(std::size_t channel, std::size_t part) const;
  [[nodiscard]] bool channel_marked(std::size_t channel) const;
  [[nodiscard]] std::size_t marked_count() const noexcept;

  void set_part(std::size_t channel, std::size_t part, bool zero);
  // Recomputes the channel flag from its part flags.
  void aggregate(std::size_t channel);

 private:
  std::size_t channels_ = 0;
  std::size_t parts_ = 0;
  std::vector<std::uint8_t> part_flags_;     // channels x parts
  std::vector<std::uint8_t> channel_flags_;  // channels
};

[[nodiscard]] ChannelMarkTable mark_zero_channels(const Tensor& fmap,
                                                  float epsilon,
                                                  ProcessorCapability cap);

// An empty table of the right size: nothing marked.
[[nodiscard]] ChannelMarkTable unmarked(const Tensor& fmap,
                                        ProcessorCapability cap = {});

// Feature-map and kernel traffic of one convolution for one image.
struct LayerLoad {
  std::size_t image = 0;
  std::size_t layer_index = 0;
  LayerKind kind = LayerKind::convolutional;
  std::uint64_t channels_total = 0;
  std::uint64_t channels_skipped = 0;
  std::uint64_t elements_total = 0;
  std::uint64_t elements_loaded = 0;
  std::uint64_t kernel_coeffs_total = 0;
  std::uint64_t kernel_coeffs_skipped = 0;

  static constexpr std::uint64_t kBitsPerElement = 32;

  [[nodiscard]] std::uint64_t elements_skipped() const noexcept {
    return elements_total - elements_loaded;
  }
  [[nodiscard]] std::uint64_t bits_loaded() const noexcept {
    return elements_loaded * kBitsPerElement;
  }
  [[nodiscard]] std::uint64_t bits_total() const noexcept {
    return elements_total * kBitsPerElement;
  }
};

// Accumulates LayerLoad entries across forward passes. Not thread-safe; use
// one recorder per worker and merge afterwards.
class LoadRecorder {
 public:
  // Starts a new image and returns its index.
  std::size_t begin_image();
  void record(LayerLoad load);
  // Appends other's entries, renumbering its images after ours.
  void merge(const LoadRecorder& other);

  [[nodiscard]] std::size_t images() const noexcept { return images_; }
  [[nodiscard]] const std::vector<LayerLoad>& entries() const noexcept {
    return entries_;
  }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }

 private:
  std::size_t images_ = 0;
  std::vector<LayerLoad> entries_;
};

// CSV columns: image, layer_index, layer_kind, channels_total,
// channels_skipped, elements_loaded, bits_loaded, kernel_coeffs_skipped.
void write_csv(std::ostream& os, const LoadRecorder& recorder);

// Convolution that never reads marked input channels: equivalent to running
// the convolution on the input with marked planes replaced by zeros. Loads and
// skips are logged to `recorder` when supplied.
[[nodiscard]] Tensor pruned_conv_forward(const Tensor& input,
                                         const ChannelMarkTable& marks,
                                         const Layer& layer,
                                         const PruneConfig& cfg = {},
                                         LoadRecorder* recorder = nullptr,
                                         std::size_t layer_index = 0);

struct LayerSavings {
  std::size_t layer_index = 0;
  std::uint64_t channels_total = 0;
  std::uint64_t channels_skipped = 0;
  std::uint64_t elements_total = 0;
  std::uint64_t elements_loaded = 0;
  double saved_fraction = 0.0;      // channels_skipped / channels_total
  double megabits_unpruned = 0.0;   // elements_total * 32 / 1e6
  double megabits_loaded = 0.0;     // elements_loaded * 32 / 1e6
};

struct SavingsReport {
  std::vector<LayerSavings> layers;  // ascending layer_index, summed over images
  std::size_t images = 0;
  std::uint64_t channels_total = 0;
  std::uint64_t channels_skipped = 0;
  std::uint64_t elements_total = 0;
  std::uint64_t elements_loaded = 0;
  double total_saved_fraction = 0.0;          // channel loads
  double total_saved_element_fraction = 0.0;  // bits
};

// Throws std::domain_error when the recorder holds no convolution loads.
[[nodiscard]] SavingsReport savings_ratio(const LoadRecorder& recorder);

void write_csv(std::ostream& os, const SavingsReport& report);
[[nodiscard]] std::string to_json(const SavingsReport& report);

}  // namespace fmprune
