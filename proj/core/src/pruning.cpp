#include "fmprune/pruning.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "conv_kernel.hpp"
#include "json_detail.hpp"
#include "fmprune/error.hpp"

namespace fmprune {

void ProcessorCapability::validate() const {
  if (h < 1 || w < 1) {
    throw std::invalid_argument("processor capability must be at least 1x1");
  }
}

ProcessorCapability parse_capability(std::string_view text) {
  const auto x = text.find_first_of("xX");
  auto number = [&](std::string_view part) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc{} || ptr != part.data() + part.size() ||
        v == 0) {
      throw std::invalid_argument("capability must look like HxW, got '" +
                                  std::string(text) + "'");
    }
    return v;
  };
  if (x == std::string_view::npos) {
    throw std::invalid_argument("capability must look like HxW, got '" +
                                std::string(text) + "'");
  }
  return {number(text.substr(0, x)), number(text.substr(x + 1))};
}

ChannelMarkTable::ChannelMarkTable(std::size_t channels, std::size_t parts)
    : channels_(channels),
      parts_(parts),
      part_flags_(channels * parts, 0),
      channel_flags_(channels, 0) {
  if (parts == 0) throw std::invalid_argument("a channel has at least one part");
}

bool ChannelMarkTable::part_marked(std::size_t channel, std::size_t part) const {
  if (channel >= channels_ || part >= parts_) {
    throw std::out_of_range("mark table index out of range");
  }
  return part_flags_[channel * parts_ + part] != 0;
}

bool ChannelMarkTable::channel_marked(std::size_t channel) const {
  if (channel >= channels_) throw std::out_of_range("mark table channel out of range");
  return channel_flags_[channel] != 0;
}

std::size_t ChannelMarkTable::marked_count() const noexcept {
  return static_cast<std::size_t>(
      std::count(channel_flags_.begin(), channel_flags_.end(), 1));
}

void ChannelMarkTable::set_part(std::size_t channel, std::size_t part,
                                bool zero) {
  if (channel >= channels_ || part >= parts_) {
    throw std::out_of_range("mark table index out of range");
  }
  part_flags_[channel * parts_ + part] = zero ? 1 : 0;
}

void ChannelMarkTable::aggregate(std::size_t channel) {
  if (channel >= channels_) throw std::out_of_range("mark table channel out of range");
  const auto first = part_flags_.begin() + static_cast<std::ptrdiff_t>(channel * parts_);
  const auto zero_parts = static_cast<std::size_t>(
      std::count(first, first + static_cast<std::ptrdiff_t>(parts_), 1));
  channel_flags_[channel] = zero_parts == parts_ ? 1 : 0;
}

namespace {

std::size_t part_count(const Tensor& fmap, const ProcessorCapability& cap) {
  const std::size_t plane = fmap.shape().plane();
  return (plane + cap.tile() - 1) / cap.tile();
}

}  // namespace

ChannelMarkTable mark_zero_channels(const Tensor& fmap, float epsilon,
                                    ProcessorCapability cap) {
  cap.validate();
  if (!(epsilon >= 0.0f)) throw std::invalid_argument("epsilon must be >= 0");
  const std::size_t parts = part_count(fmap, cap);
  const std::size_t tile = cap.tile();
  ChannelMarkTable marks(fmap.channels(), parts);
  for (std::size_t c = 0; c < fmap.channels(); ++c) {
    const auto plane = fmap.channel_plane(c);
    for (std::size_t j = 0; j < parts; ++j) {
      const std::size_t begin = j * tile;
      const std::size_t end = std::min(begin + tile, plane.size());
      bool zero = true;
      for (std::size_t k = begin; k < end && zero; ++k) {
        zero = std::fabs(plane[k]) <= epsilon;
      }
      marks.set_part(c, j, zero);
    }
    marks.aggregate(c);
  }
  return marks;
}

ChannelMarkTable unmarked(const Tensor& fmap, ProcessorCapability cap) {
  cap.validate();
  return ChannelMarkTable(fmap.channels(), part_count(fmap, cap));
}

std::size_t LoadRecorder::begin_image() { return images_++; }

void LoadRecorder::record(LayerLoad load) {
  if (images_ == 0) images_ = 1;
  load.image = images_ - 1;
  entries_.push_back(load);
}

void LoadRecorder::merge(const LoadRecorder& other) {
  for (LayerLoad load : other.entries_) {
    load.image += images_;
    entries_.push_back(load);
  }
  images_ += other.images_;
}

void write_csv(std::ostream& os, const LoadRecorder& recorder) {
  os << "image,layer_index,layer_kind,channels_total,channels_skipped,"
        "elements_loaded,bits_loaded,kernel_coeffs_skipped\n";
  for (const LayerLoad& l : recorder.entries()) {
    os << l.image << ',' << l.layer_index << ',' << to_string(l.kind) << ','
       << l.channels_total << ',' << l.channels_skipped << ','
       << l.elements_loaded << ',' << l.bits_loaded() << ','
       << l.kernel_coeffs_skipped << '\n';
  }
}

Tensor pruned_conv_forward(const Tensor& input, const ChannelMarkTable& marks,
                           const Layer& layer, const PruneConfig& cfg,
                           LoadRecorder* recorder, std::size_t layer_index) {
  detail::check_conv(input, layer);
  if (marks.channels() != input.channels()) {
    throw ShapeError("mark table covers " + std::to_string(marks.channels()) +
                     " channels, input has " +
                     std::to_string(input.channels()));
  }
  std::vector<std::uint8_t> skip(input.channels(), 0);
  std::size_t skipped = 0;
  for (std::size_t c = 0; c < input.channels(); ++c) {
    if (marks.channel_marked(c)) {
      skip[c] = 1;
      ++skipped;
    }
  }
  Tensor out = detail::conv_unrolled(input, layer, cfg, skip);

  if (recorder) {
    const WeightBlock& w = *layer.weights;
    const std::uint64_t plane = input.shape().plane();
    const std::uint64_t slice =
        (layer.spec.filters / layer.spec.groups) * w.kernel_size * w.kernel_size;
    LayerLoad load;
    load.layer_index = layer_index;
    load.kind = layer.spec.kind;
    load.channels_total = input.channels();
    load.channels_skipped = skipped;
    load.elements_total = input.size();
    load.elements_loaded = (input.channels() - skipped) * plane;
    load.kernel_coeffs_total = w.coefficient_count();
    load.kernel_coeffs_skipped = skipped * slice;
    recorder->record(load);
  }
  return out;
}

SavingsReport savings_ratio(const LoadRecorder& recorder) {
  std::map<std::size_t, LayerSavings> per_layer;
  SavingsReport report;
  report.images = recorder.images();
  for (const LayerLoad& l : recorder.entries()) {
    LayerSavings& s = per_layer[l.layer_index];
    s.layer_index = l.layer_index;
    s.channels_total += l.channels_total;
    s.channels_skipped += l.channels_skipped;
    s.elements_total += l.elements_total;
    s.elements_loaded += l.elements_loaded;
  }
  for (auto& [index, s] : per_layer) {
    s.saved_fraction = s.channels_total == 0
                           ? 0.0
                           : static_cast<double>(s.channels_skipped) /
                                 static_cast<double>(s.channels_total);
    s.megabits_unpruned =
        static_cast<double>(s.elements_total * LayerLoad::kBitsPerElement) / 1e6;
    s.megabits_loaded =
        static_cast<double>(s.elements_loaded * LayerLoad::kBitsPerElement) / 1e6;
    report.channels_total += s.channels_total;
    report.channels_skipped += s.channels_skipped;
    report.elements_total += s.elements_total;
    report.elements_loaded += s.elements_loaded;
    report.layers.push_back(s);
  }
  if (report.channels_total == 0) {
    throw std::domain_error("no feature-map loads recorded; ratio undefined");
  }
  report.total_saved_fraction = static_cast<double>(report.channels_skipped) /
                                static_cast<double>(report.channels_total);
  report.total_saved_element_fraction =
      static_cast<double>(report.elements_total - report.elements_loaded) /
      static_cast<double>(report.elements_total);
  return report;
}

void write_csv(std::ostream& os, const SavingsReport& report) {
  os << "layer_index,channels_total,channels_skipped,saved_fraction,"
        "megabits_unpruned,megabits_loaded\n";
  for (const LayerSavings& s : report.layers) {
    os << s.layer_index << ',' << s.channels_total << ',' << s.channels_skipped
       << ',' << s.saved_fraction << ',' << s.megabits_unpruned << ','
       << s.megabits_loaded << '\n';
  }
  os << "total," << report.channels_total << ',' << report.channels_skipped
     << ',' << report.total_saved_fraction << ','
     << static_cast<double>(report.elements_total * LayerLoad::kBitsPerElement) / 1e6
     << ','
     << static_cast<double>(report.elements_loaded * LayerLoad::kBitsPerElement) / 1e6
     << '\n';
}

namespace detail {

nlohmann::json savings_json(const SavingsReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSavings& s : report.layers) {
    layers.push_back({{"layer_index", s.layer_index},
                      {"channels_total", s.channels_total},
                      {"channels_skipped", s.channels_skipped},
                      {"elements_total", s.elements_total},
                      {"elements_loaded", s.elements_loaded},
                      {"saved_fraction", s.saved_fraction},
                      {"megabits_unpruned", s.megabits_unpruned},
                      {"megabits_loaded", s.megabits_loaded}});
  }
  return {{"images", report.images},
          {"channels_total", report.channels_total},
          {"channels_skipped", report.channels_skipped},
          {"elements_total", report.elements_total},
          {"elements_loaded", report.elements_loaded},
          {"total_saved_fraction", report.total_saved_fraction},
          {"total_saved_element_fraction", report.total_saved_element_fraction},
          {"layers", std::move(layers)}};
}

}  // namespace detail

std::string to_json(const SavingsReport& report) {
  return detail::savings_json(report).dump(2);
}

}  // namespace fmprune
