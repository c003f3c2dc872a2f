#include "fmprune/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>

#include "binary_io.hpp"
#include "fmprune/error.hpp"

namespace fmprune {

std::string_view to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::convolutional: return "convolutional";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::connected: return "connected";
    case LayerKind::softmax: return "softmax";
  }
  return "unknown";
}

std::string_view to_string(Activation act) noexcept {
  switch (act) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::leaky: return "leaky";
  }
  return "unknown";
}

bool LayerSpec::is_depthwise() const noexcept {
  return kind == LayerKind::convolutional && groups > 1 &&
         groups == input.channels;
}

bool LayerSpec::is_pointwise() const noexcept {
  return kind == LayerKind::convolutional && size == 1 && groups == 1;
}

void WeightBlock::validate() const {
  if (coefficients.size() != coefficient_count()) {
    throw ModelError("weight block holds " +
                     std::to_string(coefficients.size()) +
                     " coefficients, shape needs " +
                     std::to_string(coefficient_count()));
  }
  if (biases.size() != out_channels) {
    throw ModelError("weight block holds " + std::to_string(biases.size()) +
                     " biases for " + std::to_string(out_channels) +
                     " outputs");
  }
  if (batch_norm) {
    const auto& bn = *batch_norm;
    if (bn.scales.size() != out_channels ||
        bn.rolling_mean.size() != out_channels ||
        bn.rolling_variance.size() != out_channels) {
      throw ModelError("batch-norm arrays must each hold " +
                       std::to_string(out_channels) + " values");
    }
  }
}

bool NetworkModel::weights_loaded() const noexcept {
  return std::all_of(layers.begin(), layers.end(), [](const Layer& l) {
    return !l.spec.has_weights() || l.weights.has_value();
  });
}

std::size_t weight_value_count(const LayerSpec& spec) noexcept {
  switch (spec.kind) {
    case LayerKind::convolutional: {
      const std::size_t o = spec.filters;
      const std::size_t coeffs =
          o * (spec.input.channels / spec.groups) * spec.size * spec.size;
      return o + (spec.batch_normalize ? 3 * o : 0) + coeffs;
    }
    case LayerKind::connected:
      return spec.outputs + spec.outputs * spec.input.volume();
    default:
      return 0;
  }
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

struct Section {
  std::string name;
  std::size_t line = 0;
  std::vector<std::pair<std::string, std::string>> options;
};

std::vector<Section> split_sections(std::string_view text) {
  std::vector<Section> sections;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;

    if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ParseError("line " + std::to_string(line_no) +
                         ": unterminated section header");
      }
      sections.push_back(
          {std::string(trim(line.substr(1, line.size() - 2))), line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected key=value, got '" + std::string(line) + "'");
    }
    if (sections.empty()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": option before the first section");
    }
    sections.back().options.emplace_back(std::string(trim(line.substr(0, eq))),
                                         std::string(trim(line.substr(eq + 1))));
  }
  return sections;
}

// Typed access to one section's options; tracks which keys were consumed.
class Options {
 public:
  explicit Options(const Section& s) : section_(s) {
    for (const auto& [k, v] : s.options) values_[k] = v;
  }

  std::optional<std::string> find(const std::string& key) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<long> find_int(const std::string& key) {
    auto v = find(key);
    if (!v) return std::nullopt;
    long out = 0;
    const char* end = v->data() + v->size();
    auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc{} || ptr != end) {
      throw ParseError(where() + ": '" + key + "' expects an integer, got '" +
                       *v + "'");
    }
    return out;
  }

  std::size_t positive(const std::string& key, long fallback) {
    const long v = find_int(key).value_or(fallback);
    if (v < 1) {
      throw ParseError(where() + ": '" + key + "' must be >= 1, got " +
                       std::to_string(v));
    }
    return static_cast<std::size_t>(v);
  }

  std::size_t non_negative(const std::string& key, long fallback) {
    const long v = find_int(key).value_or(fallback);
    if (v < 0) {
      throw ParseError(where() + ": '" + key + "' must be >= 0, got " +
                       std::to_string(v));
    }
    return static_cast<std::size_t>(v);
  }

  void warn_unused(std::vector<std::string>* warnings,
                   const std::set<std::string>& silent = {}) const {
    if (!warnings) return;
    for (const auto& [k, v] : section_.options) {
      if (!used_.contains(k) && !silent.contains(k)) {
        warnings->push_back(where() + ": ignoring unknown key '" + k + "'");
      }
    }
  }

  [[nodiscard]] std::string where() const {
    return "[" + section_.name + "] at line " + std::to_string(section_.line);
  }

 private:
  const Section& section_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

Activation parse_activation(Options& opts, std::vector<std::string>* warnings) {
  const auto name = opts.find("activation");
  if (!name) {
    if (warnings) {
      warnings->push_back(opts.where() +
                          ": no activation given, using linear");
    }
    return Activation::linear;
  }
  if (*name == "linear") return Activation::linear;
  if (*name == "relu") return Activation::relu;
  if (*name == "leaky") return Activation::leaky;
  throw ParseError(opts.where() + ": unsupported activation '" + *name + "'");
}

std::optional<LayerKind> section_kind(const std::string& name) {
  static const std::map<std::string, LayerKind, std::less<>> kinds = {
      {"convolutional", LayerKind::convolutional},
      {"conv", LayerKind::convolutional},
      {"maxpool", LayerKind::maxpool},
      {"max", LayerKind::maxpool},
      {"avgpool", LayerKind::avgpool},
      {"avg", LayerKind::avgpool},
      {"connected", LayerKind::connected},
      {"conn", LayerKind::connected},
      {"softmax", LayerKind::softmax},
      {"soft", LayerKind::softmax},
  };
  auto it = kinds.find(name);
  if (it == kinds.end()) return std::nullopt;
  return it->second;
}

// [net] keys that only matter for training.
const std::set<std::string>& training_keys() {
  static const std::set<std::string> keys = {
      "batch",     "subdivisions", "momentum", "decay",      "learning_rate",
      "max_batches", "policy",     "steps",    "scales",     "burn_in",
      "angle",     "saturation",   "exposure", "hue",        "power",
      "max_crop",  "min_crop",     "aspect",   "step",       "gamma",
      "time_steps", "mosaic",      "flip",     "letter_box", "inputs"};
  return keys;
}

LayerSpec parse_layer(const Section& section, LayerKind kind, Shape in,
                      std::vector<std::string>* warnings) {
  Options opts(section);
  LayerSpec spec;
  spec.kind = kind;
  spec.input = in;

  switch (kind) {
    case LayerKind::convolutional: {
      spec.filters = opts.positive("filters", 1);
      spec.size = opts.positive("size", 1);
      spec.stride = opts.positive("stride", 1);
      const bool same_pad = opts.find_int("pad").value_or(0) != 0;
      spec.padding = same_pad ? spec.size / 2 : 0;
      if (auto explicit_pad = opts.find_int("padding")) {
        spec.padding = opts.non_negative("padding", *explicit_pad);
      }
      spec.groups = opts.positive("groups", 1);
      spec.batch_normalize = opts.find_int("batch_normalize").value_or(0) != 0;
      spec.activation = parse_activation(opts, warnings);

      if (in.channels % spec.groups != 0) {
        throw ParseError(opts.where() + ": groups=" +
                         std::to_string(spec.groups) +
                         " does not divide the " +
                         std::to_string(in.channels) + " input channels");
      }
      if (spec.filters % spec.groups != 0) {
        throw ParseError(opts.where() + ": groups=" +
                         std::to_string(spec.groups) +
                         " does not divide filters=" +
                         std::to_string(spec.filters));
      }
      const std::size_t span_h = in.height + 2 * spec.padding;
      const std::size_t span_w = in.width + 2 * spec.padding;
      if (span_h < spec.size || span_w < spec.size) {
        throw ParseError(opts.where() + ": kernel size " +
                         std::to_string(spec.size) +
                         " exceeds the padded input");
      }
      spec.output = {spec.filters, (span_h - spec.size) / spec.stride + 1,
                     (span_w - spec.size) / spec.stride + 1};
      break;
    }
    case LayerKind::maxpool: {
      spec.stride = opts.positive("stride", 1);
      spec.size = opts.positive("size", static_cast<long>(spec.stride));
      spec.padding =
          opts.non_negative("padding", static_cast<long>(spec.size) - 1);
      const std::size_t span_h = in.height + spec.padding;
      const std::size_t span_w = in.width + spec.padding;
      if (span_h < spec.size || span_w < spec.size) {
        throw ParseError(opts.where() + ": pool size exceeds the input");
      }
      spec.output = {in.channels, (span_h - spec.size) / spec.stride + 1,
                     (span_w - spec.size) / spec.stride + 1};
      break;
    }
    case LayerKind::avgpool:
      spec.output = {in.channels, 1, 1};
      break;
    case LayerKind::connected:
      spec.outputs = opts.positive("output", 1);
      if (opts.find_int("batch_normalize").value_or(0) != 0) {
        throw ParseError(opts.where() +
                         ": batch_normalize is not supported on connected "
                         "layers");
      }
      spec.activation = parse_activation(opts, warnings);
      spec.output = {spec.outputs, 1, 1};
      break;
    case LayerKind::softmax:
      spec.output = in;
      break;
  }
  opts.warn_unused(warnings);
  return spec;
}

WeightBlock empty_block(const LayerSpec& spec) {
  WeightBlock block;
  if (spec.kind == LayerKind::convolutional) {
    block.out_channels = spec.filters;
    block.in_channels_per_group = spec.input.channels / spec.groups;
    block.kernel_size = spec.size;
  } else {
    block.out_channels = spec.outputs;
    block.in_channels_per_group = spec.input.volume();
    block.kernel_size = 1;
  }
  return block;
}

}  // namespace

NetworkModel parse_config(std::string_view text,
                          std::vector<std::string>* warnings) {
  const auto sections = split_sections(text);
  if (sections.empty()) throw ParseError("network description is empty");

  const Section& net = sections.front();
  if (net.name != "net" && net.name != "network") {
    throw ParseError("first section must be [net], got [" + net.name + "]");
  }
  NetworkModel model;
  {
    Options opts(net);
    const auto h = opts.find_int("height");
    const auto w = opts.find_int("width");
    const auto c = opts.find_int("channels");
    if (!h || !w || !c) {
      throw ParseError("[net] must declare height, width and channels");
    }
    if (*h < 1 || *w < 1 || *c < 1) {
      throw ParseError("[net] input dimensions must be positive");
    }
    model.input = {static_cast<std::size_t>(*c), static_cast<std::size_t>(*h),
                   static_cast<std::size_t>(*w)};
    opts.warn_unused(warnings, training_keys());
  }

  Shape shape = model.input;
  for (std::size_t i = 1; i < sections.size(); ++i) {
    const auto kind = section_kind(sections[i].name);
    if (!kind) {
      throw ParseError("unsupported layer kind [" + sections[i].name +
                       "] at line " + std::to_string(sections[i].line));
    }
    Layer layer;
    layer.spec = parse_layer(sections[i], *kind, shape, warnings);
    shape = layer.spec.output;
    model.layers.push_back(std::move(layer));
  }
  return model;
}

NetworkModel load_weights(std::span<const std::uint8_t> bytes,
                          NetworkModel skeleton) {
  detail::ByteReader in(bytes);
  WeightsHeader header;
  header.major = static_cast<std::int32_t>(in.u32());
  header.minor = static_cast<std::int32_t>(in.u32());
  header.revision = static_cast<std::int32_t>(in.u32());
  if (header.major < 0 || header.minor < 0 || header.revision < 0 ||
      header.major >= 1000 || header.minor >= 1000) {
    throw ParseError("weights header mismatch: version " +
                     std::to_string(header.major) + "." +
                     std::to_string(header.minor) + "." +
                     std::to_string(header.revision));
  }
  header.seen = header.wide_seen() ? in.u64() : in.u32();
  skeleton.header = header;

  for (std::size_t i = 0; i < skeleton.layers.size(); ++i) {
    Layer& layer = skeleton.layers[i];
    if (!layer.spec.has_weights()) continue;
    WeightBlock block = empty_block(layer.spec);
    block.biases.resize(block.out_channels);
    in.f32s(block.biases);
    if (layer.spec.batch_normalize) {
      BatchNormParams bn;
      bn.scales.resize(block.out_channels);
      bn.rolling_mean.resize(block.out_channels);
      bn.rolling_variance.resize(block.out_channels);
      in.f32s(bn.scales);
      in.f32s(bn.rolling_mean);
      in.f32s(bn.rolling_variance);
      block.batch_norm = std::move(bn);
    }
    block.coefficients.resize(block.coefficient_count());
    in.f32s(block.coefficients);
    layer.weights = std::move(block);
  }
  if (in.remaining() != 0) {
    throw ParseError("weights stream has " + std::to_string(in.remaining()) +
                     " trailing bytes");
  }
  return skeleton;
}

std::vector<std::uint8_t> save_weights(const NetworkModel& model) {
  detail::ByteWriter out;
  const WeightsHeader& h = model.header;
  out.u32(static_cast<std::uint32_t>(h.major));
  out.u32(static_cast<std::uint32_t>(h.minor));
  out.u32(static_cast<std::uint32_t>(h.revision));
  if (h.wide_seen()) {
    out.u64(h.seen);
  } else {
    out.u32(static_cast<std::uint32_t>(h.seen));
  }
  for (const Layer& layer : model.layers) {
    if (!layer.spec.has_weights()) continue;
    if (!layer.weights) throw ModelError("cannot save a model without weights");
    const WeightBlock& w = *layer.weights;
    w.validate();
    if (layer.spec.batch_normalize != w.batch_norm.has_value()) {
      throw ModelError("batch_normalize flag disagrees with the weight block");
    }
    out.f32s(w.biases);
    if (w.batch_norm) {
      out.f32s(w.batch_norm->scales);
      out.f32s(w.batch_norm->rolling_mean);
      out.f32s(w.batch_norm->rolling_variance);
    }
    out.f32s(w.coefficients);
  }
  return std::move(out).take();
}

NetworkModel fold_batch_norm(NetworkModel model) {
  for (Layer& layer : model.layers) {
    if (!layer.weights || !layer.weights->batch_norm) continue;
    WeightBlock& w = *layer.weights;
    const BatchNormParams& bn = *w.batch_norm;
    const std::size_t per_filter = w.filter_volume();
    for (std::size_t f = 0; f < w.out_channels; ++f) {
      if (!(bn.rolling_variance[f] >= 0.0f)) {
        throw ModelError("negative batch-norm variance in output channel " +
                         std::to_string(f));
      }
    }
    for (std::size_t f = 0; f < w.out_channels; ++f) {
      const double multiplier =
          static_cast<double>(bn.scales[f]) /
          std::sqrt(static_cast<double>(bn.rolling_variance[f]) +
                    static_cast<double>(kBatchNormEpsilon));
      for (std::size_t k = 0; k < per_filter; ++k) {
        float& c = w.coefficients[f * per_filter + k];
        c = static_cast<float>(c * multiplier);
      }
      w.biases[f] = static_cast<float>(
          w.biases[f] - static_cast<double>(bn.rolling_mean[f]) * multiplier);
    }
    w.batch_norm.reset();
    layer.spec.batch_normalize = false;
  }
  return model;
}

}  // namespace fmprune
