#include "fmprune/stats.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fmprune/error.hpp"

namespace fmprune {

std::vector<float> default_sparsity_thresholds() {
  return {0.0f, 0.005f, 0.01f, 0.02f, 0.04f, 0.06f, 0.08f, 0.1f, 0.2f};
}

std::vector<float> parse_threshold_list(std::string_view text) {
  std::vector<float> out;
  while (true) {
    const auto comma = text.find(',');
    std::string item(text.substr(0, comma));
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    std::size_t used = 0;
    float v = 0.0f;
    try {
      v = std::stof(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) {
      throw std::invalid_argument("bad threshold '" + item + "'");
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return out;
}

std::string_view to_string(AccuracyGrade grade) noexcept {
  switch (grade) {
    case AccuracyGrade::green: return "green";
    case AccuracyGrade::yellow: return "yellow";
    case AccuracyGrade::red: return "red";
  }
  return "unknown";
}

AccuracyGrade grade_accuracy_drop(double top1_drop, double top5_drop) noexcept {
  const bool top1_bad = top1_drop >= 0.01;
  const bool top5_bad = top5_drop >= 0.01;
  if (top1_bad && top5_bad) return AccuracyGrade::red;
  if (top1_bad || top5_bad) return AccuracyGrade::yellow;
  return AccuracyGrade::green;
}

namespace {

void check_thresholds(std::span<const float> thresholds) {
  if (thresholds.empty()) throw std::invalid_argument("threshold list is empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] >= 0.0f)) {
      throw std::invalid_argument("thresholds must be >= 0");
    }
    if (i > 0 && thresholds[i] < thresholds[i - 1]) {
      throw std::invalid_argument("thresholds must be sorted ascending");
    }
  }
}

// Counts values with |v| <= threshold for each threshold. Each value is
// binned at the first threshold that admits it; prefix sums give the counts.
class ThresholdCounter {
 public:
  explicit ThresholdCounter(std::span<const float> thresholds)
      : thresholds_(thresholds), bins_(thresholds.size(), 0) {}

  void add(float v) {
    ++total_;
    const float mag = std::fabs(v);
    const auto it =
        std::lower_bound(thresholds_.begin(), thresholds_.end(), mag);
    if (it != thresholds_.end()) {
      ++bins_[static_cast<std::size_t>(it - thresholds_.begin())];
    }
  }

  void add(std::span<const float> vs) {
    for (float v : vs) add(v);
  }

  [[nodiscard]] std::uint64_t total() const noexcept { return total_; }

  [[nodiscard]] std::vector<double> fractions() const {
    std::vector<double> out(bins_.size(), 0.0);
    std::uint64_t running = 0;
    for (std::size_t i = 0; i < bins_.size(); ++i) {
      running += bins_[i];
      out[i] = total_ == 0 ? 0.0
                           : static_cast<double>(running) /
                                 static_cast<double>(total_);
    }
    return out;
  }

 private:
  std::span<const float> thresholds_;
  std::vector<std::uint64_t> bins_;
  std::uint64_t total_ = 0;
};

}  // namespace

SparsityReport weight_sparsity(const NetworkModel& model,
                               std::span<const float> thresholds) {
  check_thresholds(thresholds);
  if (!model.weights_loaded()) {
    throw ModelError("weight sparsity needs a model with weights loaded");
  }
  ThresholdCounter all(thresholds);
  ThresholdCounter conv(thresholds);
  for (const Layer& layer : model.layers) {
    if (!layer.weights) continue;
    all.add(layer.weights->coefficients);
    if (layer.spec.kind == LayerKind::convolutional) {
      conv.add(layer.weights->coefficients);
    }
  }
  SparsityReport report;
  report.thresholds.assign(thresholds.begin(), thresholds.end());
  report.all_parameters = all.fractions();
  report.conv_kernels = conv.fractions();
  report.all_parameter_count = all.total();
  report.conv_kernel_count = conv.total();
  return report;
}

void write_csv(std::ostream& os, const SparsityReport& report) {
  os << "scope";
  for (float t : report.thresholds) os << ',' << t;
  os << "\nall_parameters";
  for (double f : report.all_parameters) os << ',' << f;
  os << "\nconv_kernels";
  for (double f : report.conv_kernels) os << ',' << f;
  os << '\n';
  if (report.grades) {
    os << "accuracy_grade";
    for (AccuracyGrade g : *report.grades) os << ',' << to_string(g);
    os << '\n';
  }
}

std::string to_json(const SparsityReport& report) {
  nlohmann::json j = {{"thresholds", report.thresholds},
                      {"all_parameters", report.all_parameters},
                      {"conv_kernels", report.conv_kernels},
                      {"all_parameter_count", report.all_parameter_count},
                      {"conv_kernel_count", report.conv_kernel_count}};
  if (report.grades) {
    std::vector<std::string> grades;
    for (AccuracyGrade g : *report.grades) grades.emplace_back(to_string(g));
    j["accuracy_grades"] = grades;
  }
  return j.dump(2);
}

NetworkModel static_prune(const NetworkModel& model, float epsilon) {
  if (!(epsilon >= 0.0f)) throw std::invalid_argument("epsilon must be >= 0");
  NetworkModel pruned = model;
  for (Layer& layer : pruned.layers) {
    if (!layer.weights) continue;
    for (float& c : layer.weights->coefficients) {
      // Existing zeros (including -0) keep their bit pattern.
      if (c != 0.0f && std::fabs(c) <= epsilon) c = 0.0f;
    }
  }
  return pruned;
}

ActivationSparsity activation_sparsity(const NetworkModel& model,
                                       std::span<const Tensor> images,
                                       std::span<const float> thresholds,
                                       const PruneConfig& cfg) {
  check_thresholds(thresholds);
  if (images.empty()) throw std::invalid_argument("no images supplied");
  ThresholdCounter counter(thresholds);
  const LayerObserver observe = [&](std::size_t, const Layer& layer,
                                    const Tensor& out) {
    if (layer.spec.kind == LayerKind::convolutional) counter.add(out.data());
  };
  for (const Tensor& image : images) {
    (void)forward(model, image, cfg, nullptr, observe);
  }
  ActivationSparsity result;
  result.thresholds.assign(thresholds.begin(), thresholds.end());
  result.fractions = counter.fractions();
  result.elements = counter.total();
  return result;
}

void write_csv(std::ostream& os, const ActivationSparsity& result) {
  os << "threshold,fraction\n";
  for (std::size_t i = 0; i < result.thresholds.size(); ++i) {
    os << result.thresholds[i] << ',' << result.fractions[i] << '\n';
  }
}

std::string to_json(const ActivationSparsity& result) {
  return nlohmann::json{{"thresholds", result.thresholds},
                        {"fractions", result.fractions},
                        {"elements", result.elements}}
      .dump(2);
}

CostModel compute_cost(const NetworkModel& model) {
  CostModel cost;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& spec = model.layers[i].spec;
    LayerCost c;
    c.layer_index = i;
    c.kind = spec.kind;
    if (spec.kind == LayerKind::convolutional) {
      c.in_channels = spec.input.channels;
      c.out_channels = spec.filters;
      c.kernel_size = spec.size;
      c.output_area = spec.output.plane();
      c.groups = spec.groups;
      c.macs = c.in_channels * c.kernel_size * c.kernel_size * c.out_channels *
               c.output_area / c.groups;
      c.fmap_elements = spec.input.volume();
      c.kernel_coeffs = c.out_channels * (c.in_channels / c.groups) *
                        c.kernel_size * c.kernel_size;
    } else if (spec.kind == LayerKind::connected) {
      c.in_channels = spec.input.volume();
      c.out_channels = spec.outputs;
      c.kernel_size = 1;
      c.output_area = 1;
      c.macs = c.in_channels * c.out_channels;
      c.fmap_elements = c.in_channels;
      c.kernel_coeffs = c.in_channels * c.out_channels;
    } else {
      continue;
    }
    c.fmap_to_kernel_ratio = static_cast<double>(c.fmap_elements) /
                             static_cast<double>(c.kernel_coeffs);
    cost.total_macs += c.macs;
    cost.total_fmap_elements += c.fmap_elements;
    cost.total_kernel_coeffs += c.kernel_coeffs;
    cost.layers.push_back(c);
  }
  return cost;
}

void write_csv(std::ostream& os, const CostModel& cost) {
  os << "layer_index,layer_kind,in_channels,out_channels,kernel_size,"
        "output_area,groups,macs,fmap_elements,kernel_coeffs,"
        "fmap_to_kernel_ratio\n";
  for (const LayerCost& c : cost.layers) {
    os << c.layer_index << ',' << to_string(c.kind) << ',' << c.in_channels
       << ',' << c.out_channels << ',' << c.kernel_size << ',' << c.output_area
       << ',' << c.groups << ',' << c.macs << ',' << c.fmap_elements << ','
       << c.kernel_coeffs << ',' << c.fmap_to_kernel_ratio << '\n';
  }
  os << "total,,,,,,," << cost.total_macs << ',' << cost.total_fmap_elements
     << ',' << cost.total_kernel_coeffs << ",\n";
}

std::string to_json(const CostModel& cost) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerCost& c : cost.layers) {
    layers.push_back({{"layer_index", c.layer_index},
                      {"layer_kind", std::string(to_string(c.kind))},
                      {"in_channels", c.in_channels},
                      {"out_channels", c.out_channels},
                      {"kernel_size", c.kernel_size},
                      {"output_area", c.output_area},
                      {"groups", c.groups},
                      {"macs", c.macs},
                      {"fmap_elements", c.fmap_elements},
                      {"kernel_coeffs", c.kernel_coeffs},
                      {"fmap_to_kernel_ratio", c.fmap_to_kernel_ratio}});
  }
  return nlohmann::json{{"layers", std::move(layers)},
                        {"total_macs", cost.total_macs},
                        {"total_fmap_elements", cost.total_fmap_elements},
                        {"total_kernel_coeffs", cost.total_kernel_coeffs}}
      .dump(2);
}

}  // namespace fmprune
