#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmprune/inference.hpp"
#include "fmprune/model.hpp"
#include "fmprune/tensor.hpp"

namespace fmprune {

// Thresholds used when none are given: 0, .005, .01, .02, .04, .06, .08, .1, .2
[[nodiscard]] std::vector<float> default_sparsity_thresholds();

// Parses "a,b,c"; throws std::invalid_argument on bad numbers or an empty list.
[[nodiscard]] std::vector<float> parse_threshold_list(std::string_view text);

// Accuracy impact of static pruning at one threshold, drops in percentage
// points of accuracy.
enum class AccuracyGrade {
  green,   // top-1 and top-5 both drop less than 1%
  yellow,  // exactly one of them drops 1% or more
  red,     // both drop 1% or more
};

[[nodiscard]] std::string_view to_string(AccuracyGrade grade) noexcept;
// Drops are fractions (0.01 == 1%); positive means accuracy was lost.
[[nodiscard]] AccuracyGrade grade_accuracy_drop(double top1_drop,
                                                double top5_drop) noexcept;

struct SparsityReport {
  std::vector<float> thresholds;
  // Fraction of coefficients with |v| <= threshold. Biases and batch-norm
  // parameters are excluded from both scopes.
  std::vector<double> all_parameters;  // convolutional + connected
  std::vector<double> conv_kernels;    // convolutional only
  std::uint64_t all_parameter_count = 0;
  std::uint64_t conv_kernel_count = 0;
  // Filled by callers that evaluated static_prune at every threshold.
  std::optional<std::vector<AccuracyGrade>> grades;
};

// Throws std::invalid_argument on unsorted thresholds and ModelError when the
// model has no weights.
[[nodiscard]] SparsityReport weight_sparsity(const NetworkModel& model,
                                             std::span<const float> thresholds);

void write_csv(std::ostream& os, const SparsityReport& report);
[[nodiscard]] std::string to_json(const SparsityReport& report);

// Zeroes every convolutional and connected coefficient with |v| <= epsilon.
// Biases and batch-norm parameters are left alone.
[[nodiscard]] NetworkModel static_prune(const NetworkModel& model,
                                        float epsilon);

// Fraction of post-activation convolution outputs with |v| <= threshold,
// pooled over all convolutional layers and images.
struct ActivationSparsity {
  std::vector<float> thresholds;
  std::vector<double> fractions;
  std::uint64_t elements = 0;
};

[[nodiscard]] ActivationSparsity activation_sparsity(
    const NetworkModel& model, std::span<const Tensor> images,
    std::span<const float> thresholds, const PruneConfig& cfg = {});

void write_csv(std::ostream& os, const ActivationSparsity& result);
[[nodiscard]] std::string to_json(const ActivationSparsity& result);

struct LayerCost {
  std::size_t layer_index = 0;
  LayerKind kind = LayerKind::convolutional;
  std::uint64_t in_channels = 0;   // I
  std::uint64_t out_channels = 0;  // O
  std::uint64_t kernel_size = 0;   // K
  std::uint64_t output_area = 0;   // A
  std::uint64_t groups = 1;
  std::uint64_t macs = 0;               // I * K^2 * O * A / groups
  std::uint64_t fmap_elements = 0;      // input feature-map elements read
  std::uint64_t kernel_coeffs = 0;      // coefficients read
  double fmap_to_kernel_ratio = 0.0;
};

struct CostModel {
  std::vector<LayerCost> layers;
  std::uint64_t total_macs = 0;
  std::uint64_t total_fmap_elements = 0;
  std::uint64_t total_kernel_coeffs = 0;
};

// Multiply-accumulate counts for convolutional and connected layers.
[[nodiscard]] CostModel compute_cost(const NetworkModel& model);

void write_csv(std::ostream& os, const CostModel& cost);
[[nodiscard]] std::string to_json(const CostModel& cost);

}  // namespace fmprune
