#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmprune/inference.hpp"
#include "fmprune/model.hpp"
#include "fmprune/pruning.hpp"
#include "fmprune/tensor.hpp"

namespace fmprune {

struct ManifestEntry {
  std::filesystem::path image;
  std::size_t label = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;

  [[nodiscard]] std::size_t class_count() const noexcept {
    return class_names.size();
  }
  // Throws ParseError on out-of-range labels or duplicate paths.
  void validate() const;
};

// `manifest_text` holds one "path<TAB>class_index" per line (blank lines and
// '#' comments allowed); relative paths resolve against `base_dir`.
// `names_text` holds one class name per line.
[[nodiscard]] DatasetManifest parse_manifest(std::string_view manifest_text,
                                             std::string_view names_text,
                                             const std::filesystem::path& base_dir);
// Reads both files; without a names file the classes are named class_<i> for
// i < class_count.
[[nodiscard]] DatasetManifest load_manifest(
    const std::filesystem::path& manifest, const std::filesystem::path& names,
    std::size_t class_count);

struct ClassScore {
  std::size_t label = 0;
  float score = 0.0f;
};

// Softmax scores sorted descending, ties by ascending class index. A softmax
// is applied unless the model already ends in one.
[[nodiscard]] std::vector<ClassScore> classify(const NetworkModel& model,
                                               const Tensor& image,
                                               const PruneConfig& cfg = {},
                                               LoadRecorder* recorder = nullptr);

struct SkippedImage {
  std::filesystem::path image;
  std::string reason;
};

struct EvalResult {
  std::vector<std::size_t> ks;
  std::vector<double> accuracy;  // per k
  std::size_t evaluated = 0;
  std::vector<SkippedImage> skipped;
  LoadRecorder loads;
};

struct EvalOptions {
  std::vector<std::size_t> ks{1, 5};
  std::size_t workers = 1;
};

// Top-k accuracy over the readable images of the manifest. Unreadable images
// are listed in `skipped`. Throws std::invalid_argument on an empty manifest.
[[nodiscard]] EvalResult evaluate(const NetworkModel& model,
                                  const DatasetManifest& manifest,
                                  const PruneConfig& cfg,
                                  const EvalOptions& options = {});

void write_csv(std::ostream& os, const EvalResult& result);
[[nodiscard]] std::string to_json(const EvalResult& result);

struct SweepRow {
  float epsilon = 0.0f;
  double top1 = 0.0;
  double top5 = 0.0;
  double top1_loss = 0.0;  // baseline - pruned; positive means a loss
  double top5_loss = 0.0;
  double load_reduction = 0.0;  // skipped / total convolution channel loads
  SavingsReport savings;
};

struct SweepResult {
  PruneMode mode = PruneMode::literal_eq1;
  double baseline_top1 = 0.0;
  double baseline_top5 = 0.0;
  std::size_t evaluated = 0;
  std::vector<SweepRow> rows;
};

// Evaluates the unpruned baseline, then every epsilon in `epsilons` (sorted,
// non-empty) under cfg.mode (literal_eq1 when cfg.mode is off).
[[nodiscard]] SweepResult epsilon_sweep(const NetworkModel& model,
                                        const DatasetManifest& manifest,
                                        std::span<const float> epsilons,
                                        const PruneConfig& cfg = {},
                                        const EvalOptions& options = {});

void write_csv(std::ostream& os, const SweepResult& result);
[[nodiscard]] std::string to_json(const SweepResult& result);

struct LabeledImage {
  std::string name;
  Tensor image;
  std::size_t label = 0;
};

struct ImageComparison {
  std::string name;
  std::size_t label = 0;
  float probability_unpruned = 0.0f;
  float probability_pruned = 0.0f;
  std::uint64_t channels_total = 0;
  std::uint64_t channels_skipped = 0;
};

// Ground-truth probability with and without pruning, plus saved loads.
[[nodiscard]] std::vector<ImageComparison> compare_per_image(
    const NetworkModel& model, std::span<const LabeledImage> images,
    const PruneConfig& cfg);

void write_csv(std::ostream& os, std::span<const ImageComparison> rows);
[[nodiscard]] std::string to_json(std::span<const ImageComparison> rows);

}  // namespace fmprune
