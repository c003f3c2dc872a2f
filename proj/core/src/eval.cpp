#include "fmprune/eval.hpp"

#include <algorithm>
#include <charconv>
#include <exception>
#include <ostream>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "fmprune/error.hpp"
#include "fmprune/file_io.hpp"
#include "fmprune/imageio.hpp"
#include "json_detail.hpp"

namespace fmprune {

void DatasetManifest::validate() const {
  std::set<std::filesystem::path> seen;
  for (const ManifestEntry& e : entries) {
    if (e.label >= class_names.size()) {
      throw ParseError("label " + std::to_string(e.label) + " of " +
                       e.image.string() + " is outside the " +
                       std::to_string(class_names.size()) + " classes");
    }
    if (!seen.insert(e.image).second) {
      throw ParseError("duplicate manifest path " + e.image.string());
    }
  }
}

namespace {

std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    if (nl == std::string_view::npos) break;
    text = text.substr(nl + 1);
  }
  return out;
}

}  // namespace

DatasetManifest parse_manifest(std::string_view manifest_text,
                               std::string_view names_text,
                               const std::filesystem::path& base_dir) {
  DatasetManifest manifest;
  for (std::string_view name : lines(names_text)) {
    if (!name.empty()) manifest.class_names.emplace_back(name);
  }
  std::size_t line_no = 0;
  for (std::string_view line : lines(manifest_text)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw ParseError("manifest line " + std::to_string(line_no) +
                       ": expected path<TAB>class_index");
    }
    const std::string_view label_text = line.substr(tab + 1);
    std::size_t label = 0;
    auto [ptr, ec] = std::from_chars(label_text.data(),
                                     label_text.data() + label_text.size(), label);
    if (label_text.empty() || ec != std::errc{} ||
        ptr != label_text.data() + label_text.size()) {
      throw ParseError("manifest line " + std::to_string(line_no) +
                       ": bad class index '" + std::string(label_text) + "'");
    }
    std::filesystem::path path(std::string(line.substr(0, tab)));
    if (path.is_relative()) path = base_dir / path;
    manifest.entries.push_back({std::move(path), label});
  }
  manifest.validate();
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& manifest,
                              const std::filesystem::path& names,
                              std::size_t class_count) {
  const std::string manifest_text = read_text_file(manifest);
  std::string names_text;
  if (!names.empty()) {
    names_text = read_text_file(names);
  } else {
    for (std::size_t i = 0; i < class_count; ++i) {
      names_text += "class_" + std::to_string(i) + "\n";
    }
  }
  return parse_manifest(manifest_text, names_text, manifest.parent_path());
}

std::vector<ClassScore> classify(const NetworkModel& model, const Tensor& image,
                                 const PruneConfig& cfg,
                                 LoadRecorder* recorder) {
  Tensor scores = forward(model, image, cfg, recorder);
  const bool ends_in_softmax =
      !model.layers.empty() &&
      model.layers.back().spec.kind == LayerKind::softmax;
  if (!ends_in_softmax) scores = softmax_forward(scores);

  const auto values = scores.data();
  std::vector<ClassScore> ranked(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) ranked[i] = {i, values[i]};
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const ClassScore& a, const ClassScore& b) {
                     return a.score > b.score;
                   });
  return ranked;
}

namespace {

struct ImageOutcome {
  bool ok = false;
  std::size_t rank = 0;  // 0-based position of the label in the ranking
  std::string error;
  LoadRecorder loads;
};

ImageOutcome run_image(const NetworkModel& model, const ManifestEntry& entry,
                       const PruneConfig& cfg) {
  ImageOutcome outcome;
  Tensor image;
  try {
    image = load_input_tensor(entry.image, model.input);
  } catch (const Error& e) {
    outcome.error = e.what();
    return outcome;
  }
  const auto ranked = classify(model, image, cfg, &outcome.loads);
  const auto it = std::find_if(ranked.begin(), ranked.end(),
                               [&](const ClassScore& s) { return s.label == entry.label; });
  outcome.ok = true;
  outcome.rank = static_cast<std::size_t>(it - ranked.begin());
  return outcome;
}

}  // namespace

EvalResult evaluate(const NetworkModel& model, const DatasetManifest& manifest,
                    const PruneConfig& cfg, const EvalOptions& options) {
  if (manifest.entries.empty()) {
    throw std::invalid_argument("manifest has no entries");
  }
  for (std::size_t k : options.ks) {
    if (k == 0) throw std::invalid_argument("top-k needs k >= 1");
  }
  cfg.validate();

  const std::size_t n = manifest.entries.size();
  std::vector<ImageOutcome> outcomes(n);
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      outcomes[i] = run_image(model, manifest.entries[i], cfg);
    }
  } else {
    std::vector<std::exception_ptr> failures(workers);
    {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = w; i < n; i += workers) {
              outcomes[i] = run_image(model, manifest.entries[i], cfg);
            }
          } catch (...) {
            failures[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }

  EvalResult result;
  result.ks = options.ks;
  std::vector<std::size_t> hits(options.ks.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const ImageOutcome& o = outcomes[i];
    if (!o.ok) {
      result.skipped.push_back({manifest.entries[i].image, o.error});
      continue;
    }
    ++result.evaluated;
    for (std::size_t j = 0; j < options.ks.size(); ++j) {
      if (o.rank < options.ks[j]) ++hits[j];
    }
    result.loads.merge(o.loads);
  }
  result.accuracy.resize(options.ks.size(), 0.0);
  if (result.evaluated > 0) {
    for (std::size_t j = 0; j < hits.size(); ++j) {
      result.accuracy[j] = static_cast<double>(hits[j]) /
                           static_cast<double>(result.evaluated);
    }
  }
  return result;
}

void write_csv(std::ostream& os, const EvalResult& result) {
  os << "k,accuracy,evaluated,skipped\n";
  for (std::size_t j = 0; j < result.ks.size(); ++j) {
    os << result.ks[j] << ',' << result.accuracy[j] << ',' << result.evaluated
       << ',' << result.skipped.size() << '\n';
  }
}

std::string to_json(const EvalResult& result) {
  nlohmann::json skipped = nlohmann::json::array();
  for (const SkippedImage& s : result.skipped) {
    skipped.push_back({{"image", s.image.string()}, {"reason", s.reason}});
  }
  nlohmann::json j = {{"ks", result.ks},
                      {"accuracy", result.accuracy},
                      {"evaluated", result.evaluated},
                      {"skipped", std::move(skipped)}};
  if (!result.loads.empty()) j["loads"] = detail::savings_json(savings_ratio(result.loads));
  return j.dump(2);
}

namespace {

double accuracy_at(const EvalResult& r, std::size_t k) {
  const auto it = std::find(r.ks.begin(), r.ks.end(), k);
  return it == r.ks.end() ? 0.0
                          : r.accuracy[static_cast<std::size_t>(it - r.ks.begin())];
}

}  // namespace

SweepResult epsilon_sweep(const NetworkModel& model,
                          const DatasetManifest& manifest,
                          std::span<const float> epsilons,
                          const PruneConfig& cfg, const EvalOptions& options) {
  if (epsilons.empty()) throw std::invalid_argument("epsilon list is empty");
  if (!std::is_sorted(epsilons.begin(), epsilons.end())) {
    throw std::invalid_argument("epsilon list must be sorted ascending");
  }
  EvalOptions opts = options;
  for (std::size_t k : {std::size_t{1}, std::size_t{5}}) {
    if (std::find(opts.ks.begin(), opts.ks.end(), k) == opts.ks.end()) {
      opts.ks.push_back(k);
    }
  }

  PruneConfig base = cfg;
  base.mode = PruneMode::off;
  const EvalResult baseline = evaluate(model, manifest, base, opts);

  SweepResult sweep;
  sweep.mode = cfg.pruning() ? cfg.mode : PruneMode::literal_eq1;
  sweep.baseline_top1 = accuracy_at(baseline, 1);
  sweep.baseline_top5 = accuracy_at(baseline, 5);
  sweep.evaluated = baseline.evaluated;

  for (float eps : epsilons) {
    PruneConfig pruned = cfg;
    pruned.mode = sweep.mode;
    pruned.epsilon = eps;
    const EvalResult r = evaluate(model, manifest, pruned, opts);
    SweepRow row;
    row.epsilon = eps;
    row.top1 = accuracy_at(r, 1);
    row.top5 = accuracy_at(r, 5);
    row.top1_loss = sweep.baseline_top1 - row.top1;
    row.top5_loss = sweep.baseline_top5 - row.top5;
    if (!r.loads.empty()) {
      row.savings = savings_ratio(r.loads);
      row.load_reduction = row.savings.total_saved_fraction;
    }
    sweep.rows.push_back(std::move(row));
  }
  return sweep;
}

void write_csv(std::ostream& os, const SweepResult& result) {
  os << "epsilon,top1,top5,top1_loss,top5_loss,load_reduction\n";
  for (const SweepRow& r : result.rows) {
    os << r.epsilon << ',' << r.top1 << ',' << r.top5 << ',' << r.top1_loss
       << ',' << r.top5_loss << ',' << r.load_reduction << '\n';
  }
}

std::string to_json(const SweepResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const SweepRow& r : result.rows) {
    nlohmann::json row = {{"epsilon", r.epsilon},
                          {"top1", r.top1},
                          {"top5", r.top5},
                          {"top1_loss", r.top1_loss},
                          {"top5_loss", r.top5_loss},
                          {"load_reduction", r.load_reduction}};
    if (!r.savings.layers.empty()) row["savings"] = detail::savings_json(r.savings);
    rows.push_back(std::move(row));
  }
  return nlohmann::json{{"mode", std::string(to_string(result.mode))},
                        {"baseline_top1", result.baseline_top1},
                        {"baseline_top5", result.baseline_top5},
                        {"evaluated", result.evaluated},
                        {"rows", std::move(rows)}}
      .dump(2);
}

std::vector<ImageComparison> compare_per_image(
    const NetworkModel& model, std::span<const LabeledImage> images,
    const PruneConfig& cfg) {
  PruneConfig off = cfg;
  off.mode = PruneMode::off;
  std::vector<ImageComparison> rows;
  rows.reserve(images.size());
  for (const LabeledImage& item : images) {
    auto probability = [&](const std::vector<ClassScore>& ranked) {
      for (const ClassScore& s : ranked) {
        if (s.label == item.label) return s.score;
      }
      throw std::invalid_argument("label " + std::to_string(item.label) +
                                  " is outside the network outputs");
    };
    LoadRecorder loads;
    ImageComparison row;
    row.name = item.name;
    row.label = item.label;
    row.probability_unpruned = probability(classify(model, item.image, off));
    row.probability_pruned = probability(classify(model, item.image, cfg, &loads));
    for (const LayerLoad& l : loads.entries()) {
      row.channels_total += l.channels_total;
      row.channels_skipped += l.channels_skipped;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_csv(std::ostream& os, std::span<const ImageComparison> rows) {
  os << "image,label,probability_unpruned,probability_pruned,channels_total,"
        "channels_skipped\n";
  for (const ImageComparison& r : rows) {
    os << r.name << ',' << r.label << ',' << r.probability_unpruned << ','
       << r.probability_pruned << ',' << r.channels_total << ','
       << r.channels_skipped << '\n';
  }
}

std::string to_json(std::span<const ImageComparison> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const ImageComparison& r : rows) {
    out.push_back({{"image", r.name},
                   {"label", r.label},
                   {"probability_unpruned", r.probability_unpruned},
                   {"probability_pruned", r.probability_pruned},
                   {"channels_total", r.channels_total},
                   {"channels_skipped", r.channels_skipped}});
  }
  return out.dump(2);
}

}  // namespace fmprune
