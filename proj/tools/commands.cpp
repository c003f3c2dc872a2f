#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "fmprune/error.hpp"
#include "fmprune/eval.hpp"
#include "fmprune/file_io.hpp"
#include "fmprune/imageio.hpp"
#include "fmprune/pruning.hpp"
#include "fmprune/stats.hpp"

namespace fmprune::cli {

namespace {

// Bad flag combinations; reported with the usage exit code.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

template <typename Report>
std::string render(const Report& report, OutputFormat format) {
  if (format == OutputFormat::json) return to_json(report) + "\n";
  std::ostringstream os;
  write_csv(os, report);
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                   text.size()));
}

// Machine-readable output goes to --out when given, otherwise to stdout.
template <typename Report>
void emit(const RunConfig& cfg, const Report& report, std::ostream& out) {
  const std::string text = render(report, cfg.format);
  if (cfg.out.empty()) {
    out << text;
  } else {
    write_text(cfg.out, text);
  }
}

std::vector<std::string> class_names(const RunConfig& cfg, std::size_t count) {
  std::vector<std::string> names;
  if (!cfg.labels.empty()) {
    std::istringstream in(read_text_file(cfg.labels));
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) names.push_back(line);
    }
  }
  for (std::size_t i = names.size(); i < count; ++i) {
    names.push_back("class_" + std::to_string(i));
  }
  return names;
}

DatasetManifest manifest_for(const RunConfig& cfg, const NetworkModel& model) {
  require(!cfg.manifest.empty(), "--manifest is required");
  return load_manifest(cfg.manifest, cfg.labels, model.output().volume());
}

double accuracy_for(const EvalResult& r, std::size_t k) {
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    if (r.ks[i] == k) return r.accuracy[i];
  }
  return 0.0;
}

void report_skipped(const EvalResult& r, std::ostream& err) {
  for (const SkippedImage& s : r.skipped) {
    err << "skipped " << s.image.string() << ": " << s.reason << '\n';
  }
}

}  // namespace

NetworkModel load_model(const RunConfig& cfg, std::ostream& diagnostics) {
  require(!cfg.model.empty(), "--model is required");
  require(!cfg.weights.empty(), "--weights is required");
  std::vector<std::string> warnings;
  NetworkModel skeleton = parse_config(read_text_file(cfg.model), &warnings);
  for (const std::string& w : warnings) diagnostics << "warning: " << w << '\n';
  return load_weights(read_file_bytes(cfg.weights), std::move(skeleton));
}

void cmd_analyze_weights(const RunConfig& cfg, std::ostream& out,
                         std::ostream& err) {
  const NetworkModel model = load_model(cfg, err);
  const std::vector<float> thresholds =
      cfg.thresholds.empty() ? default_sparsity_thresholds() : cfg.thresholds;
  SparsityReport report = weight_sparsity(model, thresholds);

  if (!cfg.manifest.empty()) {
    const DatasetManifest manifest = manifest_for(cfg, model);
    const EvalOptions options{{1, 5}, cfg.workers};
    PruneConfig off = cfg.prune;
    off.mode = PruneMode::off;
    const EvalResult baseline = evaluate(model, manifest, off, options);
    std::vector<AccuracyGrade> grades;
    for (float t : thresholds) {
      const EvalResult r = evaluate(static_prune(model, t), manifest, off, options);
      grades.push_back(grade_accuracy_drop(
          accuracy_for(baseline, 1) - accuracy_for(r, 1),
          accuracy_for(baseline, 5) - accuracy_for(r, 5)));
    }
    report.grades = std::move(grades);
  }
  emit(cfg, report, out);
}

void cmd_infer(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require(!cfg.image.empty(), "an image path is required");
  const NetworkModel model = load_model(cfg, err);
  const Tensor input = load_input_tensor(cfg.image, model.input);
  LoadRecorder recorder;
  const auto ranked = classify(model, input, cfg.prune, &recorder);
  const auto names = class_names(cfg, ranked.size());

  const std::size_t shown = std::min<std::size_t>(5, ranked.size());
  out << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < shown; ++i) {
    out << names[ranked[i].label] << ' ' << ranked[i].score << '\n';
  }
  out << std::defaultfloat;

  if (!cfg.trace.empty()) {
    std::ostringstream csv;
    write_csv(csv, recorder);
    write_text(cfg.trace, csv.str());
  }
}

void cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const NetworkModel model = load_model(cfg, err);
  const DatasetManifest manifest = manifest_for(cfg, model);
  const EvalResult result =
      evaluate(model, manifest, cfg.prune, EvalOptions{{1, 5}, cfg.workers});
  report_skipped(result, err);

  out << "mode " << to_string(cfg.prune.mode) << " epsilon "
      << cfg.prune.epsilon << '\n';
  for (std::size_t i = 0; i < result.ks.size(); ++i) {
    out << "top-" << result.ks[i] << ' ' << result.accuracy[i] << '\n';
  }
  out << "evaluated " << result.evaluated << " skipped "
      << result.skipped.size() << '\n';
  if (!result.loads.empty()) {
    out << "feature-map load reduction "
        << savings_ratio(result.loads).total_saved_fraction << '\n';
  }
  if (!cfg.out.empty()) write_text(cfg.out, render(result, cfg.format));
}

void cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const NetworkModel model = load_model(cfg, err);
  const DatasetManifest manifest = manifest_for(cfg, model);
  const std::vector<float> epsilons =
      cfg.epsilons.empty()
          ? std::vector<float>{0.0f, 0.1f, 0.2f, 0.3f, 0.4f, 0.5f}
          : cfg.epsilons;
  const SweepResult result = epsilon_sweep(model, manifest, epsilons, cfg.prune,
                                           EvalOptions{{1, 5}, cfg.workers});
  emit(cfg, result, out);
}

void cmd_static_prune(const RunConfig& cfg, std::ostream& out,
                      std::ostream& err) {
  require(!cfg.out.empty(), "--out is required for static-prune");
  const NetworkModel model = load_model(cfg, err);
  const NetworkModel pruned = static_prune(model, cfg.prune.epsilon);
  write_file_bytes(cfg.out, save_weights(pruned));

  const float zero = 0.0f;
  const auto before = weight_sparsity(model, std::span(&zero, 1));
  const auto after = weight_sparsity(pruned, std::span(&zero, 1));
  out << "zero coefficients " << before.all_parameters[0] << " -> "
      << after.all_parameters[0] << " of " << after.all_parameter_count
      << '\n';
}

void cmd_cost(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require(!cfg.model.empty(), "--model is required");
  std::vector<std::string> warnings;
  const NetworkModel model = parse_config(read_text_file(cfg.model), &warnings);
  for (const std::string& w : warnings) err << "warning: " << w << '\n';
  emit(cfg, compute_cost(model), out);
}

void cmd_activation_sparsity(const RunConfig& cfg, std::ostream& out,
                             std::ostream& err) {
  const NetworkModel model = load_model(cfg, err);
  const DatasetManifest manifest = manifest_for(cfg, model);
  std::vector<Tensor> images;
  for (const ManifestEntry& e : manifest.entries) {
    try {
      images.push_back(load_input_tensor(e.image, model.input));
    } catch (const Error& ex) {
      err << "skipped " << e.image.string() << ": " << ex.what() << '\n';
    }
  }
  const std::vector<float> thresholds =
      cfg.thresholds.empty() ? default_sparsity_thresholds() : cfg.thresholds;
  emit(cfg, activation_sparsity(model, images, thresholds, cfg.prune), out);
}

void cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const NetworkModel model = load_model(cfg, err);
  const DatasetManifest manifest = manifest_for(cfg, model);
  std::vector<LabeledImage> images;
  for (const ManifestEntry& e : manifest.entries) {
    try {
      images.push_back({e.image.filename().string(),
                        load_input_tensor(e.image, model.input), e.label});
    } catch (const Error& ex) {
      err << "skipped " << e.image.string() << ": " << ex.what() << '\n';
    }
  }
  PruneConfig pruned = cfg.prune;
  if (!pruned.pruning()) pruned.mode = PruneMode::literal_eq1;
  const auto rows = compare_per_image(model, images, pruned);
  emit(cfg, std::span<const ImageComparison>(rows), out);
}

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Dynamic feature-map pruning engine and sparsity analysis"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string mode = "off";
  std::string capability = "16x16";
  std::string thresholds;
  std::string epsilons;
  std::string format = "csv";

  auto common = [&](CLI::App* sub, bool needs_weights) {
    sub->add_option("--model", cfg.model, "Network description (.cfg)")
        ->required();
    if (needs_weights) {
      sub->add_option("--weights", cfg.weights, "Darknet weights file")
          ->required();
    }
    sub->add_option("--out", cfg.out, "Machine-readable output path");
    sub->add_option("--format", format, "Output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
  };
  auto pruning = [&](CLI::App* sub) {
    sub->add_option("--mode", mode, "Prune mode: off, literal or magnitude");
    sub->add_option("--epsilon", cfg.prune.epsilon, "Pruning threshold");
    sub->add_option("--leak", cfg.prune.leak, "Leaky activation slope");
    sub->add_option("--capability", capability,
                    "Processor tile HxW used for channel marking");
    sub->add_flag("--prune-input", cfg.prune.prune_network_input,
                  "Also mark channels of the network input");
  };
  auto dataset = [&](CLI::App* sub) {
    sub->add_option("--manifest", cfg.manifest,
                    "Image list: path<TAB>class_index per line");
    sub->add_option("--labels", cfg.labels, "Class names, one per line");
    sub->add_option("--workers", cfg.workers, "Evaluation threads")
        ->check(CLI::PositiveNumber);
  };

  auto* analyze = app.add_subcommand("analyze-weights",
                                     "Static weight sparsity per threshold");
  common(analyze, true);
  dataset(analyze);
  analyze->add_option("--thresholds", thresholds, "Comma-separated thresholds");

  auto* infer = app.add_subcommand("infer", "Classify one image");
  common(infer, true);
  pruning(infer);
  infer->add_option("image", cfg.image, "Input image (.ppm or raw tensor)")
      ->required();
  infer->add_option("--labels", cfg.labels, "Class names, one per line");
  infer->add_option("--trace", cfg.trace, "Per-layer load trace CSV");

  auto* eval = app.add_subcommand("eval", "Top-1/top-5 accuracy over a manifest");
  common(eval, true);
  pruning(eval);
  dataset(eval);

  auto* sweep = app.add_subcommand("sweep", "Accuracy and load reduction per epsilon");
  common(sweep, true);
  pruning(sweep);
  dataset(sweep);
  sweep->add_option("--epsilons", epsilons,
                    "Comma-separated epsilons (default 0,0.1,...,0.5)");

  auto* prune = app.add_subcommand("static-prune",
                                   "Zero small coefficients and write new weights");
  common(prune, true);
  prune->add_option("--epsilon", cfg.prune.epsilon, "Pruning threshold");

  auto* cost = app.add_subcommand("cost", "Multiply-accumulate and load counts");
  common(cost, false);

  auto* act = app.add_subcommand("activation-sparsity",
                                 "Post-activation feature-map sparsity");
  common(act, true);
  pruning(act);
  dataset(act);
  act->add_option("--thresholds", thresholds, "Comma-separated thresholds");

  auto* compare = app.add_subcommand("compare",
                                     "Ground-truth probability with and without pruning");
  common(compare, true);
  pruning(compare);
  dataset(compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    cfg.prune.mode = parse_prune_mode(mode);
    cfg.prune.capability = parse_capability(capability);
    cfg.prune.validate();
    cfg.format = format == "json" ? OutputFormat::json : OutputFormat::csv;
    if (!thresholds.empty()) cfg.thresholds = parse_threshold_list(thresholds);
    if (!epsilons.empty()) cfg.epsilons = parse_threshold_list(epsilons);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (analyze->parsed()) cmd_analyze_weights(cfg, out, err);
    else if (infer->parsed()) cmd_infer(cfg, out, err);
    else if (eval->parsed()) cmd_eval(cfg, out, err);
    else if (sweep->parsed()) cmd_sweep(cfg, out, err);
    else if (prune->parsed()) cmd_static_prune(cfg, out, err);
    else if (cost->parsed()) cmd_cost(cfg, out, err);
    else if (act->parsed()) cmd_activation_sparsity(cfg, out, err);
    else if (compare->parsed()) cmd_compare(cfg, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace fmprune::cli
