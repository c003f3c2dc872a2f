#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fmprune/capability.hpp"
#include "fmprune/inference.hpp"
#include "fmprune/model.hpp"

namespace fmprune::cli {

enum class OutputFormat { csv, json };

struct RunConfig {
  std::filesystem::path model;
  std::filesystem::path weights;
  PruneConfig prune{};
  std::vector<float> thresholds;
  std::vector<float> epsilons;
  std::filesystem::path manifest;
  std::filesystem::path labels;
  std::filesystem::path out;
  OutputFormat format = OutputFormat::csv;
  std::filesystem::path trace;
  std::filesystem::path image;
  std::size_t workers = 1;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Parses the description and weights named by cfg.
[[nodiscard]] NetworkModel load_model(const RunConfig& cfg,
                                      std::ostream& diagnostics);

// Each command writes human-readable text to `out` and, when cfg.out is set,
// a machine-readable file. They throw on failure; run() maps exceptions to
// exit codes.
void cmd_analyze_weights(const RunConfig& cfg, std::ostream& out,
                         std::ostream& err);
void cmd_infer(const RunConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_static_prune(const RunConfig& cfg, std::ostream& out,
                      std::ostream& err);
void cmd_cost(const RunConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_activation_sparsity(const RunConfig& cfg, std::ostream& out,
                             std::ostream& err);
void cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Full command-line entry point. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace fmprune::cli
