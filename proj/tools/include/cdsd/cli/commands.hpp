#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cdsd/cli/config.hpp"

namespace cdsd::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDivergence = 3,
  kIoError = 4,
};

/// File (optional), then --key=value overrides, then CDSD_SEED.
Config load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides);

/// Writes data.csv, meta.json and latents.csv; prints a one-line summary.
void cmd_generate(const Config& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Writes model.json, diagnostics.jsonl and report.json into out_dir.
void cmd_train(const Config& cfg, const std::filesystem::path& dataset_dir, const std::filesystem::path& out_dir,
               std::ostream& log, bool verbose = true);

void cmd_eval(const Config& cfg, const std::filesystem::path& model_file, const std::filesystem::path& dataset_dir,
              const std::filesystem::path& report_path, std::ostream& log);

/// Writes report_<variant>.json for pca, pca_varimax and pca_varimax_plus.
void cmd_baseline(const Config& cfg, const std::filesystem::path& dataset_dir, const std::filesystem::path& out_dir,
                  std::ostream& log);

/// Maps the in-flight exception to an exit code and prints it to err.
int report_exception(std::ostream& err);

/// Entry point shared by the executable and tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cdsd::cli
