#pragma once

// On-disk formats.
//
//   <dir>/data.csv     T rows, header x_1..x_dx
//   <dir>/meta.json    dims, generator config, seed, ground truth (if synthetic)
//   <dir>/latents.csv  T rows, header z_1..z_dz (synthetic only)
//
// Floats are written with 17 significant digits so they round-trip exactly.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "cdsd/model.hpp"
#include "cdsd/synth.hpp"

namespace cdsd::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (as opposed to an unreadable path).
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

std::string format_double(double v);

/// Header is prefix_1 .. prefix_n.
void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m, const std::string& column_prefix);
Eigen::MatrixXd read_csv(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

struct DatasetFiles {
  Eigen::MatrixXd x;
  std::optional<synth::GenConfig> gen;
  std::optional<synth::GroundTruth> truth;  // includes z from latents.csv
};

/// Creates dir if needed and writes data.csv, meta.json and latents.csv.
void write_dataset(const std::filesystem::path& dir, const synth::GenConfig& cfg, const synth::Generated& g);

/// Reads data.csv and, when present, meta.json / latents.csv. Checks that
/// the CSV dimensions agree with meta.json.
DatasetFiles read_dataset(const std::filesystem::path& dir);

std::string gen_config_json(const synth::GenConfig& cfg);
synth::GenConfig gen_config_from_json(const std::string& text);

void write_model(const std::filesystem::path& path, const model::ModelConfig& cfg, const model::ModelParams& params);

struct ModelFile {
  model::ModelConfig config;
  model::ModelParams params;
};

ModelFile read_model(const std::filesystem::path& path);

}  // namespace cdsd::io
