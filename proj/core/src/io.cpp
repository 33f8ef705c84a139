#include "cdsd/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cdsd::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDatasetFormat = "cdsd-dataset";
constexpr const char* kModelFormat = "cdsd-model";

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json int_matrix_json(const Eigen::MatrixXi& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw FormatError(what + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw FormatError(what + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

json lags_json(const synth::LagMatrices& lags) {
  json out = json::array();
  for (const auto& m : lags) out.push_back(matrix_json(m));
  return out;
}

synth::LagMatrices lags_from_json(const json& j, const std::string& what) {
  synth::LagMatrices out;
  for (const auto& m : j) out.push_back(matrix_from_json(m, what));
  return out;
}

json gen_json(const synth::GenConfig& c) {
  json j;
  j["d_x"] = c.d_x;
  j["d_z"] = c.d_z;
  j["tau"] = c.tau;
  j["T"] = c.T;
  j["edge_prob"] = c.edge_prob;
  j["dynamics"] = synth::to_string(c.dynamics);
  j["decoding"] = synth::to_string(c.decoding);
  j["obs_noise_var"] = c.obs_noise_var ? json(*c.obs_noise_var) : json(nullptr);
  j["burn_in"] = c.burn_in;
  j["seed"] = c.seed;
  return j;
}

synth::GenConfig gen_from_json(const json& j) {
  synth::GenConfig c;
  c.d_x = j.at("d_x").get<std::size_t>();
  c.d_z = j.at("d_z").get<std::size_t>();
  c.tau = j.at("tau").get<std::size_t>();
  c.T = j.at("T").get<std::size_t>();
  c.edge_prob = j.at("edge_prob").get<double>();
  c.dynamics = synth::mode_from_string(j.at("dynamics").get<std::string>());
  c.decoding = synth::mode_from_string(j.at("decoding").get<std::string>());
  if (!j.at("obs_noise_var").is_null()) c.obs_noise_var = j.at("obs_noise_var").get<double>();
  c.burn_in = j.at("burn_in").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

template <class F>
auto parsing(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(what + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(what + ": " + e.what());
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_csv(const fs::path& path, const Eigen::MatrixXd& m, const std::string& column_prefix) {
  std::string text;
  text.reserve(static_cast<std::size_t>(m.size()) * 24 + 64);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (j) text += ',';
    text += column_prefix + "_" + std::to_string(j + 1);
  }
  text += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) text += ',';
      text += format_double(m(i, j));
    }
    text += '\n';
  }
  write_text(path, text);
}

Eigen::MatrixXd read_csv(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::size_t fields = 1;
    for (char ch : line) fields += ch == ',';
    if (line_no == 1) {
      cols = fields;
      continue;
    }
    if (fields != cols) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                        " fields, found " + std::to_string(fields));
    }
    const char* p = line.data();
    const char* stop = line.data() + line.size();
    for (std::size_t f = 0; f < fields; ++f) {
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, stop, v);
      if (ec != std::errc() || (next != stop && *next != ',')) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad number in field " +
                          std::to_string(f + 1));
      }
      values.push_back(v);
      p = next == stop ? stop : next + 1;
    }
    ++rows;
  }
  if (cols == 0) throw FormatError(path.string() + ": missing header");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * cols + j];
    }
  }
  return m;
}

std::string gen_config_json(const synth::GenConfig& cfg) { return gen_json(cfg).dump(2); }

synth::GenConfig gen_config_from_json(const std::string& text) {
  return parsing("generator config", [&] { return gen_from_json(json::parse(text)); });
}

void write_dataset(const fs::path& dir, const synth::GenConfig& cfg, const synth::Generated& g) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  const synth::GroundTruth& t = g.truth;
  json meta;
  meta["format"] = kDatasetFormat;
  meta["version"] = 1;
  meta["T"] = g.data.x.rows();
  meta["d_x"] = g.data.x.cols();
  meta["d_z"] = cfg.d_z;
  meta["tau"] = cfg.tau;
  meta["seed"] = cfg.seed;
  meta["generator"] = gen_json(cfg);
  json truth;
  truth["G"] = lags_json(t.G);
  truth["A"] = lags_json(t.A);
  json tags = json::array();
  for (const auto& m : t.tags) tags.push_back(int_matrix_json(m));
  truth["tags"] = std::move(tags);
  truth["W"] = matrix_json(t.W);
  truth["decoder_nonlinear"] = t.decoder_nonlinear;
  truth["decoder_amplitude"] = t.decoder_amplitude;
  truth["spectral_radius"] = t.spectral_radius;
  truth["latents"] = "latents.csv";
  meta["ground_truth"] = std::move(truth);

  write_csv(dir / "data.csv", g.data.x, "x");
  write_csv(dir / "latents.csv", t.z, "z");
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

DatasetFiles read_dataset(const fs::path& dir) {
  DatasetFiles out;
  out.x = read_csv(dir / "data.csv");
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) return out;

  const json meta = parsing(meta_path.string(), [&] { return json::parse(read_text(meta_path)); });
  parsing(meta_path.string(), [&] {
    if (meta.contains("T") && meta.at("T").get<Eigen::Index>() != out.x.rows()) {
      throw FormatError("data.csv has " + std::to_string(out.x.rows()) + " rows but meta.json says T=" +
                        std::to_string(meta.at("T").get<long>()));
    }
    if (meta.contains("d_x") && meta.at("d_x").get<Eigen::Index>() != out.x.cols()) {
      throw FormatError("data.csv has " + std::to_string(out.x.cols()) + " columns but meta.json says d_x=" +
                        std::to_string(meta.at("d_x").get<long>()));
    }
    if (meta.contains("generator")) out.gen = gen_from_json(meta.at("generator"));
    if (!meta.contains("ground_truth")) return 0;
    const json& j = meta.at("ground_truth");
    synth::GroundTruth t;
    t.G = lags_from_json(j.at("G"), "G");
    t.A = lags_from_json(j.at("A"), "A");
    for (const auto& m : j.at("tags")) t.tags.push_back(matrix_from_json(m, "tags").cast<int>());
    t.W = matrix_from_json(j.at("W"), "W");
    t.decoder_nonlinear = j.at("decoder_nonlinear").get<std::vector<int>>();
    t.decoder_amplitude = j.at("decoder_amplitude").get<std::vector<double>>();
    t.spectral_radius = j.at("spectral_radius").get<double>();
    t.z = read_csv(dir / j.at("latents").get<std::string>());
    if (t.z.rows() != out.x.rows()) throw FormatError("latents.csv row count differs from data.csv");
    out.truth = std::move(t);
    return 0;
  });
  return out;
}

void write_model(const fs::path& path, const model::ModelConfig& cfg, const model::ModelParams& params) {
  model::check_params(cfg, params);
  json j;
  j["format"] = kModelFormat;
  j["version"] = 1;
  json c;
  c["d_x"] = cfg.d_x;
  c["d_z"] = cfg.d_z;
  c["tau"] = cfg.tau;
  c["transition_hidden"] = cfg.transition_hidden;
  c["decoder_mode"] = model::to_string(cfg.decoder_mode);
  c["decoder_hidden"] = cfg.decoder_hidden;
  c["embed_dim"] = cfg.embed_dim;
  c["encoder_hidden"] = cfg.encoder_hidden;
  c["transition_variance"] = cfg.transition_variance;
  j["config"] = std::move(c);
  json p = json::object();
  for (const auto& [id, t] : params.tensors) {
    p[id] = {{"shape", t.shape()}, {"data", t.storage()}};
  }
  j["params"] = std::move(p);
  write_text(path, j.dump() + "\n");
}

ModelFile read_model(const fs::path& path) {
  return parsing(path.string(), [&] {
    const json j = json::parse(read_text(path));
    if (j.value("format", "") != kModelFormat) throw FormatError("not a model file");
    ModelFile m;
    const json& c = j.at("config");
    m.config.d_x = c.at("d_x").get<std::size_t>();
    m.config.d_z = c.at("d_z").get<std::size_t>();
    m.config.tau = c.at("tau").get<std::size_t>();
    m.config.transition_hidden = c.at("transition_hidden").get<std::vector<std::size_t>>();
    m.config.decoder_mode = model::decoder_mode_from_string(c.at("decoder_mode").get<std::string>());
    m.config.decoder_hidden = c.at("decoder_hidden").get<std::vector<std::size_t>>();
    m.config.embed_dim = c.at("embed_dim").get<std::size_t>();
    m.config.encoder_hidden = c.at("encoder_hidden").get<std::vector<std::size_t>>();
    m.config.transition_variance = c.at("transition_variance").get<double>();
    m.config.validate();
    for (const auto& [id, t] : j.at("params").items()) {
      m.params.tensors.emplace(id, Tensor(t.at("shape").get<Shape>(), t.at("data").get<std::vector<double>>()));
    }
    model::check_params(m.config, m.params);
    return m;
  });
}

}  // namespace cdsd::io
