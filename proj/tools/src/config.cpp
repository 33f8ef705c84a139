#include "cdsd/cli/config.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace cdsd::cli {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Config from_ptree(const pt::ptree& tree) {
  Config c;
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      if (c.has(key)) throw ConfigError("duplicate key '" + key + "'");
      c.set(key, trim(node.data()));
      continue;
    }
    for (const auto& [sub, leaf] : node) {
      const std::string full = key + "." + sub;
      if (c.has(full)) throw ConfigError("duplicate key '" + full + "'");
      c.set(full, trim(leaf.data()));
    }
  }
  return c;
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError("bad value for '" + key + "': '" + s + "'");
  return v;
}

}  // namespace

Config Config::parse_string(const std::string& text) {
  std::istringstream in(text);
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  return from_ptree(tree);
}

Config Config::parse_file(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  return from_ptree(tree);
}

void Config::apply_overrides(const std::vector<std::string>& args) {
  for (const std::string& a : args) {
    const auto eq = a.find('=');
    if (a.rfind("--", 0) != 0 || eq == std::string::npos || eq == 2) {
      throw ConfigError("unrecognized argument '" + a + "' (overrides look like --section.key=value)");
    }
    values_[a.substr(2, eq - 2)] = a.substr(eq + 1);
  }
}

void Config::apply_environment() {
  if (const char* seed = std::getenv("CDSD_SEED")) {
    parse_number<std::uint64_t>("CDSD_SEED", seed);
    // Commands that ignore one of the two seeds must not report it as unknown.
    for (const char* key : {"gen.seed", "train.seed"}) {
      values_[key] = seed;
      used_.insert(key);
    }
  }
}

std::optional<std::string> Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  used_.insert(key);
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = raw(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  auto v = raw(key);
  return v ? parse_number<std::size_t>(key, *v) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = raw(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

std::vector<std::size_t> Config::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  if (trim(*v).empty()) return out;
  std::istringstream in(*v);
  for (std::string item; std::getline(in, item, ',');) out.push_back(parse_number<std::size_t>(key, trim(item)));
  return out;
}

std::size_t Config::require_size(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required key '" + key + "'");
  return get_size(key, 0);
}

void Config::check_all_used() const {
  std::string unknown;
  for (const auto& [k, v] : values_) {
    if (used_.count(k)) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += k;
  }
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

synth::GenConfig gen_config(const Config& c) {
  synth::GenConfig g;
  g.d_x = c.get_size("gen.d_x", g.d_x);
  g.d_z = c.get_size("gen.d_z", g.d_z);
  g.tau = c.get_size("gen.tau", g.tau);
  g.T = c.get_size("gen.T", g.T);
  g.edge_prob = c.get_double("gen.edge_prob", g.edge_prob);
  try {
    g.dynamics = synth::mode_from_string(c.get_string("gen.dynamics", "linear"));
    g.decoding = synth::mode_from_string(c.get_string("gen.decoding", "linear"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.has("gen.obs_noise_var")) g.obs_noise_var = c.get_double("gen.obs_noise_var", 0.0);
  g.burn_in = c.get_size("gen.burn_in", g.burn_in);
  g.seed = c.get_u64("gen.seed", g.seed);
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return g;
}

model::ModelConfig model_config(const Config& c, std::size_t d_x) {
  model::ModelConfig m;
  m.d_x = d_x;
  m.d_z = c.require_size("model.d_z");
  m.tau = c.require_size("model.tau");
  try {
    m.decoder_mode = model::decoder_mode_from_string(c.get_string("model.decoder", "linear"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  m.decoder_hidden = c.get_sizes("model.decoder_hidden", m.decoder_hidden);
  m.embed_dim = c.get_size("model.embed_dim", m.embed_dim);
  // Nonlinear decoding pairs with a nonlinear encoder unless told otherwise.
  const std::vector<std::size_t> enc_default =
      m.decoder_mode == model::DecoderMode::nonlinear ? std::vector<std::size_t>{32, 32} : std::vector<std::size_t>{};
  m.encoder_hidden = c.get_sizes("model.encoder_hidden", enc_default);
  m.transition_hidden = c.get_sizes("model.transition_hidden", m.transition_hidden);
  m.transition_variance = c.get_double("model.transition_variance", m.transition_variance);
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return m;
}

optim::TrainConfig train_config(const Config& c) {
  optim::TrainConfig t;
  t.lambda_s = c.get_double("train.lambda_s", t.lambda_s);
  t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
  t.batch_size = c.get_size("train.batch_size", t.batch_size);
  t.mu_init = c.get_double("train.mu_init", t.mu_init);
  t.gamma_init = c.get_double("train.gamma_init", t.gamma_init);
  t.eta = c.get_double("train.eta", t.eta);
  t.delta = c.get_double("train.delta", t.delta);
  t.constraint_threshold = c.get_double("train.constraint_threshold", t.constraint_threshold);
  t.patience = c.get_size("train.patience", t.patience);
  t.eval_every = c.get_size("train.eval_every", t.eval_every);
  t.max_steps = c.get_size("train.max_steps", t.max_steps);
  t.seed = c.get_u64("train.seed", t.seed);
  t.split = c.get_double("train.split", t.split);
  t.temperature = c.get_double("train.temperature", t.temperature);
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

EvalOptions eval_options(const Config& c) {
  EvalOptions e;
  e.single_parent_threshold = c.get_double("eval.single_parent_threshold", e.single_parent_threshold);
  e.edge_threshold = c.get_double("eval.edge_threshold", e.edge_threshold);
  if (!(e.single_parent_threshold > 0.0 && e.single_parent_threshold <= 1.0)) {
    throw ConfigError("eval.single_parent_threshold must be in (0,1]");
  }
  if (!(e.edge_threshold > 0.0 && e.edge_threshold < 1.0)) throw ConfigError("eval.edge_threshold must be in (0,1)");
  return e;
}

BaselineOptions baseline_options(const Config& c) {
  BaselineOptions b;
  b.d_z = c.require_size("model.d_z");
  b.tau = c.get_size("model.tau", b.tau);
  b.alpha = c.get_double("baseline.alpha", b.alpha);
  b.varimax.tol = c.get_double("baseline.varimax_tol", b.varimax.tol);
  b.varimax.max_iter = c.get_size("baseline.varimax_max_iter", b.varimax.max_iter);
  b.varimax.gamma = c.get_double("baseline.varimax_gamma", b.varimax.gamma);
  if (b.d_z == 0 || b.tau == 0) throw ConfigError("model.d_z and model.tau must be positive");
  if (!(b.alpha > 0.0 && b.alpha < 1.0)) throw ConfigError("baseline.alpha must be in (0,1)");
  return b;
}

}  // namespace cdsd::cli
