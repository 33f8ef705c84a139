#include "cdsd/cli/commands.hpp"

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cdsd/baseline.hpp"
#include "cdsd/cli/report.hpp"
#include "cdsd/cli/selftest.hpp"
#include "cdsd/diff.hpp"
#include "cdsd/io.hpp"
#include "cdsd/optim.hpp"

namespace cdsd::cli {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io::IoError("cannot create '" + dir.string() + "': " + ec.message());
}

}  // namespace

Config load_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
  Config c;
  if (path) {
    if (!fs::exists(*path)) throw io::IoError("config file '" + path->string() + "' does not exist");
    c = Config::parse_file(*path);
  }
  c.apply_overrides(overrides);
  c.apply_environment();
  return c;
}

void cmd_generate(const Config& cfg, const fs::path& out_dir, std::ostream& log) {
  const synth::GenConfig g = gen_config(cfg);
  cfg.check_all_used();
  const synth::Generated data = synth::generate_dataset(g);
  io::write_dataset(out_dir, g, data);

  long edges = 0, self_edges = 0;
  for (const auto& G : data.truth.G) edges += static_cast<long>(G.sum());
  self_edges = static_cast<long>(data.truth.G.front().diagonal().sum());
  log << "generated T=" << g.T << " d_x=" << g.d_x << " d_z=" << g.d_z << " tau=" << g.tau << " edges=" << edges
      << " (off-diagonal " << edges - self_edges << ") spectral_radius=" << io::format_double(data.truth.spectral_radius)
      << " -> " << out_dir.string() << "\n";
}

void cmd_train(const Config& cfg, const fs::path& dataset_dir, const fs::path& out_dir, std::ostream& log,
               bool verbose) {
  const io::DatasetFiles data = io::read_dataset(dataset_dir);
  const model::ModelConfig mcfg = model_config(cfg, static_cast<std::size_t>(data.x.cols()));
  const optim::TrainConfig tcfg = train_config(cfg);
  const EvalOptions eopts = eval_options(cfg);
  cfg.check_all_used();

  ensure_dir(out_dir);
  std::ofstream diag(out_dir / "diagnostics.jsonl", std::ios::binary | std::ios::trunc);
  if (!diag) throw io::IoError("cannot write diagnostics to '" + out_dir.string() + "'");

  std::size_t records = 0;
  auto progress = [&](const optim::DiagnosticRecord& r, const model::ModelParams&) {
    diag << optim::to_json_line(r) << '\n';
    if (verbose && ++records % 100 == 0) {
      log << "step " << r.step << " heldout " << r.heldout_loss << " |h| " << r.h_norm << " mu " << r.mu
          << " stage " << r.stage << "\n";
    }
    return true;
  };
  const optim::TrainResult result = optim::train(optim::Series{Tensor::from_eigen(data.x)}, mcfg, tcfg, progress);
  diag.close();
  if (!diag) throw io::IoError("write to diagnostics.jsonl failed");

  io::write_model(out_dir / "model.json", mcfg, result.params);
  Report report = evaluate_model(mcfg, result.params, data.x, data.truth, eopts);
  report.training = TrainingSummary{result.diagnostics.steps, result.diagnostics.converged, result.alm.stage,
                                    result.alm.mu};
  if (!result.diagnostics.converged) {
    report.eval.notes.emplace_back("stopped at max_steps before the constraint threshold was met");
  }
  io::write_text(out_dir / "report.json", report_json(report));

  log << "trained " << result.diagnostics.steps << " steps, converged=" << (result.diagnostics.converged ? 1 : 0)
      << " |h|=" << io::format_double(report.eval.orthogonality_residual);
  if (report.eval.mcc) log << " mcc=" << *report.eval.mcc;
  if (report.eval.shd) log << " shd=" << report.eval.shd->total;
  log << " -> " << out_dir.string() << "\n";
}

void cmd_eval(const Config& cfg, const fs::path& model_file, const fs::path& dataset_dir, const fs::path& report_path,
              std::ostream& log) {
  const EvalOptions eopts = eval_options(cfg);
  cfg.check_all_used();
  const io::ModelFile m = io::read_model(model_file);
  const io::DatasetFiles data = io::read_dataset(dataset_dir);
  const Report report = evaluate_model(m.config, m.params, data.x, data.truth, eopts);
  io::write_text(report_path, report_json(report));
  log << "evaluated " << model_file.string();
  if (report.eval.mcc) log << " mcc=" << *report.eval.mcc;
  if (report.eval.shd) log << " shd=" << report.eval.shd->total;
  log << " -> " << report_path.string() << "\n";
}

void cmd_baseline(const Config& cfg, const fs::path& dataset_dir, const fs::path& out_dir, std::ostream& log) {
  const BaselineOptions bopts = baseline_options(cfg);
  const EvalOptions eopts = eval_options(cfg);
  cfg.check_all_used();
  const io::DatasetFiles data = io::read_dataset(dataset_dir);
  ensure_dir(out_dir);
  for (auto variant :
       {baseline::Variant::pca, baseline::Variant::pca_varimax, baseline::Variant::pca_varimax_plus}) {
    const baseline::FactorSolution f = baseline::fit(data.x, bopts.d_z, variant, bopts.varimax);
    const baseline::LaggedDiscovery g = baseline::lagged_linear_discovery(f.latents, bopts.tau, bopts.alpha);
    const Report report = evaluate_factors(variant, f, g, data.truth, eopts);
    const fs::path path = out_dir / ("report_" + report.method + ".json");
    io::write_text(path, report_json(report));
    log << report.method;
    if (report.eval.mcc) log << " mcc=" << *report.eval.mcc;
    if (report.eval.w_abs_error) log << " w_abs_error=" << *report.eval.w_abs_error;
    if (report.eval.shd) log << " shd=" << report.eval.shd->total;
    log << " -> " << path.string() << "\n";
  }
}

int report_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const optim::DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const io::IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learn latent factors and their lagged causal graph from time series"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  fs::path out_dir, dataset_dir, model_file, report_path;
  bool quiet = false;
  SelftestOptions selftest;

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key=value config file");
    sub->allow_extras();
    sub->footer("Any config key can be overridden with --section.key=value.");
  };

  CLI::App* gen = app.add_subcommand("generate", "Generate a synthetic dataset with ground truth");
  gen->add_option("out_dir", out_dir, "Output directory")->required();
  with_config(gen);

  CLI::App* train = app.add_subcommand("train", "Fit the model to a dataset");
  train->add_option("dataset_dir", dataset_dir, "Dataset directory")->required();
  train->add_option("out_dir", out_dir, "Output directory")->required();
  train->add_flag("-q,--quiet", quiet, "Suppress progress lines");
  with_config(train);

  CLI::App* eval = app.add_subcommand("eval", "Score a trained model against a dataset");
  eval->add_option("model_file", model_file, "model.json")->required();
  eval->add_option("dataset_dir", dataset_dir, "Dataset directory")->required();
  eval->add_option("-o,--out", report_path, "Report path (default: report.json next to the model)");
  with_config(eval);

  CLI::App* base = app.add_subcommand("baseline", "Run PCA / Varimax baselines");
  base->add_option("dataset_dir", dataset_dir, "Dataset directory")->required();
  base->add_option("out_dir", out_dir, "Output directory")->required();
  with_config(base);

  CLI::App* self = app.add_subcommand("selftest", "Run numerical self-checks");
  self->add_flag("--inject-gradient-bug", selftest.inject_gradient_bug)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const auto cfg = [&](CLI::App* sub) {
      return load_config(config_path ? std::optional<fs::path>(*config_path) : std::nullopt, sub->remaining());
    };
    if (gen->parsed()) {
      cmd_generate(cfg(gen), out_dir, out);
    } else if (train->parsed()) {
      cmd_train(cfg(train), dataset_dir, out_dir, out, !quiet);
    } else if (eval->parsed()) {
      if (report_path.empty()) report_path = model_file.parent_path() / "report.json";
      cmd_eval(cfg(eval), model_file, dataset_dir, report_path, out);
    } else if (base->parsed()) {
      cmd_baseline(cfg(base), dataset_dir, out_dir, out);
    } else if (self->parsed()) {
      return cmd_selftest(selftest, out);
    }
  } catch (...) {
    return report_exception(err);
  }
  return kOk;
}

}  // namespace cdsd::cli
