#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdsd/baseline.hpp"
#include "cdsd/cli/config.hpp"
#include "cdsd/metrics.hpp"
#include "cdsd/model.hpp"
#include "cdsd/optim.hpp"
#include "cdsd/synth.hpp"

namespace cdsd::cli {

struct TrainingSummary {
  std::size_t steps = 0;
  bool converged = false;
  std::size_t stages = 0;
  double final_mu = 0.0;
};

struct Report {
  std::string method;
  std::size_t d_x = 0;
  std::size_t d_z = 0;
  std::size_t tau = 0;
  metrics::EvalReport eval;
  double single_parent_threshold = metrics::kSingleParentThreshold;
  std::vector<long> edges_per_lag;
  std::optional<TrainingSummary> training;
};

/// Learned graphs are binarized at opts.edge_threshold; latents are encoder
/// means over the whole series.
Report evaluate_model(const model::ModelConfig& cfg, const model::ModelParams& params, const Eigen::MatrixXd& x,
                      const std::optional<synth::GroundTruth>& truth, const EvalOptions& opts);

Report evaluate_factors(baseline::Variant variant, const baseline::FactorSolution& f,
                        const baseline::LaggedDiscovery& graphs, const std::optional<synth::GroundTruth>& truth,
                        const EvalOptions& opts);

std::string report_json(const Report& r);

}  // namespace cdsd::cli
