#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnmc/made.hpp"
#include "qnmc/qsim.hpp"

namespace qnmc::pipeline {

inline constexpr int kSchemaVersion = 1;

enum class ExperimentKind { kSpectralGapSweep, kMagnetization, kAutocorrelation };

std::string to_string(ExperimentKind kind);

struct QaoaSection {
  int depth = 5;
  std::string angle_table;  // empty: bundled SK table
  bool ramp_fallback = true;
  double ramp_gamma_max = 0.64;
  double ramp_beta_max = -0.59;
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  int max_qubits = kDefaultEnumerationCap;
};

struct MadeSection {
  int hidden_layers = 2;
  int hidden_width_factor = 2;  // width = factor * n
  double learning_rate = 0.005;
  int batch_size = 8;
  int epochs = 30;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int train_size = 1000;
  int test_size = 250;
};

struct McmcSection {
  std::size_t steps = 100000;
  int chains = 10;
  std::size_t burn_in = 10000;
  std::size_t max_lag = 1000;
  std::size_t record_every = 100;  // thinning of the m-hat^2 curve output
  bool write_traces = false;
};

/// One experiment. Every stochastic component derives its seed from
/// master_seed; see seeding.hpp.
struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  ExperimentKind kind = ExperimentKind::kSpectralGapSweep;
  std::uint64_t master_seed = 0;
  std::vector<int> sizes;
  std::vector<double> betas;
  int instances = 1;
  std::vector<std::string> proposals;
  QaoaSection qaoa;
  MadeSection made;
  McmcSection mcmc;
  int workers = 1;
  std::string output_dir = "out";

  /// Default hyperparameters for the given experiment kind.
  static ExperimentConfig defaults(ExperimentKind kind);
  /// Parses and validates; unknown keys raise ValidationError with the field path.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;

  made::TrainConfig train_config(std::uint64_t seed) const;
};

inline const std::vector<std::string> kProposalNames = {"ssf", "uniform", "gns_optimized", "gns_fixed"};

/// Seeds for one instance of a run.
struct InstanceSeeds {
  std::uint64_t instance;
  std::uint64_t shots(const std::string& mode) const;
  std::uint64_t training(const std::string& mode) const;
  std::uint64_t chain(std::size_t beta_index, const std::string& proposal, int chain) const;
};

InstanceSeeds seeds_for(std::uint64_t master_seed, int n, int instance_index);

/// QAOA output for one instance and mode ("optimized" or "fixed_angle").
struct QaoaRun {
  qsim::QaoaParams params;
  double energy;
  std::vector<qsim::OptimizerStep> trace;
  made::BitDataset dataset;
};

QaoaRun run_qaoa_stage(const SpinGlassInstance& inst, const std::string& mode, const ExperimentConfig& cfg,
                       const InstanceSeeds& seeds);

/// Executes generate -> QAOA -> dataset -> MADE -> MCMC/analysis for every
/// instance, writes all artifacts under cfg.output_dir, and returns that path.
/// Completed instances recorded in the manifest are reused on re-runs.
std::string run_pipeline(const ExperimentConfig& cfg);

struct ReportResult {
  nlohmann::json summary;
  std::vector<std::string> warnings;
};

/// Aggregates an artifact directory into figure-ready tables and summary.json.
ReportResult report(const std::string& dir);

}  // namespace qnmc::pipeline
