#include "qnmc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "qnmc/analysis.hpp"
#include "qnmc/csv.hpp"
#include "qnmc/errors.hpp"
#include "qnmc/mcmc.hpp"
#include "qnmc/seeding.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace qnmc::pipeline {

// --- config --------------------------------------------------------------

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kSpectralGapSweep: return "spectral_gap_sweep";
    case ExperimentKind::kMagnetization: return "magnetization";
    case ExperimentKind::kAutocorrelation: return "autocorrelation";
  }
  return "unknown";
}

namespace {

ExperimentKind parse_kind(const std::string& s) {
  if (s == "spectral_gap_sweep") return ExperimentKind::kSpectralGapSweep;
  if (s == "magnetization") return ExperimentKind::kMagnetization;
  if (s == "autocorrelation") return ExperimentKind::kAutocorrelation;
  throw ValidationError("experiment", "unknown experiment kind '" + s +
                                          "' (expected spectral_gap_sweep, magnetization, autocorrelation)");
}

std::string join(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ValidationError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ValidationError(join(path, key), "unknown key");
  }
}

template <class T>
void read(const json& obj, const std::string& path, const char* key, T& dst) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    dst = it->template get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(join(path, key), std::string("wrong type: ") + e.what());
  }
}

bool is_chain_experiment(ExperimentKind k) { return k != ExperimentKind::kSpectralGapSweep; }

bool wants(const ExperimentConfig& cfg, const std::string& proposal) {
  return std::find(cfg.proposals.begin(), cfg.proposals.end(), proposal) != cfg.proposals.end();
}

std::string mode_of(const std::string& proposal) {
  return proposal == "gns_optimized" ? "optimized" : "fixed_angle";
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.proposals = kProposalNames;
  if (kind == ExperimentKind::kSpectralGapSweep) {
    for (int n = 3; n <= 12; ++n) c.sizes.push_back(n);
    c.betas = {10.0};
    c.instances = 100;
    c.made.train_size = 1000;
    c.made.test_size = 250;
  } else {
    c.sizes = {25};
    c.betas = {5.0};
    c.instances = 1;
    c.made.train_size = 8000;
    c.made.test_size = 2000;
    c.qaoa.max_qubits = 25;
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j, "", {"schema_version", "experiment", "master_seed", "sizes", "betas", "instances", "proposals",
                     "qaoa", "made", "mcmc", "workers", "output_dir"});
  if (!j.contains("experiment")) throw ValidationError("experiment", "required");
  if (!j.at("experiment").is_string()) throw ValidationError("experiment", "expected a string");
  ExperimentConfig c = defaults(parse_kind(j.at("experiment").get<std::string>()));

  read(j, "", "schema_version", c.schema_version);
  read(j, "", "master_seed", c.master_seed);
  read(j, "", "sizes", c.sizes);
  read(j, "", "betas", c.betas);
  read(j, "", "instances", c.instances);
  read(j, "", "proposals", c.proposals);
  read(j, "", "workers", c.workers);
  read(j, "", "output_dir", c.output_dir);

  if (auto it = j.find("qaoa"); it != j.end()) {
    const std::string p = "qaoa";
    check_keys(*it, p, {"depth", "angle_table", "ramp_fallback", "ramp_gamma_max", "ramp_beta_max",
                        "max_iterations", "gradient_tolerance", "max_qubits"});
    read(*it, p, "depth", c.qaoa.depth);
    read(*it, p, "angle_table", c.qaoa.angle_table);
    read(*it, p, "ramp_fallback", c.qaoa.ramp_fallback);
    read(*it, p, "ramp_gamma_max", c.qaoa.ramp_gamma_max);
    read(*it, p, "ramp_beta_max", c.qaoa.ramp_beta_max);
    read(*it, p, "max_iterations", c.qaoa.max_iterations);
    read(*it, p, "gradient_tolerance", c.qaoa.gradient_tolerance);
    read(*it, p, "max_qubits", c.qaoa.max_qubits);
  }
  if (auto it = j.find("made"); it != j.end()) {
    const std::string p = "made";
    check_keys(*it, p, {"hidden_layers", "hidden_width_factor", "learning_rate", "batch_size", "epochs",
                        "adam_beta1", "adam_beta2", "adam_epsilon", "train_size", "test_size"});
    read(*it, p, "hidden_layers", c.made.hidden_layers);
    read(*it, p, "hidden_width_factor", c.made.hidden_width_factor);
    read(*it, p, "learning_rate", c.made.learning_rate);
    read(*it, p, "batch_size", c.made.batch_size);
    read(*it, p, "epochs", c.made.epochs);
    read(*it, p, "adam_beta1", c.made.adam_beta1);
    read(*it, p, "adam_beta2", c.made.adam_beta2);
    read(*it, p, "adam_epsilon", c.made.adam_epsilon);
    read(*it, p, "train_size", c.made.train_size);
    read(*it, p, "test_size", c.made.test_size);
  }
  if (auto it = j.find("mcmc"); it != j.end()) {
    const std::string p = "mcmc";
    check_keys(*it, p, {"steps", "chains", "burn_in", "max_lag", "record_every", "write_traces"});
    read(*it, p, "steps", c.mcmc.steps);
    read(*it, p, "chains", c.mcmc.chains);
    read(*it, p, "burn_in", c.mcmc.burn_in);
    read(*it, p, "max_lag", c.mcmc.max_lag);
    read(*it, p, "record_every", c.mcmc.record_every);
    read(*it, p, "write_traces", c.mcmc.write_traces);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("config not found: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  return {{"schema_version", schema_version},
          {"experiment", to_string(kind)},
          {"master_seed", master_seed},
          {"sizes", sizes},
          {"betas", betas},
          {"instances", instances},
          {"proposals", proposals},
          {"qaoa",
           {{"depth", qaoa.depth},
            {"angle_table", qaoa.angle_table},
            {"ramp_fallback", qaoa.ramp_fallback},
            {"ramp_gamma_max", qaoa.ramp_gamma_max},
            {"ramp_beta_max", qaoa.ramp_beta_max},
            {"max_iterations", qaoa.max_iterations},
            {"gradient_tolerance", qaoa.gradient_tolerance},
            {"max_qubits", qaoa.max_qubits}}},
          {"made",
           {{"hidden_layers", made.hidden_layers},
            {"hidden_width_factor", made.hidden_width_factor},
            {"learning_rate", made.learning_rate},
            {"batch_size", made.batch_size},
            {"epochs", made.epochs},
            {"adam_beta1", made.adam_beta1},
            {"adam_beta2", made.adam_beta2},
            {"adam_epsilon", made.adam_epsilon},
            {"train_size", made.train_size},
            {"test_size", made.test_size}}},
          {"mcmc",
           {{"steps", mcmc.steps},
            {"chains", mcmc.chains},
            {"burn_in", mcmc.burn_in},
            {"max_lag", mcmc.max_lag},
            {"record_every", mcmc.record_every},
            {"write_traces", mcmc.write_traces}}},
          {"workers", workers},
          {"output_dir", output_dir}};
}

void ExperimentConfig::validate() const {
  if (schema_version != kSchemaVersion)
    throw ValidationError("schema_version", "unsupported version " + std::to_string(schema_version));
  if (instances < 0) throw ValidationError("instances", "must be >= 0");
  if (workers < 1) throw ValidationError("workers", "must be >= 1");
  if (output_dir.empty()) throw ValidationError("output_dir", "must not be empty");
  if (proposals.empty()) throw ValidationError("proposals", "must list at least one proposal");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto& p = proposals[i];
    const std::string path = "proposals[" + std::to_string(i) + "]";
    if (std::find(kProposalNames.begin(), kProposalNames.end(), p) == kProposalNames.end())
      throw ValidationError(path, "unknown proposal '" + p + "'");
    if (!seen.insert(p).second) throw ValidationError(path, "duplicate proposal '" + p + "'");
  }
  const bool needs_qaoa = wants(*this, "gns_optimized") || wants(*this, "gns_fixed");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const int n = sizes[i];
    const std::string path = "sizes[" + std::to_string(i) + "]";
    if (n < 1 || n > 63) throw ValidationError(path, "spin count must be in [1, 63]");
    if (kind == ExperimentKind::kSpectralGapSweep && n > analysis::kDenseMatrixCap)
      throw ValidationError(path, "spectral sweeps are limited to n <= " + std::to_string(analysis::kDenseMatrixCap));
    if (needs_qaoa && n > qaoa.max_qubits)
      throw ValidationError(path, "n exceeds qaoa.max_qubits (" + std::to_string(qaoa.max_qubits) + ")");
  }
  for (std::size_t i = 0; i < betas.size(); ++i)
    if (!(betas[i] >= 0.0) || !std::isfinite(betas[i]))
      throw ValidationError("betas[" + std::to_string(i) + "]", "inverse temperature must be finite and >= 0");
  if (qaoa.depth < 1) throw ValidationError("qaoa.depth", "must be >= 1");
  if (qaoa.max_iterations < 0) throw ValidationError("qaoa.max_iterations", "must be >= 0");
  if (!(qaoa.gradient_tolerance > 0.0)) throw ValidationError("qaoa.gradient_tolerance", "must be > 0");
  if (qaoa.max_qubits < 1 || qaoa.max_qubits > 30) throw ValidationError("qaoa.max_qubits", "must be in [1, 30]");
  if (made.hidden_layers < 1) throw ValidationError("made.hidden_layers", "must be >= 1");
  if (made.hidden_width_factor < 1) throw ValidationError("made.hidden_width_factor", "must be >= 1");
  if (!(made.learning_rate > 0.0)) throw ValidationError("made.learning_rate", "must be > 0");
  if (made.batch_size < 1) throw ValidationError("made.batch_size", "must be >= 1");
  if (made.epochs < 1) throw ValidationError("made.epochs", "must be >= 1");
  if (!(made.adam_beta1 >= 0.0 && made.adam_beta1 < 1.0)) throw ValidationError("made.adam_beta1", "must be in [0, 1)");
  if (!(made.adam_beta2 >= 0.0 && made.adam_beta2 < 1.0)) throw ValidationError("made.adam_beta2", "must be in [0, 1)");
  if (!(made.adam_epsilon > 0.0)) throw ValidationError("made.adam_epsilon", "must be > 0");
  if (made.train_size < 1) throw ValidationError("made.train_size", "must be >= 1");
  if (made.test_size < 0) throw ValidationError("made.test_size", "must be >= 0");
  if (is_chain_experiment(kind)) {
    if (mcmc.steps < 1) throw ValidationError("mcmc.steps", "must be >= 1");
    if (mcmc.chains < 1) throw ValidationError("mcmc.chains", "must be >= 1");
    if (mcmc.burn_in > mcmc.steps) throw ValidationError("mcmc.burn_in", "must not exceed mcmc.steps");
    if (mcmc.max_lag >= mcmc.steps + 1 - mcmc.burn_in)
      throw ValidationError("mcmc.max_lag", "must be shorter than the post-burn-in chain");
    if (mcmc.record_every < 1) throw ValidationError("mcmc.record_every", "must be >= 1");
  }
}

made::TrainConfig ExperimentConfig::train_config(std::uint64_t seed) const {
  made::TrainConfig t;
  t.learning_rate = made.learning_rate;
  t.batch_size = made.batch_size;
  t.epochs = made.epochs;
  t.adam_beta1 = made.adam_beta1;
  t.adam_beta2 = made.adam_beta2;
  t.adam_epsilon = made.adam_epsilon;
  t.test_fraction = static_cast<double>(made.test_size) / static_cast<double>(made.train_size + made.test_size);
  t.seed = seed;
  return t;
}

// --- seeds ---------------------------------------------------------------

std::uint64_t InstanceSeeds::shots(const std::string& mode) const {
  return derive_seed(instance, "qaoa-shots", {hash_tag(mode)});
}

std::uint64_t InstanceSeeds::training(const std::string& mode) const {
  return derive_seed(instance, "made-train", {hash_tag(mode)});
}

std::uint64_t InstanceSeeds::chain(std::size_t beta_index, const std::string& proposal, int chain) const {
  return derive_seed(instance, "chain", {beta_index, hash_tag(proposal), static_cast<std::uint64_t>(chain)});
}

InstanceSeeds seeds_for(std::uint64_t master_seed, int n, int instance_index) {
  return {derive_seed(master_seed, "instance",
                      {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(instance_index)})};
}

// --- stages --------------------------------------------------------------

QaoaRun run_qaoa_stage(const SpinGlassInstance& inst, const std::string& mode, const ExperimentConfig& cfg,
                       const InstanceSeeds& seeds) {
  if (mode != "optimized" && mode != "fixed_angle") throw InvalidArgument("unknown QAOA mode '" + mode + "'");
  const auto table = qsim::AngleTable::load(cfg.qaoa.angle_table.empty() ? qsim::default_angle_table_path()
                                                                          : cfg.qaoa.angle_table);
  std::optional<qsim::RampFallback> fallback;
  if (cfg.qaoa.ramp_fallback) fallback = qsim::RampFallback{cfg.qaoa.ramp_gamma_max, cfg.qaoa.ramp_beta_max};
  const auto table_params = qsim::fixed_angles(cfg.qaoa.depth, table, fallback);

  QaoaRun run;
  run.params = qsim::adapt_to_instance(table_params, table.gamma_scaling, inst.size());
  const auto diag = qsim::build_cost_diagonal(inst, cfg.qaoa.max_qubits);
  if (mode == "optimized") {
    qsim::OptimizerConfig oc;
    oc.max_iterations = cfg.qaoa.max_iterations;
    oc.gradient_tolerance = cfg.qaoa.gradient_tolerance;
    auto res = qsim::optimize_params(diag, run.params, oc);
    run.params = std::move(res.params);
    run.trace = std::move(res.trace);
  }
  const auto state = qsim::run_qaoa(diag, run.params);
  run.energy = qsim::energy_expectation(state, diag);
  const auto shots = qsim::sample_bitstrings(
      state, static_cast<std::size_t>(cfg.made.train_size + cfg.made.test_size), seeds.shots(mode));
  run.dataset.dim = inst.size();
  for (const auto& s : shots) run.dataset.rows.push_back(s.index());
  return run;
}

namespace {

std::string instance_key(int n, int idx) { return "n" + std::to_string(n) + "_i" + std::to_string(idx); }

struct Task {
  int n;
  int index;
};

const std::vector<std::string> kGapHeader = {"master_seed", "instance_seed", "chain_seed", "n", "beta",
                                             "instance", "proposal", "gap", "lambda2_modulus"};
const std::vector<std::string> kChainHeader = {"master_seed", "instance_seed", "chain_seed", "n", "beta",
                                               "instance", "proposal", "chain", "acceptance_rate", "mean_m",
                                               "mean_m_post_burn_in", "mhat2_final", "positive_count",
                                               "negative_count", "zero_count"};
const std::vector<std::string> kMhatHeader = {"master_seed", "instance_seed", "chain_seed", "n", "beta",
                                              "instance", "proposal", "step", "mhat2_mean", "mhat2_std"};
const std::vector<std::string> kHistHeader = {"master_seed", "instance_seed", "chain_seed", "n", "beta",
                                              "instance", "proposal", "chain", "m_value", "count"};
const std::vector<std::string> kAcfHeader = {"master_seed", "instance_seed", "chain_seed", "n", "beta",
                                             "instance", "proposal", "chain", "tau", "c"};
const std::vector<std::string> kPooledAcfHeader = {"master_seed", "instance_seed", "chain_seed", "n", "beta",
                                                   "instance", "proposal", "tau", "c_pooled"};
const std::vector<std::string> kRefHeader = {"master_seed", "instance_seed", "chain_seed", "n", "beta",
                                             "instance", "exact_mean_m", "note"};
const std::vector<std::string> kModelHeader = {"master_seed", "instance_seed", "chain_seed", "n", "instance",
                                               "mode", "qaoa_energy", "final_train_loss", "final_test_loss",
                                               "loss_increased"};

struct RowPrefix {
  std::uint64_t master, instance;
  int n;
  void put(CsvWriter& w, const std::string& chain_seed, double beta, int index) const {
    w << static_cast<unsigned long long>(master) << static_cast<unsigned long long>(instance) << chain_seed << n
      << beta << index;
  }
};

void process_instance(const ExperimentConfig& cfg, const Task& task, const fs::path& root) {
  const int n = task.n;
  const auto key = instance_key(n, task.index);
  const auto seeds = seeds_for(cfg.master_seed, n, task.index);
  const fs::path part = root / "results" / key;
  fs::create_directories(part);
  const RowPrefix pre{cfg.master_seed, seeds.instance, n};

  const auto inst = generate_instance(n, seeds.instance);
  inst.save((root / "instances" / (key + ".json")).string());

  std::map<std::string, mcmc::Proposal> proposals;
  {
    CsvWriter models((part / "models.csv").string(), kModelHeader);
    for (const auto& name : cfg.proposals) {
      if (name == "ssf") {
        proposals.emplace(name, mcmc::SsfProposal{});
        continue;
      }
      if (name == "uniform") {
        proposals.emplace(name, mcmc::UniformProposal{});
        continue;
      }
      const auto mode = mode_of(name);
      const auto stem = key + "_" + mode;
      auto run = run_qaoa_stage(inst, mode, cfg, seeds);
      json angles = {{"n", n}, {"instance_seed", seeds.instance}, {"mode", mode}, {"params", run.params.to_json()},
                     {"energy", run.energy}};
      std::ofstream((root / "qaoa" / (stem + "_angles.json")).string()) << angles.dump(1) << '\n';
      if (!run.trace.empty()) qsim::write_trace_csv((root / "qaoa" / (stem + "_trace.csv")).string(), run.trace);
      run.dataset.save((root / "datasets" / (stem + ".txt")).string());

      const auto arch = made::MadeArchitecture::standard(n, cfg.made.hidden_layers, cfg.made.hidden_width_factor * n);
      auto trained = made::train(arch, run.dataset, cfg.train_config(seeds.training(mode)));
      trained.model.save((root / "models" / (stem + ".json")).string());
      made::write_loss_csv((root / "models" / (stem + "_loss.csv")).string(), trained.losses);
      models << static_cast<unsigned long long>(cfg.master_seed) << static_cast<unsigned long long>(seeds.instance)
             << "none" << n << task.index << mode << run.energy << trained.losses.back().train_loss
             << trained.losses.back().test_loss << (trained.loss_increased ? "true" : "false");
      models.end_row();
      proposals.emplace(name, mcmc::GnsProposal{std::make_shared<const made::MadeModel>(std::move(trained.model))});
    }
  }

  if (cfg.kind == ExperimentKind::kSpectralGapSweep) {
    CsvWriter gaps((part / "gaps.csv").string(), kGapHeader);
    for (double beta : cfg.betas) {
      const BoltzmannTarget target(inst, beta);
      const auto part_fn = exact_partition(target);
      for (const auto& name : cfg.proposals) {
        const auto tm = analysis::build_transition_matrix(target, proposals.at(name));
        const auto rep = analysis::spectral_gap(tm, part_fn.log_probabilities);
        pre.put(gaps, "none", beta, task.index);
        gaps << name << rep.gap << rep.lambda2_modulus;
        gaps.end_row();
      }
    }
    return;
  }

  CsvWriter chains((part / "chains.csv").string(), kChainHeader);
  CsvWriter mhat((part / "magnetization.csv").string(), kMhatHeader);
  CsvWriter hist((part / "histogram.csv").string(), kHistHeader);
  CsvWriter acf((part / "autocorrelation.csv").string(), kAcfHeader);
  CsvWriter pooled_acf((part / "autocorrelation_pooled.csv").string(), kPooledAcfHeader);
  CsvWriter ref((part / "reference.csv").string(), kRefHeader);

  for (std::size_t bi = 0; bi < cfg.betas.size(); ++bi) {
    const double beta = cfg.betas[bi];
    const BoltzmannTarget target(inst, beta);
    pre.put(ref, "none", beta, task.index);
    if (n <= kDefaultEnumerationCap)
      ref << analysis::exact_mean_magnetization(target) << "exact enumeration";
    else
      ref << "nan" << "no exact oracle";
    ref.end_row();

    for (const auto& name : cfg.proposals) {
      std::vector<analysis::MagnetizationSeries> series;
      for (int c = 0; c < cfg.mcmc.chains; ++c) {
        const auto chain_seed = seeds.chain(bi, name, c);
        const auto chain = mcmc::run_chain(target, proposals.at(name), cfg.mcmc.steps, chain_seed);
        const auto cs = std::to_string(chain_seed);
        if (cfg.mcmc.write_traces) {
          mcmc::write_chain_csv(
              (root / "chains" / (key + "_b" + std::to_string(bi) + "_" + name + "_c" + std::to_string(c) + ".csv"))
                  .string(),
              chain);
        }
        auto s = analysis::magnetization_series(chain, 0);
        double post = 0.0;
        std::uint64_t pos = 0, neg = 0, zero = 0;
        for (std::size_t t = cfg.mcmc.burn_in; t < s.values.size(); ++t) {
          post += s.values[t];
          (s.values[t] > 0 ? pos : s.values[t] < 0 ? neg : zero)++;
        }
        post /= static_cast<double>(s.values.size() - cfg.mcmc.burn_in);
        pre.put(chains, cs, beta, task.index);
        chains << name << c << chain.acceptance_rate() << s.running_mean.back() << post << s.running_mhat2.back()
               << static_cast<unsigned long long>(pos) << static_cast<unsigned long long>(neg)
               << static_cast<unsigned long long>(zero);
        chains.end_row();

        for (const auto& bin : analysis::magnetization_histogram(chain, cfg.mcmc.burn_in)) {
          pre.put(hist, cs, beta, task.index);
          hist << name << c << bin.m_value << static_cast<unsigned long long>(bin.count);
          hist.end_row();
        }

        std::vector<double> ac;
        try {
          ac = analysis::autocorrelation(s.values, cfg.mcmc.burn_in, cfg.mcmc.max_lag);
        } catch (const UndefinedAutocorrelation&) {
          ac.assign(cfg.mcmc.max_lag + 1, std::nan(""));  // frozen chain
        }
        for (std::size_t tau = 0; tau < ac.size(); ++tau) {
          pre.put(acf, cs, beta, task.index);
          acf << name << c << static_cast<unsigned long long>(tau) << ac[tau];
          acf.end_row();
        }
        series.push_back(std::move(s));
      }
      std::vector<std::vector<double>> values;
      for (const auto& s : series) values.push_back(s.values);
      std::vector<double> pc;
      try {
        pc = analysis::pooled_autocorrelation(values, cfg.mcmc.burn_in, cfg.mcmc.max_lag);
      } catch (const UndefinedAutocorrelation&) {
        pc.assign(cfg.mcmc.max_lag + 1, std::nan(""));
      }
      for (std::size_t tau = 0; tau < pc.size(); ++tau) {
        pre.put(pooled_acf, "all", beta, task.index);
        pooled_acf << name << static_cast<unsigned long long>(tau) << pc[tau];
        pooled_acf.end_row();
      }
      const auto agg = analysis::aggregate_mhat2(series);
      for (std::size_t t = 0; t < agg.mean.size(); ++t) {
        if ((t + 1) % cfg.mcmc.record_every != 0 && t + 1 != agg.mean.size()) continue;
        pre.put(mhat, "all", beta, task.index);
        mhat << name << static_cast<unsigned long long>(t + 1) << agg.mean[t] << agg.stddev[t];
        mhat.end_row();
      }
    }
  }
}

struct Manifest {
  json config;
  std::set<std::string> completed;
  std::string status;

  json to_json() const {
    return {{"schema_version", kSchemaVersion},
            {"config", config},
            {"completed", std::vector<std::string>(completed.begin(), completed.end())},
            {"status", status}};
  }
};

json config_identity(const ExperimentConfig& cfg) {
  json j = cfg.to_json();
  j.erase("workers");
  j.erase("output_dir");
  return j;
}

void write_manifest(const fs::path& root, const Manifest& m) {
  const auto tmp = root / "manifest.json.tmp";
  std::ofstream(tmp.string()) << m.to_json().dump(1) << '\n';
  fs::rename(tmp, root / "manifest.json");
}

void merge(const fs::path& root, const std::vector<Task>& tasks, const std::string& file,
           const std::vector<std::string>& header) {
  std::ofstream out((root / file).string());
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& t : tasks) {
    std::ifstream in((root / "results" / instance_key(t.n, t.index) / file).string());
    if (!in) continue;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line))
      if (!line.empty()) out << line << '\n';
  }
}

}  // namespace

std::string run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path root(cfg.output_dir);
  for (const char* sub : {"instances", "qaoa", "datasets", "models", "results", "chains"})
    fs::create_directories(root / sub);

  Manifest manifest{config_identity(cfg), {}, "running"};
  if (std::ifstream in((root / "manifest.json").string()); in) {
    try {
      const auto old = json::parse(in);
      if (old.at("config") == manifest.config)
        for (const auto& k : old.at("completed")) manifest.completed.insert(k.get<std::string>());
    } catch (const json::exception&) {
      // unreadable manifest: start over
    }
  }
  const json cfg_json = cfg.to_json();
  std::ofstream((root / "config.json").string()) << config_identity(cfg).dump(1) << '\n';

  std::vector<Task> tasks;
  for (int n : cfg.sizes)
    for (int i = 0; i < cfg.instances; ++i) tasks.push_back({n, i});
  std::sort(tasks.begin(), tasks.end(), [](const Task& a, const Task& b) {
    return a.n != b.n ? a.n < b.n : a.index < b.index;
  });
  write_manifest(root, manifest);

  std::vector<Task> todo;
  for (const auto& t : tasks)
    if (!manifest.completed.count(instance_key(t.n, t.index))) todo.push_back(t);

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      try {
        process_instance(cfg, todo[i], root);
        std::lock_guard lock(mu);
        manifest.completed.insert(instance_key(todo[i].n, todo[i].index));
        write_manifest(root, manifest);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(cfg.workers, static_cast<int>(todo.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) {
    manifest.status = "failed";
    write_manifest(root, manifest);
    std::rethrow_exception(failure);
  }

  merge(root, tasks, "models.csv", kModelHeader);
  if (cfg.kind == ExperimentKind::kSpectralGapSweep) {
    merge(root, tasks, "gaps.csv", kGapHeader);
    fs::rename(root / "gaps.csv", root / "spectral_gaps.csv");
  } else {
    merge(root, tasks, "chains.csv", kChainHeader);
    merge(root, tasks, "magnetization.csv", kMhatHeader);
    merge(root, tasks, "histogram.csv", kHistHeader);
    merge(root, tasks, "autocorrelation.csv", kAcfHeader);
    merge(root, tasks, "autocorrelation_pooled.csv", kPooledAcfHeader);
    merge(root, tasks, "reference.csv", kRefHeader);
  }
  manifest.status = "complete";
  write_manifest(root, manifest);
  (void)cfg_json;
  return root.string();
}

// --- report --------------------------------------------------------------

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void copy_artifact(const fs::path& from, const fs::path& to) {
  fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

}  // namespace

ReportResult report(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "manifest.json")) throw NotFoundError("not an artifact directory (missing manifest.json): " + dir);
  json manifest;
  {
    std::ifstream in((root / "manifest.json").string());
    manifest = json::parse(in);
  }
  const std::string kind = manifest.at("config").at("experiment").get<std::string>();
  const bool spectral = kind == "spectral_gap_sweep";

  std::vector<std::string> required = spectral ? std::vector<std::string>{"spectral_gaps.csv"}
                                               : std::vector<std::string>{"chains.csv", "magnetization.csv",
                                                                          "histogram.csv", "autocorrelation.csv",
                                                                          "autocorrelation_pooled.csv", "reference.csv"};
  std::vector<std::string> missing;
  for (const auto& f : required)
    if (!fs::exists(root / f)) missing.push_back(f);
  if (manifest.value("status", std::string()) != "complete") missing.push_back("manifest status 'complete'");
  if (!missing.empty()) {
    std::string msg = "missing artifacts in " + dir + ":";
    for (const auto& m : missing) msg += " " + m;
    throw NotFoundError(msg);
  }

  ReportResult result;
  json summary = {{"experiment", kind}, {"master_seed", manifest.at("config").at("master_seed")}};

  if (spectral) {
    const auto gaps = CsvTable::read((root / "spectral_gaps.csv").string());
    if (gaps.rows.empty()) result.warnings.push_back("empty sweep: spectral_gaps.csv has no rows");

    // (beta, n, proposal) -> gaps ; (beta, n, instance) -> proposal -> gap
    std::map<std::tuple<double, int, std::string>, std::vector<double>> groups;
    std::map<std::tuple<double, int, int>, std::map<std::string, std::pair<double, std::string>>> per_instance;
    for (std::size_t r = 0; r < gaps.rows.size(); ++r) {
      const double beta = gaps.number(r, "beta");
      const int n = static_cast<int>(gaps.number(r, "n"));
      const int inst = static_cast<int>(gaps.number(r, "instance"));
      const auto& prop = gaps.at(r, "proposal");
      const double g = gaps.number(r, "gap");
      groups[{beta, n, prop}].push_back(g);
      per_instance[{beta, n, inst}][prop] = {g, gaps.at(r, "instance_seed")};
    }

    double fig4_beta = -1.0;
    for (const auto& [k, _] : groups) fig4_beta = std::max(fig4_beta, std::get<0>(k));
    if (std::any_of(groups.begin(), groups.end(), [](const auto& kv) { return std::get<0>(kv.first) == 10.0; }))
      fig4_beta = 10.0;

    CsvWriter fig8((root / "fig8_gap_vs_n_by_beta.csv").string(),
                   {"beta", "n", "proposal", "instances", "mean_gap", "mean_log10_gap", "median_gap"});
    CsvWriter fig4((root / "fig4_gap_vs_n.csv").string(),
                   {"beta", "n", "proposal", "instances", "mean_gap", "mean_log10_gap", "median_gap"});
    json medians = json::array();
    for (const auto& [k, v] : groups) {
      const auto& [beta, n, prop] = k;
      std::vector<double> logs;
      for (double g : v) logs.push_back(std::log10(g));
      for (CsvWriter* w : {&fig8, &fig4}) {
        if (w == &fig4 && beta != fig4_beta) continue;
        *w << beta << n << prop << static_cast<unsigned long>(v.size()) << mean(v) << mean(logs) << median(v);
        w->end_row();
      }
      medians.push_back({{"beta", beta}, {"n", n}, {"proposal", prop}, {"median_gap", median(v)},
                         {"mean_gap", mean(v)}, {"mean_log10_gap", mean(logs)}});
    }
    summary["gap_statistics"] = medians;

    CsvWriter ratios((root / "gap_ratios.csv").string(),
                     {"beta", "n", "instance", "instance_seed", "proposal", "gap", "uniform_gap", "ratio"});
    std::map<std::tuple<double, int, std::string>, std::vector<double>> ratio_groups;
    for (const auto& [k, props] : per_instance) {
      const auto uni = props.find("uniform");
      if (uni == props.end()) continue;
      for (const auto& [prop, gv] : props) {
        if (prop.rfind("gns", 0) != 0) continue;
        const double ratio = gv.first / uni->second.first;
        ratios << std::get<0>(k) << std::get<1>(k) << std::get<2>(k) << gv.second << prop << gv.first
               << uni->second.first << ratio;
        ratios.end_row();
        ratio_groups[{std::get<0>(k), std::get<1>(k), prop}].push_back(ratio);
      }
    }
    json ratio_summary = json::array();
    for (const auto& [k, v] : ratio_groups)
      ratio_summary.push_back({{"beta", std::get<0>(k)}, {"n", std::get<1>(k)}, {"proposal", std::get<2>(k)},
                               {"median_ratio_vs_uniform", median(v)}});
    summary["gap_ratios"] = ratio_summary;

    // Classical vs GNS ordering per (beta, n).
    json ordering = json::array();
    std::set<std::pair<double, int>> keys;
    for (const auto& [k, _] : groups) keys.insert({std::get<0>(k), std::get<1>(k)});
    for (const auto& [beta, n] : keys) {
      auto med = [&](const std::string& p) {
        auto it = groups.find({beta, n, p});
        return it == groups.end() ? std::nan("") : median(it->second);
      };
      const double classical = std::fmax(med("ssf"), med("uniform"));
      const double gns = std::fmax(med("gns_optimized"), med("gns_fixed"));
      std::string winner = "undetermined";
      if (!std::isnan(classical) && !std::isnan(gns)) winner = gns > classical ? "gns" : "classical";
      ordering.push_back({{"beta", beta}, {"n", n}, {"best_classical_median", classical},
                          {"best_gns_median", gns}, {"winner", winner}});
    }
    summary["ordering"] = ordering;
  } else {
    copy_artifact(root / "magnetization.csv", root / "fig5_mhat2.csv");
    copy_artifact(root / "histogram.csv", root / "fig6_histogram.csv");

    const auto acf = CsvTable::read((root / "autocorrelation.csv").string());
    std::map<std::tuple<double, int, int, std::string, long>, std::pair<double, int>> acc;
    for (std::size_t r = 0; r < acf.rows.size(); ++r) {
      const double c = acf.number(r, "c");
      if (std::isnan(c)) continue;
      auto& slot = acc[{acf.number(r, "beta"), static_cast<int>(acf.number(r, "n")),
                        static_cast<int>(acf.number(r, "instance")), acf.at(r, "proposal"),
                        static_cast<long>(acf.number(r, "tau"))}];
      slot.first += c;
      slot.second += 1;
    }
    const auto pooled = CsvTable::read((root / "autocorrelation_pooled.csv").string());
    CsvWriter fig7((root / "fig7_autocorrelation.csv").string(),
                   {"beta", "n", "instance", "proposal", "tau", "c_pooled", "c_chain_mean", "chains_defined"});
    std::map<std::tuple<double, int, int, std::string>, long> decay;
    for (std::size_t r = 0; r < pooled.rows.size(); ++r) {
      const double beta = pooled.number(r, "beta"), cp = pooled.number(r, "c_pooled");
      const int n = static_cast<int>(pooled.number(r, "n")), inst = static_cast<int>(pooled.number(r, "instance"));
      const auto& prop = pooled.at(r, "proposal");
      const long tau = static_cast<long>(pooled.number(r, "tau"));
      const auto it = acc.find({beta, n, inst, prop, tau});
      const bool any = it != acc.end();
      fig7 << beta << n << inst << prop << tau << cp << (any ? it->second.first / it->second.second : std::nan(""))
           << (any ? it->second.second : 0);
      fig7.end_row();
      auto dk = std::make_tuple(beta, n, inst, prop);
      if (!decay.count(dk) && cp < 0.1) decay[dk] = tau;
    }

    const auto chains = CsvTable::read((root / "chains.csv").string());
    if (chains.rows.empty()) result.warnings.push_back("empty run: chains.csv has no rows");
    std::map<std::tuple<double, int, int, std::string>, std::vector<double>> means, rates;
    for (std::size_t r = 0; r < chains.rows.size(); ++r) {
      auto k = std::make_tuple(chains.number(r, "beta"), static_cast<int>(chains.number(r, "n")),
                               static_cast<int>(chains.number(r, "instance")), chains.at(r, "proposal"));
      means[k].push_back(chains.number(r, "mean_m"));
      rates[k].push_back(chains.number(r, "acceptance_rate"));
    }
    json stats = json::array();
    for (const auto& [k, v] : means) {
      const double pooled = mean(v);
      double ss = 0.0;
      for (double x : v) ss += (x - pooled) * (x - pooled);
      const double se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(v.size()) : std::nan("");
      auto d = decay.find(k);
      stats.push_back({{"beta", std::get<0>(k)}, {"n", std::get<1>(k)}, {"instance", std::get<2>(k)},
                       {"proposal", std::get<3>(k)}, {"pooled_mean_m", pooled},
                       {"pooled_mhat2", pooled * pooled}, {"pooled_standard_error", se},
                       {"mean_acceptance_rate", mean(rates[k])},
                       {"decay_lag_below_0.1", d == decay.end() ? json(nullptr) : json(d->second)}});
    }
    summary["chains"] = stats;

    const auto ref = CsvTable::read((root / "reference.csv").string());
    json refs = json::array();
    for (std::size_t r = 0; r < ref.rows.size(); ++r)
      refs.push_back({{"beta", ref.number(r, "beta")}, {"n", ref.number(r, "n")},
                      {"instance", ref.number(r, "instance")}, {"exact_mean_m", ref.at(r, "exact_mean_m")},
                      {"note", ref.at(r, "note")}});
    summary["reference"] = refs;
  }

  summary["warnings"] = result.warnings;
  std::ofstream((root / "summary.json").string()) << summary.dump(1) << '\n';
  result.summary = std::move(summary);
  return result;
}

}  // namespace qnmc::pipeline
