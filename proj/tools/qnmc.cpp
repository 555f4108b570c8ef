#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "qnmc/analysis.hpp"
#include "qnmc/csv.hpp"
#include "qnmc/errors.hpp"
#include "qnmc/made.hpp"
#include "qnmc/mcmc.hpp"
#include "qnmc/pipeline.hpp"
#include "qnmc/qsim.hpp"
#include "qnmc/seeding.hpp"
#include "qnmc/spinglass.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qnmc;

namespace {

void write_json(const std::string& path, const json& j) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << '\n';
}

mcmc::Proposal make_proposal(const std::string& kind, const std::string& model_path) {
  if (kind == "ssf") return mcmc::SsfProposal{};
  if (kind == "uniform") return mcmc::UniformProposal{};
  if (kind == "gns") {
    if (model_path.empty()) throw InvalidArgument("--model is required for the gns proposal");
    return mcmc::GnsProposal{std::make_shared<const made::MadeModel>(made::MadeModel::load(model_path))};
  }
  throw InvalidArgument("unknown proposal '" + kind + "' (expected ssf, uniform, gns)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QAOA-trained neural MCMC for spin glasses"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a seeded spin-glass instance");
  int gen_n = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("-n,--n", gen_n, "Number of spins")->required();
  gen->add_option("--seed,--master-seed", gen_seed, "Instance seed");
  gen->add_option("--out", gen_out, "Output JSON path")->required();

  // qaoa
  auto* qa = app.add_subcommand("qaoa", "Run QAOA on an instance and sample a bitstring dataset");
  std::string qa_instance, qa_out, qa_table, qa_mode = "optimized";
  int qa_depth = 5, qa_shots = 1250, qa_max_iter = 500;
  std::uint64_t qa_seed = 0;
  qa->add_option("--instance", qa_instance, "Instance JSON")->required();
  qa->add_option("--depth", qa_depth, "Circuit depth p");
  qa->add_option("--mode", qa_mode, "optimized or fixed_angle");
  qa->add_option("--shots", qa_shots, "Number of bitstrings to sample");
  qa->add_option("--angle-table", qa_table, "Fixed-angle table (default: bundled SK table)");
  qa->add_option("--max-iterations", qa_max_iter, "Optimizer iteration cap");
  qa->add_option("--seed,--master-seed", qa_seed, "Sampling seed");
  qa->add_option("--out", qa_out, "Output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train a MADE model on a bitstring dataset");
  std::string tr_data, tr_out;
  made::TrainConfig tr_cfg;
  int tr_layers = 2, tr_width = 0;
  tr->add_option("--dataset", tr_data, "Dataset file (one bitstring per line)")->required();
  tr->add_option("--hidden-layers", tr_layers, "Hidden layers");
  tr->add_option("--hidden-width", tr_width, "Units per hidden layer (default 2D)");
  tr->add_option("--learning-rate", tr_cfg.learning_rate, "Adam learning rate");
  tr->add_option("--batch-size", tr_cfg.batch_size, "Mini-batch size");
  tr->add_option("--epochs", tr_cfg.epochs, "Training epochs");
  tr->add_option("--test-fraction", tr_cfg.test_fraction, "Held-out fraction");
  tr->add_option("--seed,--master-seed", tr_cfg.seed, "Training seed");
  tr->add_option("--out", tr_out, "Output model JSON")->required();

  // mcmc
  auto* mc = app.add_subcommand("mcmc", "Run a Metropolis-Hastings chain");
  std::string mc_instance, mc_proposal = "ssf", mc_model, mc_out;
  double mc_beta = 1.0;
  std::size_t mc_steps = 100000;
  std::uint64_t mc_seed = 0;
  mc->add_option("--instance", mc_instance, "Instance JSON")->required();
  mc->add_option("--beta", mc_beta, "Inverse temperature");
  mc->add_option("--proposal", mc_proposal, "ssf, uniform or gns");
  mc->add_option("--model", mc_model, "MADE model JSON (gns only)");
  mc->add_option("--steps", mc_steps, "Number of MH steps");
  mc->add_option("--seed,--master-seed", mc_seed, "Chain seed");
  mc->add_option("--out", mc_out, "Chain trace CSV")->required();

  // analyze
  auto* an = app.add_subcommand("analyze", "Spectral gap of a kernel, or diagnostics of a chain trace");
  std::string an_instance, an_proposal = "ssf", an_model, an_chain, an_out;
  double an_beta = 1.0;
  int an_n = 0;
  std::size_t an_burn = analysis::kDefaultBurnIn, an_lag = 1000;
  an->add_option("--instance", an_instance, "Instance JSON (spectral gap mode)");
  an->add_option("--beta", an_beta, "Inverse temperature");
  an->add_option("--proposal", an_proposal, "ssf, uniform or gns");
  an->add_option("--model", an_model, "MADE model JSON (gns only)");
  an->add_option("--chain", an_chain, "Chain trace CSV (chain diagnostics mode)");
  an->add_option("-n,--n", an_n, "Spin count of the chain");
  an->add_option("--burn-in", an_burn, "Discarded prefix");
  an->add_option("--max-lag", an_lag, "Largest autocorrelation lag");
  an->add_option("--out", an_out, "Output directory")->required();

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "Run an experiment config end to end");
  std::string pl_config, pl_out;
  std::optional<std::uint64_t> pl_seed;
  std::optional<int> pl_workers, pl_instances;
  std::optional<std::size_t> pl_steps;
  pl->add_option("--config", pl_config, "Experiment config (JSON)")->required();
  pl->add_option("--master-seed", pl_seed, "Override master_seed");
  pl->add_option("--workers", pl_workers, "Override workers");
  pl->add_option("--instances", pl_instances, "Override instances");
  pl->add_option("--steps", pl_steps, "Override mcmc.steps");
  pl->add_option("--out", pl_out, "Override output_dir");

  // report
  auto* rp = app.add_subcommand("report", "Aggregate an artifact directory");
  std::string rp_dir;
  rp->add_option("--dir,--out", rp_dir, "Artifact directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      generate_instance(gen_n, gen_seed).save(gen_out);
      std::cout << "wrote " << gen_out << '\n';
    } else if (*qa) {
      const auto inst = SpinGlassInstance::load(qa_instance);
      pipeline::ExperimentConfig cfg;
      cfg.qaoa.depth = qa_depth;
      cfg.qaoa.angle_table = qa_table;
      cfg.qaoa.max_iterations = qa_max_iter;
      cfg.qaoa.max_qubits = std::max(cfg.qaoa.max_qubits, inst.size());
      cfg.made.train_size = qa_shots;
      cfg.made.test_size = 0;
      const auto run = pipeline::run_qaoa_stage(inst, qa_mode, cfg, {qa_seed});
      fs::create_directories(qa_out);
      const fs::path dir(qa_out);
      write_json((dir / "angles.json").string(),
                 {{"mode", qa_mode}, {"params", run.params.to_json()}, {"energy", run.energy}});
      if (!run.trace.empty()) qsim::write_trace_csv((dir / "trace.csv").string(), run.trace);
      run.dataset.save((dir / "dataset.txt").string());
      std::cout << "energy " << format_double(run.energy) << "; wrote " << qa_out << '\n';
    } else if (*tr) {
      const auto data = made::BitDataset::load(tr_data);
      const auto arch = made::MadeArchitecture::standard(data.dim, tr_layers, tr_width);
      const auto res = made::train(arch, data, tr_cfg);
      res.model.save(tr_out);
      const auto loss_path = fs::path(tr_out).replace_extension("").string() + "_loss.csv";
      made::write_loss_csv(loss_path, res.losses);
      if (res.loss_increased) std::cerr << "warning: final train loss exceeds first-epoch loss\n";
      std::cout << "final train loss " << format_double(res.losses.back().train_loss) << "; wrote " << tr_out
                << '\n';
    } else if (*mc) {
      const auto inst = SpinGlassInstance::load(mc_instance);
      const BoltzmannTarget target(inst, mc_beta);
      const auto chain = mcmc::run_chain(target, make_proposal(mc_proposal, mc_model), mc_steps, mc_seed);
      mcmc::write_chain_csv(mc_out, chain);
      std::cout << mcmc::chain_summary(chain).dump() << '\n';
    } else if (*an) {
      fs::create_directories(an_out);
      const fs::path dir(an_out);
      if (!an_instance.empty()) {
        const auto inst = SpinGlassInstance::load(an_instance);
        const BoltzmannTarget target(inst, an_beta);
        const auto tm = analysis::build_transition_matrix(target, make_proposal(an_proposal, an_model));
        const auto rep = analysis::spectral_gap(tm, target);
        const json j = {{"n", inst.size()}, {"beta", an_beta}, {"instance_seed", inst.seed()},
                        {"proposal", an_proposal}, {"gap", rep.gap}, {"lambda2_modulus", rep.lambda2_modulus},
                        {"eigen_method", rep.eigen_method}};
        write_json((dir / "spectral_gap.json").string(), j);
        std::cout << j.dump() << '\n';
      } else if (!an_chain.empty()) {
        if (an_n < 1) throw InvalidArgument("--n is required with --chain");
        const auto table = CsvTable::read(an_chain);
        mcmc::Chain chain;
        chain.n = an_n;
        for (std::size_t r = 0; r < table.rows.size(); ++r)
          chain.states.push_back(std::stoull(table.at(r, "state_index")));
        const auto series = analysis::magnetization_series(chain, an_burn);
        {
          CsvWriter w((dir / "magnetization.csv").string(), {"step", "mhat2"});
          for (std::size_t t = 0; t < series.running_mhat2.size(); ++t) {
            w << static_cast<unsigned long long>(t + 1) << series.running_mhat2[t];
            w.end_row();
          }
        }
        {
          CsvWriter w((dir / "histogram.csv").string(), {"m_value", "count"});
          for (const auto& b : analysis::magnetization_histogram(chain, an_burn)) {
            w << b.m_value << static_cast<unsigned long long>(b.count);
            w.end_row();
          }
        }
        {
          const auto c = analysis::autocorrelation(series.values, an_burn, an_lag);
          CsvWriter w((dir / "autocorrelation.csv").string(), {"tau", "c"});
          for (std::size_t t = 0; t < c.size(); ++t) {
            w << static_cast<unsigned long long>(t) << c[t];
            w.end_row();
          }
        }
        std::cout << "wrote " << an_out << '\n';
      } else {
        throw InvalidArgument("analyze needs --instance (spectral gap) or --chain (chain diagnostics)");
      }
    } else if (*pl) {
      auto cfg = pipeline::ExperimentConfig::load(pl_config);
      if (pl_seed) cfg.master_seed = *pl_seed;
      if (pl_workers) cfg.workers = *pl_workers;
      if (pl_instances) cfg.instances = *pl_instances;
      if (pl_steps) cfg.mcmc.steps = *pl_steps;
      if (!pl_out.empty()) cfg.output_dir = pl_out;
      cfg.validate();
      const auto dir = pipeline::run_pipeline(cfg);
      const auto rep = pipeline::report(dir);
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "wrote " << dir << '\n';
    } else if (*rp) {
      const auto rep = pipeline::report(rp_dir);
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << rep.summary.dump(1) << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "config error at " << e.what() << '\n';
    return 2;
  } catch (const NotFoundError& e) {
    std::cerr << "not found: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
