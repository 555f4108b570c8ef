// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qnmc/analysis.hpp"
#include "qnmc/csv.hpp"
#include "qnmc/errors.hpp"
#include "qnmc/made.hpp"
#include "qnmc/mcmc.hpp"
#include "qnmc/pipeline.hpp"
#include "qnmc/qsim.hpp"
#include "qnmc/seeding.hpp"
#include "qnmc/spinglass.hpp"

using namespace qnmc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// QNMC_ACCEPTANCE_SEED overrides the master seed for robustness reruns.
const std::uint64_t kMasterSeed = [] {
  const char* env = std::getenv("QNMC_ACCEPTANCE_SEED");
  return env ? std::stoull(env) : std::uint64_t{1};
}();

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("violated: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

std::string run_dir(const std::string& name) {
  const auto d = fs::path(QNMC_TEST_TMP) / name;
  fs::remove_all(d);
  return d.string();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Trained GNS proposal for an instance, produced exactly as the pipeline does.
mcmc::GnsProposal trained_gns(const SpinGlassInstance& inst, const std::string& mode) {
  auto cfg = pipeline::ExperimentConfig::defaults(pipeline::ExperimentKind::kSpectralGapSweep);
  const auto seeds = pipeline::InstanceSeeds{inst.seed()};
  const auto run = pipeline::run_qaoa_stage(inst, mode, cfg, seeds);
  const auto arch = made::MadeArchitecture::standard(inst.size(), cfg.made.hidden_layers,
                                                     cfg.made.hidden_width_factor * inst.size());
  auto res = made::train(arch, run.dataset, cfg.train_config(seeds.training(mode)));
  return {std::make_shared<const made::MadeModel>(std::move(res.model))};
}

// 1. Exact kernel properties.
Outcome criterion1() {
  Outcome o;
  double worst_db = 0, worst_st = 0, worst_row = 0, worst_l1 = 0;
  int kernels = 0;
  for (int n : {4, 6})
    for (int i = 0; i < 5; ++i) {
      const auto inst = generate_instance(n, derive_seed(kMasterSeed, "c1", {std::uint64_t(n), std::uint64_t(i)}));
      const std::vector<mcmc::Proposal> qs = {mcmc::SsfProposal{}, mcmc::UniformProposal{},
                                              trained_gns(inst, "optimized")};
      for (double beta : {0.5, 2.0, 10.0}) {
        const BoltzmannTarget t(inst, beta);
        const auto part = exact_partition(t);
        for (const auto& q : qs) {
          const auto p = analysis::build_transition_matrix(t, q);
          worst_db = std::max(worst_db, analysis::detailed_balance_residual(p, part.probabilities));
          worst_st = std::max(worst_st, analysis::stationarity_residual(p, part.probabilities));
          worst_row = std::max(worst_row, analysis::row_sum_residual(p));
          worst_l1 = std::max(worst_l1, std::abs(analysis::spectral_gap(p, part.log_probabilities).lambda1 - 1.0));
          ++kernels;
        }
      }
    }
  o.require(worst_db < 1e-10, "detailed balance < 1e-10");
  o.require(worst_st < 1e-10, "stationarity < 1e-10");
  o.require(worst_row < 1e-12, "row sums 1 +- 1e-12");
  o.require(worst_l1 < 1e-9, "lambda1 = 1 +- 1e-9");
  o.note(std::to_string(kernels) + " kernels; max residuals db=" + fmt(worst_db) + " stat=" + fmt(worst_st) +
         " row=" + fmt(worst_row) + " |l1-1|=" + fmt(worst_l1));
  return o;
}

// 2. MADE properties.
Outcome criterion2() {
  Outcome o;
  auto norm_err = [](const made::MadeModel& m) {
    double s = 0.0;
    for (double v : made::enumerate_log_probs(m)) s += std::exp(v);
    return std::abs(s - 1.0);
  };
  double worst_norm = 0.0;
  bool sparse = true;
  for (int d : {4, 8, 10}) {
    const auto inst = generate_instance(d, derive_seed(kMasterSeed, "c2", {std::uint64_t(d)}));
    const auto arch = made::MadeArchitecture::standard(d);
    worst_norm = std::max(worst_norm, norm_err(made::MadeModel(arch, 5)));
    worst_norm = std::max(worst_norm, norm_err(*trained_gns(inst, "fixed_angle").model));

    const made::MadeModel m(arch, 17);
    std::mt19937_64 rng(d);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::MatrixXd x(1, d);
      for (int e = 0; e < d; ++e) x(0, e) = u(rng);
      const Eigen::MatrixXd base = m.logits(x);
      for (int e = 0; e < d; ++e) {
        Eigen::MatrixXd xp = x;
        xp(0, e) += 0.5;
        const Eigen::MatrixXd moved = m.logits(xp);
        for (int out = 0; out <= e; ++out) sparse = sparse && moved(0, out) == base(0, out);
      }
    }
  }
  o.require(worst_norm < 1e-8, "normalization 1 +- 1e-8");
  o.require(sparse, "autoregressive Jacobian sparsity");

  made::MadeModel model(made::MadeArchitecture::standard(5), 31);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 0.2);
  for (auto& layer : model.mutable_layers())
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = nd(rng);
  std::vector<std::uint64_t> rows;
  for (int r = 0; r < 64; ++r) rows.push_back(rng() & 31);
  const auto grad = made::loss_gradient(model, rows);
  auto params = made::flatten_parameters(model);
  made::MadeModel probe = model;
  double worst_rel = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grad[k] == 0.0) continue;
    auto p = params;
    p[k] += 1e-5;
    made::assign_parameters(probe, p);
    const double up = made::mean_loss(probe, rows);
    p[k] -= 2e-5;
    made::assign_parameters(probe, p);
    const double fd = (up - made::mean_loss(probe, rows)) / 2e-5;
    if (std::abs(fd) > 1e-6) worst_rel = std::max(worst_rel, std::abs(fd - grad[k]) / std::abs(fd));
  }
  o.require(worst_rel < 1e-5, "gradient relative error < 1e-5");

  const std::uint64_t star = 0b110010;
  made::TrainConfig cfg;
  cfg.seed = 8;
  const auto res = made::train(made::MadeArchitecture::standard(6), made::BitDataset{6, std::vector<std::uint64_t>(1000, star)}, cfg);
  const double p_star = std::exp(made::log_prob(res.model, star));
  o.require(p_star > 0.99, "p(x*) > 0.99");
  o.note("max |sum p - 1|=" + fmt(worst_norm) + " grad rel err=" + fmt(worst_rel) + " p(x*)=" + fmt(p_star, 6));
  return o;
}

// 3. QAOA simulator.
Outcome criterion3() {
  Outcome o;
  double worst_norm = 0.0;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-M_PI, M_PI);
  for (int n : {3, 6, 9}) {
    const auto diag = qsim::build_cost_diagonal(generate_instance(n, n));
    for (int t = 0; t < 5; ++t) {
      qsim::QaoaParams p;
      for (int l = 0; l < 4; ++l) {
        p.gammas.push_back(u(rng));
        p.betas.push_back(u(rng));
      }
      worst_norm = std::max(worst_norm, std::abs(qsim::run_qaoa(diag, p).norm_squared() - 1.0));
    }
  }
  o.require(worst_norm < 1e-10, "unitarity 1e-10");

  const auto diag5 = qsim::build_cost_diagonal(generate_instance(5, 1));
  double worst_uniform = 0.0;
  const auto identity = qsim::run_qaoa(diag5, {{0.0}, {0.0}});
  for (const auto& a : identity.amplitudes())
    worst_uniform = std::max(worst_uniform, std::abs(a - std::complex<double>(std::pow(2.0, -2.5), 0.0)));
  o.require(worst_uniform < 1e-14, "identity circuit uniform");

  const auto inst2 = generate_instance(2, 22);
  const auto diag2 = qsim::build_cost_diagonal(inst2);
  const double g = 0.83, b = -0.41;
  using cd = std::complex<double>;
  Eigen::Matrix4cd uc = Eigen::Matrix4cd::Zero(), ub;
  for (int i = 0; i < 4; ++i) uc(i, i) = std::exp(cd(0, -g * diag2.energies[i]));
  Eigen::Matrix2cd rx;
  rx << std::cos(b), cd(0, -std::sin(b)), cd(0, -std::sin(b)), std::cos(b);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) ub(r, c) = rx(r >> 1, c >> 1) * rx(r & 1, c & 1);
  const Eigen::Vector4cd expect = ub * uc * Eigen::Vector4cd::Constant(0.5);
  const auto st = qsim::run_qaoa(diag2, {{g}, {b}});
  double worst_dense = 0.0;
  for (int i = 0; i < 4; ++i) worst_dense = std::max(worst_dense, std::abs(st.amplitudes()[i] - expect(i)));
  o.require(worst_dense < 1e-12, "n=2 dense oracle 1e-12");

  const auto table = qsim::AngleTable::load(qsim::default_angle_table_path());
  int runs = 0;
  double worst_increase = -1e9;
  for (int i = 0; i < 5; ++i) {
    const auto inst = generate_instance(6, derive_seed(kMasterSeed, "c3", {std::uint64_t(i)}));
    const auto diag = qsim::build_cost_diagonal(inst);
    for (const auto& start : {qsim::fixed_angles(5, table), qsim::fixed_angles(5, qsim::AngleTable{}, qsim::RampFallback{0.64, -0.59})}) {
      const auto init = qsim::adapt_to_instance(start, table.gamma_scaling, 6);
      const auto res = qsim::optimize_params(diag, init);
      worst_increase = std::max(worst_increase, res.final_energy - qsim::energy_expectation(qsim::run_qaoa(diag, init), diag));
      ++runs;
    }
  }
  o.require(worst_increase <= 1e-9, "optimization never increases energy");
  o.note("|norm-1|=" + fmt(worst_norm) + " dense err=" + fmt(worst_dense) + " " + std::to_string(runs) +
         " n=6 p=5 optimizations, max(E_final - E_start)=" + fmt(worst_increase));
  return o;
}

// 4. Chain frequencies vs exact Boltzmann. Sigma is the exact Markov-chain
// CLT standard error of a cell indicator f, from the kernel's fundamental
// matrix Z = (I - P + 1 pi^T)^-1: sigma^2 N = 2 <g, Z g>_pi - <g, g>_pi with
// g = f - pi(f). States the chain is expected to enter fewer than 25 times
// are merged into one rare cell, as in a multinomial test; if even that cell
// is expected fewer than 25 entries, its entry count gets an exact Poisson
// upper-tail test instead. The CLT also needs the chain to relax well within
// the run, so a kernel is tested only if 1/gap <= steps/100 (the first
// steps/100 are discarded as burn-in), and every
// proposal kind must have at least one tested kernel across five instances.
Outcome criterion4() {
  Outcome o;
  std::map<std::string, int> tested;
  std::map<std::string, double> worst;
  std::vector<std::string> skipped;
  for (std::uint64_t i = 0; i < 5; ++i) {
  const auto inst = generate_instance(4, derive_seed(kMasterSeed, "c4", {i}));
  const BoltzmannTarget t(inst, 2.0);
  const auto pi = exact_partition(t).probabilities;
  const Eigen::Map<const Eigen::VectorXd> piv(pi.data(), 16);
  const std::vector<std::pair<std::string, mcmc::Proposal>> qs = {{"ssf", mcmc::SsfProposal{}},
                                                                   {"uniform", mcmc::UniformProposal{}},
                                                                   {"gns_optimized", trained_gns(inst, "optimized")},
                                                                   {"gns_fixed", trained_gns(inst, "fixed_angle")}};
  const std::size_t steps = 1000000;
  for (const auto& [name, q] : qs) {
    const auto p = analysis::build_transition_matrix(t, q);
    const double gap = analysis::spectral_gap(p, t).gap;
    const std::string kind = name.substr(0, 3) == "gns" ? "gns" : name;
    if (!(gap * static_cast<double>(steps) / 100.0 >= 1.0)) {
      skipped.push_back(name + "#" + std::to_string(i) + " gap " + fmt(gap));
      continue;
    }
    ++tested[kind];
    const Eigen::MatrixXd z =
        (Eigen::MatrixXd::Identity(16, 16) - p.entries + Eigen::VectorXd::Ones(16) * piv.transpose()).inverse();
    const auto c = mcmc::run_chain(t, q, steps, derive_seed(kMasterSeed, "c4-chain", {i, hash_tag(name)}));
    const std::size_t burn = steps / 100;  // >= 100 relaxation times
    const double big_n = static_cast<double>(steps - burn);
    // Expected stationary entries into a set of states.
    auto entries = [&](const std::vector<bool>& in) {
      double flux = 0.0;
      for (int x = 0; x < 16; ++x)
        for (int y = 0; y < 16; ++y)
          if (!in[x] && in[y]) flux += pi[x] * p.entries(x, y);
      return flux * big_n;
    };
    auto z_score = [&](const std::vector<bool>& in) {
      double target = 0.0, freq = 0.0;
      for (int s = 0; s < 16; ++s) target += in[s] ? pi[s] : 0.0;
      for (std::size_t k = burn + 1; k <= steps; ++k) freq += in[c.states[k]] / big_n;
      Eigen::VectorXd g(16);
      for (int s = 0; s < 16; ++s) g(s) = (in[s] ? 1.0 : 0.0) - target;
      const Eigen::VectorXd zg = z * g;
      const double var = (piv.array() * g.array() * (2.0 * zg.array() - g.array())).sum();
      return std::abs(freq - target) / std::sqrt(var / big_n);
    };
    double worst_z = 0.0;
    std::vector<bool> rare(16, false);
    for (int s = 0; s < 16; ++s) {
      std::vector<bool> cell(16, false);
      cell[s] = true;
      if (entries(cell) < 25.0)
        rare[s] = true;
      else
        worst_z = std::max(worst_z, z_score(cell));
    }
    if (std::count(rare.begin(), rare.end(), true) > 0) {
      const double lambda = entries(rare);
      if (lambda >= 25.0) {
        worst_z = std::max(worst_z, z_score(rare));
      } else {
        int k = 0;
        for (std::size_t t2 = burn + 1; t2 <= steps; ++t2) k += rare[c.states[t2]] && !rare[c.states[t2 - 1]];
        double term = std::exp(-lambda), below = 0.0;
        for (int j = 0; j < k; ++j, term *= lambda / j) below += term;
        const double tail = std::max(0.0, 1.0 - below);
        o.require(k == 0 || tail >= 1e-6, name + "#" + std::to_string(i) + " rare-cell entries Poisson tail >= 1e-6");
      }
    }
    o.require(worst_z < 5.0, name + "#" + std::to_string(i) + " within 5 sigma");
    worst[name] = std::max(worst[name], worst_z);
  }
  }
  for (const auto& [name, z] : worst) o.note(name + " max|z|=" + fmt(z));
  std::string untestable;
  for (const auto& sk : skipped) untestable += (untestable.empty() ? "" : ", ") + sk;
  o.note(std::to_string(20 - skipped.size()) + "/20 kernels tested; relax too slowly for 1e6 steps: " +
         (untestable.empty() ? "none" : untestable));
  for (const char* kind : {"ssf", "uniform", "gns"}) o.require(tested[kind] > 0, std::string("a tested ") + kind + " kernel");
  return o;
}

pipeline::ExperimentConfig gap_config(int n, std::vector<double> betas, int instances, const std::string& dir) {
  auto cfg = pipeline::ExperimentConfig::defaults(pipeline::ExperimentKind::kSpectralGapSweep);
  cfg.master_seed = kMasterSeed;
  cfg.sizes = {n};
  cfg.betas = std::move(betas);
  cfg.instances = instances;
  cfg.output_dir = dir;
  return cfg;
}

pipeline::ExperimentConfig magnetization_config(const std::string& dir) {
  auto cfg = pipeline::ExperimentConfig::defaults(pipeline::ExperimentKind::kMagnetization);
  cfg.master_seed = kMasterSeed;
  cfg.sizes = {12};
  cfg.betas = {5.0};
  cfg.proposals = {"ssf", "gns_optimized"};
  cfg.output_dir = dir;
  return cfg;
}

// (beta, proposal) -> gaps
std::map<std::pair<double, std::string>, std::vector<double>> read_gaps(const std::string& dir) {
  const auto t = CsvTable::read((fs::path(dir) / "spectral_gaps.csv").string());
  std::map<std::pair<double, std::string>, std::vector<double>> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) out[{t.number(r, "beta"), t.at(r, "proposal")}].push_back(t.number(r, "gap"));
  return out;
}

Outcome criterion5(const std::string& dir) {
  Outcome o;
  pipeline::run_pipeline(gap_config(10, {10.0}, 20, dir));
  pipeline::report(dir);
  auto gaps = read_gaps(dir);
  const double ssf = median(gaps[{10.0, "ssf"}]), uni = median(gaps[{10.0, "uniform"}]);
  const double opt = median(gaps[{10.0, "gns_optimized"}]), fix = median(gaps[{10.0, "gns_fixed"}]);
  o.require(gaps[{10.0, "uniform"}].size() == 20, "20 instances");
  o.require(opt >= 10.0 * uni, "median GNS(optimized) >= 10x uniform");
  o.require(fix > ssf && fix > uni, "median GNS(fixed) > SSF and uniform");
  o.note("medians: gns_optimized=" + fmt(opt) + " gns_fixed=" + fmt(fix) + " uniform=" + fmt(uni) + " ssf=" + fmt(ssf) +
         "; ratio optimized/uniform=" + fmt(opt / uni));
  return o;
}

Outcome criterion6(const std::string& dir) {
  Outcome o;
  pipeline::run_pipeline(gap_config(8, {0.5, 5.0, 10.0}, 20, dir));
  pipeline::report(dir);
  auto gaps = read_gaps(dir);
  for (double beta : {0.5, 5.0, 10.0}) {
    const double classical = std::max(median(gaps[{beta, "ssf"}]), median(gaps[{beta, "uniform"}]));
    const double gns = median(gaps[{beta, "gns_optimized"}]);
    const double fixed = median(gaps[{beta, "gns_fixed"}]);
    if (beta < 1.0)
      o.require(classical > gns, "classical > GNS at beta=" + fmt(beta));
    else
      o.require(gns > classical, "GNS > classical at beta=" + fmt(beta));
    o.note("beta=" + fmt(beta) + ": classical=" + fmt(classical) + " gns_optimized=" + fmt(gns) + " gns_fixed=" + fmt(fixed));
  }
  return o;
}

Outcome criterion7(const std::string& dir) {
  Outcome o;
  const auto cfg = magnetization_config(dir);
  pipeline::run_pipeline(cfg);
  pipeline::report(dir);
  const auto chains = CsvTable::read((fs::path(dir) / "chains.csv").string());
  std::vector<double> means, imbalance;
  std::uint64_t pos = 0, neg = 0;
  for (std::size_t r = 0; r < chains.rows.size(); ++r) {
    if (chains.at(r, "proposal") != "gns_optimized") continue;
    means.push_back(chains.number(r, "mean_m_post_burn_in"));
    const double p = chains.number(r, "positive_count"), m = chains.number(r, "negative_count");
    pos += static_cast<std::uint64_t>(p);
    neg += static_cast<std::uint64_t>(m);
    imbalance.push_back((p - m) / (p + m));
  }
  auto mean_se = [](const std::vector<double>& v) {
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::make_pair(mu, std::sqrt(ss / (v.size() - 1)) / std::sqrt(v.size()));
  };
  o.require(means.size() == 10, "10 GNS chains");
  const auto [m_pooled, se] = mean_se(means);
  const double mhat2 = m_pooled * m_pooled;
  const auto ref = CsvTable::read((fs::path(dir) / "reference.csv").string());
  const double exact = ref.number(0, "exact_mean_m");
  o.require(std::abs(exact) < 1e-12, "exact mean magnetization is 0");
  o.require(std::abs(m_pooled - exact) <= 3 * se, "pooled m-hat^2 within 3 pooled SE of 0");
  const auto [imb, imb_se] = mean_se(imbalance);
  o.require(pos > 0 && neg > 0, "both magnetization peaks occupied");
  o.require(std::abs(imb) <= 5 * imb_se, "peak occupancy balanced within 5 sigma");
  o.note("pooled m=" + fmt(m_pooled) + " m-hat^2=" + fmt(mhat2) + " (3SE)^2=" + fmt(9 * se * se) +
         "; N+=" + std::to_string(pos) + " N-=" + std::to_string(neg) + " imbalance=" + fmt(imb) + " +- " + fmt(imb_se));
  return o;
}

Outcome criterion8(const std::string& dir) {
  Outcome o;
  const auto summary = pipeline::report(dir).summary;
  const double never = std::numeric_limits<double>::infinity();
  double gns = never, ssf = never;
  for (const auto& s : summary.at("chains")) {
    const double lag = s.at("decay_lag_below_0.1").is_null() ? never : s.at("decay_lag_below_0.1").get<double>();
    if (s.at("proposal") == "gns_optimized") gns = lag;
    if (s.at("proposal") == "ssf") ssf = lag;
  }
  o.require(gns < ssf, "GNS c(tau) decays below 0.1 before SSF");
  auto show = [](double v) { return std::isinf(v) ? std::string("not within max_lag") : fmt(v); };
  o.note("decay lag below 0.1: gns_optimized=" + show(gns) + " ssf=" + show(ssf));
  return o;
}

std::vector<fs::path> result_csvs(const std::string& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion9(const std::vector<std::pair<std::string, pipeline::ExperimentConfig>>& runs) {
  Outcome o;
  std::size_t files = 0;
  for (const auto& [dir, cfg] : runs) {
    auto again = cfg;
    again.output_dir = run_dir(fs::path(dir).filename().string() + "_rerun");
    pipeline::run_pipeline(again);
    pipeline::report(again.output_dir);
    const auto a = result_csvs(dir), b = result_csvs(again.output_dir);
    o.require(a == b, "same CSV set for " + fs::path(dir).filename().string());
    for (const auto& f : a) {
      o.require(slurp(fs::path(dir) / f) == slurp(fs::path(again.output_dir) / f), "identical bytes " + f.string());
      ++files;
    }
  }
  o.note(std::to_string(files) + " CSV files compared byte-for-byte");
  return o;
}

}  // namespace

int main() {
  fs::create_directories(QNMC_TEST_TMP);
  const std::string d5 = run_dir("c5_gap_n10"), d6 = run_dir("c6_crossover_n8"), d7 = run_dir("c7_magnetization_n12");

  struct Item {
    int id;
    std::string title;
    std::function<Outcome()> run;
  };
  const std::vector<Item> items = {
      {1, "exactness suite", criterion1},
      {2, "MADE suite", criterion2},
      {3, "QAOA suite", criterion3},
      {4, "sampling correctness", criterion4},
      {5, "spectral gap n=10 beta=10", [&] { return criterion5(d5); }},
      {6, "temperature crossover n=8", [&] { return criterion6(d6); }},
      {7, "magnetization n=12 beta=5", [&] { return criterion7(d7); }},
      {8, "autocorrelation decay", [&] { return criterion8(d7); }},
      {9, "reproducibility", [&] {
         return criterion9({{d5, gap_config(10, {10.0}, 20, d5)},
                            {d6, gap_config(8, {0.5, 5.0, 10.0}, 20, d6)},
                            {d7, magnetization_config(d7)}});
       }},
  };

  // QNMC_ACCEPTANCE_ONLY=4,7 restricts a rerun to the listed criteria.
  const char* only = std::getenv("QNMC_ACCEPTANCE_ONLY");
  int failed = 0, ran = 0;
  for (const auto& item : items) {
    if (only && ("," + std::string(only) + ",").find("," + std::to_string(item.id) + ",") == std::string::npos) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = item.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s criterion %d (%s) [%.1fs]: %s\n", o.pass ? "PASS" : "FAIL", item.id, item.title.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed ? 1 : 0;
}
