#include "qnmc/mcmc.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "qnmc/errors.hpp"
#include "qnmc/seeding.hpp"

namespace qnmc::mcmc {

namespace {

constexpr double kLog2 = 0.69314718055994530942;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_gns(const GnsProposal& g, int n) {
  if (!g.model) throw InvalidArgument("GNS proposal without a model");
  if (g.model->input_dim() != n) throw InvalidArgument("GNS model dimension does not match spin count");
}

// Uniform in (0, 1].
double open_uniform(std::mt19937_64& rng) {
  return 1.0 - std::generate_canonical<double, 64>(rng);
}

}  // namespace

ProposalKind kind_of(const Proposal& q) {
  return std::visit(overloaded{[](const SsfProposal&) { return ProposalKind::kSsf; },
                               [](const UniformProposal&) { return ProposalKind::kUniform; },
                               [](const GnsProposal&) { return ProposalKind::kGns; }},
                    q);
}

std::string to_string(ProposalKind kind) {
  switch (kind) {
    case ProposalKind::kSsf: return "ssf";
    case ProposalKind::kUniform: return "uniform";
    case ProposalKind::kGns: return "gns";
  }
  return "unknown";
}

double log_q(const Proposal& q, const SpinConfiguration& from, const SpinConfiguration& to) {
  const int n = from.size();
  if (to.size() != n) throw InvalidArgument("log_q: configuration length mismatch");
  return std::visit(overloaded{[&](const SsfProposal&) {
                                 return std::popcount(from.index() ^ to.index()) == 1
                                            ? -std::log(static_cast<double>(n))
                                            : -std::numeric_limits<double>::infinity();
                               },
                               [&](const UniformProposal&) { return -n * kLog2; },
                               [&](const GnsProposal& g) {
                                 check_gns(g, n);
                                 return made::log_prob(*g.model, to.index());
                               }},
                    q);
}

Proposed propose_ssf(const SpinConfiguration& x, std::mt19937_64& rng) {
  const int n = x.size();
  std::uniform_int_distribution<int> site(0, n - 1);
  return {x.flipped(site(rng)), -std::log(static_cast<double>(n))};
}

Proposed propose_uniform(int n, std::mt19937_64& rng) {
  if (n < 1 || n > 63) throw InvalidArgument("propose_uniform: n must be in [1, 63]");
  const std::uint64_t idx = rng() >> (64 - n);
  return {SpinConfiguration(n, idx), -n * kLog2};
}

Proposed propose_gns(const made::MadeModel& model, int n, std::mt19937_64& rng) {
  if (model.input_dim() != n) throw InvalidArgument("propose_gns: model dimension does not match spin count");
  const auto s = made::sample_one(model, rng);
  return {SpinConfiguration(n, s.bits), s.log_prob};
}

Proposed propose(const Proposal& q, const SpinConfiguration& x, std::mt19937_64& rng) {
  return std::visit(overloaded{[&](const SsfProposal&) { return propose_ssf(x, rng); },
                               [&](const UniformProposal&) { return propose_uniform(x.size(), rng); },
                               [&](const GnsProposal& g) {
                                 check_gns(g, x.size());
                                 return propose_gns(*g.model, x.size(), rng);
                               }},
                    q);
}

double acceptance_log_ratio(const BoltzmannTarget& target, const SpinConfiguration& x,
                            const SpinConfiguration& xp, const Proposal& q) {
  if (x == xp) return 0.0;
  const double log_pi = target.log_weight(xp) - target.log_weight(x);
  if (kind_of(q) != ProposalKind::kGns) return log_pi;  // symmetric proposals
  return log_pi + log_q(q, xp, x) - log_q(q, x, xp);
}

double Chain::acceptance_rate() const {
  if (accepted.empty()) return 0.0;
  std::size_t a = 0;
  for (auto f : accepted) a += f;
  return static_cast<double>(a) / static_cast<double>(accepted.size());
}

Chain run_chain(const BoltzmannTarget& target, const Proposal& q, std::size_t steps,
                const SpinConfiguration& initial, std::uint64_t seed) {
  const int n = target.size();
  if (steps < 1) throw InvalidArgument("run_chain: steps must be >= 1");
  if (initial.size() != n) throw InvalidArgument("run_chain: initial state has wrong length");
  if (const auto* g = std::get_if<GnsProposal>(&q)) check_gns(*g, n);

  const auto& inst = target.instance();
  const double beta = target.beta();
  const ProposalKind kind = kind_of(q);

  Chain c;
  c.n = n;
  c.beta = beta;
  c.seed = seed;
  c.proposal = kind;
  c.states.reserve(steps + 1);
  c.energies.reserve(steps + 1);
  c.accepted.reserve(steps);

  std::mt19937_64 rng(seed);
  SpinConfiguration x = initial;
  double e = energy(inst, x);
  // Cached log p(x) for the independence sampler.
  double log_p_x = kind == ProposalKind::kGns ? log_q(q, x, x) : 0.0;
  c.states.push_back(x.index());
  c.energies.push_back(e);

  for (std::size_t t = 0; t < steps; ++t) {
    double log_ratio;
    double e_new = 0.0;
    Proposed prop = [&] {
      if (kind == ProposalKind::kSsf) {
        std::uniform_int_distribution<int> site(0, n - 1);
        const int j = site(rng);
        e_new = e + energy_delta(inst, x, j);
        return Proposed{x.flipped(j), -std::log(static_cast<double>(n))};
      }
      Proposed p = propose(q, x, rng);
      e_new = energy(inst, p.state);
      return p;
    }();
    log_ratio = -beta * (e_new - e);
    if (kind == ProposalKind::kGns) log_ratio += log_p_x - prop.log_q;
    if (prop.state == x) log_ratio = 0.0;

    const bool accept = std::log(open_uniform(rng)) <= log_ratio;
    if (accept) {
      x = prop.state;
      e = e_new;
      if (kind == ProposalKind::kGns) log_p_x = prop.log_q;
    }
    c.accepted.push_back(accept ? 1 : 0);
    c.states.push_back(x.index());
    c.energies.push_back(e);
  }
  return c;
}

Chain run_chain(const BoltzmannTarget& target, const Proposal& q, std::size_t steps, std::uint64_t seed) {
  const int n = target.size();
  std::mt19937_64 init_rng(derive_seed(seed, "chain-init"));
  const std::uint64_t idx = init_rng() >> (64 - n);
  return run_chain(target, q, steps, SpinConfiguration(n, idx), seed);
}

void write_chain_csv(const std::string& path, const Chain& chain) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,state_index,energy,accepted\n" << std::setprecision(17);
  for (std::size_t t = 0; t < chain.states.size(); ++t) {
    out << t << ',' << chain.states[t] << ',' << chain.energies[t] << ',';
    if (t > 0) out << static_cast<int>(chain.accepted[t - 1]);
    out << '\n';
  }
}

nlohmann::json chain_summary(const Chain& chain) {
  return {{"acceptance_rate", chain.acceptance_rate()},
          {"seed", chain.seed},
          {"proposal", to_string(chain.proposal)},
          {"n", chain.n},
          {"beta", chain.beta},
          {"steps", chain.steps()}};
}

}  // namespace qnmc::mcmc
