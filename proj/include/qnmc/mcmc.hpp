#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qnmc/made.hpp"
#include "qnmc/spinglass.hpp"

namespace qnmc::mcmc {

/// Flip one uniformly chosen spin.
struct SsfProposal {};
/// Uniform over all 2^n configurations, the current one included.
struct UniformProposal {};
/// Independence sampler drawing from a trained MADE: Q(x'|x) = p(x').
struct GnsProposal {
  std::shared_ptr<const made::MadeModel> model;
};

using Proposal = std::variant<SsfProposal, UniformProposal, GnsProposal>;

enum class ProposalKind { kSsf, kUniform, kGns };

ProposalKind kind_of(const Proposal& q);
std::string to_string(ProposalKind kind);

/// log Q(to | from). -inf where the proposal has no mass.
double log_q(const Proposal& q, const SpinConfiguration& from, const SpinConfiguration& to);

struct Proposed {
  SpinConfiguration state;
  double log_q;  // log Q(x'|x)
};

Proposed propose_ssf(const SpinConfiguration& x, std::mt19937_64& rng);
Proposed propose_uniform(int n, std::mt19937_64& rng);
Proposed propose_gns(const made::MadeModel& model, int n, std::mt19937_64& rng);
Proposed propose(const Proposal& q, const SpinConfiguration& x, std::mt19937_64& rng);

/// log[pi(x')/pi(x)] + log[Q(x|x')/Q(x'|x)]; acceptance is min(1, exp(.)).
double acceptance_log_ratio(const BoltzmannTarget& target, const SpinConfiguration& x,
                            const SpinConfiguration& xp, const Proposal& q);

struct Chain {
  int n = 0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  ProposalKind proposal = ProposalKind::kSsf;
  /// states[0] is the initial configuration; states.size() == steps + 1.
  std::vector<std::uint64_t> states;
  std::vector<double> energies;
  /// accepted[t] records the move from states[t] to states[t+1].
  std::vector<std::uint8_t> accepted;

  std::size_t steps() const noexcept { return accepted.size(); }
  double acceptance_rate() const;
};

/// Metropolis-Hastings: draw x', accept iff log U <= log ratio, otherwise
/// repeat the current state.
Chain run_chain(const BoltzmannTarget& target, const Proposal& q, std::size_t steps,
                const SpinConfiguration& initial, std::uint64_t seed);

/// As above with a uniformly random initial state drawn from the chain seed.
Chain run_chain(const BoltzmannTarget& target, const Proposal& q, std::size_t steps,
                std::uint64_t seed);

/// CSV trace: step,state_index,energy,accepted (accepted is empty on step 0).
void write_chain_csv(const std::string& path, const Chain& chain);
nlohmann::json chain_summary(const Chain& chain);

}  // namespace qnmc::mcmc
