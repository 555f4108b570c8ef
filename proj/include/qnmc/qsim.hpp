#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnmc/spinglass.hpp"

namespace qnmc::qsim {

using Amplitude = std::complex<double>;

/// Noise-free n-qubit state. Qubit j is bit j of the basis index, with |0>
/// corresponding to spin +1.
class Statevector {
 public:
  explicit Statevector(int n);  // |+>^n
  Statevector(int n, std::vector<Amplitude> amplitudes);
  static Statevector basis_state(int n, std::uint64_t index);

  int num_qubits() const noexcept { return n_; }
  std::size_t dim() const noexcept { return amps_.size(); }
  const std::vector<Amplitude>& amplitudes() const noexcept { return amps_; }
  std::vector<Amplitude>& amplitudes() noexcept { return amps_; }

  double norm_squared() const;
  std::vector<double> probabilities() const;

 private:
  int n_;
  std::vector<Amplitude> amps_;
};

/// Cost angles `gammas` and mixer angles `betas` (not inverse temperatures).
struct QaoaParams {
  std::vector<double> gammas;
  std::vector<double> betas;

  int depth() const noexcept { return static_cast<int>(gammas.size()); }
  void validate() const;
  nlohmann::json to_json() const;
  static QaoaParams from_json(const nlohmann::json& j);
};

/// Diagonal of H_C in the computational basis.
struct CostDiagonal {
  int n;
  std::vector<double> energies;
};

CostDiagonal build_cost_diagonal(const SpinGlassInstance& inst, int cap = kDefaultEnumerationCap);

/// amplitude_i *= exp(-i gamma E_i)
void apply_cost_layer(Statevector& state, const CostDiagonal& diag, double gamma);
/// exp(-i beta X) on every qubit.
void apply_mixer_layer(Statevector& state, double beta);

/// prod_l U_B(beta_l) U_C(gamma_l) |+>^n
Statevector run_qaoa(const CostDiagonal& diag, const QaoaParams& params);

double energy_expectation(const Statevector& state, const CostDiagonal& diag);

/// Exact gradient of <H_C> w.r.t. (gammas..., betas...) by reverse-mode
/// propagation through the layers. Output layout: [dgamma_1..p, dbeta_1..p].
std::vector<double> energy_gradient(const CostDiagonal& diag, const QaoaParams& params,
                                    double* energy_out = nullptr);

struct OptimizerConfig {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // max-norm
  int max_line_search_steps = 40;
  double armijo_c1 = 1e-4;
};

struct OptimizerStep {
  int iteration;
  double energy;
  double gradient_norm;
};

struct OptimizeResult {
  QaoaParams params;
  double final_energy;
  double initial_energy;
  std::vector<OptimizerStep> trace;
  bool converged;
};

class OptimizationFailure : public std::runtime_error {
 public:
  OptimizationFailure(const std::string& what, std::vector<OptimizerStep> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<OptimizerStep>& trace() const noexcept { return trace_; }

 private:
  std::vector<OptimizerStep> trace_;
};

/// BFGS on <H_C>. Monotone: every accepted step satisfies the Armijo
/// condition, so the returned energy never exceeds the initial one.
OptimizeResult optimize_params(const CostDiagonal& diag, const QaoaParams& init,
                               const OptimizerConfig& config = {});

void write_trace_csv(const std::string& path, const std::vector<OptimizerStep>& trace);

/// i.i.d. computational-basis measurements of `state`.
std::vector<SpinConfiguration> sample_bitstrings(const Statevector& state, std::size_t count,
                                                 std::uint64_t seed);

/// Depth-keyed angle table.
struct AngleTable {
  std::map<int, QaoaParams> entries;
  /// "inverse_sqrt_n": gammas are tabulated for couplings scaled by 1/sqrt(n)
  /// and must be divided by sqrt(n) for unnormalized instances. "none": use as is.
  std::string gamma_scaling = "none";
  std::string provenance;

  static AngleTable load(const std::string& path);
  static AngleTable from_json(const nlohmann::json& j);
};

struct RampFallback {
  double gamma_max;
  double beta_max;
};

/// Tabulated angles for depth p, verbatim. When p is missing: with a fallback,
/// the linear ramp gamma_l = (l/p) gamma_max, beta_l = (1 - l/p) beta_max;
/// without one, NotFoundError.
QaoaParams fixed_angles(int p, const AngleTable& table,
                        const std::optional<RampFallback>& fallback = std::nullopt);

/// Rescales table-unit angles for an n-spin unnormalized instance according to
/// the table's gamma_scaling.
QaoaParams adapt_to_instance(const QaoaParams& table_params, const std::string& gamma_scaling,
                             int n);

/// Path of the bundled SK fixed-angle table.
std::string default_angle_table_path();

}  // namespace qnmc::qsim
