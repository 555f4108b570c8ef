#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qnmc/mcmc.hpp"
#include "qnmc/spinglass.hpp"

namespace qnmc::analysis {

inline constexpr int kDenseMatrixCap = 14;
inline constexpr std::size_t kDefaultBurnIn = 10000;

/// Dense MH kernel, P(row -> col). Rows sum to 1.
struct TransitionMatrix {
  int n = 0;
  Eigen::MatrixXd entries;
};

/// Off-diagonal P(x'|x) = Q(x'|x) A(x'|x) with Q evaluated exactly; the
/// diagonal collects rejected and self-proposed mass.
TransitionMatrix build_transition_matrix(const BoltzmannTarget& target, const mcmc::Proposal& q,
                                         int cap = kDenseMatrixCap);

/// max_{i,j} |pi_i P_ij - pi_j P_ji|
double detailed_balance_residual(const TransitionMatrix& p, std::span<const double> pi);
/// || pi P - pi ||_1
double stationarity_residual(const TransitionMatrix& p, std::span<const double> pi);
/// max_i |sum_j P_ij - 1|
double row_sum_residual(const TransitionMatrix& p);

struct SpectralReport {
  double lambda1;
  double lambda2_modulus;
  double gap;  // 1 - |lambda2|, clamped to [0, 1]
  std::string eigen_method;
};

/// Symmetrizes S = D^{1/2} P D^{-1/2}, D = diag(pi), and solves the dense
/// symmetric eigenproblem. Throws InconsistencyError when P is not reversible
/// w.r.t. pi (beyond 1e-8) or the top eigenvalue is not 1 (within 1e-9).
SpectralReport spectral_gap(const TransitionMatrix& p, std::span<const double> log_pi);
SpectralReport spectral_gap(const TransitionMatrix& p, const BoltzmannTarget& target);

double magnetization(const SpinConfiguration& x);
double magnetization(std::uint64_t index, int n);

struct MagnetizationSeries {
  std::vector<double> values;
  std::vector<double> running_mean;
  /// (running mean)^2, the squared estimator m-hat^2 after t+1 samples.
  std::vector<double> running_mhat2;
  std::size_t burn_in = 0;
};

/// Running statistics start at states[burn_in].
MagnetizationSeries magnetization_series(const mcmc::Chain& chain, std::size_t burn_in = 0);

struct AggregatedCurve {
  std::vector<double> mean;
  std::vector<double> stddev;  // sample standard deviation across chains
};

/// Per-step mean and spread of the chains' m-hat^2 curves.
AggregatedCurve aggregate_mhat2(std::span<const MagnetizationSeries> series);

struct HistogramBin {
  double m_value;
  std::uint64_t count;
};

/// One bin per attainable value m = -1 + 2k/n, k = 0..n, ascending.
std::vector<HistogramBin> magnetization_histogram(const mcmc::Chain& chain, std::size_t burn_in);

/// Normalized autocorrelation c(tau), tau = 0..max_lag, over series[burn_in:].
std::vector<double> autocorrelation(std::span<const double> series, std::size_t burn_in,
                                    std::size_t max_lag);

/// Multi-chain c(tau): mean and variance pooled over every chain's
/// post-burn-in samples, so chains trapped in different basins stay
/// correlated instead of being centred on their own means.
std::vector<double> pooled_autocorrelation(std::span<const std::vector<double>> series, std::size_t burn_in,
                                           std::size_t max_lag);

/// First lag with c(tau) < threshold, or c.size() when none.
std::size_t decay_lag(std::span<const double> c, double threshold);

/// Exact sum_x mu(x) m(x) by enumeration.
double exact_mean_magnetization(const BoltzmannTarget& target, int cap = kDefaultEnumerationCap);

}  // namespace qnmc::analysis
