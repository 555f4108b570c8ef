#include "qnmc/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "qnmc/errors.hpp"

namespace qnmc::analysis {

namespace {

constexpr double kReversibilityTolerance = 1e-8;
constexpr double kTopEigenvalueTolerance = 1e-9;

std::vector<double> normalized_from_log(std::span<const double> log_pi) {
  const double mx = *std::max_element(log_pi.begin(), log_pi.end());
  std::vector<double> pi(log_pi.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) s += (pi[i] = std::exp(log_pi[i] - mx));
  for (auto& v : pi) v /= s;
  return pi;
}

}  // namespace

TransitionMatrix build_transition_matrix(const BoltzmannTarget& target, const mcmc::Proposal& q, int cap) {
  const int n = target.size();
  if (n > cap)
    throw ResourceLimitError("dense transition matrix for n = " + std::to_string(n) + " exceeds cap " +
                             std::to_string(cap));
  const auto energies = enumerate_energies(target.instance(), cap);
  const auto dim = static_cast<Eigen::Index>(energies.size());
  std::vector<double> lw(energies.size());
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = -target.beta() * energies[i];

  TransitionMatrix tm{n, Eigen::MatrixXd::Zero(dim, dim)};
  auto& p = tm.entries;

  switch (mcmc::kind_of(q)) {
    case mcmc::ProposalKind::kSsf: {
      const double qv = 1.0 / n;
      for (Eigen::Index i = 0; i < dim; ++i)
        for (int s = 0; s < n; ++s) {
          const Eigen::Index k = i ^ (Eigen::Index{1} << s);
          p(i, k) = qv * std::min(1.0, std::exp(lw[k] - lw[i]));
        }
      break;
    }
    case mcmc::ProposalKind::kUniform: {
      const double qv = std::ldexp(1.0, -n);
      for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index k = 0; k < dim; ++k)
          if (k != i) p(i, k) = qv * std::min(1.0, std::exp(lw[k] - lw[i]));
      break;
    }
    case mcmc::ProposalKind::kGns: {
      const auto& g = std::get<mcmc::GnsProposal>(q);
      if (!g.model || g.model->input_dim() != n)
        throw InvalidArgument("build_transition_matrix: GNS model dimension does not match spin count");
      const auto lp = made::enumerate_log_probs(*g.model);
      // p(k) min(1, pi_k p_i / (pi_i p_k)) in log form.
      for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index k = 0; k < dim; ++k)
          if (k != i) p(i, k) = std::exp(std::min(lp[k], lw[k] - lw[i] + lp[i]));
      break;
    }
  }
  for (Eigen::Index i = 0; i < dim; ++i) p(i, i) = 1.0 - p.row(i).sum();
  return tm;
}

double detailed_balance_residual(const TransitionMatrix& p, std::span<const double> pi) {
  const auto& m = p.entries;
  if (static_cast<Eigen::Index>(pi.size()) != m.rows()) throw InvalidArgument("detailed_balance_residual: size mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      worst = std::max(worst, std::abs(pi[i] * m(i, j) - pi[j] * m(j, i)));
  return worst;
}

double stationarity_residual(const TransitionMatrix& p, std::span<const double> pi) {
  const auto& m = p.entries;
  if (static_cast<Eigen::Index>(pi.size()) != m.rows()) throw InvalidArgument("stationarity_residual: size mismatch");
  const Eigen::Map<const Eigen::RowVectorXd> row(pi.data(), static_cast<Eigen::Index>(pi.size()));
  return (row * m - row).lpNorm<1>();
}

double row_sum_residual(const TransitionMatrix& p) {
  return (p.entries.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

SpectralReport spectral_gap(const TransitionMatrix& p, std::span<const double> log_pi) {
  const auto& m = p.entries;
  const Eigen::Index dim = m.rows();
  if (static_cast<Eigen::Index>(log_pi.size()) != dim || m.cols() != dim)
    throw InvalidArgument("spectral_gap: size mismatch");

  const auto pi = normalized_from_log(log_pi);
  if (const double r = detailed_balance_residual(p, pi); r > kReversibilityTolerance)
    throw InconsistencyError("spectral_gap: kernel violates detailed balance (residual " + std::to_string(r) + ")");

  // S_ij = P_ij sqrt(pi_i / pi_j), formed in log space to survive extreme
  // weight ratios at low temperature.
  Eigen::MatrixXd s(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j)
      s(i, j) = m(i, j) > 0.0 ? std::exp(std::log(m(i, j)) + 0.5 * (log_pi[i] - log_pi[j])) : 0.0;
  const Eigen::MatrixXd sym = 0.5 * (s + s.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw InconsistencyError("spectral_gap: eigensolver failed");
  const auto& ev = solver.eigenvalues();  // ascending
  const double lambda1 = ev[dim - 1];
  if (std::abs(lambda1 - 1.0) > kTopEigenvalueTolerance)
    throw InconsistencyError("spectral_gap: top eigenvalue " + std::to_string(lambda1) + " != 1");

  double l2 = 0.0;
  if (dim > 1) l2 = std::max(std::abs(ev[dim - 2]), std::abs(ev[0]));
  return {lambda1, l2, std::clamp(1.0 - l2, 0.0, 1.0), "dense-symmetric"};
}

SpectralReport spectral_gap(const TransitionMatrix& p, const BoltzmannTarget& target) {
  const auto part = exact_partition(target);
  return spectral_gap(p, part.log_probabilities);
}

double magnetization(std::uint64_t index, int n) {
  const int down = std::popcount(index);
  return static_cast<double>(n - 2 * down) / n;
}

double magnetization(const SpinConfiguration& x) { return magnetization(x.index(), x.size()); }

MagnetizationSeries magnetization_series(const mcmc::Chain& chain, std::size_t burn_in) {
  if (chain.states.empty()) throw InvalidArgument("magnetization_series: empty chain");
  if (burn_in >= chain.states.size()) throw InvalidArgument("magnetization_series: burn-in covers the whole chain");
  MagnetizationSeries s;
  s.burn_in = burn_in;
  s.values.reserve(chain.states.size());
  for (auto idx : chain.states) s.values.push_back(magnetization(idx, chain.n));
  double acc = 0.0;
  for (std::size_t t = burn_in; t < s.values.size(); ++t) {
    acc += s.values[t];
    const double mean = acc / static_cast<double>(t - burn_in + 1);
    s.running_mean.push_back(mean);
    s.running_mhat2.push_back(mean * mean);
  }
  return s;
}

AggregatedCurve aggregate_mhat2(std::span<const MagnetizationSeries> series) {
  AggregatedCurve out;
  if (series.empty()) return out;
  std::size_t len = series.front().running_mhat2.size();
  for (const auto& s : series) len = std::min(len, s.running_mhat2.size());
  const double k = static_cast<double>(series.size());
  out.mean.resize(len);
  out.stddev.resize(len);
  for (std::size_t t = 0; t < len; ++t) {
    double sum = 0.0;
    for (const auto& s : series) sum += s.running_mhat2[t];
    const double mean = sum / k;
    double ss = 0.0;
    for (const auto& s : series) ss += (s.running_mhat2[t] - mean) * (s.running_mhat2[t] - mean);
    out.mean[t] = mean;
    out.stddev[t] = series.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
  }
  return out;
}

std::vector<HistogramBin> magnetization_histogram(const mcmc::Chain& chain, std::size_t burn_in) {
  if (chain.states.size() <= burn_in) throw InvalidArgument("magnetization_histogram: chain not longer than burn-in");
  const int n = chain.n;
  std::vector<HistogramBin> bins(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) bins[k] = {-1.0 + 2.0 * k / n, 0};
  for (std::size_t t = burn_in; t < chain.states.size(); ++t) ++bins[n - std::popcount(chain.states[t])].count;
  return bins;
}

std::vector<double> autocorrelation(std::span<const double> series, std::size_t burn_in, std::size_t max_lag) {
  if (series.size() <= burn_in || series.size() - burn_in <= max_lag)
    throw InvalidArgument("autocorrelation: series too short for burn-in and max_lag");
  const auto m = series.subspan(burn_in);
  const std::size_t len = m.size();
  if (std::all_of(m.begin(), m.end(), [&](double v) { return v == m.front(); }))
    throw UndefinedAutocorrelation("autocorrelation: zero-variance series");

  double mean = 0.0, sq = 0.0;
  for (double v : m) {
    mean += v;
    sq += v * v;
  }
  mean /= static_cast<double>(len);
  sq /= static_cast<double>(len);
  const double var = sq - mean * mean;
  if (!(var > 0.0)) throw UndefinedAutocorrelation("autocorrelation: zero-variance series");

  std::vector<double> c(max_lag + 1);
  c[0] = 1.0;
  for (std::size_t tau = 1; tau <= max_lag; ++tau) {
    double s = 0.0;
    for (std::size_t t = 0; t + tau < len; ++t) s += m[t + tau] * m[t];
    s /= static_cast<double>(len - tau);
    c[tau] = (s - mean * mean) / var;
  }
  return c;
}

std::vector<double> pooled_autocorrelation(std::span<const std::vector<double>> series, std::size_t burn_in,
                                           std::size_t max_lag) {
  if (series.empty()) throw InvalidArgument("pooled_autocorrelation: no chains");
  double mean = 0.0, sq = 0.0, count = 0.0;
  for (const auto& v : series) {
    if (v.size() <= burn_in || v.size() - burn_in <= max_lag)
      throw InvalidArgument("pooled_autocorrelation: series too short for burn-in and max_lag");
    for (std::size_t t = burn_in; t < v.size(); ++t) {
      mean += v[t];
      sq += v[t] * v[t];
    }
    count += static_cast<double>(v.size() - burn_in);
  }
  const double first = series.front()[burn_in];
  const bool constant = std::all_of(series.begin(), series.end(), [&](const std::vector<double>& v) {
    return std::all_of(v.begin() + static_cast<std::ptrdiff_t>(burn_in), v.end(), [&](double x) { return x == first; });
  });
  mean /= count;
  const double var = sq / count - mean * mean;
  if (constant || !(var > 0.0)) throw UndefinedAutocorrelation("pooled_autocorrelation: zero-variance series");

  std::vector<double> c(max_lag + 1);
  c[0] = 1.0;
  for (std::size_t tau = 1; tau <= max_lag; ++tau) {
    double s = 0.0, pairs = 0.0;
    for (const auto& v : series) {
      for (std::size_t t = burn_in; t + tau < v.size(); ++t) s += v[t + tau] * v[t];
      pairs += static_cast<double>(v.size() - burn_in - tau);
    }
    c[tau] = (s / pairs - mean * mean) / var;
  }
  return c;
}

std::size_t decay_lag(std::span<const double> c, double threshold) {
  for (std::size_t t = 0; t < c.size(); ++t)
    if (c[t] < threshold) return t;
  return c.size();
}

double exact_mean_magnetization(const BoltzmannTarget& target, int cap) {
  const auto part = exact_partition(target, cap);
  double m = 0.0;
  for (std::size_t i = 0; i < part.probabilities.size(); ++i) m += part.probabilities[i] * magnetization(i, target.size());
  return m;
}

}  // namespace qnmc::analysis
