#include "qnmc/qsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

#include "qnmc/errors.hpp"

namespace qnmc::qsim {

namespace {

constexpr Amplitude kI{0.0, 1.0};

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// sum_j X_j |state>
std::vector<Amplitude> apply_mixer_hamiltonian(const Statevector& state) {
  const auto& a = state.amplitudes();
  std::vector<Amplitude> out(a.size(), Amplitude{0.0, 0.0});
  for (int j = 0; j < state.num_qubits(); ++j) {
    const std::size_t bit = std::size_t{1} << j;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i ^ bit];
  }
  return out;
}

// Im <lambda | v>
double imag_inner(const std::vector<Amplitude>& lambda, const std::vector<Amplitude>& v) {
  Amplitude s{0.0, 0.0};
  for (std::size_t i = 0; i < v.size(); ++i) s += std::conj(lambda[i]) * v[i];
  return s.imag();
}

QaoaParams unpack(const std::vector<double>& x, int p) {
  QaoaParams q;
  q.gammas.assign(x.begin(), x.begin() + p);
  q.betas.assign(x.begin() + p, x.end());
  return q;
}

std::vector<double> pack(const QaoaParams& q) {
  std::vector<double> x = q.gammas;
  x.insert(x.end(), q.betas.begin(), q.betas.end());
  return x;
}

}  // namespace

Statevector::Statevector(int n) : n_(n) {
  if (n < 1 || n > 30) throw InvalidArgument("Statevector: qubit count must be in [1, 30]");
  const std::size_t dim = std::size_t{1} << n;
  amps_.assign(dim, Amplitude{1.0 / std::sqrt(static_cast<double>(dim)), 0.0});
}

Statevector::Statevector(int n, std::vector<Amplitude> amplitudes) : n_(n), amps_(std::move(amplitudes)) {
  if (n < 1 || n > 30) throw InvalidArgument("Statevector: qubit count must be in [1, 30]");
  if (amps_.size() != (std::size_t{1} << n)) throw InvalidArgument("Statevector: need 2^n amplitudes");
}

Statevector Statevector::basis_state(int n, std::uint64_t index) {
  std::vector<Amplitude> a(std::size_t{1} << n, Amplitude{0.0, 0.0});
  if (index >= a.size()) throw InvalidArgument("basis_state: index out of range");
  a[index] = 1.0;
  return Statevector(n, std::move(a));
}

double Statevector::norm_squared() const {
  double s = 0.0;
  for (const auto& a : amps_) s += std::norm(a);
  return s;
}

std::vector<double> Statevector::probabilities() const {
  std::vector<double> p(amps_.size());
  for (std::size_t i = 0; i < amps_.size(); ++i) p[i] = std::norm(amps_[i]);
  return p;
}

void QaoaParams::validate() const {
  if (gammas.empty()) throw InvalidArgument("QaoaParams: depth must be >= 1");
  if (gammas.size() != betas.size()) throw InvalidArgument("QaoaParams: gammas/betas length mismatch");
}

nlohmann::json QaoaParams::to_json() const { return {{"gammas", gammas}, {"betas", betas}}; }

QaoaParams QaoaParams::from_json(const nlohmann::json& j) {
  QaoaParams q{j.at("gammas").get<std::vector<double>>(), j.at("betas").get<std::vector<double>>()};
  q.validate();
  return q;
}

CostDiagonal build_cost_diagonal(const SpinGlassInstance& inst, int cap) {
  return CostDiagonal{inst.size(), enumerate_energies(inst, cap)};
}

void apply_cost_layer(Statevector& state, const CostDiagonal& diag, double gamma) {
  auto& a = state.amplitudes();
  if (diag.energies.size() != a.size()) throw InvalidArgument("cost layer: dimension mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= std::polar(1.0, -gamma * diag.energies[i]);
}

void apply_mixer_layer(Statevector& state, double beta) {
  auto& a = state.amplitudes();
  const double c = std::cos(beta);
  const Amplitude ms = -kI * std::sin(beta);
  for (int j = 0; j < state.num_qubits(); ++j) {
    const std::size_t bit = std::size_t{1} << j;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (i & bit) continue;
      const Amplitude a0 = a[i], a1 = a[i | bit];
      a[i] = c * a0 + ms * a1;
      a[i | bit] = ms * a0 + c * a1;
    }
  }
}

Statevector run_qaoa(const CostDiagonal& diag, const QaoaParams& params) {
  params.validate();
  Statevector state(diag.n);
  if (diag.energies.size() != state.dim()) throw InvalidArgument("run_qaoa: cost diagonal size mismatch");
  for (int l = 0; l < params.depth(); ++l) {
    apply_cost_layer(state, diag, params.gammas[l]);
    apply_mixer_layer(state, params.betas[l]);
  }
  return state;
}

double energy_expectation(const Statevector& state, const CostDiagonal& diag) {
  if (diag.energies.size() != state.dim()) throw InvalidArgument("energy_expectation: dimension mismatch");
  double e = 0.0;
  const auto& a = state.amplitudes();
  for (std::size_t i = 0; i < a.size(); ++i) e += std::norm(a[i]) * diag.energies[i];
  return e;
}

std::vector<double> energy_gradient(const CostDiagonal& diag, const QaoaParams& params,
                                    double* energy_out) {
  const int p = params.depth();
  Statevector phi = run_qaoa(diag, params);
  if (energy_out) *energy_out = energy_expectation(phi, diag);

  // lambda = H_C |psi>, then both vectors are walked back layer by layer.
  Statevector lambda = phi;
  for (std::size_t i = 0; i < lambda.dim(); ++i) lambda.amplitudes()[i] *= diag.energies[i];

  std::vector<double> grad(2 * static_cast<std::size_t>(p));
  for (int l = p - 1; l >= 0; --l) {
    grad[p + l] = 2.0 * imag_inner(lambda.amplitudes(), apply_mixer_hamiltonian(phi));
    apply_mixer_layer(phi, -params.betas[l]);
    apply_mixer_layer(lambda, -params.betas[l]);

    std::vector<Amplitude> hphi(phi.amplitudes());
    for (std::size_t i = 0; i < hphi.size(); ++i) hphi[i] *= diag.energies[i];
    grad[l] = 2.0 * imag_inner(lambda.amplitudes(), hphi);
    apply_cost_layer(phi, diag, -params.gammas[l]);
    apply_cost_layer(lambda, diag, -params.gammas[l]);
  }
  return grad;
}

OptimizeResult optimize_params(const CostDiagonal& diag, const QaoaParams& init,
                               const OptimizerConfig& config) {
  init.validate();
  const int p = init.depth();
  const std::size_t dim = 2 * static_cast<std::size_t>(p);

  auto evaluate = [&](const std::vector<double>& x, double& f) {
    auto g = energy_gradient(diag, unpack(x, p), &f);
    return g;
  };

  std::vector<OptimizerStep> trace;
  std::vector<double> x = pack(init);
  double f = 0.0;
  std::vector<double> g = evaluate(x, f);
  if (!std::isfinite(f)) throw OptimizationFailure("non-finite objective at initial point", trace);
  trace.push_back({0, f, max_abs(g)});
  const double f0 = f;

  // Inverse Hessian approximation, row-major.
  std::vector<double> h(dim * dim, 0.0);
  auto reset_h = [&] {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t i = 0; i < dim; ++i) h[i * dim + i] = 1.0;
  };
  reset_h();
  bool fresh = true;
  bool converged = max_abs(g) < config.gradient_tolerance;

  for (int it = 1; it <= config.max_iterations && !converged; ++it) {
    std::vector<double> d(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) d[i] -= h[i * dim + j] * g[j];
    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      reset_h();
      fresh = true;
      for (std::size_t i = 0; i < dim; ++i) d[i] = -g[i];
      slope = dot(g, d);
    }
    // Unscaled steepest-descent steps are capped at 0.1 rad per angle.
    double t = fresh ? std::min(1.0, 0.1 / max_abs(d)) : 1.0;

    std::vector<double> xn(dim), gn;
    double fn = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < config.max_line_search_steps; ++ls) {
      for (std::size_t i = 0; i < dim; ++i) xn[i] = x[i] + t * d[i];
      gn = evaluate(xn, fn);
      if (!std::isfinite(fn)) throw OptimizationFailure("non-finite objective during line search", trace);
      if (fn <= f + config.armijo_c1 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // no further decrease resolvable

    std::vector<double> s(dim), y(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      s[i] = xn[i] - x[i];
      y[i] = gn[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12) {
      if (fresh) {
        // Shanno scaling of the initial inverse Hessian.
        const double scale = sy / dot(y, y);
        for (auto& v : h) v *= scale;
      }
      std::vector<double> hy(dim, 0.0);
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) hy[i] += h[i * dim + j] * y[j];
      const double yhy = dot(y, hy);
      const double rho = 1.0 / sy;
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j)
          h[i * dim + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
      fresh = false;
    }
    x = std::move(xn);
    g = std::move(gn);
    f = fn;
    trace.push_back({it, f, max_abs(g)});
    converged = max_abs(g) < config.gradient_tolerance;
  }

  return OptimizeResult{unpack(x, p), f, f0, std::move(trace), converged};
}

void write_trace_csv(const std::string& path, const std::vector<OptimizerStep>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration,energy,gradient_norm\n" << std::setprecision(17);
  for (const auto& s : trace) out << s.iteration << ',' << s.energy << ',' << s.gradient_norm << '\n';
}

std::vector<SpinConfiguration> sample_bitstrings(const Statevector& state, std::size_t count,
                                                 std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("sample_bitstrings: count must be >= 1");
  const auto probs = state.probabilities();
  std::vector<double> cdf(probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) cdf[i] = (acc += probs[i]);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<SpinConfiguration> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const double u = unif(rng) * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    out.emplace_back(state.num_qubits(), idx);
  }
  return out;
}

AngleTable AngleTable::from_json(const nlohmann::json& j) {
  AngleTable t;
  t.gamma_scaling = j.value("gamma_scaling", std::string("none"));
  if (t.gamma_scaling != "none" && t.gamma_scaling != "inverse_sqrt_n")
    throw InvalidArgument("angle table: unknown gamma_scaling '" + t.gamma_scaling + "'");
  t.provenance = j.value("provenance", std::string());
  for (const auto& [key, val] : j.at("depths").items()) {
    const int p = std::stoi(key);
    auto q = QaoaParams::from_json(val);
    if (q.depth() != p) throw InvalidArgument("angle table: entry " + key + " has wrong length");
    t.entries.emplace(p, std::move(q));
  }
  return t;
}

AngleTable AngleTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("angle table not found: " + path);
  return from_json(nlohmann::json::parse(in));
}

QaoaParams fixed_angles(int p, const AngleTable& table, const std::optional<RampFallback>& fallback) {
  if (p < 1) throw InvalidArgument("fixed_angles: depth must be >= 1");
  if (auto it = table.entries.find(p); it != table.entries.end()) return it->second;
  if (!fallback)
    throw NotFoundError("no fixed angles for depth " + std::to_string(p) +
                        "; add the depth to the angle table or enable the linear-ramp fallback");
  QaoaParams q;
  for (int l = 1; l <= p; ++l) {
    const double frac = static_cast<double>(l) / p;
    q.gammas.push_back(frac * fallback->gamma_max);
    q.betas.push_back((1.0 - frac) * fallback->beta_max);
  }
  return q;
}

QaoaParams adapt_to_instance(const QaoaParams& table_params, const std::string& gamma_scaling, int n) {
  QaoaParams q = table_params;
  if (gamma_scaling == "inverse_sqrt_n") {
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& g : q.gammas) g *= s;
  } else if (gamma_scaling != "none") {
    throw InvalidArgument("unknown gamma_scaling '" + gamma_scaling + "'");
  }
  return q;
}

std::string default_angle_table_path() { return std::string(QNMC_DATA_DIR) + "/sk_fixed_angles.json"; }

}  // namespace qnmc::qsim
