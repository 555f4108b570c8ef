#include "qnmc/spinglass.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "qnmc/errors.hpp"

namespace qnmc {

SpinConfiguration::SpinConfiguration(int n, std::uint64_t index) : n_(n), index_(index) {
  if (n < 1 || n > kMaxSpins) throw InvalidArgument("SpinConfiguration: n must be in [1, 63]");
  if (index >> n) throw InvalidArgument("SpinConfiguration: index out of range for n");
}

SpinConfiguration SpinConfiguration::from_spins(std::span<const int> spins) {
  std::uint64_t idx = 0;
  for (std::size_t j = 0; j < spins.size(); ++j) {
    if (spins[j] == -1)
      idx |= std::uint64_t{1} << j;
    else if (spins[j] != 1)
      throw InvalidArgument("SpinConfiguration: spins must be +1 or -1");
  }
  return SpinConfiguration(static_cast<int>(spins.size()), idx);
}

std::vector<int> SpinConfiguration::spins() const {
  std::vector<int> s(n_);
  for (int j = 0; j < n_; ++j) s[j] = spin(j);
  return s;
}

std::vector<int> SpinConfiguration::bits() const {
  std::vector<int> b(n_);
  for (int j = 0; j < n_; ++j) b[j] = bit(j);
  return b;
}

SpinConfiguration SpinConfiguration::flipped(int site) const {
  if (site < 0 || site >= n_) throw InvalidArgument("flip site out of range");
  return SpinConfiguration(n_, index_ ^ (std::uint64_t{1} << site));
}

SpinConfiguration SpinConfiguration::global_flip() const {
  const std::uint64_t all = (n_ == 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << n_) - 1);
  return SpinConfiguration(n_, index_ ^ all);
}

SpinGlassInstance::SpinGlassInstance(int n, std::uint64_t seed, std::vector<Coupling> couplings)
    : n_(n), seed_(seed), couplings_(std::move(couplings)) {
  if (n < 1) throw InvalidArgument("SpinGlassInstance: n must be >= 1");
  const auto expected = static_cast<std::size_t>(n) * (n - 1) / 2;
  if (couplings_.size() != expected)
    throw InvalidArgument("SpinGlassInstance: fully connected graph needs n(n-1)/2 couplings");
  std::sort(couplings_.begin(), couplings_.end(),
            [](const Coupling& a, const Coupling& b) { return a.j != b.j ? a.j < b.j : a.k < b.k; });
  dense_.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (std::size_t i = 0; i < couplings_.size(); ++i) {
    auto& c = couplings_[i];
    if (c.j > c.k) std::swap(c.j, c.k);
    if (c.j < 0 || c.k >= n || c.j == c.k) throw InvalidArgument("SpinGlassInstance: bad coupling pair");
    if (!std::isfinite(c.value)) throw InvalidArgument("SpinGlassInstance: non-finite coupling");
    if (i > 0 && couplings_[i - 1].j == c.j && couplings_[i - 1].k == c.k)
      throw InvalidArgument("SpinGlassInstance: duplicate coupling");
    dense_[static_cast<std::size_t>(c.j) * n + c.k] = c.value;
    dense_[static_cast<std::size_t>(c.k) * n + c.j] = c.value;
  }
}

nlohmann::json SpinGlassInstance::to_json() const {
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : couplings_) cs.push_back({c.j, c.k, c.value});
  return {{"n", n_}, {"seed", seed_}, {"couplings", cs}};
}

SpinGlassInstance SpinGlassInstance::from_json(const nlohmann::json& j) {
  std::vector<Coupling> cs;
  for (const auto& t : j.at("couplings"))
    cs.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<double>()});
  return SpinGlassInstance(j.at("n").get<int>(), j.at("seed").get<std::uint64_t>(), std::move(cs));
}

void SpinGlassInstance::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump(1) << '\n';
}

SpinGlassInstance SpinGlassInstance::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("instance file not found: " + path);
  return from_json(nlohmann::json::parse(in));
}

BoltzmannTarget::BoltzmannTarget(const SpinGlassInstance& inst, double beta)
    : instance_(std::make_shared<const SpinGlassInstance>(inst)), beta_(beta) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be finite and >= 0");
}

double BoltzmannTarget::log_weight(const SpinConfiguration& x) const {
  return -beta_ * energy(*instance_, x);
}

SpinGlassInstance generate_instance(int n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("generate_instance: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Coupling> cs;
  cs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int j = 0; j < n; ++j)
    for (int k = j + 1; k < n; ++k) cs.push_back({j, k, normal(rng)});
  return SpinGlassInstance(n, seed, std::move(cs));
}

double energy(const SpinGlassInstance& inst, const SpinConfiguration& x) {
  if (x.size() != inst.size()) throw InvalidArgument("energy: configuration length mismatch");
  double e = 0.0;
  for (const auto& c : inst.couplings()) e -= c.value * x.spin(c.j) * x.spin(c.k);
  return e;
}

double energy_delta(const SpinGlassInstance& inst, const SpinConfiguration& x, int site) {
  const int n = inst.size();
  if (x.size() != n) throw InvalidArgument("energy_delta: configuration length mismatch");
  if (site < 0 || site >= n) throw InvalidArgument("energy_delta: site out of range");
  double field = 0.0;
  for (int k = 0; k < n; ++k)
    if (k != site) field += inst.coupling(site, k) * x.spin(k);
  return 2.0 * x.spin(site) * field;
}

std::vector<double> enumerate_energies(const SpinGlassInstance& inst, int cap) {
  const int n = inst.size();
  if (n > cap)
    throw ResourceLimitError("enumeration of " + std::to_string(n) + " spins exceeds cap " +
                             std::to_string(cap));
  const std::uint64_t dim = std::uint64_t{1} << n;
  std::vector<double> e(dim);
  for (std::uint64_t i = 0; i < dim; ++i) e[i] = energy(inst, SpinConfiguration(n, i));
  return e;
}

PartitionResult exact_partition(const BoltzmannTarget& target, int cap) {
  const auto energies = enumerate_energies(target.instance(), cap);
  const double beta = target.beta();
  const double emin = *std::min_element(energies.begin(), energies.end());

  PartitionResult r;
  r.min_energy = emin;
  r.probabilities.resize(energies.size());
  r.log_probabilities.resize(energies.size());

  // Neumaier summation in index order keeps the result independent of any
  // future parallel split.
  double sum = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < energies.size(); ++i) {
    const double w = std::exp(-beta * (energies[i] - emin));
    r.probabilities[i] = w;
    const double t = sum + w;
    comp += (std::abs(sum) >= std::abs(w)) ? (sum - t) + w : (w - t) + sum;
    sum = t;
  }
  sum += comp;
  const double log_sum = std::log(sum);
  for (std::size_t i = 0; i < energies.size(); ++i) {
    r.probabilities[i] /= sum;
    r.log_probabilities[i] = -beta * (energies[i] - emin) - log_sum;
  }
  r.log_z = -beta * emin + log_sum;
  r.z = std::exp(r.log_z);
  return r;
}

}  // namespace qnmc
