#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace qnmc {

/// Largest system the exact (enumerating) routines accept unless overridden.
inline constexpr int kDefaultEnumerationCap = 20;

/// Spin configuration with the project-wide bit convention:
/// bit j of `index` is spin j, and bit 0 <=> spin +1, bit 1 <=> spin -1.
/// The same convention is used for qubits (Z eigenvalue +1 <=> |0>) and for
/// MADE inputs.
class SpinConfiguration {
 public:
  static constexpr int kMaxSpins = 63;

  SpinConfiguration(int n, std::uint64_t index);
  static SpinConfiguration from_spins(std::span<const int> spins);

  int size() const noexcept { return n_; }
  std::uint64_t index() const noexcept { return index_; }
  int spin(int j) const noexcept { return ((index_ >> j) & 1U) ? -1 : +1; }
  int bit(int j) const noexcept { return static_cast<int>((index_ >> j) & 1U); }
  std::vector<int> spins() const;
  std::vector<int> bits() const;

  SpinConfiguration flipped(int site) const;
  SpinConfiguration global_flip() const;

  friend bool operator==(const SpinConfiguration&, const SpinConfiguration&) = default;

 private:
  int n_;
  std::uint64_t index_;
};

struct Coupling {
  int j;
  int k;
  double value;
};

/// Fully connected Ising spin glass, E(x) = -sum_{j<k} J_jk x_j x_k.
/// Couplings are drawn N(0, 1) with no 1/sqrt(n) scaling.
class SpinGlassInstance {
 public:
  SpinGlassInstance(int n, std::uint64_t seed, std::vector<Coupling> couplings);

  int size() const noexcept { return n_; }
  std::uint64_t seed() const noexcept { return seed_; }
  /// Couplings in (0,1), (0,2), ..., (n-2,n-1) order.
  const std::vector<Coupling>& couplings() const noexcept { return couplings_; }
  double coupling(int j, int k) const { return dense_[static_cast<std::size_t>(j) * n_ + k]; }

  nlohmann::json to_json() const;
  static SpinGlassInstance from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static SpinGlassInstance load(const std::string& path);

 private:
  int n_;
  std::uint64_t seed_;
  std::vector<Coupling> couplings_;
  std::vector<double> dense_;  // symmetric n x n, zero diagonal
};

/// Boltzmann distribution exp(-beta E) / Z over an instance (k_B = 1).
class BoltzmannTarget {
 public:
  BoltzmannTarget(const SpinGlassInstance& inst, double beta);

  const SpinGlassInstance& instance() const noexcept { return *instance_; }
  double beta() const noexcept { return beta_; }
  int size() const noexcept { return instance_->size(); }

  /// -beta E(x), the unnormalized log density.
  double log_weight(const SpinConfiguration& x) const;

 private:
  std::shared_ptr<const SpinGlassInstance> instance_;
  double beta_;
};

SpinGlassInstance generate_instance(int n, std::uint64_t seed);

double energy(const SpinGlassInstance& inst, const SpinConfiguration& x);

/// E(x with `site` flipped) - E(x), in O(n).
double energy_delta(const SpinGlassInstance& inst, const SpinConfiguration& x, int site);

/// Energies of all 2^n configurations, indexed by configuration index.
std::vector<double> enumerate_energies(const SpinGlassInstance& inst,
                                       int cap = kDefaultEnumerationCap);

struct PartitionResult {
  double log_z;
  double z;             // exp(log_z); may be inf for large beta * |E_min|
  double min_energy;
  std::vector<double> probabilities;
  std::vector<double> log_probabilities;
};

PartitionResult exact_partition(const BoltzmannTarget& target,
                                int cap = kDefaultEnumerationCap);

}  // namespace qnmc
