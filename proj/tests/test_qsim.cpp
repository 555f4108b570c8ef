#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <random>

#include "qnmc/errors.hpp"
#include "qnmc/qsim.hpp"

using namespace qnmc;
using namespace qnmc::qsim;
using cd = std::complex<double>;

namespace {

QaoaParams random_params(int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  QaoaParams q;
  for (int l = 0; l < p; ++l) {
    q.gammas.push_back(u(rng));
    q.betas.push_back(u(rng));
  }
  return q;
}

double total_variation(const std::vector<double>& p, const std::vector<SpinConfiguration>& samples) {
  std::vector<double> freq(p.size(), 0.0);
  for (const auto& s : samples) freq[s.index()] += 1.0 / samples.size();
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - freq[i]);
  return 0.5 * tv;
}

}  // namespace

TEST(CostDiagonal, SmallCases) {
  EXPECT_EQ(build_cost_diagonal(generate_instance(1, 0)).energies, (std::vector<double>{0.0, 0.0}));
  const SpinGlassInstance pair(2, 0, {{0, 1, 1.0}});
  EXPECT_EQ(build_cost_diagonal(pair).energies, (std::vector<double>{-1.0, 1.0, 1.0, -1.0}));
  const auto inst = generate_instance(6, 3);
  const auto diag = build_cost_diagonal(inst);
  for (std::uint64_t i = 0; i < 64; ++i) EXPECT_EQ(diag.energies[i], energy(inst, SpinConfiguration(6, i)));
  EXPECT_THROW(build_cost_diagonal(generate_instance(8, 1), 7), ResourceLimitError);
}

TEST(RunQaoa, IdentityCircuitIsUniform) {
  const auto diag = build_cost_diagonal(generate_instance(5, 2));
  const auto state = run_qaoa(diag, {{0.0}, {0.0}});
  for (const auto& a : state.amplitudes()) EXPECT_NEAR(std::abs(a - cd(std::pow(2.0, -2.5), 0.0)), 0.0, 1e-15);
}

TEST(RunQaoa, Unitarity) {
  const auto diag = build_cost_diagonal(generate_instance(8, 9));
  for (std::uint64_t s = 0; s < 10; ++s) EXPECT_NEAR(run_qaoa(diag, random_params(4, s)).norm_squared(), 1.0, 1e-10);
}

TEST(RunQaoa, LengthMismatchRejected) {
  const auto diag = build_cost_diagonal(generate_instance(3, 1));
  EXPECT_THROW(run_qaoa(diag, {{0.1, 0.2}, {0.3}}), InvalidArgument);
}

TEST(RunQaoa, TwoQubitDenseMatrixOracle) {
  const auto inst = generate_instance(2, 77);
  const auto diag = build_cost_diagonal(inst);
  const auto params = random_params(1, 5);
  const double g = params.gammas[0], b = params.betas[0];

  Eigen::Matrix4cd uc = Eigen::Matrix4cd::Zero();
  for (int i = 0; i < 4; ++i) uc(i, i) = std::exp(cd(0, -g * energy(inst, SpinConfiguration(2, i))));
  Eigen::Matrix2cd rx;
  rx << std::cos(b), cd(0, -std::sin(b)), cd(0, -std::sin(b)), std::cos(b);
  Eigen::Matrix4cd ub;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) ub(r, c) = rx(r >> 1, c >> 1) * rx(r & 1, c & 1);
  const Eigen::Vector4cd plus = Eigen::Vector4cd::Constant(0.5);
  const Eigen::Vector4cd expect = ub * uc * plus;

  const auto state = run_qaoa(diag, params);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(std::abs(state.amplitudes()[i] - expect(i)), 0.0, 1e-12);
}

TEST(RunQaoa, CostLayersCompose) {
  const auto diag = build_cost_diagonal(generate_instance(5, 4));
  Statevector a(5), b(5);
  apply_mixer_layer(a, 0.3);
  apply_mixer_layer(b, 0.3);
  apply_cost_layer(a, diag, 0.2);
  apply_cost_layer(a, diag, 0.45);
  apply_cost_layer(b, diag, 0.65);
  for (std::size_t i = 0; i < a.dim(); ++i) EXPECT_NEAR(std::abs(a.amplitudes()[i] - b.amplitudes()[i]), 0.0, 1e-14);
}

TEST(RunQaoa, MixerPeriodicityInProbabilities) {
  const auto diag = build_cost_diagonal(generate_instance(4, 12));
  auto p = random_params(2, 8);
  const auto base = run_qaoa(diag, p).probabilities();
  p.betas[1] += M_PI;
  const auto shifted = run_qaoa(diag, p).probabilities();
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base[i], shifted[i], 1e-12);
}

TEST(EnergyExpectation, Examples) {
  const SpinGlassInstance pair(2, 0, {{0, 1, 1.0}});
  const auto d2 = build_cost_diagonal(pair);
  EXPECT_NEAR(energy_expectation(Statevector(2), d2), 0.0, 1e-15);

  const auto diag = build_cost_diagonal(generate_instance(6, 1));
  for (std::uint64_t i : {0u, 17u, 63u})
    EXPECT_DOUBLE_EQ(energy_expectation(Statevector::basis_state(6, i), diag), diag.energies[i]);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<cd> amps(64);
  double norm = 0.0;
  for (auto& a : amps) {
    a = cd(nd(rng), nd(rng));
    norm += std::norm(a);
  }
  for (auto& a : amps) a /= std::sqrt(norm);
  double expect = 0.0;
  for (int i = 0; i < 64; ++i) expect += std::norm(amps[i]) * diag.energies[i];
  EXPECT_NEAR(energy_expectation(Statevector(6, amps), diag), expect, 1e-12);
  EXPECT_THROW(energy_expectation(Statevector(5), diag), InvalidArgument);
}

TEST(EnergyGradient, MatchesCentralDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto diag = build_cost_diagonal(generate_instance(5, seed));
    const auto params = random_params(3, seed + 10);
    double e0 = 0.0;
    const auto grad = energy_gradient(diag, params, &e0);
    EXPECT_NEAR(e0, energy_expectation(run_qaoa(diag, params), diag), 1e-12);
    const double h = 1e-5;
    for (int k = 0; k < 6; ++k) {
      auto plus = params, minus = params;
      auto& vp = k < 3 ? plus.gammas[k] : plus.betas[k - 3];
      auto& vm = k < 3 ? minus.gammas[k] : minus.betas[k - 3];
      vp += h;
      vm -= h;
      const double fd = (energy_expectation(run_qaoa(diag, plus), diag) -
                         energy_expectation(run_qaoa(diag, minus), diag)) / (2 * h);
      EXPECT_NEAR(grad[k], fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Optimize, StationaryStartIsUnchanged) {
  const auto diag = build_cost_diagonal(generate_instance(4, 6));
  const QaoaParams init{{0.0}, {0.0}};
  const auto res = optimize_params(diag, init);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.params.gammas, init.gammas);
  EXPECT_EQ(res.params.betas, init.betas);
}

TEST(Optimize, TwoQubitGridScanOracle) {
  const SpinGlassInstance pair(2, 0, {{0, 1, 1.0}});
  const auto diag = build_cost_diagonal(pair);
  double grid_min = 1e9;
  const int steps = 200;
  for (int a = 0; a < steps; ++a)
    for (int b = 0; b < steps; ++b) {
      const QaoaParams q{{M_PI * a / steps}, {M_PI * b / steps}};
      grid_min = std::min(grid_min, energy_expectation(run_qaoa(diag, q), diag));
    }
  const auto res = optimize_params(diag, {{0.3}, {-0.3}});
  EXPECT_LE(res.final_energy, -0.5);
  EXPECT_GE(res.final_energy, -1.0 - 1e-12);
  EXPECT_LE(res.final_energy, grid_min + 1e-6);
}

TEST(Optimize, NeverWorseThanFixedAngleStart) {
  const auto table = AngleTable::load(default_angle_table_path());
  const auto inst = generate_instance(6, 2024);
  const auto diag = build_cost_diagonal(inst);
  const auto init = adapt_to_instance(fixed_angles(5, table), table.gamma_scaling, 6);
  const auto res = optimize_params(diag, init);
  const double e_init = energy_expectation(run_qaoa(diag, init), diag);
  EXPECT_NEAR(res.initial_energy, e_init, 1e-12);
  EXPECT_LE(res.final_energy, e_init + 1e-9);
  for (std::size_t i = 1; i < res.trace.size(); ++i) EXPECT_LE(res.trace[i].energy, res.trace[i - 1].energy + 1e-12);
  const auto again = optimize_params(diag, init);
  EXPECT_EQ(again.final_energy, res.final_energy);
}

TEST(Sampling, BasisStateIsDeterministic) {
  const auto samples = sample_bitstrings(Statevector::basis_state(5, 19), 100, 1);
  for (const auto& s : samples) EXPECT_EQ(s.index(), 19u);
}

TEST(Sampling, UniformStateMultinomial) {
  const int n = 4;
  const std::size_t count = 100000;
  const auto samples = sample_bitstrings(Statevector(n), count, 7);
  std::vector<double> hits(16, 0.0);
  for (const auto& s : samples) hits[s.index()] += 1.0;
  const double p = 1.0 / 16, sigma = std::sqrt(count * p * (1 - p));
  for (double h : hits) EXPECT_LT(std::abs(h - count * p), 5 * sigma);
}

TEST(Sampling, SeededAndConverging) {
  const auto table = AngleTable::load(default_angle_table_path());
  const auto diag = build_cost_diagonal(generate_instance(6, 31));
  const auto init = adapt_to_instance(fixed_angles(5, table), table.gamma_scaling, 6);
  const auto state = run_qaoa(diag, optimize_params(diag, init).params);
  const auto probs = state.probabilities();
  const auto a = sample_bitstrings(state, 1000, 3);
  const auto b = sample_bitstrings(state, 1000, 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].index(), b[i].index());
  const double tv_small = total_variation(probs, a);
  const double tv_large = total_variation(probs, sample_bitstrings(state, 100000, 3));
  EXPECT_LT(tv_large, tv_small);
  EXPECT_LT(tv_large, 0.02);
}

TEST(FixedAngles, LookupFallbackAndMissing) {
  const auto table = AngleTable::load(default_angle_table_path());
  ASSERT_TRUE(table.entries.count(5));
  const auto p5 = fixed_angles(5, table);
  EXPECT_EQ(p5.gammas, table.entries.at(5).gammas);
  EXPECT_EQ(p5.betas, table.entries.at(5).betas);

  EXPECT_THROW(fixed_angles(9, table), NotFoundError);
  const auto ramp = fixed_angles(4, AngleTable{}, RampFallback{0.8, -0.6});
  for (int l = 1; l <= 4; ++l) {
    EXPECT_DOUBLE_EQ(ramp.gammas[l - 1], l / 4.0 * 0.8);
    EXPECT_DOUBLE_EQ(ramp.betas[l - 1], (1 - l / 4.0) * -0.6);
  }
}

TEST(FixedAngles, DepthFiveLowersEnergyAtTenSpins) {
  const auto table = AngleTable::load(default_angle_table_path());
  const auto diag = build_cost_diagonal(generate_instance(10, 555));
  const auto params = adapt_to_instance(fixed_angles(5, table), table.gamma_scaling, 10);
  EXPECT_LT(energy_expectation(run_qaoa(diag, params), diag), 0.0);
}

TEST(FixedAngles, ScalingDividesGammasBySqrtN) {
  const QaoaParams p{{0.4, 0.8}, {-0.5, -0.2}};
  const auto a = adapt_to_instance(p, "inverse_sqrt_n", 16);
  EXPECT_DOUBLE_EQ(a.gammas[1], 0.2);
  EXPECT_EQ(a.betas, p.betas);
  EXPECT_EQ(adapt_to_instance(p, "none", 16).gammas, p.gammas);
}
