#include <gtest/gtest.h>

#include "cavcool/lindblad.hpp"

using namespace cavcool;

namespace {

DriveParams fig2_drive() { return DriveParams::uniform(2, 7.0, 70.0, -70.0, 700.0, 10.0, 1.0); }

EffectiveModel make_model(const SpinHamiltonian& h0, const DriveParams& p, FockCutoffs cut) {
  return assemble_model(h0, build_effective_operators(p, h0.sites()), p, cut);
}

DriveParams undriven(int n) { return DriveParams::uniform(n, 0.0, 0.0, 0.0, 700.0, 0.0, 1.0); }

}  // namespace

TEST(EvolveDensity, EmptyCavityPhotonDecaysExponentially) {
  const auto h0 = two_spin_model(10.0, 5.0);
  const auto m = make_model(h0, undriven(2), {2, 2});
  const auto eig = diagonalize(h0);
  const auto grid = uniform_grid(0.0, 10.0, 0.1);
  const auto r = evolve_density(m, eig, eigenstate(m, eig, {0, 1, 0}), grid);
  const auto n1 = r.photon_number(1);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) worst = std::max(worst, std::abs(n1[i] - std::exp(-grid[i])));
  EXPECT_LE(worst, 1e-6);
  for (double n : r.photon_number(2)) EXPECT_LE(std::abs(n), 1e-12);
}

TEST(EvolveDensity, ZeroGeneratorIsIdentity) {
  const auto h0 = SpinHamiltonian::from_terms(2, {});
  auto p = undriven(2);
  p.kappa = 0.0;
  const auto m = make_model(h0, p, {1, 1});
  const auto eig = diagonalize(h0);
  const auto rho0 = labeled_mixture(m, eig, {{{0, 0, 0}, 0.5}, {{1, 1, 0}, 0.3}, {{3, 1, 1}, 0.2}});
  const auto grid = uniform_grid(0.0, 50.0, 5.0);
  const auto r = evolve_density(m, eig, rho0, grid);
  EXPECT_EQ((r.final_state.rho - rho0.rho).cwiseAbs().maxCoeff(), 0.0);
}

TEST(EvolveDensity, InvariantsOnFig2Run) {
  const auto h0 = two_spin_model(10.0, 5.0);
  auto p = fig2_drive();
  p.gamma = 1.0;
  p.nbar = 0.05;
  const auto m = make_model(h0, p, {2, 2});
  const auto eig = diagonalize(h0);
  const auto grid = uniform_grid(0.0, 30.0, 0.5);
  const auto r = evolve_density(m, eig, eigenstate(m, eig, {3, 0, 0}), grid);
  ASSERT_EQ(r.times.size(), grid.size());
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    EXPECT_LE(r.trace_errors[i], 1e-8);
    EXPECT_LE(r.hermiticity_errors[i], 1e-10);
    EXPECT_GE(r.min_eigenvalues[i], -1e-8);
    double sum = 0.0;
    for (double x : r.populations[i]) {
      EXPECT_GE(x, -1e-9);
      EXPECT_LE(x, 1.0 + 1e-9);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-8);
  }
  EXPECT_TRUE(r.final_state.valid());
}

TEST(EvolveDensity, TruncationMonitorFlagsSmallCutoff) {
  const auto h0 = two_spin_model(10.0, 5.0);
  auto p = undriven(2);
  p.nbar = 2.0;
  const auto m = make_model(h0, p, {1, 1});
  const auto eig = diagonalize(h0);
  const auto r = evolve_density(m, eig, eigenstate(m, eig, {0, 0, 0}), uniform_grid(0.0, 5.0, 1.0));
  EXPECT_TRUE(r.truncation_flagged);
  EXPECT_GT(r.truncation_monitor, 0.1);
  EXPECT_NE(r.truncation_guidance().find("raise the photon cutoff"), std::string::npos);
}

TEST(EvolveDensity, RejectsInvalidInputs) {
  const auto h0 = two_spin_model(10.0, 5.0);
  const auto m = make_model(h0, fig2_drive(), {1, 1});
  const auto eig = diagonalize(h0);
  DensityState bad{Mat::Identity(m.dimension(), m.dimension()), 0.0};
  EXPECT_THROW(evolve_density(m, eig, bad, uniform_grid(0.0, 1.0, 0.5)), Error);
  const auto good = eigenstate(m, eig, {0, 0, 0});
  const std::vector<double> backwards{0.0, 1.0, 0.5};
  EXPECT_THROW(evolve_density(m, eig, good, backwards), Error);
}

TEST(Liouvillian, SuperoperatorMatchesApply) {
  const auto h0 = two_spin_model(10.0, 5.0);
  auto p = fig2_drive();
  p.gamma = 1.0;
  p.nbar = 0.1;
  const auto m = make_model(h0, p, {1, 1});
  const Liouvillian lv(m);
  const auto eig = diagonalize(h0);
  const Mat rho = labeled_mixture(m, eig, {{{3, 0, 0}, 0.6}, {{1, 1, 0}, 0.4}}).rho;
  const Vec flat = Eigen::Map<const Vec>(rho.data(), rho.size());
  const Vec lv_flat = lv.superoperator() * flat;
  const Mat via_super = Eigen::Map<const Mat>(lv_flat.data(), rho.rows(), rho.cols());
  EXPECT_LT((via_super - lv.apply(rho)).cwiseAbs().maxCoeff(), 1e-13);
  // Trace preservation: tr L[ρ] = 0.
  EXPECT_LT(std::abs(lv.apply(rho).trace()), 1e-13);
}

TEST(SteadyState, DarkSingletMakesFig2Degenerate) {
  const auto h0 = two_spin_model(10.0, 5.0);
  const auto m = make_model(h0, fig2_drive(), {2, 2});
  EXPECT_THROW(steady_state(m), DegenerateSteadyState);
}

TEST(SteadyState, UndrivenModelIsDegenerate) {
  const auto h0 = two_spin_model(10.0, 5.0);
  auto p = undriven(2);
  p.gamma = 1.0;
  const auto m = make_model(h0, p, {1, 1});
  EXPECT_THROW(steady_state(m), DegenerateSteadyState);
}

TEST(SteadyState, UniqueWithSpontaneousEmissionAndCrossCheck) {
  const auto h0 = two_spin_model(10.0, 5.0);
  auto p = fig2_drive();
  p.gamma = 100.0;
  const auto m = make_model(h0, p, {2, 2});
  SteadyStateOptions opts;
  opts.cross_check_time = 300.0;
  const auto ss = steady_state(m, opts);
  EXPECT_TRUE(ss.valid());
  EXPECT_LE(Liouvillian(m).apply(ss.rho).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(AsymptoticState, ThermalPhotonsLowerGroundPopulation) {
  const auto h0 = two_spin_model(10.0, 5.0);
  const auto eig = diagonalize(h0);
  auto ground_at = [&](double nbar, FockCutoffs cut) {
    auto p = fig2_drive();
    p.nbar = nbar;
    const auto m = make_model(h0, p, cut);
    const auto a = asymptotic_state(m, eigenstate(m, eig, {3, 0, 0}));
    EXPECT_FALSE(a.unique);
    EXPECT_LE(a.residual, 1e-9);
    const auto pops = detail::labeled_populations(a.state.rho, m.eigenbasis(eig));
    const auto labels = m.labels();
    double g = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k].mu == 0) g += pops[k];
    return g;
  };
  const double clean = ground_at(0.0, {2, 2});
  const double hot = ground_at(0.1, {3, 3});
  EXPECT_GT(clean, 0.9);
  EXPECT_GT(clean - hot, 1e-4);
}
