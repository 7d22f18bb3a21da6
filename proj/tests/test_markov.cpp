#include <gtest/gtest.h>

#include <map>
#include <random>

#include "cavcool/markov.hpp"
#include "oracles.hpp"

using namespace cavcool;

namespace {

struct Chain {
  SpinHamiltonian h0;
  EigenSystem eig;
  TransitionTable table;
  DriveParams drive;
  MarkovDrive markov;
};

double zero_field_gap(int n) {
  const auto e = diagonalize(heisenberg_chain(n, 1.0, 0.0));
  return e.energy(e.degenerate_clusters()[1][0]) - e.energy(0);
}

double eps1_ground(const TransitionTable& t, const MarkovDrive& d) {
  double s = 0.0;
  for (int j = 1; j <= t.sites(); ++j) s += d.eps1_site[static_cast<std::size_t>(j - 1)] * (0.5 - t.sz_diag(j)[0]);
  return s;
}

/// B = 10, J from B = E_10/2 at zero field, Δ = g², calibrated Ω, flat band
/// 0.5B..3.5B above (ε_1)_00 (κ = 1).
Chain chain_case(int n, double g, double gamma, double nbar = 0.0) {
  const double B = 10.0;
  auto h0 = heisenberg_chain(n, 2.0 * B / zero_field_gap(n), B);
  auto eig = diagonalize(h0);
  TransitionTable table(eig);
  const double delta = g * g;
  const double omega = calibrate_omega(eig, table, std::vector<double>(n, g), delta, 1.0)[0];
  DriveParams p = DriveParams::uniform(n, g, omega, -omega, delta, 0.0, 1.0);
  p.gamma = gamma;
  p.nbar = nbar;
  MarkovDrive d = MarkovDrive::from_drive_params(p, SpectralDensity::flat_band(0, 1), SpectralDensity::flat_band(0, 1));
  d.band1 = d.band2 = make_flat_band(B, eps1_ground(table, d));
  return {std::move(h0), std::move(eig), std::move(table), std::move(p), std::move(d)};
}

Eigen::VectorXd mixed_start(const RateMatrix& r) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(r.size());
  for (Index mu = 0; mu < r.spin_levels(); ++mu) p[*r.index(mu, 0, 0)] = 1.0 / static_cast<double>(r.spin_levels());
  return p;
}

Mat random_unitary(Index n, std::mt19937& rng) {
  std::normal_distribution<double> nd;
  Mat a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = cplx(nd(rng), nd(rng));
  Eigen::HouseholderQR<Mat> qr(a);
  return qr.householderQ() * Mat::Identity(n, n);
}

/// Same spectrum with every degenerate cluster re-diagonalized by a random
/// unitary; `within_sector` keeps each rotation inside one S_z sector.
EigenSystem rotate_clusters(const EigenSystem& eig, std::mt19937& rng, bool within_sector) {
  Mat v = Mat(eig.states());
  for (const auto& cluster : eig.degenerate_clusters()) {
    std::vector<std::vector<Index>> groups;
    if (within_sector) {
      std::map<double, std::vector<Index>> by_sz;
      for (Index mu : cluster) by_sz[eig.sz(mu)].push_back(mu);
      for (auto& [sz, g] : by_sz) groups.push_back(g);
    } else {
      groups.push_back(cluster);
    }
    for (const auto& g : groups) {
      if (g.size() < 2) continue;
      const Mat u = random_unitary(static_cast<Index>(g.size()), rng);
      Mat block(v.rows(), static_cast<Index>(g.size()));
      for (std::size_t k = 0; k < g.size(); ++k) block.col(static_cast<Index>(k)) = v.col(g[k]);
      block = block * u;
      for (std::size_t k = 0; k < g.size(); ++k) v.col(g[k]) = block.col(static_cast<Index>(k));
    }
  }
  std::vector<double> sz = eig.sz_values();
  if (!within_sector) {
    const Mat szm = Mat(total_sz(eig.sites()).matrix());
    for (Index mu = 0; mu < eig.size(); ++mu) sz[static_cast<std::size_t>(mu)] = v.col(mu).dot(szm * v.col(mu)).real();
  }
  return EigenSystem(eig.sites(), eig.energies(), v.sparseView(), sz, within_sector, eig.h_norm());
}

}  // namespace

TEST(SpectralDensity, FlatBandNormalization) {
  const auto b = make_flat_band(10.0, 2.0);
  EXPECT_NEAR(b(2.0 + 20.0), 1.0 / 30.0, 1e-15);
  EXPECT_EQ(b(2.0 + 4.9), 0.0);
  EXPECT_EQ(b(2.0 + 35.1), 0.0);
  EXPECT_NEAR(b.integral(), 1.0, 1e-12);
  EXPECT_THROW(make_flat_band(0.0, 0.0), Error);
  EXPECT_THROW(make_flat_band(1.0, 0.0, 2.0, 1.0), Error);
}

TEST(SpectralDensity, TableAndCombNormalization) {
  EXPECT_THROW(SpectralDensity::table({{0.0, 1.0}, {2.0, 1.0}}), Error);
  const auto t = SpectralDensity::table({{0.0, 0.0}, {1.0, 1.0}, {2.0, 0.0}});
  EXPECT_NEAR(t.integral(), 1.0, 1e-12);
  EXPECT_NEAR(t(0.5), 0.5, 1e-15);
  EXPECT_EQ(t(3.0), 0.0);
  EXPECT_THROW(SpectralDensity::delta_comb({{1.0, 0.5}}, 1.0), Error);
  const auto c = SpectralDensity::delta_comb({{10.0, 1.0}}, 1.0);
  // Lorentzian tooth of FWHM 1 peaks at 2/π.
  EXPECT_NEAR(c(10.0), 2.0 / pi, 1e-15);
  EXPECT_NEAR(c(10.5), 1.0 / pi, 1e-15);
}

TEST(GoldenRule, NoChannelsGiveZeroGenerator) {
  Chain c = chain_case(4, 20.0, 0.0);
  c.markov.band1 = c.markov.band2 = SpectralDensity::flat_band(1e6, 2e6);
  c.markov.kappa = 0.0;
  const RateMatrix r = golden_rule_rates(c.eig, c.table, c.markov);
  EXPECT_EQ(r.generator().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(r.transitions().empty());

  c.markov.kappa = 1.0;
  const RateMatrix rk = golden_rule_rates(c.eig, c.table, c.markov);
  const Eigen::VectorXd p0 = mixed_start(rk);
  const auto traj = evolve_populations(rk, p0, uniform_grid(0.0, 50.0, 10.0));
  for (const auto& p : traj.populations) EXPECT_LE((p - p0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GoldenRule, SingleSpinEmissionRate) {
  const auto h0 = SpinHamiltonian::from_terms(1, {{10.0, {{SpinKind::z, 1}}}});
  const auto eig = diagonalize(h0);
  const TransitionTable table(eig);
  MarkovDrive d;
  d.coupling_minus = {1.0};
  d.coupling_plus = {0.0};
  d.eps_z_site = d.eps1_site = d.eps2_site = d.spont_weight = {0.0};
  d.band1 = d.band2 = SpectralDensity::flat_band(0.0, 30.0);
  const RateMatrix r = golden_rule_rates(eig, table, d);
  const Index up = *r.index(1, 0, 0), down_photon = *r.index(0, 1, 0);
  EXPECT_NEAR(r.generator()(down_photon, up), pi / 15.0, 1e-14);
  EXPECT_NEAR(r.generator()(up, down_photon), pi / 15.0, 1e-14);
  EXPECT_NEAR(pi / 15.0, 0.2094, 5e-5);
  EXPECT_NEAR(r.generator()(*r.index(0, 0, 0), down_photon), 1.0, 1e-15);
}

TEST(GoldenRule, CoherentSumLeavesTwoSpinSingletDark) {
  const auto h0 = two_spin_model(10.0, 5.0);
  const auto eig = diagonalize(h0);
  // Oracle: the singlet is the eigenvector antisymmetric under exchange.
  Index singlet = -1;
  for (Index mu = 0; mu < 4; ++mu) {
    const Vec v = eig.state(mu);
    if (std::abs(v[1] + v[2]) < 1e-12 && std::abs(v[1]) > 0.5) singlet = mu;
  }
  ASSERT_EQ(singlet, 1);
  const TransitionTable table(eig);
  const DriveParams p = DriveParams::uniform(2, 7.0, 70.0, -70.0, 700.0, 10.0, 1.0);
  auto d = MarkovDrive::from_drive_params(p, SpectralDensity::flat_band(0.0, 100.0),
                                          SpectralDensity::flat_band(0.0, 100.0));
  d.spatially_incoherent = false;
  const RateMatrix r = golden_rule_rates(eig, table, d);
  std::size_t cavity_entries = 0;
  for (const auto& t : r.transitions()) {
    const bool cavity = t.label != Provenance::spontaneous && t.label != Provenance::cavity_decay &&
                        t.label != Provenance::cavity_thermal;
    if (!cavity) continue;
    ++cavity_entries;
    EXPECT_NE(r.level(t.from).mu, singlet);
    EXPECT_NE(r.level(t.to).mu, singlet);
  }
  EXPECT_GT(cavity_entries, 0u);
  const auto st = asymptotic_population(r, mixed_start(r));
  EXPECT_TRUE(st.multiple_classes());
  EXPECT_NEAR(r.spin_population(st.distribution, singlet), 0.25, 1e-12);
  EXPECT_NEAR(r.spin_population(st.distribution, 0), 0.75, 1e-12);
}

TEST(GoldenRule, IncoherentSumReachesTheSinglet) {
  const auto h0 = two_spin_model(10.0, 5.0);
  const auto eig = diagonalize(h0);
  const TransitionTable table(eig);
  const DriveParams p = DriveParams::uniform(2, 7.0, 70.0, -70.0, 700.0, 10.0, 1.0);
  const auto d = MarkovDrive::from_drive_params(p, SpectralDensity::flat_band(0.0, 100.0),
                                                SpectralDensity::flat_band(0.0, 100.0));
  const RateMatrix r = golden_rule_rates(eig, table, d);
  std::size_t singlet_entries = 0;
  for (const auto& t : r.transitions())
    if (t.label == Provenance::cavity1_emit || t.label == Provenance::cavity2_emit)
      singlet_entries += r.level(t.from).mu == 1 || r.level(t.to).mu == 1;
  EXPECT_GT(singlet_entries, 0u);
  const auto st = asymptotic_population(r, mixed_start(r));
  EXPECT_FALSE(st.multiple_classes());
  EXPECT_NEAR(r.spin_population(st.distribution, 0), 1.0, 1e-9);
}

TEST(GoldenRule, SumsAgreeWhenOneSiteCouples) {
  const auto eig = diagonalize(heisenberg_chain(4, 3.0, 10.0));
  const TransitionTable table(eig);
  const std::vector<cplx> c{cplx(0.3, 0.4), 0.0, 0.0, 0.0};
  for (bool raising : {true, false}) {
    const auto a = collective_strength(table, c, raising, true), b = collective_strength(table, c, raising, false);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_THROW(collective_strength(table, {1.0}, true), Error);
}

TEST(EvolvePopulations, TwoLevelExponential) {
  const double rate = 0.37;
  const RateMatrix r({{0, 0, 0, 0.0, 0.0}, {1, 0, 0, 1.0, 0.0}}, {{0, 0}}, {{1, 0, rate, Provenance::spontaneous}});
  Eigen::VectorXd p0(2);
  p0 << 0.0, 1.0;
  const auto grid = uniform_grid(0.0, 20.0, 0.5);
  const auto traj = evolve_populations(r, p0, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_NEAR(traj.populations[i][1], std::exp(-rate * grid[i]), 1e-9);
    EXPECT_NEAR(traj.populations[i].sum(), 1.0, 1e-12);
  }
}

TEST(EvolvePopulations, RejectsInvalidDistribution) {
  const RateMatrix r({{0, 0, 0, 0.0, 0.0}, {1, 0, 0, 1.0, 0.0}}, {{0, 0}}, {{1, 0, 1.0, Provenance::spontaneous}});
  Eigen::VectorXd bad(2);
  bad << 0.5, 0.6;
  EXPECT_THROW(evolve_populations(r, bad, uniform_grid(0.0, 1.0, 1.0)), Error);
  bad << -0.1, 1.1;
  EXPECT_THROW(asymptotic_population(r, bad), Error);
}

TEST(EvolvePopulations, GroundIsAbsorbing) {
  const Chain c = chain_case(4, 30.0, 0.0);
  const RateMatrix r = golden_rule_rates(c.eig, c.table, c.markov);
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(r.size());
  p0[r.ground()] = 1.0;
  const auto traj = evolve_populations(r, p0, uniform_grid(0.0, 1000.0, 100.0));
  for (const auto& p : traj.populations) EXPECT_LE((p - p0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RateMatrix, GeneratorAndStochasticity) {
  for (int n : {4, 6}) {
    const Chain c = chain_case(n, 20.0, 1.0, 0.05);
    const RateMatrix r = golden_rule_rates(c.eig, c.table, c.markov);
    EXPECT_LE(r.column_sum_error(), 1e-12);
    const Eigen::MatrixXd& g = r.generator();
    for (Index i = 0; i < g.rows(); ++i)
      for (Index j = 0; j < g.cols(); ++j)
        if (i != j) EXPECT_GE(g(i, j), 0.0);
    for (double t : {0.1, 10.0, 1000.0}) {
      const Eigen::MatrixXd e = (g * t).exp();
      EXPECT_LE((e.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
      EXPECT_GE(e.minCoeff(), -1e-12);
    }
  }
}

TEST(RateMatrix, SelectionRules) {
  for (int n : {4, 6}) {
    const Chain c = chain_case(n, 30.0, 1.0, 0.05);
    const RateMatrix r = golden_rule_rates(c.eig, c.table, c.markov);
    for (const auto& t : r.transitions()) {
      const auto& a = r.level(t.from);
      const auto& b = r.level(t.to);
      const double dsz = b.sz - a.sz;
      const int dn1 = b.n1 - a.n1, dn2 = b.n2 - a.n2;
      switch (t.label) {
        case Provenance::cavity1_emit: EXPECT_EQ(dsz, -1.0); EXPECT_EQ(dn1, 1); EXPECT_EQ(dn2, 0); break;
        case Provenance::cavity1_absorb: EXPECT_EQ(dsz, 1.0); EXPECT_EQ(dn1, -1); EXPECT_EQ(dn2, 0); break;
        case Provenance::cavity2_emit: EXPECT_EQ(dsz, 1.0); EXPECT_EQ(dn2, 1); EXPECT_EQ(dn1, 0); break;
        case Provenance::cavity2_absorb: EXPECT_EQ(dsz, -1.0); EXPECT_EQ(dn2, -1); EXPECT_EQ(dn1, 0); break;
        case Provenance::spontaneous:
          EXPECT_LE(std::abs(dsz), 1.0);
          EXPECT_NE(a.mu, b.mu);
          EXPECT_EQ(dn1, 0);
          EXPECT_EQ(dn2, 0);
          break;
        case Provenance::cavity_decay: EXPECT_EQ(a.mu, b.mu); EXPECT_EQ(dn1 + dn2, -1); break;
        case Provenance::cavity_thermal: EXPECT_EQ(a.mu, b.mu); EXPECT_EQ(dn1 + dn2, 1); break;
      }
      EXPECT_LE(b.n1 + b.n2, c.markov.cutoff);
    }
  }
}

TEST(RateMatrix, CorrectedEnergies) {
  const Chain c = chain_case(4, 20.0, 0.0);
  const RateMatrix r = golden_rule_rates(c.eig, c.table, c.markov);
  for (Index i = 0; i < r.size(); ++i) {
    const auto& l = r.level(i);
    double e1 = 0.0, e2 = 0.0;
    for (int j = 1; j <= 4; ++j) {
      e1 += c.markov.eps1_site[static_cast<std::size_t>(j - 1)] * (0.5 - c.table.sz_diag(j)[l.mu]);
      e2 += c.markov.eps2_site[static_cast<std::size_t>(j - 1)] * (0.5 + c.table.sz_diag(j)[l.mu]);
    }
    EXPECT_NEAR(l.energy, c.eig.energy(l.mu) - l.n1 * e1 - l.n2 * e2, 1e-12);
  }
}

TEST(Degeneracy, TransitionStrengthsInvariantUnderRotation) {
  std::mt19937 rng(2024);
  for (double field : {0.0, 10.0}) {
    const auto eig = diagonalize(heisenberg_chain(4, 30.0, field));
    const TransitionTable base(eig);
    const auto clusters = eig.degenerate_clusters();
    for (int trial = 0; trial < 5; ++trial) {
      const EigenSystem rot = rotate_clusters(eig, rng, false);
      const TransitionTable t2(rot);
      for (int j = 1; j <= 4; ++j)
        for (const auto& d : clusters)
          for (const auto& d2 : clusters) {
            double a = 0.0, b = 0.0;
            for (Index mu : d2)
              for (Index nu : d) {
                a += base.plus2(j)(mu, nu);
                b += t2.plus2(j)(mu, nu);
              }
            EXPECT_NEAR(a, b, 1e-9);
          }
    }
  }
}

TEST(Asymptotic, AbsorbingGroundWithFullBand) {
  for (int n : {4, 6}) {
    Chain c = chain_case(n, 20.0, 0.0);
    c.markov.band1 = c.markov.band2 = covering_band(c.eig, c.table, c.markov);
    const RateMatrix r = golden_rule_rates(c.eig, c.table, c.markov);
    const auto st = asymptotic_population(r, mixed_start(r));
    EXPECT_NEAR(r.spin_population(st.distribution, 0), 1.0, 1e-6);
    EXPECT_EQ(st.recurrent_classes.size(), 1u);
    EXPECT_LE(st.residual, 1e-10);
  }
}

TEST(Asymptotic, SpontaneousEmissionLowersGroundPopulation) {
  double prev = 1.0 + 1e-12;
  for (double gamma : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    Chain c = chain_case(4, 20.0, gamma);
    c.markov.band1 = c.markov.band2 = covering_band(c.eig, c.table, c.markov);
    const RateMatrix r = golden_rule_rates(c.eig, c.table, c.markov);
    const double g = r.spin_population(asymptotic_population(r, mixed_start(r)).distribution, 0);
    if (gamma > 0.0) EXPECT_LT(g, 1.0);
    EXPECT_LT(g, prev);
    prev = g;
  }
}

TEST(Calibration, TwoSpinOracleAndScaling) {
  const auto h0 = two_spin_model(10.0, 5.0);
  const auto eig = diagonalize(h0);
  const TransitionTable table(eig);
  Eigen::SelfAdjointEigenSolver<oracle::MatC> es(oracle::chain(2, 5.0, 10.0));
  const oracle::MatC v = es.eigenvectors();
  double sum = 0.0;
  for (int j = 1; j <= 2; ++j) {
    const oracle::MatC sp = v.adjoint() * oracle::site('+', j, 2) * v;
    sum += std::norm(sp(1, 0)) + std::norm(sp(0, 1));
  }
  const double g = 7.0, delta = 700.0;
  const auto om = calibrate_omega(eig, table, {g, g}, delta, 1.0);
  EXPECT_NEAR(om[0], delta / (g * std::sqrt(sum)), 1e-10);
  EXPECT_EQ(om[0], om[1]);
  const auto om2 = calibrate_omega(eig, table, {2 * g, 2 * g}, delta, 1.0);
  EXPECT_NEAR(om2[0], 0.5 * om[0], 1e-12);
  // Δ = g²/κ with g = 40: Ω ∝ 40/√Σ.
  const auto om40 = calibrate_omega(eig, table, {40.0, 40.0}, 1600.0, 1.0);
  EXPECT_NEAR(om40[0], 40.0 / std::sqrt(sum), 1e-10);
}

TEST(Calibration, DarkTransitionReported) {
  // Heisenberg pair plus a strong S_z² anisotropy: singlet ground, T0 first
  // excited, both in the sz = 0 sector, so no s^+ element connects them.
  const auto h0 = SpinHamiltonian::from_terms(
      2, {{1.0, {{SpinKind::x, 1}, {SpinKind::x, 2}}}, {1.0, {{SpinKind::y, 1}, {SpinKind::y, 2}}},
          {5.0, {{SpinKind::z, 1}, {SpinKind::z, 2}}}});
  const auto eig = diagonalize(h0);
  ASSERT_EQ(eig.sz(0), 0.0);
  ASSERT_EQ(eig.sz(eig.degenerate_clusters()[1][0]), 0.0);
  const TransitionTable table(eig);
  EXPECT_THROW(calibrate_omega(eig, table, {1.0, 1.0}, 100.0, 1.0), Error);
}

TEST(PathLength, GroundZeroAndBoundWithFullBand) {
  for (int n : {4, 6}) {
    Chain c = chain_case(n, 40.0, 1.0);
    c.markov.band1 = c.markov.band2 = covering_band(c.eig, c.table, c.markov);
    const RateMatrix r = golden_rule_rates(c.eig, c.table, c.markov);
    EXPECT_EQ(relaxation_path_length(r, 0).hops, 0);
    Index top = 0;
    for (Index mu = 0; mu < c.eig.size(); ++mu)
      if (c.eig.sz(mu) > c.eig.sz(top)) top = mu;
    const auto pl = relaxation_path_length(r, top);
    EXPECT_TRUE(pl.reachable);
    EXPECT_LE(pl.hops, 2 * n);
  }
}

TEST(PathLength, BandGapMakesGroundUnreachable) {
  const auto h0 = two_spin_model(10.0, 5.0);
  const auto eig = diagonalize(h0);
  const TransitionTable table(eig);
  const DriveParams p = DriveParams::uniform(2, 7.0, 70.0, -70.0, 700.0, 0.0, 1.0);
  // Corrected gaps: |↑↑> → T0 at 10.07, T0 → |↓↓> at 10.14.
  const auto d = MarkovDrive::from_drive_params(p, SpectralDensity::flat_band(5.0, 10.1),
                                                SpectralDensity::flat_band(5.0, 10.1));
  const RateMatrix r = golden_rule_rates(eig, table, d);
  EXPECT_TRUE(relaxation_path_length(r, 0).reachable);
  EXPECT_FALSE(relaxation_path_length(r, 2).reachable);
  EXPECT_FALSE(relaxation_path_length(r, 3).reachable);
  const auto full = MarkovDrive::from_drive_params(p, SpectralDensity::flat_band(5.0, 10.2),
                                                   SpectralDensity::flat_band(5.0, 10.2));
  const RateMatrix rf = golden_rule_rates(eig, table, full);
  EXPECT_EQ(relaxation_path_length(rf, 3).hops, 4);
}

TEST(Cooling, MeanCorrectedEnergyNonincreasing) {
  for (int n : {4, 6}) {
    const Chain c = chain_case(n, 30.0, 0.0);
    const RateMatrix r = golden_rule_rates(c.eig, c.table, c.markov);
    Eigen::VectorXd w(r.size());
    for (Index i = 0; i < r.size(); ++i) w[i] = r.level(i).energy;
    const auto traj = evolve_populations(r, mixed_start(r), uniform_grid(0.0, 300.0, 0.25));
    double prev = traj.populations[0].dot(w);
    const double scale = w.cwiseAbs().maxCoeff();
    for (const auto& p : traj.populations) {
      const double e = p.dot(w);
      EXPECT_LE(e, prev + 1e-12 * scale);
      prev = e;
    }
    EXPECT_LT(prev, traj.populations[0].dot(w));
  }
}
