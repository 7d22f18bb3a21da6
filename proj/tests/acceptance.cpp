// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "cavcool/experiments.hpp"
#include "oracles.hpp"

using namespace cavcool;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

double sup_gap(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].size(); ++k) worst = std::max(worst, std::abs(a[i][k] - b[i][k]));
  return worst;
}

// 1. Spectra against the dense Kronecker-product oracle.
void oracle_spectra(Verdict& v) {
  double worst = 0.0;
  for (double J : {0.5, 1.0, 5.0}) {
    const auto lib = diagonalize(two_spin_model(2.0 * J, J));
    const auto ref = oracle::eigenvalues(oracle::chain(2, J, 2.0 * J));
    const std::vector<double> closed{-7.0 * J / 4, -3.0 * J / 4, J / 4, 9.0 * J / 4};
    for (std::size_t k = 0; k < 4; ++k) {
      worst = std::max({worst, std::abs(lib.energy(static_cast<Index>(k)) - ref[k]), std::abs(ref[k] - closed[k])});
    }
    const auto zero = diagonalize(heisenberg_chain(2, J, 0.0));
    const auto zref = oracle::eigenvalues(oracle::chain(2, J, 0.0));
    const std::vector<double> zclosed{-3.0 * J / 4, J / 4, J / 4, J / 4};
    for (std::size_t k = 0; k < 4; ++k)
      worst = std::max({worst, std::abs(zero.energy(static_cast<Index>(k)) - zref[k]), std::abs(zref[k] - zclosed[k])});
  }
  v.detail << "max deviation " << worst;
  v.check(worst <= 1e-12, "deviation <= 1e-12");
}

// 2. Trace, Hermiticity and positivity along a driven, damped run; empty-cavity decay.
void lindblad_sanity(Verdict& v) {
  const auto h0 = two_spin_model(10.0, 5.0);
  const auto eig = diagonalize(h0);
  auto p = DriveParams::uniform(2, 7.0, 70.0, -70.0, 700.0, 10.0, 1.0);
  p.gamma = 1.0;
  p.nbar = 0.05;
  const auto m = build_model(h0, p, {2, 2});
  const auto r = evolve_density(m, eig, eigenstate(m, eig, {3, 0, 0}), uniform_grid(0.0, 50.0, 0.5));
  double tr = 0.0, herm = 0.0, mineig = 0.0;
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    tr = std::max(tr, r.trace_errors[i]);
    herm = std::max(herm, r.hermiticity_errors[i]);
    mineig = std::min(mineig, r.min_eigenvalues[i]);
  }
  const auto m0 = build_model(h0, DriveParams::uniform(2, 0.0, 0.0, 0.0, 700.0, 0.0, 1.0), {2, 2});
  const auto grid = uniform_grid(0.0, 10.0, 0.1);
  const auto d = evolve_density(m0, eig, eigenstate(m0, eig, {0, 1, 0}), grid);
  const auto n1 = d.photon_number(1);
  double decay = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) decay = std::max(decay, std::abs(n1[i] - std::exp(-grid[i])));
  v.detail << "trace err " << tr << ", hermiticity err " << herm << ", min eigenvalue " << mineig
           << ", |<n>-exp(-kt)| " << decay;
  v.check(tr <= 1e-8, "trace error <= 1e-8");
  v.check(herm <= 1e-10, "hermiticity error <= 1e-10");
  v.check(mineig >= -1e-8, "min eigenvalue >= -1e-8");
  v.check(decay <= 1e-6, "photon decay within 1e-6");
}

// 3. Trajectory average converges to the density matrix.
void unraveling(Verdict& v) {
  RunConfig c = fig2_preset();
  c.trajectories = 2000;
  const auto r = compute_fig2(c, {true, false});
  const double gap2k = sup_gap(r.ensemble->populations, r.lindblad.result.populations);
  const auto& model = r.lindblad.model;
  const auto ens8k = run_trajectories(model, r.eig, initial_vector(model, r.eig, c.start), run_grid(c), 8000, c.seed);
  const double gap8k = sup_gap(ens8k.populations, r.lindblad.result.populations);
  v.detail << "sup gap n=2000: " << gap2k << " (bound " << 5.0 / std::sqrt(2000.0) << "), n=8000: " << gap8k;
  v.check(gap2k <= 5.0 / std::sqrt(2000.0), "gap(2000) <= 5/sqrt(2000)");
  v.check(gap8k < gap2k, "gap shrinks at 8000");
}

// 4. Relaxation from the top level; detection ceases.
void fig2_relaxation(Verdict& v) {
  RunConfig c = fig2_preset();
  const auto r = compute_fig2(c, {true, false});
  const auto& lr = r.lindblad.result;
  const auto ground = lr.level_population(0);
  // Last index where the ground population decreases (beyond the integration tolerance).
  std::size_t settle = 0;
  for (std::size_t i = 1; i < ground.size(); ++i)
    if (ground[i] < ground[i - 1] - c.tolerance) settle = i;
  const double t_settle = lr.times[settle];
  const double g_end = ground.back();
  const double g_traj = r.ensemble->level_population(0).back();
  v.detail << "ground(200) lindblad " << g_end << ", trajectories " << g_traj << "; nondecreasing from t=" << t_settle;
  v.check(g_end >= 0.9 && g_traj >= 0.9, "ground >= 0.9 at t=200");
  v.check(t_settle < 0.5 * c.t_max, "ground eventually nondecreasing");

  // Statistical zero: the late-window count must be consistent with a zero
  // rate at 3 sigma (count - 3 sqrt(count) <= 0, i.e. count <= 9).
  const double late = 150.0;
  for (int mode : {1, 2}) {
    const auto h = mode_histogram(*r.ensemble, c, mode);
    double peak = 0.0, late_count = 0.0, late_width = 0.0;
    for (std::size_t b = 0; b < h.centers.size(); ++b) {
      peak = std::max(peak, h.rates[b]);
      if (h.centers[b] - 0.5 * h.widths[b] >= late) {
        late_count += static_cast<double>(h.counts[b]);
        late_width += h.widths[b];
      }
    }
    const double late_rate = late_count / (late_width * static_cast<double>(h.n_traj));
    const auto nx = lr.photon_number(mode);
    double flux = 0.0, span = 0.0;
    for (std::size_t i = 0; i + 1 < lr.times.size(); ++i)
      if (lr.times[i] >= late) {
        const double dt = lr.times[i + 1] - lr.times[i];
        flux += 0.5 * dt * (nx[i] + nx[i + 1]);
        span += dt;
      }
    flux /= span;
    v.detail << "; a" << mode << ": peak rate " << peak << ", late rate " << late_rate << " (" << late_count
             << " counts), lindblad kappa<n> late " << flux << ", peak/late " << (late_rate > 0 ? peak / late_rate : 0.0);
    v.check(late_count - 3.0 * std::sqrt(late_count) <= 0.0, "a" + std::to_string(mode) + " late rate statistically zero");
  }
}

// 5. Asymptotic ground population decreases with the thermal photon number.
void thermal_ordering(Verdict& v) {
  RunConfig c = fig2_preset();
  c.t_max = 1.0;
  c.dt = 1.0;
  const auto r = compute_fig2(c, {false, true});
  v.detail << "ground:";
  for (const auto& s : r.sweep) v.detail << " nbar=" << s.nbar << "->" << s.ground;
  for (std::size_t i = 1; i < r.sweep.size(); ++i)
    v.check(r.sweep[i - 1].ground - r.sweep[i].ground > 1e-4, "gap > 1e-4 at nbar=" + format_number(r.sweep[i].nbar));
}

// 6. Ground is the unique absorbing state with full-band driving.
void absorbing_state(Verdict& v) {
  RunConfig c = fig3_preset();
  c.gamma = 0.0;
  c.nbar = 0.0;
  c.band.shape = "full";
  std::mt19937_64 rng(6);
  std::exponential_distribution<double> expo(1.0);
  double worst = 0.0;
  for (int n : {4, 6}) {
    const auto s = chain_setup(c, n);
    const auto m = markov_setup(c, s);
    std::vector<Eigen::VectorXd> starts{initial_distribution(m.rates, StartState::mixed)};
    for (int k = 0; k < 3; ++k) {
      Eigen::VectorXd p(m.rates.size());
      for (Index i = 0; i < p.size(); ++i) p[i] = expo(rng);
      starts.push_back(p / p.sum());
    }
    for (const auto& p0 : starts) {
      const auto st = asymptotic_population(m.rates, p0);
      worst = std::max(worst, std::abs(st.distribution[*m.rates.index(0, 0, 0)] - 1.0));
    }
  }
  v.detail << "max |p_inf(ground,0,0) - 1| over N=4,6 and 4 starts: " << worst;
  v.check(worst <= 1e-6, "within 1e-6");
}

// 7. Chain trends in g and N; monotone ground series.
void fig3_trends(Verdict& v) {
  const RunConfig c = fig3_preset();
  const auto r = compute_fig3(c);
  std::map<int, std::vector<double>> by_n;
  for (const auto& p : r.sweep) by_n[p.n_sites].push_back(p.ground);
  for (const auto& [n, g] : by_n) {
    v.detail << "N=" << n << ":";
    for (double x : g) v.detail << ' ' << x;
    v.detail << "; ";
    for (std::size_t i = 1; i < g.size(); ++i) v.check(g[i] > g[i - 1], "increasing in g at N=" + std::to_string(n));
  }
  std::vector<double> at40;
  for (const auto& p : r.sweep)
    if (p.g == 40.0) at40.push_back(p.ground);
  for (std::size_t i = 1; i < at40.size(); ++i) v.check(at40[i] < at40[i - 1], "decreasing in N at g=40");
  for (const auto& s : r.series) {
    // The transient ends at the minimum of the series.
    const auto it = std::min_element(s.ground.begin(), s.ground.end());
    const auto start = static_cast<std::size_t>(it - s.ground.begin());
    bool mono = true;
    for (std::size_t i = start + 1; i < s.ground.size(); ++i) mono = mono && s.ground[i] >= s.ground[i - 1] - 1e-12;
    v.detail << "series N=" << s.n_sites << " transient ends t=" << s.times[start] << ", final " << s.ground.back()
             << "; ";
    v.check(mono && s.ground.back() > *it, "series nondecreasing after transient, N=" + std::to_string(s.n_sites));
  }
}

// 8. Golden-rule chain against exact dynamics for a comb drive.
void golden_rule_validity(Verdict& v) {
  const auto h0 = two_spin_model(10.0, 5.0);
  const auto eig = diagonalize(h0);
  const TransitionTable table(eig);
  // Weak drive (|Γ| well below κ), two-photon detuning on the triplet ladder gap.
  const auto p = DriveParams::uniform(2, 7.0, 10.0, -10.0, 700.0, 10.0, 1.0);
  const auto comb = SpectralDensity::delta_comb({{10.0, 1.0}}, 1.0);
  MarkovDrive d = MarkovDrive::from_drive_params(p, comb, comb, 1);
  d.spatially_incoherent = false;
  const RateMatrix rates = golden_rule_rates(eig, table, d);
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(rates.size());
  p0[*rates.index(3, 0, 0)] = 1.0;

  Eigen::EigenSolver<Eigen::MatrixXd> es(rates.generator());
  double slowest = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double re = -es.eigenvalues()[i].real();
    if (re > 1e-9) slowest = std::min(slowest, re);
  }
  const double tau = 1.0 / slowest;
  const auto grid = uniform_grid(0.0, 5.0 * tau, 5.0 * tau / 400.0);
  const auto markov = evolve_populations(rates, p0, grid);
  const auto model = build_model(h0, p, {2, 2});
  const auto exact = evolve_density(model, eig, eigenstate(model, eig, {3, 0, 0}), grid);
  double worst = 0.0;
  for (Index mu = 0; mu < 4; ++mu) {
    const auto a = markov.spin_population(rates, mu), b = exact.level_population(mu);
    for (std::size_t i = 0; i < grid.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  v.detail << "relaxation time " << tau << ", sup |p_markov - p_lindblad| over [0, 5 tau] " << worst
           << ", final ground markov " << markov.spin_population(rates, 0).back() << " lindblad "
           << exact.level_population(0).back();
  v.check(worst <= 0.10, "sup-norm <= 0.10");
}

// 9. Hop count to the ground level.
void path_length_bound(Verdict& v) {
  RunConfig c = fig3_preset();
  c.band.shape = "full";
  for (int n : {4, 6, 8}) {
    const auto s = chain_setup(c, n);
    const auto m = markov_setup(c, s);
    const auto paths = path_lengths_to_ground(m.rates);
    int worst = 0;
    bool reachable = true;
    for (Index mu = 0; mu < s.eig.size(); ++mu) {
      const auto& pl = paths[static_cast<std::size_t>(*m.rates.index(mu, 0, 0))];
      reachable = reachable && pl.reachable;
      worst = std::max(worst, pl.hops);
    }
    v.detail << "N=" << n << " max hops " << worst << " (bound " << 2 * n << "); ";
    v.check(reachable && worst <= 2 * n, "hops <= 2N at N=" + std::to_string(n));
  }
}

// 10. Selection rules and degeneracy-basis invariance over random instances.
void selection_and_degeneracy(Verdict& v) {
  std::size_t transitions = 0, rotations = 0;
  double worst_rot = 0.0;
  for (unsigned seed = 0; seed < 50; ++seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = seed % 2 ? 4 : 6;
    const double field = seed % 3 == 0 ? 0.0 : 2.0 + 18.0 * u(rng);
    const auto eig = diagonalize(heisenberg_chain(n, 1.0 + 9.0 * u(rng), field));
    const TransitionTable table(eig);
    std::vector<AtomDrive> atoms;
    for (int j = 0; j < n; ++j)
      atoms.push_back({5.0 + 30.0 * u(rng), 5.0 + 30.0 * u(rng), cplx(50.0 * u(rng), 50.0 * u(rng)), -40.0 * u(rng)});
    DriveParams p = DriveParams::uniform(n, 1.0, 1.0, 1.0, 900.0, 0.0, 1.0);
    p.atoms = atoms;
    p.gamma = u(rng);
    p.nbar = 0.1 * u(rng);
    const double lo = 40.0 * u(rng);
    const auto band = SpectralDensity::flat_band(lo, lo + 5.0 + 60.0 * u(rng));
    MarkovDrive d = MarkovDrive::from_drive_params(p, band, band, 1 + static_cast<int>(seed % 2));
    d.spatially_incoherent = seed % 4 != 1;
    const RateMatrix r = golden_rule_rates(eig, table, d);
    v.check(r.column_sum_error() <= 1e-12, "generator column sums, seed " + std::to_string(seed));
    for (const auto& t : r.transitions()) {
      ++transitions;
      const auto& a = r.level(t.from);
      const auto& b = r.level(t.to);
      const double dsz = b.sz - a.sz;
      const int dn1 = b.n1 - a.n1, dn2 = b.n2 - a.n2;
      bool ok = t.rate > 0.0;
      switch (t.label) {
        case Provenance::cavity1_emit: ok = ok && dsz == -1.0 && dn1 == 1 && dn2 == 0; break;
        case Provenance::cavity1_absorb: ok = ok && dsz == 1.0 && dn1 == -1 && dn2 == 0; break;
        case Provenance::cavity2_emit: ok = ok && dsz == 1.0 && dn2 == 1 && dn1 == 0; break;
        case Provenance::cavity2_absorb: ok = ok && dsz == -1.0 && dn2 == -1 && dn1 == 0; break;
        case Provenance::spontaneous: ok = ok && std::abs(dsz) <= 1.0 && a.mu != b.mu && dn1 == 0 && dn2 == 0; break;
        case Provenance::cavity_decay: ok = ok && a.mu == b.mu && dn1 + dn2 == -1; break;
        case Provenance::cavity_thermal: ok = ok && a.mu == b.mu && dn1 + dn2 == 1; break;
      }
      if (!ok) v.check(false, "selection rule, seed " + std::to_string(seed));
    }

    // Re-diagonalize one degenerate manifold D with a random unitary; the
    // strengths summed over D, seen from any level outside D, are unchanged.
    std::vector<cplx> cm, cp;
    for (const auto& a : atoms) cm.push_back(a.g1 * a.omega1 / p.detuning1), cp.push_back(a.g2 * a.omega2 / p.detuning2);
    for (const auto& cluster : eig.degenerate_clusters()) {
      if (cluster.size() < 2) continue;
      ++rotations;
      std::normal_distribution<double> nd;
      const auto k = static_cast<Index>(cluster.size());
      Mat a(k, k);
      for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j) a(i, j) = cplx(nd(rng), nd(rng));
      const Mat unitary = Eigen::HouseholderQR<Mat>(a).householderQ() * Mat::Identity(k, k);
      Mat states = Mat(eig.states());
      Mat block(states.rows(), k);
      for (Index i = 0; i < k; ++i) block.col(i) = states.col(cluster[static_cast<std::size_t>(i)]);
      block = block * unitary;
      for (Index i = 0; i < k; ++i) states.col(cluster[static_cast<std::size_t>(i)]) = block.col(i);
      std::vector<double> sz = eig.sz_values();
      const Mat szm = Mat(total_sz(n).matrix());
      for (Index mu : cluster) sz[static_cast<std::size_t>(mu)] = states.col(mu).dot(szm * states.col(mu)).real();
      const EigenSystem rot(n, eig.energies(), states.sparseView(), sz, false, eig.h_norm());
      const TransitionTable t2(rot);
      for (bool incoherent : {true, false})
        for (bool raising : {true, false}) {
          const auto& c = raising ? cp : cm;
          const Eigen::MatrixXd s1 = collective_strength(table, c, raising, incoherent);
          const Eigen::MatrixXd s2 = collective_strength(t2, c, raising, incoherent);
          for (Index mu = 0; mu < eig.size(); ++mu) {
            if (std::find(cluster.begin(), cluster.end(), mu) != cluster.end()) continue;
            double in1 = 0.0, in2 = 0.0, out1 = 0.0, out2 = 0.0;
            for (Index nu : cluster) {
              in1 += s1(mu, nu), in2 += s2(mu, nu);
              out1 += s1(nu, mu), out2 += s2(nu, mu);
            }
            const double scale = std::max({1.0, in1, out1});
            worst_rot = std::max({worst_rot, std::abs(in1 - in2) / scale, std::abs(out1 - out2) / scale});
          }
        }
    }
  }
  v.detail << transitions << " transitions checked; " << rotations << " manifold rotations, max relative change "
           << worst_rot;
  v.check(rotations > 0, "some degenerate manifolds exercised");
  v.check(worst_rot <= 1e-9, "degeneracy invariance to 1e-9");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Verdict&)>>> criteria{
      {"oracle spectra", oracle_spectra},
      {"lindblad sanity", lindblad_sanity},
      {"unraveling equivalence", unraveling},
      {"two-spin relaxation and detection", fig2_relaxation},
      {"thermal ordering", thermal_ordering},
      {"markov absorbing state", absorbing_state},
      {"chain trends", fig3_trends},
      {"golden-rule validity", golden_rule_validity},
      {"path-length bound", path_length_bound},
      {"selection rules and degeneracy invariance", selection_and_degeneracy},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      criteria[k].second(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << k + 1 << " (" << criteria[k].first << "): "
              << v.detail.str() << " [" << std::fixed << std::setprecision(1) << secs << " s]"
              << std::defaultfloat << std::setprecision(6) << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - static_cast<std::size_t>(failed) << "/"
            << criteria.size() << std::endl;
  return failed ? 1 : 0;
}
