#pragma once

// Classical rate-equation picture of broadband cooling: a continuous-time
// Markov chain over composite levels (μ, n_1, n_2) with golden-rule cavity
// transitions, cavity decay, thermal photons and spontaneous emission.
//
// Generator convention: dp/dt = R p, R(to, from) = rate(from → to), so every
// column of R sums to zero.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "cavcool/effective_model.hpp"
#include "cavcool/spectral.hpp"
#include "cavcool/spin_algebra.hpp"
#include "cavcool/types.hpp"

namespace cavcool {

/// Squared single-site matrix elements in an eigenbasis, shared by every
/// drive configuration on the same spectrum.
class TransitionTable {
 public:
  explicit TransitionTable(const EigenSystem& eig) : sites_(eig.sites()), levels_(eig.size()) {
    const SpinLimits limits{sites_};
    for (int j = 1; j <= sites_; ++j) {
      plus_.push_back(eig.matrix_elements(site_operator(SpinKind::plus, j, sites_, limits).matrix()));
      plus2_.push_back(plus_.back().cwiseAbs2());
      const Mat z = eig.matrix_elements(site_operator(SpinKind::z, j, sites_, limits).matrix());
      z2_.push_back(z.cwiseAbs2());
      sz_diag_.push_back(z.diagonal().real());
    }
  }

  int sites() const { return sites_; }
  Index levels() const { return levels_; }
  /// (s_j^+)_{μν}, j 1-based
  const Mat& plus(int j) const { return plus_[static_cast<std::size_t>(j - 1)]; }
  /// |(s_j^+)_{μν}|²
  const Eigen::MatrixXd& plus2(int j) const { return plus2_[static_cast<std::size_t>(j - 1)]; }
  /// |(s_j^-)_{μν}|² = |(s_j^+)_{νμ}|²
  Eigen::MatrixXd minus2(int j) const { return plus2(j).transpose(); }
  const Eigen::MatrixXd& z2(int j) const { return z2_[static_cast<std::size_t>(j - 1)]; }
  /// (s_j^z)_{μμ}
  const Eigen::VectorXd& sz_diag(int j) const { return sz_diag_[static_cast<std::size_t>(j - 1)]; }

 private:
  int sites_;
  Index levels_;
  std::vector<Mat> plus_;
  std::vector<Eigen::MatrixXd> plus2_;
  std::vector<Eigen::MatrixXd> z2_;
  std::vector<Eigen::VectorXd> sz_diag_;
};

/// Inputs of the golden-rule chain, per-site where the collective operators are
/// sums over atoms. Couplings are the Γ_± weights gΩ/Δ.
struct MarkovDrive {
  std::vector<cplx> coupling_minus;  // Γ_− weights (mode a_1)
  std::vector<cplx> coupling_plus;   // Γ_+ weights (mode a_2)
  std::vector<double> eps_z_site;    // coefficient of s_j^z in ε_z
  std::vector<double> eps1_site;     // |g_1j|²/Δ_1
  std::vector<double> eps2_site;     // |g_2j|²/Δ_2
  std::vector<double> spont_weight;  // |Ω_j/Δ|²
  SpectralDensity band1 = SpectralDensity::flat_band(0.0, 1.0);
  SpectralDensity band2 = SpectralDensity::flat_band(0.0, 1.0);
  double kappa = 1.0;
  double nbar = 0.0;
  double gamma = 0.0;
  int cutoff = 1;                  // n_1 + n_2 ≤ cutoff
  bool corrected_resonance = true; // evaluate I at the H_d-corrected gap
  bool spatially_incoherent = true; // |Γ|² as a sum over sites; false adds amplitudes

  /// Same per-site quantities as the effective model built from `p`.
  static MarkovDrive from_drive_params(const DriveParams& p, SpectralDensity band1, SpectralDensity band2,
                                       int cutoff = 1) {
    MarkovDrive d;
    for (std::size_t j = 0; j < p.atoms.size(); ++j) {
      const auto& a = p.atoms[j];
      d.coupling_minus.push_back(a.g1 * a.omega1 / p.detuning1);
      d.coupling_plus.push_back(a.g2 * a.omega2 / p.detuning2);
      d.eps_z_site.push_back(std::norm(a.omega2) / p.detuning2 - std::norm(a.omega1) / p.detuning1);
      d.eps1_site.push_back(std::norm(a.g1) / p.detuning1);
      d.eps2_site.push_back(std::norm(a.g2) / p.detuning2);
      d.spont_weight.push_back(p.spontaneous_weight(j));
    }
    d.band1 = std::move(band1);
    d.band2 = std::move(band2);
    d.kappa = p.kappa;
    d.nbar = p.nbar;
    d.gamma = p.gamma;
    d.cutoff = cutoff;
    return d;
  }
};

enum class Provenance { cavity1_emit, cavity1_absorb, cavity2_emit, cavity2_absorb, cavity_decay, cavity_thermal, spontaneous };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::cavity1_emit: return "cavity1-emit";
    case Provenance::cavity1_absorb: return "cavity1-absorb";
    case Provenance::cavity2_emit: return "cavity2-emit";
    case Provenance::cavity2_absorb: return "cavity2-absorb";
    case Provenance::cavity_decay: return "cavity-decay";
    case Provenance::cavity_thermal: return "cavity-thermal";
    case Provenance::spontaneous: return "spontaneous";
  }
  return "?";
}

struct CompositeLevel {
  Index mu = 0;
  int n1 = 0;
  int n2 = 0;
  double energy = 0.0;  // W = E_μ − (ε_z)_μμ − n_1(ε_1)_μμ − n_2(ε_2)_μμ
  double sz = 0.0;
};

struct Transition {
  Index from = 0;
  Index to = 0;
  double rate = 0.0;
  Provenance label = Provenance::spontaneous;
};

class RateMatrix {
 public:
  RateMatrix(std::vector<CompositeLevel> levels, std::vector<std::pair<int, int>> photon_states,
             std::vector<Transition> transitions)
      : levels_(std::move(levels)), photon_states_(std::move(photon_states)), transitions_(std::move(transitions)) {
    const auto n = static_cast<Index>(levels_.size());
    generator_ = Eigen::MatrixXd::Zero(n, n);
    for (const auto& t : transitions_) {
      generator_(t.to, t.from) += t.rate;
      generator_(t.from, t.from) -= t.rate;
    }
  }

  Index size() const { return static_cast<Index>(levels_.size()); }
  const std::vector<CompositeLevel>& levels() const { return levels_; }
  const CompositeLevel& level(Index i) const { return levels_[static_cast<std::size_t>(i)]; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  const Eigen::MatrixXd& generator() const { return generator_; }
  const std::vector<std::pair<int, int>>& photon_states() const { return photon_states_; }
  Index spin_levels() const { return size() / static_cast<Index>(photon_states_.size()); }

  std::optional<Index> index(Index mu, int n1, int n2) const {
    for (std::size_t p = 0; p < photon_states_.size(); ++p)
      if (photon_states_[p] == std::pair{n1, n2})
        return mu * static_cast<Index>(photon_states_.size()) + static_cast<Index>(p);
    return std::nullopt;
  }
  Index ground() const { return 0; }

  /// max_i |Σ_j R_ji| relative to the largest diagonal entry.
  double column_sum_error() const {
    const double scale = std::max(1.0, generator_.diagonal().cwiseAbs().maxCoeff());
    return generator_.colwise().sum().cwiseAbs().maxCoeff() / scale;
  }

  /// Population of spin level μ summed over photon states.
  double spin_population(const Eigen::VectorXd& p, Index mu) const {
    double s = 0.0;
    const auto np = static_cast<Index>(photon_states_.size());
    for (Index k = 0; k < np; ++k) s += p[mu * np + k];
    return s;
  }

 private:
  std::vector<CompositeLevel> levels_;
  std::vector<std::pair<int, int>> photon_states_;
  std::vector<Transition> transitions_;
  Eigen::MatrixXd generator_;
};

/// Σ_j |c_j|² |(s_j^±)_{μν}|² under the spatial-incoherence rule, or
/// |Σ_j c_j (s_j^±)_{μν}|² when `incoherent` is false. Coherent amplitudes
/// that cancel to rounding level are set to zero so dark transitions stay dark.
inline Eigen::MatrixXd collective_strength(const TransitionTable& table, const std::vector<cplx>& coupling, bool raising,
                                           bool incoherent = true) {
  require(static_cast<int>(coupling.size()) == table.sites(), "per-site coupling list length mismatch");
  const Index m = table.levels();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(m, m);
  if (incoherent) {
    for (int j = 1; j <= table.sites(); ++j) {
      const double w = std::norm(coupling[static_cast<std::size_t>(j - 1)]);
      if (w == 0.0) continue;
      s += w * (raising ? table.plus2(j) : table.minus2(j));
    }
    return s;
  }
  Mat amp = Mat::Zero(m, m);
  Eigen::MatrixXd scale = Eigen::MatrixXd::Zero(m, m);
  for (int j = 1; j <= table.sites(); ++j) {
    const cplx c = coupling[static_cast<std::size_t>(j - 1)];
    if (c == 0.0) continue;
    const Mat op = raising ? table.plus(j) : Mat(table.plus(j).adjoint());
    amp += c * op;
    scale += std::abs(c) * op.cwiseAbs();
  }
  for (Index mu = 0; mu < m; ++mu)
    for (Index nu = 0; nu < m; ++nu)
      s(mu, nu) = std::abs(amp(mu, nu)) <= 1e-10 * scale(mu, nu) ? 0.0 : std::norm(amp(mu, nu));
  return s;
}

inline RateMatrix golden_rule_rates(const EigenSystem& eig, const TransitionTable& table, const MarkovDrive& drive) {
  const int n = table.sites();
  require(eig.size() == table.levels(), "transition table does not match the eigensystem");
  require(eig.sz_resolved(), "golden-rule chain needs an S_z-resolved eigensystem");
  require(drive.cutoff >= 1, "photon cutoff must be at least 1");
  require(drive.kappa >= 0.0 && drive.nbar >= 0.0 && drive.gamma >= 0.0, "negative rate parameter");
  auto check_len = [n](std::size_t len, const char* what) {
    require(static_cast<int>(len) == n, std::string("per-site list '") + what + "' has wrong length");
  };
  check_len(drive.coupling_minus.size(), "coupling_minus");
  check_len(drive.coupling_plus.size(), "coupling_plus");
  check_len(drive.eps_z_site.size(), "eps_z_site");
  check_len(drive.eps1_site.size(), "eps1_site");
  check_len(drive.eps2_site.size(), "eps2_site");
  check_len(drive.spont_weight.size(), "spont_weight");
  for (double w : drive.spont_weight) require(w >= 0.0, "negative spontaneous weight");
  for (const auto* band : {&drive.band1, &drive.band2})
    require(std::abs(band->integral() - 1.0) <= 1e-9, "spectral density is not normalized");

  const Index m = eig.size();
  Eigen::VectorXd ez = Eigen::VectorXd::Zero(m), e1 = Eigen::VectorXd::Zero(m), e2 = Eigen::VectorXd::Zero(m);
  for (int j = 1; j <= n; ++j) {
    const auto k = static_cast<std::size_t>(j - 1);
    const Eigen::VectorXd& sz = table.sz_diag(j);
    ez += drive.eps_z_site[k] * sz;
    e1 += drive.eps1_site[k] * (Eigen::VectorXd::Constant(m, 0.5) - sz);  // s^-s^+ = |↓><↓|
    e2 += drive.eps2_site[k] * (Eigen::VectorXd::Constant(m, 0.5) + sz);  // s^+s^- = |↑><↑|
  }

  std::vector<std::pair<int, int>> photons;
  for (int total = 0; total <= drive.cutoff; ++total)
    for (int n1 = total; n1 >= 0; --n1) photons.emplace_back(n1, total - n1);
  const auto np = static_cast<Index>(photons.size());
  auto photon_index = [&](int n1, int n2) -> std::optional<Index> {
    for (Index p = 0; p < np; ++p)
      if (photons[static_cast<std::size_t>(p)] == std::pair{n1, n2}) return p;
    return std::nullopt;
  };

  std::vector<CompositeLevel> levels;
  for (Index mu = 0; mu < m; ++mu)
    for (const auto& [n1, n2] : photons)
      levels.push_back({mu, n1, n2, eig.energy(mu) - ez[mu] - n1 * e1[mu] - n2 * e2[mu], eig.sz(mu)});
  auto at = [np](Index mu, Index p) { return mu * np + p; };

  std::vector<Transition> trans;
  auto add = [&](Index from, Index to, double rate, Provenance label) {
    if (rate > 0.0) trans.push_back({from, to, rate, label});
  };

  // Golden-rule photon creation and the conjugate absorption.
  const Eigen::MatrixXd s_minus = collective_strength(table, drive.coupling_minus, false, drive.spatially_incoherent);
  const Eigen::MatrixXd s_plus = collective_strength(table, drive.coupling_plus, true, drive.spatially_incoherent);
  for (int mode = 1; mode <= 2; ++mode) {
    const Eigen::MatrixXd& strength = mode == 1 ? s_minus : s_plus;
    const SpectralDensity& band = mode == 1 ? drive.band1 : drive.band2;
    for (Index p = 0; p < np; ++p) {
      const auto [n1, n2] = photons[static_cast<std::size_t>(p)];
      const int n_mode = mode == 1 ? n1 : n2;
      if (n_mode < 1) continue;
      const auto q = mode == 1 ? photon_index(n1 - 1, n2) : photon_index(n1, n2 - 1);
      if (!q) continue;
      for (Index mu = 0; mu < m; ++mu)
        for (Index nu = 0; nu < m; ++nu) {
          const double s = strength(mu, nu);
          if (s == 0.0) continue;
          const Index lower = at(nu, *q);  // (ν, n−1)
          const Index upper = at(mu, p);   // (μ, n)
          const double gap = drive.corrected_resonance
                                 ? levels[static_cast<std::size_t>(lower)].energy - levels[static_cast<std::size_t>(upper)].energy
                                 : eig.energy(nu) - eig.energy(mu);
          const double rate = 2.0 * pi * n_mode * s * band(gap);
          add(lower, upper, rate, mode == 1 ? Provenance::cavity1_emit : Provenance::cavity2_emit);
          add(upper, lower, rate, mode == 1 ? Provenance::cavity1_absorb : Provenance::cavity2_absorb);
        }
    }
  }

  // Cavity decay and thermal photons.
  for (Index mu = 0; mu < m; ++mu)
    for (Index p = 0; p < np; ++p) {
      const auto [n1, n2] = photons[static_cast<std::size_t>(p)];
      if (auto q = photon_index(n1 - 1, n2); n1 >= 1 && q) add(at(mu, p), at(mu, *q), n1 * drive.kappa, Provenance::cavity_decay);
      if (auto q = photon_index(n1, n2 - 1); n2 >= 1 && q) add(at(mu, p), at(mu, *q), n2 * drive.kappa, Provenance::cavity_decay);
      if (drive.nbar > 0.0) {
        if (auto q = photon_index(n1 + 1, n2)) add(at(mu, p), at(mu, *q), (n1 + 1) * drive.kappa * drive.nbar, Provenance::cavity_thermal);
        if (auto q = photon_index(n1, n2 + 1)) add(at(mu, p), at(mu, *q), (n2 + 1) * drive.kappa * drive.nbar, Provenance::cavity_thermal);
      }
    }

  // Spontaneous emission between distinct eigenstates (diagonal terms move
  // no population).
  if (drive.gamma > 0.0) {
    Eigen::MatrixXd spont = Eigen::MatrixXd::Zero(m, m);
    for (int j = 1; j <= n; ++j) {
      const double w = 0.25 * drive.gamma * drive.spont_weight[static_cast<std::size_t>(j - 1)];
      if (w == 0.0) continue;
      spont += w * (table.plus2(j) + table.minus2(j) + 2.0 * table.z2(j));
    }
    for (Index mu = 0; mu < m; ++mu)
      for (Index nu = 0; nu < m; ++nu) {
        if (mu == nu || spont(mu, nu) == 0.0) continue;
        for (Index p = 0; p < np; ++p) add(at(nu, p), at(mu, p), spont(mu, nu), Provenance::spontaneous);
      }
  }
  return {std::move(levels), std::move(photons), std::move(trans)};
}

// ---------------------------------------------------------------------------
// Dynamics

struct PopulationTrajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> populations;

  std::vector<double> spin_population(const RateMatrix& r, Index mu) const {
    std::vector<double> out;
    for (const auto& p : populations) out.push_back(r.spin_population(p, mu));
    return out;
  }
};

namespace detail {

inline void check_distribution(const Eigen::VectorXd& p, Index n, const std::string& what) {
  require(p.size() == n, what + " has the wrong length");
  require(p.minCoeff() >= -1e-9, what + " has negative entries");
  require(std::abs(p.sum() - 1.0) <= 1e-9, what + " does not sum to 1");
}

}  // namespace detail

/// p(t) = exp(R (t − t_0)) p_0 on the grid, by scaled-and-squared matrix
/// exponentials of R·Δt (one per distinct spacing).
inline PopulationTrajectory evolve_populations(const RateMatrix& r, const Eigen::VectorXd& p0,
                                               std::span<const double> grid) {
  require(r.column_sum_error() <= 1e-12, "rate matrix is not a generator (column sums)");
  detail::check_distribution(p0, r.size(), "initial distribution");
  require(!grid.empty(), "empty time grid");
  std::map<double, Eigen::MatrixXd> props;
  PopulationTrajectory out;
  Eigen::VectorXd p = p0;
  out.times.push_back(grid[0]);
  out.populations.push_back(p);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double dt = grid[i] - grid[i - 1];
    require(dt > 0.0, "time grid must be strictly increasing");
    auto it = props.find(dt);
    if (it == props.end()) it = props.emplace(dt, Eigen::MatrixXd((r.generator() * dt).exp())).first;
    p = it->second * p;
    if (p.minCoeff() < -1e-9 || std::abs(p.sum() - 1.0) > 1e-9)
      throw Error("population evolution lost positivity or normalization at t=" + std::to_string(grid[i]));
    p = p.cwiseMax(0.0);
    p /= p.sum();
    out.times.push_back(grid[i]);
    out.populations.push_back(p);
  }
  return out;
}

struct StationaryResult {
  Eigen::VectorXd distribution;
  std::vector<std::vector<Index>> recurrent_classes;
  double residual = 0.0;  // max |R p|
  bool multiple_classes() const { return recurrent_classes.size() > 1; }
};

namespace detail {

/// Strongly connected components (Tarjan), edges from → to with rate > 0.
inline std::vector<std::vector<Index>> strongly_connected(const std::vector<std::vector<Index>>& adj) {
  const auto n = static_cast<Index>(adj.size());
  std::vector<Index> idx(adj.size(), -1), low(adj.size(), 0);
  std::vector<bool> on(adj.size(), false);
  std::vector<Index> stack;
  std::vector<std::vector<Index>> comps;
  Index counter = 0;
  // Iterative DFS to stay safe on long chains.
  for (Index root = 0; root < n; ++root) {
    if (idx[static_cast<std::size_t>(root)] >= 0) continue;
    std::vector<std::pair<Index, std::size_t>> call{{root, 0}};
    idx[static_cast<std::size_t>(root)] = low[static_cast<std::size_t>(root)] = counter++;
    stack.push_back(root);
    on[static_cast<std::size_t>(root)] = true;
    while (!call.empty()) {
      auto& [v, next] = call.back();
      const auto vs = static_cast<std::size_t>(v);
      if (next < adj[vs].size()) {
        const Index w = adj[vs][next++];
        const auto ws = static_cast<std::size_t>(w);
        if (idx[ws] < 0) {
          idx[ws] = low[ws] = counter++;
          stack.push_back(w);
          on[ws] = true;
          call.emplace_back(w, 0);
        } else if (on[ws]) {
          low[vs] = std::min(low[vs], idx[ws]);
        }
      } else {
        if (low[vs] == idx[vs]) {
          std::vector<Index> comp;
          Index w;
          do {
            w = stack.back();
            stack.pop_back();
            on[static_cast<std::size_t>(w)] = false;
            comp.push_back(w);
          } while (w != v);
          std::sort(comp.begin(), comp.end());
          comps.push_back(std::move(comp));
        }
        const Index done = v;
        call.pop_back();
        if (!call.empty()) {
          const auto ps = static_cast<std::size_t>(call.back().first);
          low[ps] = std::min(low[ps], low[static_cast<std::size_t>(done)]);
        }
      }
    }
  }
  return comps;
}

inline std::vector<std::vector<Index>> adjacency(const RateMatrix& r) {
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(r.size()));
  for (const auto& t : r.transitions())
    if (t.rate > 0.0 && t.from != t.to) adj[static_cast<std::size_t>(t.from)].push_back(t.to);
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

}  // namespace detail

/// p_∞ = lim_{t→∞} exp(R t) p_0. Each closed communicating class gets its
/// own stationary law, weighted by the probability of absorption from p_0.
inline StationaryResult asymptotic_population(const RateMatrix& r, const Eigen::VectorXd& p0) {
  require(r.column_sum_error() <= 1e-12, "rate matrix is not a generator (column sums)");
  detail::check_distribution(p0, r.size(), "initial distribution");
  const Index n = r.size();
  const Eigen::MatrixXd& gen = r.generator();
  const auto adj = detail::adjacency(r);
  const auto comps = detail::strongly_connected(adj);

  std::vector<Index> comp_of(static_cast<std::size_t>(n), -1);
  for (std::size_t c = 0; c < comps.size(); ++c)
    for (Index v : comps[c]) comp_of[static_cast<std::size_t>(v)] = static_cast<Index>(c);
  std::vector<bool> closed(comps.size(), true);
  for (Index v = 0; v < n; ++v)
    for (Index w : adj[static_cast<std::size_t>(v)])
      if (comp_of[static_cast<std::size_t>(w)] != comp_of[static_cast<std::size_t>(v)])
        closed[static_cast<std::size_t>(comp_of[static_cast<std::size_t>(v)])] = false;

  StationaryResult res;
  res.distribution = Eigen::VectorXd::Zero(n);
  std::vector<Index> transient;
  std::vector<bool> is_transient(static_cast<std::size_t>(n), false);
  for (std::size_t c = 0; c < comps.size(); ++c)
    if (closed[c])
      res.recurrent_classes.push_back(comps[c]);
    else
      for (Index v : comps[c]) {
        transient.push_back(v);
        is_transient[static_cast<std::size_t>(v)] = true;
      }
  std::sort(res.recurrent_classes.begin(), res.recurrent_classes.end());
  std::sort(transient.begin(), transient.end());

  // Transient block of Rᵀ for absorption probabilities: Σ_j R_ji h_j = 0 on T.
  const auto nt = static_cast<Index>(transient.size());
  Eigen::PartialPivLU<Eigen::MatrixXd> transient_lu;
  if (nt > 0) {
    Eigen::MatrixXd a(nt, nt);
    for (Index i = 0; i < nt; ++i)
      for (Index k = 0; k < nt; ++k) a(i, k) = gen(transient[static_cast<std::size_t>(k)], transient[static_cast<std::size_t>(i)]);
    transient_lu.compute(a);
  }

  for (const auto& cls : res.recurrent_classes) {
    const auto nc = static_cast<Index>(cls.size());
    Eigen::VectorXd pi_c = Eigen::VectorXd::Ones(1);
    if (nc > 1) {
      Eigen::MatrixXd a(nc, nc);
      for (Index i = 0; i < nc; ++i)
        for (Index k = 0; k < nc; ++k) a(i, k) = gen(cls[static_cast<std::size_t>(i)], cls[static_cast<std::size_t>(k)]);
      a.row(nc - 1).setOnes();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nc);
      rhs[nc - 1] = 1.0;
      pi_c = a.fullPivLu().solve(rhs);
    }
    double weight = 0.0;
    for (Index v : cls) weight += p0[v];
    if (nt > 0) {
      Eigen::VectorXd b = Eigen::VectorXd::Zero(nt);
      for (Index i = 0; i < nt; ++i)
        for (Index v : cls) b[i] -= gen(v, transient[static_cast<std::size_t>(i)]);
      const Eigen::VectorXd h = transient_lu.solve(b);
      for (Index i = 0; i < nt; ++i) weight += p0[transient[static_cast<std::size_t>(i)]] * h[i];
    }
    for (Index i = 0; i < nc; ++i) res.distribution[cls[static_cast<std::size_t>(i)]] += weight * pi_c[i];
  }
  res.residual = (gen * res.distribution).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, gen.diagonal().cwiseAbs().maxCoeff());
  require(res.residual <= 1e-10 * scale, "stationary residual " + std::to_string(res.residual) + " too large");
  return res;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct PathLength {
  bool reachable = false;
  int hops = -1;
};

/// Shortest directed hop count from every level to (ground, 0, 0).
inline std::vector<PathLength> path_lengths_to_ground(const RateMatrix& r) {
  std::vector<std::vector<Index>> reverse(static_cast<std::size_t>(r.size()));
  for (const auto& t : r.transitions())
    if (t.rate > 0.0) reverse[static_cast<std::size_t>(t.to)].push_back(t.from);
  std::vector<PathLength> out(static_cast<std::size_t>(r.size()));
  std::deque<Index> queue{r.ground()};
  out[static_cast<std::size_t>(r.ground())] = {true, 0};
  while (!queue.empty()) {
    const Index v = queue.front();
    queue.pop_front();
    for (Index w : reverse[static_cast<std::size_t>(v)]) {
      auto& pl = out[static_cast<std::size_t>(w)];
      if (pl.reachable) continue;
      pl = {true, out[static_cast<std::size_t>(v)].hops + 1};
      queue.push_back(w);
    }
  }
  return out;
}

/// Hop count from (μ, 0, 0) to (ground, 0, 0).
inline PathLength relaxation_path_length(const RateMatrix& r, Index mu) {
  require(mu >= 0 && mu < r.spin_levels(), "level index out of range");
  return path_lengths_to_ground(r)[static_cast<std::size_t>(*r.index(mu, 0, 0))];
}

/// Flat band covering every downhill (δ* > 0) photon-creating transition
/// that has nonzero strength in `drive`, and nothing at or below δ* = 0.
/// The bands already in `drive` are ignored.
inline SpectralDensity covering_band(const EigenSystem& eig, const TransitionTable& table, MarkovDrive drive) {
  drive.band1 = drive.band2 = SpectralDensity::flat_band(-1e150, 1e150);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  drive.kappa = 0.0;
  drive.nbar = 0.0;
  drive.gamma = 0.0;
  // Probe with a band so wide that every gap is inside; read δ* back off the
  // level energies of each emit entry.
  const RateMatrix probe = golden_rule_rates(eig, table, drive);
  for (const auto& t : probe.transitions()) {
    if (t.label != Provenance::cavity1_emit && t.label != Provenance::cavity2_emit) continue;
    const double gap = drive.corrected_resonance ? probe.level(t.from).energy - probe.level(t.to).energy
                                                 : eig.energy(probe.level(t.from).mu) - eig.energy(probe.level(t.to).mu);
    if (gap > 0.0) {
      lo = std::min(lo, gap);
      hi = std::max(hi, gap);
    }
  }
  require(std::isfinite(lo), "no downhill transition to cover");
  return SpectralDensity::flat_band(0.5 * lo, hi + 0.5 * lo);
}

/// Uniform Ω with Σ_j |(g_j Ω/Δ)(s_j^+)_{10}|² = κ², where the element is
/// taken between the ground level and the first excited cluster in whichever
/// direction s^+ connects them.
inline std::vector<double> calibrate_omega(const EigenSystem& eig, const TransitionTable& table,
                                           const std::vector<double>& g, double detuning, double kappa) {
  require(static_cast<int>(g.size()) == table.sites(), "per-site g list length mismatch");
  require(detuning != 0.0 && kappa > 0.0, "calibration needs nonzero Δ and κ > 0");
  const auto clusters = eig.degenerate_clusters();
  require(clusters.size() >= 2, "spectrum has no excited level");
  double sum = 0.0;
  for (int j = 1; j <= table.sites(); ++j) {
    const double gj2 = g[static_cast<std::size_t>(j - 1)] * g[static_cast<std::size_t>(j - 1)];
    for (Index mu : clusters[1]) sum += gj2 * (table.plus2(j)(mu, 0) + table.plus2(j)(0, mu));
  }
  if (sum <= 1e-300) throw Error("ground and first excited levels are dark to s^+: calibration impossible");
  const double omega = kappa * std::abs(detuning) / std::sqrt(sum);
  return std::vector<double>(g.size(), omega);
}

}  // namespace cavcool
