#pragma once

// Effective atom-cavity model after adiabatic elimination of the excited
// level: spin operators ε_z, ε_1, ε_2, Γ_±, the composite
// spin ⊗ Fock(a_1) ⊗ Fock(a_2) Hamiltonian in the frame co-rotating with
// the two-photon detunings, and the dissipative channels.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cavcool/spin_algebra.hpp"
#include "cavcool/types.hpp"

namespace cavcool {

/// Couplings and Rabi frequencies of one atom (units of κ).
struct AtomDrive {
  cplx g1{0.0};
  cplx g2{0.0};
  cplx omega1{0.0};
  cplx omega2{0.0};
};

struct DriveParams {
  std::vector<AtomDrive> atoms;
  double detuning1 = 0.0;       // Δ_1
  double detuning2 = 0.0;       // Δ_2
  double raman_detuning1 = 0.0; // δ_1
  double raman_detuning2 = 0.0; // δ_2
  double kappa = 1.0;
  double nbar = 0.0;
  double gamma = 0.0;

  /// Uniform drive on n atoms.
  static DriveParams uniform(int n_atoms, cplx g, cplx omega1, cplx omega2, double detuning,
                             double raman_detuning, double kappa) {
    DriveParams p;
    p.atoms.assign(static_cast<std::size_t>(n_atoms), AtomDrive{g, g, omega1, omega2});
    p.detuning1 = p.detuning2 = detuning;
    p.raman_detuning1 = p.raman_detuning2 = raman_detuning;
    p.kappa = kappa;
    return p;
  }

  /// |Ω_j/Δ|² entering the spontaneous-emission rates: the mean over the
  /// two Raman drives of atom j.
  double spontaneous_weight(std::size_t j) const {
    const auto& a = atoms.at(j);
    return 0.5 * (std::norm(a.omega1 / detuning1) + std::norm(a.omega2 / detuning2));
  }
};

struct EffectiveOperators {
  SpinOperator eps_z;
  SpinOperator eps_1;
  SpinOperator eps_2;
  SpinOperator gamma_minus;
  SpinOperator gamma_plus;
};

inline EffectiveOperators build_effective_operators(const DriveParams& params, int n_sites,
                                                    const SpinLimits& limits = {}) {
  require(params.detuning1 != 0.0 && params.detuning2 != 0.0, "zero detuning");
  require(std::isfinite(params.detuning1) && std::isfinite(params.detuning2), "non-finite detuning");
  require(static_cast<int>(params.atoms.size()) == n_sites,
          "per-atom parameter list has " + std::to_string(params.atoms.size()) + " entries for " +
              std::to_string(n_sites) + " sites");
  const Index dim = hilbert_dimension(n_sites);
  SpMat ez(dim, dim), e1(dim, dim), e2(dim, dim), gm(dim, dim), gp(dim, dim);
  const double d1 = params.detuning1;
  const double d2 = params.detuning2;
  for (int j = 1; j <= n_sites; ++j) {
    const AtomDrive& a = params.atoms[static_cast<std::size_t>(j - 1)];
    const SpinOperator sz = site_operator(SpinKind::z, j, n_sites, limits);
    const SpinOperator sp = site_operator(SpinKind::plus, j, n_sites, limits);
    const SpinOperator sm = site_operator(SpinKind::minus, j, n_sites, limits);
    ez += (std::norm(a.omega2) / d2 - std::norm(a.omega1) / d1) * sz.matrix();
    e1 += (std::norm(a.g1) / d1) * SpMat(sm.matrix() * sp.matrix());
    e2 += (std::norm(a.g2) / d2) * SpMat(sp.matrix() * sm.matrix());
    gm += (a.g1 * a.omega1 / d1) * sm.matrix();
    gp += (a.g2 * a.omega2 / d2) * sp.matrix();
  }
  auto wrap = [&](SpMat m, std::optional<int> shift) {
    m.prune(cplx{0.0, 0.0});
    return SpinOperator(n_sites, std::move(m), shift);
  };
  return {wrap(ez, 0), wrap(e1, 0), wrap(e2, 0), wrap(gm, -1), wrap(gp, 1)};
}

struct FockCutoffs {
  int n1 = 2;
  int n2 = 2;
};

enum class ChannelKind { cavity_loss, cavity_gain, spont_plus, spont_minus, spont_z };

inline bool is_spontaneous(ChannelKind k) {
  return k == ChannelKind::spont_plus || k == ChannelKind::spont_minus || k == ChannelKind::spont_z;
}

/// Lindblad operator L = √rate · op.
struct JumpChannel {
  SpMat op;
  double rate = 0.0;
  std::string label;
  ChannelKind kind = ChannelKind::cavity_loss;
  int mode = 0;  // 1 or 2 for cavity channels
  int atom = 0;  // 1-based for spontaneous channels
};

/// Label of a composite eigenbasis state |Ψ_μ, n_1, n_2>.
struct LevelLabel {
  Index mu = 0;
  int n1 = 0;
  int n2 = 0;

  std::string name() const {
    return "psi" + std::to_string(mu) + "_n" + std::to_string(n1) + "_" + std::to_string(n2);
  }
  friend bool operator==(const LevelLabel&, const LevelLabel&) = default;
};

/// Open-system model on spin ⊗ Fock(a_1) ⊗ Fock(a_2); composite index
/// ((s·(n1max+1) + n1)·(n2max+1) + n2).
class EffectiveModel {
 public:
  const SpinHamiltonian& h0() const { return h0_; }
  const EffectiveOperators& ops() const { return ops_; }
  const DriveParams& params() const { return params_; }
  const FockCutoffs& cutoffs() const { return cutoffs_; }
  int sites() const { return h0_.sites(); }
  Index spin_dimension() const { return h0_.dimension(); }
  Index dimension() const { return spin_dimension() * (cutoffs_.n1 + 1) * (cutoffs_.n2 + 1); }

  /// Time-independent Hamiltonian in the frame rotating with δ_x a_x†a_x.
  const SpMat& hamiltonian() const { return h_rf_; }
  const std::vector<JumpChannel>& channels() const { return channels_; }

  /// Pieces of the lab-frame Hamiltonian
  /// H(t) = H_static − (e^{iδ_1 t} C_1 + e^{iδ_2 t} C_2 + h.c.),
  /// with C_1 = a_1†Γ_−, C_2 = a_2†Γ_+.
  const SpMat& lab_static() const { return lab_static_; }
  const SpMat& lab_coupling1() const { return c1_; }
  const SpMat& lab_coupling2() const { return c2_; }

  Index composite_index(Index spin, int n1, int n2) const {
    return (spin * (cutoffs_.n1 + 1) + n1) * (cutoffs_.n2 + 1) + n2;
  }

  const SpMat& number1() const { return num1_; }
  const SpMat& number2() const { return num2_; }

  /// Columns are |Ψ_μ, n_1, n_2> in composite order (μ-major).
  SpMat eigenbasis(const EigenSystem& eig) const {
    require(eig.size() == spin_dimension(), "eigensystem does not match the spin space");
    return kron(eig.states(), kron(sparse_identity(cutoffs_.n1 + 1), sparse_identity(cutoffs_.n2 + 1)));
  }

  std::vector<LevelLabel> labels() const {
    std::vector<LevelLabel> out;
    out.reserve(static_cast<std::size_t>(dimension()));
    for (Index mu = 0; mu < spin_dimension(); ++mu)
      for (int n1 = 0; n1 <= cutoffs_.n1; ++n1)
        for (int n2 = 0; n2 <= cutoffs_.n2; ++n2) out.push_back({mu, n1, n2});
    return out;
  }

  friend EffectiveModel assemble_model(const SpinHamiltonian& h0, const EffectiveOperators& ops,
                                       const DriveParams& params, const FockCutoffs& cutoffs);

 private:
  SpinHamiltonian h0_;
  EffectiveOperators ops_;
  DriveParams params_;
  FockCutoffs cutoffs_;
  SpMat h_rf_;
  SpMat lab_static_;
  SpMat c1_;
  SpMat c2_;
  SpMat num1_;
  SpMat num2_;
  std::vector<JumpChannel> channels_;
};

/// Truncated annihilation operator on Fock states 0..cutoff.
inline SpMat annihilation(int cutoff) {
  SpMat a(cutoff + 1, cutoff + 1);
  for (int n = 1; n <= cutoff; ++n) a.insert(n - 1, n) = std::sqrt(static_cast<double>(n));
  a.makeCompressed();
  return a;
}

inline EffectiveModel assemble_model(const SpinHamiltonian& h0, const EffectiveOperators& ops,
                                     const DriveParams& params, const FockCutoffs& cutoffs) {
  require(cutoffs.n1 >= 1 && cutoffs.n2 >= 1, "photon cutoffs must be at least 1");
  require(params.kappa >= 0.0 && params.nbar >= 0.0 && params.gamma >= 0.0,
          "rates and thermal occupation must be nonnegative");
  require(static_cast<int>(params.atoms.size()) == h0.sites(), "drive/site count mismatch");

  EffectiveModel m;
  m.h0_ = h0;
  m.ops_ = ops;
  m.params_ = params;
  m.cutoffs_ = cutoffs;

  const SpMat id_s = sparse_identity(h0.dimension());
  const SpMat id1 = sparse_identity(cutoffs.n1 + 1);
  const SpMat id2 = sparse_identity(cutoffs.n2 + 1);
  const SpMat a1 = annihilation(cutoffs.n1);
  const SpMat a2 = annihilation(cutoffs.n2);
  const SpMat n1 = SpMat(a1.adjoint()) * a1;
  const SpMat n2 = SpMat(a2.adjoint()) * a2;

  const SpMat big_a1 = kron(id_s, kron(a1, id2));
  const SpMat big_a2 = kron(id_s, kron(id1, a2));
  m.num1_ = kron(id_s, kron(n1, id2));
  m.num2_ = kron(id_s, kron(id1, n2));

  const SpMat spin_only = h0.matrix() - ops.eps_z.matrix();
  const SpMat h_d_photon = kron(ops.eps_1.matrix(), kron(n1, id2)) + kron(ops.eps_2.matrix(), kron(id1, n2));
  m.lab_static_ = kron(spin_only, kron(id1, id2)) - h_d_photon;
  m.c1_ = kron(ops.gamma_minus.matrix(), kron(SpMat(a1.adjoint()), id2));
  m.c2_ = kron(ops.gamma_plus.matrix(), kron(id1, SpMat(a2.adjoint())));

  SpMat h = m.lab_static_ + params.raman_detuning1 * m.num1_ + params.raman_detuning2 * m.num2_;
  h -= m.c1_ + m.c2_;
  h -= SpMat(m.c1_.adjoint()) + SpMat(m.c2_.adjoint());
  h.prune(cplx{0.0, 0.0});
  h.makeCompressed();
  m.h_rf_ = std::move(h);

  const double kappa = params.kappa;
  const double nbar = params.nbar;
  m.channels_.push_back({big_a1, kappa * (nbar + 1.0), "a1", ChannelKind::cavity_loss, 1, 0});
  m.channels_.push_back({big_a2, kappa * (nbar + 1.0), "a2", ChannelKind::cavity_loss, 2, 0});
  if (nbar > 0.0) {
    m.channels_.push_back({SpMat(big_a1.adjoint()), kappa * nbar, "a1_thermal", ChannelKind::cavity_gain, 1, 0});
    m.channels_.push_back({SpMat(big_a2.adjoint()), kappa * nbar, "a2_thermal", ChannelKind::cavity_gain, 2, 0});
  }
  const SpMat id_f = kron(id1, id2);
  for (int j = 1; j <= h0.sites(); ++j) {
    const double w = params.spontaneous_weight(static_cast<std::size_t>(j - 1));
    const std::string tag = std::to_string(j);
    m.channels_.push_back({kron(site_operator(SpinKind::plus, j, h0.sites(), SpinLimits{h0.sites()}).matrix(), id_f),
                           0.25 * params.gamma * w, "spont_plus_" + tag, ChannelKind::spont_plus, 0, j});
    m.channels_.push_back({kron(site_operator(SpinKind::minus, j, h0.sites(), SpinLimits{h0.sites()}).matrix(), id_f),
                           0.25 * params.gamma * w, "spont_minus_" + tag, ChannelKind::spont_minus, 0, j});
    m.channels_.push_back({kron(site_operator(SpinKind::z, j, h0.sites(), SpinLimits{h0.sites()}).matrix(), id_f),
                           0.5 * params.gamma * w, "spont_z_" + tag, ChannelKind::spont_z, 0, j});
  }
  return m;
}

// ---------------------------------------------------------------------------
// Regime validation

struct RegimeCheck {
  std::string name;
  double ratio = 0.0;
  double threshold = 0.2;
  bool pass = true;
};

struct RegimeReport {
  std::vector<RegimeCheck> checks;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
  }
  /// Any ratio above 1: the perturbative picture is broken, not just marginal.
  bool hard_fail() const {
    return std::any_of(checks.begin(), checks.end(), [](const auto& c) { return c.ratio > 1.0; });
  }
  const RegimeCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Ratios of the small quantities the cooling picture relies on. Advisory:
/// a check warns (pass = false) when its ratio exceeds the threshold.
inline RegimeReport validate_regime(const EffectiveModel& model, const EigenSystem& eig,
                                    double threshold = 0.2) {
  require(eig.size() == model.spin_dimension(), "eigensystem does not match the model");
  RegimeReport report;
  auto add = [&](std::string name, double ratio) {
    report.checks.push_back({std::move(name), ratio, threshold, ratio <= threshold * (1.0 + 1e-9)});
  };
  const DriveParams& p = model.params();
  const double inf = std::numeric_limits<double>::infinity();
  const double degen = 1e-9 * std::max(1.0, eig.h_norm());

  double min_gap = inf;
  for (Index mu = 0; mu < eig.size(); ++mu)
    for (Index nu = mu + 1; nu < eig.size(); ++nu) {
      const double gap = std::abs(eig.energy(mu) - eig.energy(nu));
      if (gap > degen) min_gap = std::min(min_gap, gap);
    }
  add("kappa_over_min_gap", min_gap == inf ? 0.0 : p.kappa / min_gap);

  const Mat gm = eig.matrix_elements(model.ops().gamma_minus.matrix());
  const Mat gp = eig.matrix_elements(model.ops().gamma_plus.matrix());
  double diag = 0.0;
  for (Index mu = 0; mu < eig.size(); ++mu) diag = std::max({diag, std::abs(gm(mu, mu)), std::abs(gp(mu, mu))});
  add("gamma_diag_over_kappa", p.kappa > 0.0 ? diag / p.kappa : (diag > 0.0 ? inf : 0.0));

  double fast = std::max(std::abs(p.raman_detuning1), std::abs(p.raman_detuning2));
  for (const auto& a : p.atoms)
    fast = std::max({fast, std::abs(a.g1), std::abs(a.g2), std::abs(a.omega1), std::abs(a.omega2)});
  add("large_detuning", fast / std::min(std::abs(p.detuning1), std::abs(p.detuning2)));
  if (p.detuning1 != p.detuning2) add("detuning_split", fast / std::abs(p.detuning1 - p.detuning2));

  auto perturbation = [&](const std::string& name, const Mat& x) {
    double worst = 0.0;
    for (Index mu = 0; mu < eig.size(); ++mu)
      for (Index nu = 0; nu < eig.size(); ++nu) {
        if (mu == nu) continue;
        const double gap = std::abs(eig.energy(mu) - eig.energy(nu));
        const double el = std::abs(x(mu, nu));
        if (el == 0.0) continue;
        worst = std::max(worst, gap > degen ? el / gap : inf);
      }
    add(name, worst);
  };
  perturbation("perturbation_eps_z", eig.matrix_elements(model.ops().eps_z.matrix()));
  perturbation("perturbation_eps_1", eig.matrix_elements(model.ops().eps_1.matrix()));
  perturbation("perturbation_eps_2", eig.matrix_elements(model.ops().eps_2.matrix()));
  perturbation("perturbation_gamma_minus", gm);
  perturbation("perturbation_gamma_plus", gp);
  return report;
}

}  // namespace cavcool
