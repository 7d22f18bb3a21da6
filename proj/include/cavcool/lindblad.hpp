#pragma once

// Density-matrix integration of the Lindblad equation
//   dρ/dt = −i[H, ρ] + Σ_k (L_k ρ L_k† − ½{L_k†L_k, ρ})
// for an EffectiveModel, and its stationary states.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseLU>

#include "cavcool/effective_model.hpp"
#include "cavcool/ode.hpp"
#include "cavcool/spin_algebra.hpp"
#include "cavcool/types.hpp"

namespace cavcool {

struct DensityState {
  Mat rho;
  double time = 0.0;

  double trace_error() const { return std::abs(rho.trace() - cplx{1.0, 0.0}); }
  double hermiticity_error() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Mat> es(rho, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }
  /// Hermitian, unit trace within 1e-9, eigenvalues ≥ −1e-8.
  bool valid() const {
    return rho.rows() == rho.cols() && hermiticity_error() <= 1e-10 && trace_error() <= 1e-9 &&
           min_eigenvalue() >= -1e-8;
  }
};

/// The Lindbladian of a model, with zero-rate channels dropped.
class Liouvillian {
 public:
  explicit Liouvillian(const EffectiveModel& model) : dim_(model.dimension()) {
    SpMat decay(dim_, dim_);
    for (const auto& ch : model.channels()) {
      if (ch.rate <= 0.0) continue;
      SpMat l = std::sqrt(ch.rate) * ch.op;
      l.makeCompressed();
      decay += SpMat(l.adjoint()) * l;
      jumps_.push_back(std::move(l));
    }
    h_ = model.hamiltonian();
    h_eff_ = h_ - cplx{0.0, 0.5} * decay;
    h_eff_.makeCompressed();
  }

  Index dimension() const { return dim_; }
  const SpMat& hamiltonian() const { return h_; }
  const SpMat& effective_hamiltonian() const { return h_eff_; }
  const std::vector<SpMat>& jumps() const { return jumps_; }

  /// L[ρ] for Hermitian ρ.
  Mat apply(const Mat& rho) const {
    const Mat x = h_eff_ * rho;
    Mat out = cplx{0.0, -1.0} * x;
    out += cplx{0.0, 1.0} * x.adjoint();
    for (const auto& l : jumps_) {
      const Mat y = l * rho;
      out += l * y.adjoint();
    }
    return out;
  }

  /// Superoperator on column-major vec(ρ): vec(AXB) = (Bᵀ ⊗ A) vec(X).
  SpMat superoperator() const {
    const SpMat id = sparse_identity(dim_);
    const SpMat heff_conj = h_eff_.conjugate();
    SpMat l = cplx{0.0, -1.0} * kron(id, h_eff_) + cplx{0.0, 1.0} * kron(heff_conj, id);
    for (const auto& j : jumps_) l += kron(SpMat(j.conjugate()), j);
    l.makeCompressed();
    return l;
  }

 private:
  Index dim_;
  SpMat h_;
  SpMat h_eff_;
  std::vector<SpMat> jumps_;
};

// ---------------------------------------------------------------------------
// Initial states

inline DensityState labeled_mixture(const EffectiveModel& model, const EigenSystem& eig,
                                    const std::vector<std::pair<LevelLabel, double>>& weights) {
  require(!weights.empty(), "empty mixture");
  const SpMat u = model.eigenbasis(eig);
  Mat rho = Mat::Zero(model.dimension(), model.dimension());
  double total = 0.0;
  for (const auto& [label, w] : weights) {
    require(w >= 0.0, "negative mixture weight");
    require(label.mu >= 0 && label.mu < eig.size() && label.n1 >= 0 && label.n1 <= model.cutoffs().n1 &&
                label.n2 >= 0 && label.n2 <= model.cutoffs().n2,
            "mixture label " + label.name() + " outside the model");
    const Vec v = u.col(model.composite_index(label.mu, label.n1, label.n2));
    rho += w * v * v.adjoint();
    total += w;
  }
  require(total > 0.0, "mixture weights sum to zero");
  return {rho / total, 0.0};
}

inline DensityState eigenstate(const EffectiveModel& model, const EigenSystem& eig, LevelLabel label) {
  return labeled_mixture(model, eig, {{label, 1.0}});
}

/// Maximally mixed spin state ⊗ cavity vacuum.
inline DensityState maximally_mixed_spin(const EffectiveModel& model) {
  Mat rho = Mat::Zero(model.dimension(), model.dimension());
  const double w = 1.0 / static_cast<double>(model.spin_dimension());
  for (Index s = 0; s < model.spin_dimension(); ++s) {
    const Index k = model.composite_index(s, 0, 0);
    rho(k, k) = w;
  }
  return {rho, 0.0};
}

// ---------------------------------------------------------------------------
// Evolution

struct LindbladOptions {
  IntegratorOptions integrator{};
  double positivity_abort = 1e-6;
  double truncation_limit = 1e-3;
};

struct EvolutionResult {
  std::vector<double> times;
  std::vector<LevelLabel> labels;
  std::vector<std::vector<double>> populations;  // [time][label]
  std::vector<double> trace_errors;
  std::vector<double> hermiticity_errors;
  std::vector<double> min_eigenvalues;
  double truncation_monitor = 0.0;  // max over time of the top-Fock-level population
  bool truncation_flagged = false;
  IntegratorStats stats;
  DensityState final_state;

  /// Population of spin level μ summed over photon numbers, per time.
  std::vector<double> level_population(Index mu) const {
    std::vector<double> out(times.size(), 0.0);
    for (std::size_t t = 0; t < times.size(); ++t)
      for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k].mu == mu) out[t] += populations[t][k];
    return out;
  }

  /// <a_x†a_x> per time.
  std::vector<double> photon_number(int mode) const {
    std::vector<double> out(times.size(), 0.0);
    for (std::size_t t = 0; t < times.size(); ++t)
      for (std::size_t k = 0; k < labels.size(); ++k)
        out[t] += (mode == 1 ? labels[k].n1 : labels[k].n2) * populations[t][k];
    return out;
  }

  std::string truncation_guidance() const {
    if (!truncation_flagged) return {};
    return "top Fock level reached population " + std::to_string(truncation_monitor) +
           "; raise the photon cutoff and rerun";
  }
};

namespace detail {

/// diag(U† ρ U) for the sparse eigenbasis U.
inline std::vector<double> labeled_populations(const Mat& rho, const SpMat& u) {
  const Mat w = rho * u;
  std::vector<double> pops(static_cast<std::size_t>(u.cols()), 0.0);
  for (Index k = 0; k < u.outerSize(); ++k) {
    cplx acc{0.0, 0.0};
    for (SpMat::InnerIterator it(u, k); it; ++it) acc += std::conj(it.value()) * w(it.row(), k);
    pops[static_cast<std::size_t>(k)] = acc.real();
  }
  return pops;
}

inline double top_fock_population(const std::vector<double>& pops, const std::vector<LevelLabel>& labels,
                                  const FockCutoffs& c) {
  double p1 = 0.0, p2 = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k].n1 == c.n1) p1 += pops[k];
    if (labels[k].n2 == c.n2) p2 += pops[k];
  }
  return std::max(p1, p2);
}

}  // namespace detail

/// Integrates the master equation over `grid`; populations are reported in
/// the |Ψ_μ, n_1, n_2> basis.
inline EvolutionResult evolve_density(const EffectiveModel& model, const EigenSystem& eig,
                                      const DensityState& rho0, std::span<const double> grid,
                                      const LindbladOptions& options = {}) {
  require(rho0.rho.rows() == model.dimension() && rho0.rho.cols() == model.dimension(),
          "initial state dimension does not match the model");
  require(rho0.valid(), "initial density matrix is not a valid state");
  const Liouvillian lv(model);
  const SpMat u = model.eigenbasis(eig);

  EvolutionResult res;
  res.labels = model.labels();
  Mat rho = rho0.rho;
  auto rhs = [&lv](double, const Mat& r) { return lv.apply(r); };
  auto observe = [&](std::size_t, double t, const Mat& r) {
    DensityState s{r, t};
    const double min_ev = s.min_eigenvalue();
    if (min_ev < -options.positivity_abort)
      throw Error("positivity violated at t=" + std::to_string(t) + ": minimum eigenvalue " +
                  std::to_string(min_ev) + " (trace error " + std::to_string(s.trace_error()) + ")");
    auto pops = detail::labeled_populations(r, u);
    res.truncation_monitor =
        std::max(res.truncation_monitor, detail::top_fock_population(pops, res.labels, model.cutoffs()));
    res.times.push_back(t);
    res.populations.push_back(std::move(pops));
    res.trace_errors.push_back(s.trace_error());
    res.hermiticity_errors.push_back(s.hermiticity_error());
    res.min_eigenvalues.push_back(min_ev);
  };
  auto hermitize = [](Mat& r) { r = 0.5 * (r + r.adjoint()).eval(); };
  res.stats = integrate_adaptive(rhs, rho, grid, options.integrator, observe, hermitize);
  res.truncation_flagged = res.truncation_monitor >= options.truncation_limit;
  res.final_state = {rho, grid.back()};
  return res;
}

// ---------------------------------------------------------------------------
// Stationary states

/// Raised when the Liouvillian has more than one stationary state.
class DegenerateSteadyState : public Error {
 public:
  using Error::Error;
};

struct SteadyStateOptions {
  double tolerance = 1e-8;
  /// When > 0, integrate from the maximally mixed state for this long and
  /// require agreement with the linear solve within `cross_check_tol`.
  double cross_check_time = 0.0;
  double cross_check_tol = 1e-6;
};

namespace detail {

inline Vec solve_bordered(const SpMat& l, Index dim, const Vec& v) {
  // (L + v tᵀ) x = v with tᵀx = tr(x): any solution is a unit-trace
  // stationary state, and the matrix is regular iff that state is unique.
  SpMat m = l;
  for (Index i = 0; i < dim; ++i) {
    const Index row = i * dim + i;
    if (v[row] == cplx{}) continue;
    for (Index j = 0; j < dim; ++j) m.coeffRef(row, j * dim + j) += v[row];
  }
  m.makeCompressed();
  Eigen::SparseLU<SpMat> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) throw DegenerateSteadyState("Liouvillian stationary space is degenerate (singular bordered system)");
  Vec x = lu.solve(v);
  if (lu.info() != Eigen::Success || !x.allFinite())
    throw DegenerateSteadyState("Liouvillian stationary space is degenerate (solve failed)");
  return x;
}

inline Mat unvec(const Vec& x, Index dim) {
  Mat r = Eigen::Map<const Mat>(x.data(), dim, dim);
  return 0.5 * (r + r.adjoint());
}

}  // namespace detail

/// Unique stationary state from a direct sparse solve.
inline DensityState steady_state(const EffectiveModel& model, const SteadyStateOptions& options = {}) {
  const Liouvillian lv(model);
  const Index d = lv.dimension();
  const SpMat l = lv.superoperator();

  Vec v1 = Vec::Zero(d * d);
  Vec v2 = Vec::Zero(d * d);
  double w2 = 0.0;
  for (Index i = 0; i < d; ++i) w2 += static_cast<double>(i + 1);
  for (Index i = 0; i < d; ++i) {
    v1[i * d + i] = 1.0 / static_cast<double>(d);
    v2[i * d + i] = static_cast<double>(d - i) / w2;
  }
  const Mat r1 = detail::unvec(detail::solve_bordered(l, d, v1), d);
  const Mat r2 = detail::unvec(detail::solve_bordered(l, d, v2), d);
  const double spread = (r1 - r2).cwiseAbs().maxCoeff();
  const double residual = lv.apply(r1).cwiseAbs().maxCoeff();
  if (spread > options.tolerance || residual > options.tolerance)
    throw DegenerateSteadyState("stationary state is not unique: solutions differ by " + std::to_string(spread) +
                                ", residual " + std::to_string(residual));
  DensityState out{r1 / r1.trace().real(), 0.0};

  if (options.cross_check_time > 0.0) {
    const std::vector<double> grid{0.0, options.cross_check_time};
    const auto long_run = evolve_density(model, EigenSystem(diagonalize(model.h0())), maximally_mixed_spin(model), grid);
    const double gap = (long_run.final_state.rho - out.rho).cwiseAbs().maxCoeff();
    if (gap > options.cross_check_tol)
      throw Error("steady state disagrees with long-time integration by " + std::to_string(gap));
  }
  return out;
}

struct AsymptoticOptions {
  double stationarity = 1e-9;  // max-abs of L[ρ] accepted as stationary
  double chunk = 25.0;         // integration chunk, units of 1/κ
  double max_time = 1e5;
  // Tight enough that the integration error floor of L[ρ] stays below
  // `stationarity`.
  IntegratorOptions integrator{1e-11};
};

struct AsymptoticResult {
  DensityState state;
  bool unique = true;        // obtained from the unique stationary solve
  double residual = 0.0;     // max-abs of L[ρ]
  double integrated_time = 0.0;
};

/// lim_{t→∞} exp(L t) ρ0. Uses the unique steady state when it exists;
/// otherwise integrates from ρ0 until L[ρ] is below `stationarity`.
inline AsymptoticResult asymptotic_state(const EffectiveModel& model, const DensityState& rho0,
                                         const AsymptoticOptions& options = {}) {
  const Liouvillian lv(model);
  try {
    DensityState ss = steady_state(model);
    return {ss, true, lv.apply(ss.rho).cwiseAbs().maxCoeff(), 0.0};
  } catch (const DegenerateSteadyState&) {
  }
  Mat rho = rho0.rho;
  double t = 0.0;
  double residual = lv.apply(rho).cwiseAbs().maxCoeff();
  auto rhs = [&lv](double, const Mat& r) { return lv.apply(r); };
  auto hermitize = [](Mat& r) { r = 0.5 * (r + r.adjoint()).eval(); };
  while (residual > options.stationarity) {
    require(t < options.max_time, "no stationary state reached by t=" + std::to_string(t));
    const std::vector<double> grid{t, t + options.chunk};
    integrate_adaptive(rhs, rho, std::span<const double>(grid), options.integrator,
                       [](std::size_t, double, const Mat&) {}, hermitize);
    t += options.chunk;
    residual = lv.apply(rho).cwiseAbs().maxCoeff();
  }
  return {{rho, t}, false, residual, t};
}

}  // namespace cavcool
