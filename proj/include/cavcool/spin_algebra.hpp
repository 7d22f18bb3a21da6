#pragma once

// Spin-1/2 operators on N sites, Heisenberg-type Hamiltonians and exact
// diagonalization resolved by total-S_z sector.
//
// Basis convention: product basis index b, site j (1-based) is bit (N - j)
// of b, with bit value 0 = up and 1 = down. Site 1 is therefore the leftmost
// Kronecker factor, and the single-site operators in the (up, down) basis are
//   s^z = diag(1/2, -1/2),  s^+ = |up><down|,  s^- = |down><up|.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cavcool/types.hpp"

namespace cavcool {

enum class SpinKind { plus, minus, z, x, y };

inline char spin_kind_symbol(SpinKind k) {
  switch (k) {
    case SpinKind::plus: return '+';
    case SpinKind::minus: return '-';
    case SpinKind::z: return 'z';
    case SpinKind::x: return 'x';
    case SpinKind::y: return 'y';
  }
  return '?';
}

inline SpinKind parse_spin_kind(char c) {
  switch (c) {
    case '+': return SpinKind::plus;
    case '-': return SpinKind::minus;
    case 'z': return SpinKind::z;
    case 'x': return SpinKind::x;
    case 'y': return SpinKind::y;
    default: throw Error(std::string("unknown spin operator symbol '") + c + "'");
  }
}

/// Desk-scale cap on the number of sites.
struct SpinLimits {
  int max_sites = 14;
};

inline Index hilbert_dimension(int n_sites) { return Index{1} << n_sites; }

/// Twice the total S_z of a product basis state (integer-valued).
inline int two_sz_of_basis(Index b, int n_sites) {
  return n_sites - 2 * std::popcount(static_cast<std::uint64_t>(b));
}

namespace detail {

inline void check_sites(int site, int n_sites, const SpinLimits& limits) {
  require(n_sites >= 1, "site count must be at least 1");
  require(n_sites <= limits.max_sites,
          "site count " + std::to_string(n_sites) + " exceeds configured cap " +
              std::to_string(limits.max_sites));
  require(site >= 1 && site <= n_sites,
          "site " + std::to_string(site) + " out of range [1, " + std::to_string(n_sites) + "]");
}

/// Action of a single-site operator on a product basis state: every
/// single-site operator used here has at most one nonzero per column.
/// Returns false when the state is annihilated.
inline bool apply_site(SpinKind kind, int site, int n_sites, Index& b, cplx& amp) {
  const Index mask = Index{1} << (n_sites - site);
  const bool down = (b & mask) != 0;
  switch (kind) {
    case SpinKind::z:
      amp *= down ? -0.5 : 0.5;
      return true;
    case SpinKind::plus:
      if (!down) return false;
      b &= ~mask;
      return true;
    case SpinKind::minus:
      if (down) return false;
      b |= mask;
      return true;
    case SpinKind::x:
      amp *= 0.5;
      b ^= mask;
      return true;
    case SpinKind::y:
      // s^y |down> = -i/2 |up>,  s^y |up> = i/2 |down>
      amp *= down ? cplx{0.0, -0.5} : cplx{0.0, 0.5};
      b ^= mask;
      return true;
  }
  return false;
}

inline std::optional<int> kind_sz_shift(SpinKind kind) {
  switch (kind) {
    case SpinKind::plus: return 1;
    case SpinKind::minus: return -1;
    case SpinKind::z: return 0;
    default: return std::nullopt;
  }
}

}  // namespace detail

/// Sparse operator on the 2^N spin space with the amount by which it shifts
/// total S_z (nullopt when it mixes sectors).
class SpinOperator {
 public:
  SpinOperator() = default;
  SpinOperator(int n_sites, SpMat matrix, std::optional<int> sz_shift)
      : n_sites_(n_sites), matrix_(std::move(matrix)), sz_shift_(sz_shift) {
    matrix_.makeCompressed();
  }

  int sites() const { return n_sites_; }
  Index dimension() const { return matrix_.rows(); }
  const SpMat& matrix() const { return matrix_; }
  std::optional<int> sz_shift() const { return sz_shift_; }

  SpinOperator adjoint() const {
    SpMat adj = matrix_.adjoint();
    return {n_sites_, std::move(adj), sz_shift_ ? std::optional<int>(-*sz_shift_) : std::nullopt};
  }

  friend SpinOperator operator*(const SpinOperator& a, const SpinOperator& b) {
    require(a.n_sites_ == b.n_sites_, "operator site counts differ");
    std::optional<int> shift;
    if (a.sz_shift_ && b.sz_shift_) shift = *a.sz_shift_ + *b.sz_shift_;
    SpMat prod = a.matrix_ * b.matrix_;
    return {a.n_sites_, std::move(prod), shift};
  }

  friend SpinOperator operator+(const SpinOperator& a, const SpinOperator& b) {
    require(a.n_sites_ == b.n_sites_, "operator site counts differ");
    std::optional<int> shift;
    if (a.sz_shift_ && b.sz_shift_ && *a.sz_shift_ == *b.sz_shift_) shift = a.sz_shift_;
    SpMat sum = a.matrix_ + b.matrix_;
    return {a.n_sites_, std::move(sum), shift};
  }

  friend SpinOperator operator*(cplx c, const SpinOperator& a) {
    SpMat scaled = c * a.matrix_;
    return {a.n_sites_, std::move(scaled), a.sz_shift_};
  }

 private:
  int n_sites_ = 0;
  SpMat matrix_;
  std::optional<int> sz_shift_;
};

/// I ⊗ ... ⊗ s^kind ⊗ ... ⊗ I with the single-site operator on `site` (1-based).
inline SpinOperator site_operator(SpinKind kind, int site, int n_sites, const SpinLimits& limits = {}) {
  detail::check_sites(site, n_sites, limits);
  const Index dim = hilbert_dimension(n_sites);
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(dim));
  for (Index b = 0; b < dim; ++b) {
    Index out = b;
    cplx amp{1.0, 0.0};
    if (detail::apply_site(kind, site, n_sites, out, amp)) trips.emplace_back(out, b, amp);
  }
  SpMat m(dim, dim);
  m.setFromTriplets(trips.begin(), trips.end());
  return {n_sites, std::move(m), detail::kind_sz_shift(kind)};
}

/// Total S_z = Σ_j s_j^z (diagonal).
inline SpinOperator total_sz(int n_sites, const SpinLimits& limits = {}) {
  detail::check_sites(1, n_sites, limits);
  const Index dim = hilbert_dimension(n_sites);
  SpMat m(dim, dim);
  m.reserve(Eigen::VectorXi::Constant(dim, 1));
  for (Index b = 0; b < dim; ++b) m.insert(b, b) = 0.5 * two_sz_of_basis(b, n_sites);
  return {n_sites, std::move(m), 0};
}

/// One term of a spin Hamiltonian: coupling × product of site operators.
/// Factors are written left to right as an operator product (the rightmost
/// acts first).
struct SpinTerm {
  double coupling = 0.0;
  std::vector<std::pair<SpinKind, int>> factors;

  /// Descriptor text such as "x1 x2" or "+1 -2".
  std::string descriptor() const {
    std::string out;
    for (const auto& [kind, site] : factors) {
      if (!out.empty()) out += ' ';
      out += spin_kind_symbol(kind);
      out += std::to_string(site);
    }
    return out;
  }

  static SpinTerm parse(double coupling, const std::string& text) {
    SpinTerm term;
    term.coupling = coupling;
    std::size_t pos = 0;
    while (pos < text.size()) {
      while (pos < text.size() && text[pos] == ' ') ++pos;
      if (pos >= text.size()) break;
      const SpinKind kind = parse_spin_kind(text[pos++]);
      std::size_t end = pos;
      while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
      require(end > pos, "missing site index in term '" + text + "'");
      term.factors.emplace_back(kind, std::stoi(text.substr(pos, end - pos)));
      pos = end;
    }
    require(!term.factors.empty(), "empty operator product in term");
    return term;
  }
};

/// Hermitian spin Hamiltonian assembled from a list of terms.
class SpinHamiltonian {
 public:
  static SpinHamiltonian from_terms(int n_sites, std::vector<SpinTerm> terms,
                                    const SpinLimits& limits = {}) {
    detail::check_sites(1, n_sites, limits);
    const Index dim = hilbert_dimension(n_sites);
    std::vector<Triplet> trips;
    for (const auto& term : terms) {
      for (const auto& [kind, site] : term.factors) detail::check_sites(site, n_sites, limits);
      for (Index b = 0; b < dim; ++b) {
        Index out = b;
        cplx amp{term.coupling, 0.0};
        bool alive = true;
        for (auto it = term.factors.rbegin(); it != term.factors.rend() && alive; ++it)
          alive = detail::apply_site(it->first, it->second, n_sites, out, amp);
        if (alive && amp != cplx{}) trips.emplace_back(out, b, amp);
      }
    }
    SpMat m(dim, dim);
    m.setFromTriplets(trips.begin(), trips.end());
    m.prune(cplx{0.0, 0.0});
    m.makeCompressed();

    SpinHamiltonian h;
    h.n_sites_ = n_sites;
    h.terms_ = std::move(terms);
    h.matrix_ = std::move(m);
    const double scale = std::max(1.0, frobenius(h.matrix_));
    const SpMat herm = h.matrix_ - SpMat(h.matrix_.adjoint());
    require(frobenius(herm) <= 1e-12 * scale, "Hamiltonian terms do not sum to a Hermitian operator");
    return h;
  }

  int sites() const { return n_sites_; }
  Index dimension() const { return matrix_.rows(); }
  const std::vector<SpinTerm>& terms() const { return terms_; }
  const SpMat& matrix() const { return matrix_; }
  double norm() const { return frobenius(matrix_); }

  /// ‖[H, S_z]‖_F
  double sz_commutator_norm() const {
    const SpMat sz = total_sz(n_sites_, SpinLimits{n_sites_}).matrix();
    const SpMat comm = matrix_ * sz - sz * matrix_;
    return frobenius(comm);
  }

  bool conserves_sz() const { return sz_commutator_norm() <= 1e-12 * std::max(1.0, norm()); }

  SpinOperator as_operator() const {
    return {n_sites_, matrix_, conserves_sz() ? std::optional<int>(0) : std::nullopt};
  }

 private:
  int n_sites_ = 0;
  std::vector<SpinTerm> terms_;
  SpMat matrix_;
};

struct ChainOptions {
  bool allow_odd = false;
  SpinLimits limits{};
};

/// H = J Σ_{j=1}^{N-1} s_j·s_{j+1} + B S_z with open boundary.
inline SpinHamiltonian heisenberg_chain(int n_sites, double j_coupling, double field,
                                        const ChainOptions& options = {}) {
  require(std::isfinite(j_coupling) && std::isfinite(field), "non-finite chain parameter");
  require(j_coupling > 0.0, "Heisenberg chain requires J > 0");
  require(n_sites >= 2, "Heisenberg chain requires at least two sites");
  require(n_sites % 2 == 0 || options.allow_odd,
          "odd site count " + std::to_string(n_sites) + " gives a degenerate ground state");
  std::vector<SpinTerm> terms;
  for (int j = 1; j < n_sites; ++j) {
    for (SpinKind k : {SpinKind::x, SpinKind::y, SpinKind::z})
      terms.push_back({j_coupling, {{k, j}, {k, j + 1}}});
  }
  if (field != 0.0) {
    for (int j = 1; j <= n_sites; ++j) terms.push_back({field, {{SpinKind::z, j}}});
  }
  return SpinHamiltonian::from_terms(n_sites, std::move(terms), options.limits);
}

/// H_0 = B(s_1^z + s_2^z) + J s_1·s_2.
inline SpinHamiltonian two_spin_model(double field, double j_coupling) {
  require(std::isfinite(field), "non-finite field");
  return heisenberg_chain(2, j_coupling, field);
}

/// Ascending eigenpairs of a spin Hamiltonian. Column μ of `states()` is
/// |Ψ_μ>. When the Hamiltonian conserves S_z every eigenvector lies in one
/// sector and sz(μ) is exact; otherwise sz(μ) is the expectation value.
class EigenSystem {
 public:
  EigenSystem() = default;
  EigenSystem(int n_sites, std::vector<double> energies, SpMat states, std::vector<double> sz_values,
              bool sz_resolved, double h_norm)
      : n_sites_(n_sites),
        energies_(std::move(energies)),
        states_(std::move(states)),
        sz_values_(std::move(sz_values)),
        sz_resolved_(sz_resolved),
        h_norm_(h_norm) {
    states_.makeCompressed();
  }

  int sites() const { return n_sites_; }
  Index size() const { return static_cast<Index>(energies_.size()); }
  const std::vector<double>& energies() const { return energies_; }
  double energy(Index mu) const { return energies_[static_cast<std::size_t>(mu)]; }
  const std::vector<double>& sz_values() const { return sz_values_; }
  double sz(Index mu) const { return sz_values_[static_cast<std::size_t>(mu)]; }
  bool sz_resolved() const { return sz_resolved_; }
  /// Spectral scale max|E| used for relative tolerances.
  double h_norm() const { return h_norm_; }
  const SpMat& states() const { return states_; }
  Vec state(Index mu) const { return Vec(states_.col(mu)); }

  /// Dense (O)_{μν} = <Ψ_μ|O|Ψ_ν>.
  Mat matrix_elements(const SpMat& op) const {
    const SpMat ov = op * states_;
    const SpMat adj = states_.adjoint();
    return Mat(adj * ov);
  }

  /// Groups of consecutive indices whose energies chain within
  /// rel_tol·max(1, ‖H‖).
  std::vector<std::vector<Index>> degenerate_clusters(double rel_tol = 1e-9) const {
    std::vector<std::vector<Index>> clusters;
    const double tol = rel_tol * std::max(1.0, h_norm_);
    for (Index mu = 0; mu < size(); ++mu) {
      if (clusters.empty() || energy(mu) - energy(clusters.back().back()) > tol) clusters.emplace_back();
      clusters.back().push_back(mu);
    }
    return clusters;
  }

 private:
  int n_sites_ = 0;
  std::vector<double> energies_;
  SpMat states_;
  std::vector<double> sz_values_;
  bool sz_resolved_ = false;
  double h_norm_ = 0.0;
};

namespace detail {

struct EigenCandidate {
  double energy;
  int two_sz;        // sector label, or 0 for the unresolved path
  double sz;         // exact or expectation
  Index order;       // deterministic construction order
  std::vector<std::pair<Index, cplx>> entries;
};

/// Fix the global phase: largest-magnitude (first on ties) component real positive.
inline void fix_phase(Eigen::Ref<Vec> v) {
  Index arg = 0;
  double best = -1.0;
  for (Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > best * (1.0 + 1e-12)) {
      best = a;
      arg = i;
    }
  }
  if (best > 0.0) v *= std::conj(v[arg]) / std::abs(v[arg]);
}

inline std::string residual_report(const Mat& block, const Eigen::SelfAdjointEigenSolver<Mat>& solver) {
  const Mat r = block * solver.eigenvectors() - solver.eigenvectors() * solver.eigenvalues().asDiagonal();
  return "max residual column norm " + std::to_string(r.colwise().norm().maxCoeff());
}

}  // namespace detail

/// Exact diagonalization. S_z-conserving Hamiltonians are diagonalized
/// sector by sector (dense within each sector); others as one dense block.
/// Ordering: ascending energy; inside numerically degenerate clusters
/// (|E_μ - E_ν| ≤ 1e-9·‖H‖) ascending sz, then construction order.
inline EigenSystem diagonalize(const SpinHamiltonian& h) {
  const int n = h.sites();
  const Index dim = h.dimension();
  const bool resolved = h.conserves_sz();
  std::vector<detail::EigenCandidate> cands;
  cands.reserve(static_cast<std::size_t>(dim));

  auto solve_block = [&](const std::vector<Index>& basis, int two_sz) {
    const Index m = static_cast<Index>(basis.size());
    std::vector<Index> local(static_cast<std::size_t>(dim), -1);
    for (Index k = 0; k < m; ++k) local[static_cast<std::size_t>(basis[static_cast<std::size_t>(k)])] = k;
    Mat block = Mat::Zero(m, m);
    const SpMat& hm = h.matrix();
    for (Index k = 0; k < m; ++k) {
      const Index col = basis[static_cast<std::size_t>(k)];
      for (SpMat::InnerIterator it(hm, col); it; ++it) {
        const Index row = local[static_cast<std::size_t>(it.row())];
        if (row >= 0) block(row, k) = it.value();
      }
    }
    Eigen::SelfAdjointEigenSolver<Mat> solver(block);
    if (solver.info() != Eigen::Success) {
      throw Error("eigensolver did not converge in sector 2Sz=" + std::to_string(two_sz) + ": " +
                  detail::residual_report(block, solver));
    }
    Mat vecs = solver.eigenvectors();
    for (Index k = 0; k < m; ++k) {
      detail::fix_phase(vecs.col(k));
      detail::EigenCandidate c;
      c.energy = solver.eigenvalues()[k];
      c.two_sz = two_sz;
      c.order = static_cast<Index>(cands.size());
      double sz_expect = 0.0;
      for (Index r = 0; r < m; ++r) {
        const cplx v = vecs(r, k);
        if (std::abs(v) == 0.0) continue;
        const Index b = basis[static_cast<std::size_t>(r)];
        c.entries.emplace_back(b, v);
        sz_expect += std::norm(v) * 0.5 * two_sz_of_basis(b, n);
      }
      c.sz = resolved ? 0.5 * two_sz : sz_expect;
      cands.push_back(std::move(c));
    }
  };

  if (resolved) {
    for (int two_sz = -n; two_sz <= n; two_sz += 2) {
      std::vector<Index> basis;
      for (Index b = 0; b < dim; ++b)
        if (two_sz_of_basis(b, n) == two_sz) basis.push_back(b);
      solve_block(basis, two_sz);
    }
  } else {
    std::vector<Index> basis(static_cast<std::size_t>(dim));
    std::iota(basis.begin(), basis.end(), Index{0});
    solve_block(basis, 0);
  }

  double h_norm = 0.0;
  for (const auto& c : cands) h_norm = std::max(h_norm, std::abs(c.energy));
  const double tol = 1e-9 * std::max(1.0, h_norm);

  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    return a.energy < b.energy || (a.energy == b.energy && a.order < b.order);
  });
  // Re-sort inside each chained degenerate cluster.
  for (std::size_t start = 0; start < cands.size();) {
    std::size_t end = start + 1;
    while (end < cands.size() && cands[end].energy - cands[end - 1].energy <= tol) ++end;
    std::stable_sort(cands.begin() + static_cast<std::ptrdiff_t>(start),
                     cands.begin() + static_cast<std::ptrdiff_t>(end), [](const auto& a, const auto& b) {
                       if (a.sz != b.sz) return a.sz < b.sz;
                       return a.order < b.order;
                     });
    start = end;
  }

  std::vector<double> energies;
  std::vector<double> szs;
  std::vector<Triplet> trips;
  for (std::size_t mu = 0; mu < cands.size(); ++mu) {
    energies.push_back(cands[mu].energy);
    szs.push_back(cands[mu].sz);
    for (const auto& [b, v] : cands[mu].entries) trips.emplace_back(b, static_cast<Index>(mu), v);
  }
  SpMat states(dim, dim);
  states.setFromTriplets(trips.begin(), trips.end());
  return {n, std::move(energies), std::move(states), std::move(szs), resolved, h_norm};
}

}  // namespace cavcool
