#pragma once

// Experiment runners: presets for the two-spin cascade (fig2) and the
// Heisenberg-chain broadband scheme (fig3), a config-driven custom runner,
// and CSV + JSON metadata emission.
//
// Every quantity in RunConfig is in units of κ (times in units of 1/κ);
// `kappa` converts to the physical values handed to the engines.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "cavcool/effective_model.hpp"
#include "cavcool/io.hpp"
#include "cavcool/lindblad.hpp"
#include "cavcool/markov.hpp"
#include "cavcool/rng.hpp"
#include "cavcool/spectral.hpp"
#include "cavcool/spin_algebra.hpp"
#include "cavcool/trajectory.hpp"
#include "cavcool/types.hpp"

namespace cavcool {

using Json = nlohmann::ordered_json;

enum class ModelKind { two_spin, chain, custom };
enum class SolverKind { lindblad, trajectory, markov };
enum class StartState { top, ground, mixed };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::two_spin: return "two-spin";
    case ModelKind::chain: return "chain";
    case ModelKind::custom: return "custom";
  }
  return "?";
}
inline std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::lindblad: return "lindblad";
    case SolverKind::trajectory: return "trajectory";
    case SolverKind::markov: return "markov";
  }
  return "?";
}
inline std::string to_string(StartState s) {
  switch (s) {
    case StartState::top: return "top";
    case StartState::ground: return "ground";
    case StartState::mixed: return "mixed";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "two-spin") return ModelKind::two_spin;
  if (s == "chain") return ModelKind::chain;
  if (s == "custom") return ModelKind::custom;
  throw Error("unknown model '" + s + "' (two-spin, chain, custom)");
}
inline SolverKind parse_solver_kind(const std::string& s) {
  if (s == "lindblad") return SolverKind::lindblad;
  if (s == "trajectory") return SolverKind::trajectory;
  if (s == "markov") return SolverKind::markov;
  throw Error("unknown solver '" + s + "' (lindblad, trajectory, markov)");
}
inline StartState parse_start_state(const std::string& s) {
  if (s == "top") return StartState::top;
  if (s == "ground") return StartState::ground;
  if (s == "mixed") return StartState::mixed;
  throw Error("unknown start state '" + s + "' (top, ground, mixed)");
}

/// Spectral density of the broadband drive.
///  relative: flat on (ε_1)_00 + (lo·B, hi·B)
///  flat:     flat on (lo, hi)
///  full:     flat band covering every downhill transition
///  comb:     teeth (δ, weight) with Lorentzian linewidth
///  table:    piecewise-linear (δ, I)
struct BandSpec {
  std::string shape = "relative";
  double lo = 0.5;
  double hi = 3.5;
  std::vector<std::pair<double, double>> points;
  double linewidth = 1.0;
};

struct RunConfig {
  std::string command = "custom";
  double kappa = 1.0;

  // spin model
  ModelKind model = ModelKind::two_spin;
  int n_sites = 2;
  double J = 5.0;
  double B = 10.0;
  bool allow_odd = false;
  std::string field_convention = "zero-field";  // chain: how J is fixed from B = E_10/2
  bool derive_J = false;                        // chain: J from the convention instead of `J`
  std::optional<SpinHamiltonian> hamiltonian;   // custom model, couplings in units of κ

  // drive
  double g = 7.0;
  double omega1 = 70.0;
  double omega2 = -70.0;
  double detuning1 = 700.0;
  double detuning2 = 700.0;
  double raman1 = 10.0;
  double raman2 = 10.0;
  double nbar = 0.0;
  double gamma = 0.0;
  std::vector<AtomDrive> atoms;   // explicit per-atom drive; overrides the uniform values
  bool calibrate_omega = false;   // Ω from |(Γ_+)_{10}| = κ
  bool detuning_from_g = false;   // Δ = g²/κ

  // solver
  SolverKind solver = SolverKind::trajectory;
  double t_max = 200.0;
  double dt = 0.5;
  std::size_t trajectories = 2000;
  std::uint64_t seed = 1;
  FockCutoffs cutoffs{2, 2};
  bool auto_cutoff = true;
  int max_cutoff = 8;
  StartState start = StartState::top;
  double tolerance = 1e-8;

  // markov
  BandSpec band;
  int markov_cutoff = 1;
  bool corrected_resonance = true;
  std::string spatial_sum = "incoherent";  // incoherent or coherent sum of per-site amplitudes

  // sweeps
  std::vector<double> nbar_sweep{0.0, 0.02, 0.04, 0.06, 0.08, 0.1};
  std::vector<int> sweep_N{4, 6, 8};
  std::vector<double> sweep_g{10.0, 20.0, 30.0, 40.0};
  double series_g = 40.0;

  // output
  std::string out = "out";
  double bin_width = 1.0;
  bool include_spontaneous = false;
  bool force = false;
  double regime_threshold = 0.2;

  double energy(double x) const { return x * kappa; }
  double time(double x) const { return x / kappa; }
};

/// Two-spin cascade preset: Δ = 700, Ω_1 = −Ω_2 = 70, g = 7, δ = 10, B = 10,
/// J = 5 (units of κ), window 0..200/κ.
inline RunConfig fig2_preset() {
  RunConfig c;
  c.command = "fig2";
  return c;
}

/// Heisenberg-chain preset: B = 10, κ = γ = B/10, B = E_10/2, Δ = g²/κ,
/// calibrated Ω, flat band 0.5B..3.5B above (ε_1)_00, window 0..2000/κ.
inline RunConfig fig3_preset() {
  RunConfig c;
  c.command = "fig3";
  c.model = ModelKind::chain;
  c.n_sites = 4;
  c.B = 10.0;
  c.derive_J = true;
  c.g = 40.0;
  c.gamma = 1.0;
  c.raman1 = c.raman2 = 0.0;
  c.calibrate_omega = true;
  c.detuning_from_g = true;
  c.solver = SolverKind::markov;
  c.t_max = 2000.0;
  c.dt = 1.0;
  c.start = StartState::mixed;
  return c;
}

inline RunConfig custom_preset() {
  RunConfig c = fig2_preset();
  c.command = "custom";
  c.solver = SolverKind::lindblad;
  return c;
}

inline RunConfig preset_for(const std::string& command) {
  if (command == "fig2") return fig2_preset();
  if (command == "fig3") return fig3_preset();
  return custom_preset();
}

// ---------------------------------------------------------------------------
// Config file

inline std::vector<double> parse_number_list(const YAML::Node& n, const std::string& field) {
  if (!n.IsSequence()) throw yaml_error(n, "field '" + field + "' must be a list");
  std::vector<double> out;
  for (const auto& x : n) out.push_back(yaml_get<double>(x, field));
  return out;
}

inline std::vector<std::pair<double, double>> parse_pairs(const YAML::Node& n, const std::string& field) {
  if (!n.IsSequence()) throw yaml_error(n, "field '" + field + "' must be a list of [x, y] pairs");
  std::vector<std::pair<double, double>> out;
  for (const auto& p : n) {
    if (!p.IsSequence() || p.size() != 2) throw yaml_error(p, "entries of '" + field + "' must be [x, y]");
    out.emplace_back(yaml_get<double>(p[0], field), yaml_get<double>(p[1], field));
  }
  return out;
}

/// Applies a YAML document on top of `cfg`. Sections: model, drive, solver,
/// markov, sweep, output; top-level kappa_units. Unknown fields are rejected
/// with their position.
inline void apply_config(RunConfig& cfg, const YAML::Node& root) {
  if (!root || root.IsNull()) return;
  check_keys(root, "config", {"kappa_units", "model", "drive", "solver", "markov", "sweep", "output"});
  auto set = [](const YAML::Node& sec, const char* key, const std::string& section, auto& dst) {
    if (!sec[key]) return;
    using T = std::decay_t<decltype(dst)>;
    dst = yaml_get<T>(sec[key], section + "." + key);
  };
  if (root["kappa_units"]) cfg.kappa = yaml_get<double>(root["kappa_units"], "kappa_units");

  if (const auto m = root["model"]) {
    check_keys(m, "model", {"kind", "N", "J", "B", "allow_odd", "field_convention", "derive_J", "hamiltonian"});
    if (m["kind"]) {
      try {
        cfg.model = parse_model_kind(yaml_get<std::string>(m["kind"], "model.kind"));
      } catch (const Error& e) {
        throw yaml_error(m["kind"], e.what());
      }
    }
    set(m, "N", "model", cfg.n_sites);
    set(m, "J", "model", cfg.J);
    set(m, "B", "model", cfg.B);
    set(m, "allow_odd", "model", cfg.allow_odd);
    set(m, "field_convention", "model", cfg.field_convention);
    set(m, "derive_J", "model", cfg.derive_J);
    if (m["hamiltonian"]) {
      cfg.hamiltonian = parse_hamiltonian(m["hamiltonian"]);
      cfg.n_sites = cfg.hamiltonian->sites();
      cfg.model = ModelKind::custom;
    }
  }
  if (const auto d = root["drive"]) {
    check_keys(d, "drive", {"g", "omega1", "omega2", "detuning", "detuning1", "detuning2", "raman_detuning",
                            "raman_detuning1", "raman_detuning2", "nbar", "gamma", "atoms", "calibrate_omega",
                            "detuning_from_g"});
    set(d, "g", "drive", cfg.g);
    set(d, "omega1", "drive", cfg.omega1);
    set(d, "omega2", "drive", cfg.omega2);
    if (d["detuning"]) cfg.detuning1 = cfg.detuning2 = yaml_get<double>(d["detuning"], "drive.detuning");
    set(d, "detuning1", "drive", cfg.detuning1);
    set(d, "detuning2", "drive", cfg.detuning2);
    if (d["raman_detuning"]) cfg.raman1 = cfg.raman2 = yaml_get<double>(d["raman_detuning"], "drive.raman_detuning");
    set(d, "raman_detuning1", "drive", cfg.raman1);
    set(d, "raman_detuning2", "drive", cfg.raman2);
    set(d, "nbar", "drive", cfg.nbar);
    set(d, "gamma", "drive", cfg.gamma);
    set(d, "calibrate_omega", "drive", cfg.calibrate_omega);
    set(d, "detuning_from_g", "drive", cfg.detuning_from_g);
    if (d["atoms"]) {
      if (!d["atoms"].IsSequence()) throw yaml_error(d["atoms"], "'drive.atoms' must be a list");
      cfg.atoms.clear();
      for (const auto& a : d["atoms"]) {
        check_keys(a, "drive.atoms[]", {"g1", "g2", "omega1", "omega2"});
        AtomDrive ad;
        if (a["g1"]) ad.g1 = parse_complex(a["g1"], "g1");
        if (a["g2"]) ad.g2 = parse_complex(a["g2"], "g2");
        if (a["omega1"]) ad.omega1 = parse_complex(a["omega1"], "omega1");
        if (a["omega2"]) ad.omega2 = parse_complex(a["omega2"], "omega2");
        cfg.atoms.push_back(ad);
      }
    }
  }
  if (const auto s = root["solver"]) {
    check_keys(s, "solver", {"kind", "t_max", "dt", "trajectories", "seed", "cutoff", "auto_cutoff", "max_cutoff",
                             "start", "tolerance"});
    try {
      if (s["kind"]) cfg.solver = parse_solver_kind(yaml_get<std::string>(s["kind"], "solver.kind"));
      if (s["start"]) cfg.start = parse_start_state(yaml_get<std::string>(s["start"], "solver.start"));
    } catch (const Error& e) {
      throw yaml_error(s, e.what());
    }
    set(s, "t_max", "solver", cfg.t_max);
    set(s, "dt", "solver", cfg.dt);
    set(s, "trajectories", "solver", cfg.trajectories);
    set(s, "seed", "solver", cfg.seed);
    set(s, "auto_cutoff", "solver", cfg.auto_cutoff);
    set(s, "max_cutoff", "solver", cfg.max_cutoff);
    set(s, "tolerance", "solver", cfg.tolerance);
    if (s["cutoff"]) {
      if (s["cutoff"].IsSequence()) {
        if (s["cutoff"].size() != 2) throw yaml_error(s["cutoff"], "solver.cutoff must be an integer or [n1, n2]");
        cfg.cutoffs = {yaml_get<int>(s["cutoff"][0], "solver.cutoff"), yaml_get<int>(s["cutoff"][1], "solver.cutoff")};
      } else {
        const int c = yaml_get<int>(s["cutoff"], "solver.cutoff");
        cfg.cutoffs = {c, c};
      }
    }
  }
  if (const auto mk = root["markov"]) {
    check_keys(mk, "markov", {"band", "cutoff", "corrected_resonance", "spatial_sum"});
    set(mk, "cutoff", "markov", cfg.markov_cutoff);
    set(mk, "corrected_resonance", "markov", cfg.corrected_resonance);
    set(mk, "spatial_sum", "markov", cfg.spatial_sum);
    if (cfg.spatial_sum != "incoherent" && cfg.spatial_sum != "coherent")
      throw yaml_error(mk["spatial_sum"], "unknown spatial_sum '" + cfg.spatial_sum + "' (incoherent, coherent)");
    if (const auto b = mk["band"]) {
      check_keys(b, "markov.band", {"shape", "lo", "hi", "teeth", "points", "linewidth"});
      set(b, "shape", "markov.band", cfg.band.shape);
      set(b, "lo", "markov.band", cfg.band.lo);
      set(b, "hi", "markov.band", cfg.band.hi);
      set(b, "linewidth", "markov.band", cfg.band.linewidth);
      if (b["teeth"]) cfg.band.points = parse_pairs(b["teeth"], "markov.band.teeth");
      if (b["points"]) cfg.band.points = parse_pairs(b["points"], "markov.band.points");
      const auto& sh = cfg.band.shape;
      if (sh != "relative" && sh != "flat" && sh != "full" && sh != "comb" && sh != "table")
        throw yaml_error(b["shape"], "unknown band shape '" + sh + "' (relative, flat, full, comb, table)");
    }
  }
  if (const auto sw = root["sweep"]) {
    check_keys(sw, "sweep", {"nbar", "N", "g", "series_g"});
    if (sw["nbar"]) cfg.nbar_sweep = parse_number_list(sw["nbar"], "sweep.nbar");
    if (sw["g"]) cfg.sweep_g = parse_number_list(sw["g"], "sweep.g");
    if (sw["N"]) {
      cfg.sweep_N.clear();
      for (double x : parse_number_list(sw["N"], "sweep.N")) cfg.sweep_N.push_back(static_cast<int>(x));
    }
    set(sw, "series_g", "sweep", cfg.series_g);
  }
  if (const auto o = root["output"]) {
    check_keys(o, "output", {"dir", "bin_width", "include_spontaneous", "force", "regime_threshold"});
    set(o, "dir", "output", cfg.out);
    set(o, "bin_width", "output", cfg.bin_width);
    set(o, "include_spontaneous", "output", cfg.include_spontaneous);
    set(o, "force", "output", cfg.force);
    set(o, "regime_threshold", "output", cfg.regime_threshold);
  }
}

inline void load_config(RunConfig& cfg, const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  try {
    apply_config(cfg, root);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline void check_config(const RunConfig& c) {
  require(c.kappa > 0.0 && std::isfinite(c.kappa), "kappa units must be positive");
  require(c.t_max > 0.0 && c.dt > 0.0 && c.dt <= c.t_max, "need 0 < dt <= t_max");
  require(c.trajectories >= 1, "need at least one trajectory");
  require(c.cutoffs.n1 >= 1 && c.cutoffs.n2 >= 1, "photon cutoffs must be at least 1");
  require(c.markov_cutoff >= 1, "markov photon cutoff must be at least 1");
  require(c.bin_width > 0.0, "bin width must be positive");
  require(c.nbar >= 0.0 && c.gamma >= 0.0, "nbar and gamma must be nonnegative");
}

// ---------------------------------------------------------------------------
// Resolution to physical parameters

/// Zero-field chain gap E_1 − E_0 at J = 1.
inline double zero_field_gap(int n_sites, bool allow_odd = false) {
  const EigenSystem e = diagonalize(heisenberg_chain(n_sites, 1.0, 0.0, {allow_odd, SpinLimits{}}));
  const auto clusters = e.degenerate_clusters();
  require(clusters.size() >= 2, "chain spectrum has a single level");
  return e.energy(clusters[1][0]) - e.energy(0);
}

/// J such that B = E_10/2. "zero-field": E_10 of J Σ s·s; "in-field": E_10
/// of the chain including B·S_z (found by bisection).
inline double chain_coupling_for_field(int n_sites, double field, const std::string& convention, bool allow_odd = false) {
  require(field > 0.0, "B must be positive to fix J from B = E_10/2");
  if (convention == "zero-field") return 2.0 * field / zero_field_gap(n_sites, allow_odd);
  require(convention == "in-field", "unknown field convention '" + convention + "' (zero-field, in-field)");
  auto excess = [&](double j) {
    const EigenSystem e = diagonalize(heisenberg_chain(n_sites, j, field, {allow_odd, SpinLimits{}}));
    const auto clusters = e.degenerate_clusters();
    return e.energy(clusters.at(1)[0]) - e.energy(0) - 2.0 * field;
  };
  double lo = 1e-3 * field, hi = 1e3 * field;
  require(excess(lo) < 0.0 && excess(hi) > 0.0, "no J gives an in-field gap of 2B");
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// The spin Hamiltonian in physical units, for `n_sites` when the model is
/// a chain (ignored otherwise).
inline SpinHamiltonian build_spin_hamiltonian(const RunConfig& c, int n_sites) {
  switch (c.model) {
    case ModelKind::two_spin: return two_spin_model(c.energy(c.B), c.energy(c.J));
    case ModelKind::chain: {
      const double j = c.derive_J ? chain_coupling_for_field(n_sites, c.energy(c.B), c.field_convention, c.allow_odd)
                                  : c.energy(c.J);
      return heisenberg_chain(n_sites, j, c.energy(c.B), {c.allow_odd, SpinLimits{}});
    }
    case ModelKind::custom: {
      require(c.hamiltonian.has_value(), "custom model needs model.hamiltonian in the config");
      std::vector<SpinTerm> terms = c.hamiltonian->terms();
      for (auto& t : terms) t.coupling = c.energy(t.coupling);
      return SpinHamiltonian::from_terms(c.hamiltonian->sites(), std::move(terms));
    }
  }
  throw Error("unknown model");
}

inline int model_sites(const RunConfig& c) {
  if (c.model == ModelKind::two_spin) return 2;
  if (c.model == ModelKind::custom && c.hamiltonian) return c.hamiltonian->sites();
  return c.n_sites;
}

/// Drive in physical units. With calibrate_omega the uniform Ω is fixed by
/// |(Γ_+)_{10}| = κ on `eig`, with Ω_2 = −Ω_1.
inline DriveParams build_drive(const RunConfig& c, int n_sites, const EigenSystem* eig = nullptr,
                               const TransitionTable* table = nullptr) {
  DriveParams p;
  p.kappa = c.energy(1.0);
  p.nbar = c.nbar;
  p.gamma = c.energy(c.gamma);
  p.raman_detuning1 = c.energy(c.raman1);
  p.raman_detuning2 = c.energy(c.raman2);
  const double g = c.energy(c.g);
  if (c.detuning_from_g) {
    p.detuning1 = p.detuning2 = g * g / p.kappa;
  } else {
    p.detuning1 = c.energy(c.detuning1);
    p.detuning2 = c.energy(c.detuning2);
  }
  if (!c.atoms.empty()) {
    require(static_cast<int>(c.atoms.size()) == n_sites, "drive.atoms has " + std::to_string(c.atoms.size()) +
                                                             " entries for " + std::to_string(n_sites) + " sites");
    for (const auto& a : c.atoms)
      p.atoms.push_back({a.g1 * c.kappa, a.g2 * c.kappa, a.omega1 * c.kappa, a.omega2 * c.kappa});
    return p;
  }
  cplx om1 = c.energy(c.omega1), om2 = c.energy(c.omega2);
  if (c.calibrate_omega) {
    require(eig && table, "Ω calibration needs the eigensystem");
    const double om = calibrate_omega(*eig, *table, std::vector<double>(static_cast<std::size_t>(n_sites), g),
                                      p.detuning2, p.kappa)[0];
    om1 = om;
    om2 = -om;
  }
  p.atoms.assign(static_cast<std::size_t>(n_sites), AtomDrive{g, g, om1, om2});
  return p;
}

/// Σ_j |g_1j|²/Δ_1 (½ − (s_j^z)_{μμ}), i.e. (ε_1)_{μμ}.
inline double eps1_diagonal(const TransitionTable& table, const MarkovDrive& d, Index mu) {
  double s = 0.0;
  for (int j = 1; j <= table.sites(); ++j) s += d.eps1_site[static_cast<std::size_t>(j - 1)] * (0.5 - table.sz_diag(j)[mu]);
  return s;
}

inline SpectralDensity build_band(const RunConfig& c, const EigenSystem& eig, const TransitionTable& table,
                                  const MarkovDrive& d) {
  const auto& b = c.band;
  if (b.shape == "relative") return make_flat_band(c.energy(c.B), eps1_diagonal(table, d, 0), b.lo, b.hi);
  if (b.shape == "flat") return SpectralDensity::flat_band(c.energy(b.lo), c.energy(b.hi));
  if (b.shape == "full") return covering_band(eig, table, d);
  std::vector<std::pair<double, double>> pts;
  if (b.shape == "comb") {
    for (const auto& [x, w] : b.points) pts.emplace_back(c.energy(x), w);
    return SpectralDensity::delta_comb(std::move(pts), c.energy(b.linewidth));
  }
  if (b.shape == "table") {
    for (const auto& [x, v] : b.points) pts.emplace_back(c.energy(x), v / c.kappa);
    return SpectralDensity::table(std::move(pts));
  }
  throw Error("unknown band shape '" + b.shape + "'");
}

inline MarkovDrive build_markov_drive(const RunConfig& c, const DriveParams& p, const EigenSystem& eig,
                                      const TransitionTable& table) {
  MarkovDrive d = MarkovDrive::from_drive_params(p, SpectralDensity::flat_band(0.0, 1.0),
                                                 SpectralDensity::flat_band(0.0, 1.0), c.markov_cutoff);
  d.corrected_resonance = c.corrected_resonance;
  d.spatially_incoherent = c.spatial_sum != "coherent";
  d.band1 = d.band2 = build_band(c, eig, table, d);
  return d;
}

// ---------------------------------------------------------------------------
// Metadata

inline Json to_json(const RunConfig& c) {
  Json j;
  j["command"] = c.command;
  j["kappa_units"] = c.kappa;
  j["model"] = {{"kind", to_string(c.model)}, {"N", model_sites(c)}, {"J", c.J}, {"B", c.B},
                {"allow_odd", c.allow_odd}, {"field_convention", c.field_convention}, {"derive_J", c.derive_J}};
  if (c.hamiltonian) {
    Json terms = Json::array();
    for (const auto& t : c.hamiltonian->terms()) terms.push_back({{"coupling", t.coupling}, {"ops", t.descriptor()}});
    j["model"]["hamiltonian"] = {{"sites", c.hamiltonian->sites()}, {"terms", terms}};
  }
  j["drive"] = {{"g", c.g}, {"omega1", c.omega1}, {"omega2", c.omega2}, {"detuning1", c.detuning1},
                {"detuning2", c.detuning2}, {"raman_detuning1", c.raman1}, {"raman_detuning2", c.raman2},
                {"nbar", c.nbar}, {"gamma", c.gamma}, {"calibrate_omega", c.calibrate_omega},
                {"detuning_from_g", c.detuning_from_g}};
  if (!c.atoms.empty()) {
    Json atoms = Json::array();
    for (const auto& a : c.atoms)
      atoms.push_back({{"g1", {a.g1.real(), a.g1.imag()}}, {"g2", {a.g2.real(), a.g2.imag()}},
                       {"omega1", {a.omega1.real(), a.omega1.imag()}}, {"omega2", {a.omega2.real(), a.omega2.imag()}}});
    j["drive"]["atoms"] = atoms;
  }
  j["solver"] = {{"kind", to_string(c.solver)}, {"t_max", c.t_max}, {"dt", c.dt}, {"trajectories", c.trajectories},
                 {"seed", c.seed}, {"cutoff", {c.cutoffs.n1, c.cutoffs.n2}}, {"auto_cutoff", c.auto_cutoff},
                 {"max_cutoff", c.max_cutoff}, {"start", to_string(c.start)}, {"tolerance", c.tolerance}};
  Json pts = Json::array();
  for (const auto& [x, y] : c.band.points) pts.push_back({x, y});
  j["markov"] = {{"band", {{"shape", c.band.shape}, {"lo", c.band.lo}, {"hi", c.band.hi}, {"points", pts},
                           {"linewidth", c.band.linewidth}}},
                 {"cutoff", c.markov_cutoff}, {"corrected_resonance", c.corrected_resonance},
                 {"spatial_sum", c.spatial_sum}};
  j["sweep"] = {{"nbar", c.nbar_sweep}, {"N", c.sweep_N}, {"g", c.sweep_g}, {"series_g", c.series_g}};
  j["output"] = {{"dir", c.out}, {"bin_width", c.bin_width}, {"include_spontaneous", c.include_spontaneous},
                 {"force", c.force}, {"regime_threshold", c.regime_threshold}};
  return j;
}

inline Json to_json(const RegimeReport& r) {
  Json arr = Json::array();
  for (const auto& c : r.checks)
    arr.push_back({{"condition", c.name}, {"ratio", c.ratio}, {"threshold", c.threshold}, {"pass", c.pass}});
  return arr;
}

inline Json to_json(const DriveParams& p) {
  Json atoms = Json::array();
  for (const auto& a : p.atoms)
    atoms.push_back({{"g1", {a.g1.real(), a.g1.imag()}}, {"g2", {a.g2.real(), a.g2.imag()}},
                     {"omega1", {a.omega1.real(), a.omega1.imag()}}, {"omega2", {a.omega2.real(), a.omega2.imag()}}});
  return {{"detuning1", p.detuning1}, {"detuning2", p.detuning2}, {"raman_detuning1", p.raman_detuning1},
          {"raman_detuning2", p.raman_detuning2}, {"kappa", p.kappa}, {"nbar", p.nbar}, {"gamma", p.gamma},
          {"atoms", atoms}};
}

/// Files, warnings and metadata of one run; `finish` writes metadata.json.
class RunRecorder {
 public:
  RunRecorder(const RunConfig& cfg, std::ostream* log = nullptr)
      : dir_(cfg.out), start_(std::chrono::steady_clock::now()), log_(log) {
    std::filesystem::create_directories(dir_);
    meta_["toolkit"] = "cavcool";
    meta_["version"] = version_string;
    meta_["parameters"] = to_json(cfg);
    meta_["seed"] = cfg.seed;
    meta_["rng"] = rng_algorithm;
    meta_["units"] = "energies and rates in units of kappa_units; times in 1/kappa_units";
  }

  std::filesystem::path file(const std::string& name) {
    files_.push_back(name);
    return dir_ / name;
  }
  void warn(const std::string& w) {
    warnings_.push_back(w);
    if (log_) *log_ << "warning: " << w << '\n';
  }
  void note(const std::string& s) {
    if (log_) *log_ << s << '\n';
  }
  Json& meta() { return meta_; }
  const std::filesystem::path& dir() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  void finish() {
    meta_["files"] = files_;
    meta_["warnings"] = warnings_;
    meta_["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(dir_ / "metadata.json");
    out << meta_.dump(2) << '\n';
    if (!out) throw Error("cannot write metadata to " + (dir_ / "metadata.json").string());
  }

 private:
  std::filesystem::path dir_;
  std::chrono::steady_clock::time_point start_;
  std::ostream* log_;
  Json meta_;
  std::vector<std::string> files_;
  std::vector<std::string> warnings_;
};

/// Raised when the validator reports a ratio above 1 and --force is absent.
class RegimeFailure : public Error {
 public:
  using Error::Error;
};

inline void enforce_regime(const RegimeReport& r, const RunConfig& c, RunRecorder* rec) {
  for (const auto& chk : r.checks)
    if (!chk.pass && rec)
      rec->warn("regime condition " + chk.name + " ratio " + format_number(chk.ratio) + " exceeds " +
                format_number(chk.threshold));
  if (r.hard_fail() && !c.force) {
    std::string names;
    for (const auto& chk : r.checks)
      if (chk.ratio > 1.0) names += (names.empty() ? "" : ", ") + chk.name;
    throw RegimeFailure("perturbative regime broken (" + names + " > 1); rerun with --force to override");
  }
}

// ---------------------------------------------------------------------------
// Exact dynamics with automatic photon cutoff

inline EffectiveModel build_model(const SpinHamiltonian& h0, const DriveParams& p, FockCutoffs cutoffs) {
  return assemble_model(h0, build_effective_operators(p, h0.sites()), p, cutoffs);
}

/// Highest level for `top`, the ground level, or the maximally mixed spin
/// state, each with empty cavities.
inline DensityState initial_density(const EffectiveModel& m, const EigenSystem& eig, StartState s) {
  if (s == StartState::mixed) return maximally_mixed_spin(m);
  return eigenstate(m, eig, {s == StartState::top ? eig.size() - 1 : 0, 0, 0});
}

inline Vec initial_vector(const EffectiveModel& m, const EigenSystem& eig, StartState s) {
  require(s != StartState::mixed, "trajectories need a pure initial state (start: top or ground)");
  const Index mu = s == StartState::top ? eig.size() - 1 : 0;
  return m.eigenbasis(eig).col(m.composite_index(mu, 0, 0));
}

struct DynamicsRun {
  EffectiveModel model;
  EvolutionResult result;
  std::vector<std::string> cutoff_history;
};

/// Density-matrix evolution, raising the cutoff of any mode whose top Fock
/// level exceeds the truncation limit, up to `max_cutoff`.
inline DynamicsRun evolve_with_cutoff(const SpinHamiltonian& h0, const DriveParams& p, const EigenSystem& eig,
                                      const RunConfig& c, std::span<const double> grid) {
  FockCutoffs cut = c.cutoffs;
  LindbladOptions opts;
  opts.integrator.tol = c.tolerance;
  opts.integrator.max_step = c.time(1.0);
  std::vector<std::string> history;
  for (;;) {
    EffectiveModel m = build_model(h0, p, cut);
    EvolutionResult r = evolve_density(m, eig, initial_density(m, eig, c.start), grid, opts);
    history.push_back(std::to_string(cut.n1) + "," + std::to_string(cut.n2) + ":" + format_number(r.truncation_monitor));
    if (!r.truncation_flagged || !c.auto_cutoff) return {std::move(m), std::move(r), std::move(history)};
    double top1 = 0.0, top2 = 0.0;
    for (const auto& row : r.populations)
      for (std::size_t k = 0; k < r.labels.size(); ++k) {
        if (r.labels[k].n1 == cut.n1) top1 = std::max(top1, row[k]);
        if (r.labels[k].n2 == cut.n2) top2 = std::max(top2, row[k]);
      }
    if (cut.n1 >= c.max_cutoff && cut.n2 >= c.max_cutoff) return {std::move(m), std::move(r), std::move(history)};
    if (top1 >= opts.truncation_limit && cut.n1 < c.max_cutoff) ++cut.n1;
    if (top2 >= opts.truncation_limit && cut.n2 < c.max_cutoff) ++cut.n2;
  }
}

struct AsymptoticPoint {
  double nbar = 0.0;
  double ground = 0.0;
  FockCutoffs cutoffs;
  bool unique = false;
  double residual = 0.0;
  double top_fock = 0.0;
  double integrated_time = 0.0;
};

inline double level_population(const Mat& rho, const EffectiveModel& m, const EigenSystem& eig, Index mu) {
  const auto pops = detail::labeled_populations(rho, m.eigenbasis(eig));
  const auto labels = m.labels();
  double s = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k].mu == mu) s += pops[k];
  return s;
}

/// lim ρ(t) from the configured start, with the same cutoff policy applied
/// to the asymptotic state.
inline AsymptoticPoint asymptotic_with_cutoff(const SpinHamiltonian& h0, DriveParams p, const EigenSystem& eig,
                                              const RunConfig& c, double nbar) {
  p.nbar = nbar;
  FockCutoffs cut = c.cutoffs;
  AsymptoticOptions opts;
  opts.chunk = c.time(25.0);
  opts.max_time = c.time(1e5);
  opts.integrator.max_step = c.time(1.0);
  for (;;) {
    const EffectiveModel m = build_model(h0, p, cut);
    const AsymptoticResult a = asymptotic_state(m, initial_density(m, eig, c.start), opts);
    const auto pops = detail::labeled_populations(a.state.rho, m.eigenbasis(eig));
    const auto labels = m.labels();
    double top1 = 0.0, top2 = 0.0, ground = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (labels[k].n1 == cut.n1) top1 += pops[k];
      if (labels[k].n2 == cut.n2) top2 += pops[k];
      if (labels[k].mu == 0) ground += pops[k];
    }
    const double limit = LindbladOptions{}.truncation_limit;
    const bool ok = std::max(top1, top2) < limit;
    if (ok || !c.auto_cutoff || (cut.n1 >= c.max_cutoff && cut.n2 >= c.max_cutoff))
      return {nbar, ground, cut, a.unique, a.residual, std::max(top1, top2), a.integrated_time};
    if (top1 >= limit && cut.n1 < c.max_cutoff) ++cut.n1;
    if (top2 >= limit && cut.n2 < c.max_cutoff) ++cut.n2;
  }
}

// ---------------------------------------------------------------------------
// fig2: two-spin cascade

struct Fig2Result {
  EigenSystem eig;
  DriveParams drive;
  RegimeReport report;
  DynamicsRun lindblad;
  std::optional<TrajectoryEnsemble> ensemble;
  std::vector<AsymptoticPoint> sweep;
};

inline std::vector<double> run_grid(const RunConfig& c) { return uniform_grid(0.0, c.time(c.t_max), c.time(c.dt)); }

struct Fig2Parts {
  bool trajectories = true;
  bool sweep = true;
};

inline Fig2Result compute_fig2(const RunConfig& c, Fig2Parts parts = {}, RunRecorder* rec = nullptr) {
  check_config(c);
  const SpinHamiltonian h0 = build_spin_hamiltonian(c, model_sites(c));
  EigenSystem eig = diagonalize(h0);
  const DriveParams p = build_drive(c, h0.sites());
  const RegimeReport report = validate_regime(build_model(h0, p, c.cutoffs), eig, c.regime_threshold);
  enforce_regime(report, c, rec);

  const auto grid = run_grid(c);
  if (rec) rec->note("lindblad: integrating " + std::to_string(grid.size()) + " grid points");
  DynamicsRun dyn = evolve_with_cutoff(h0, p, eig, c, grid);
  if (dyn.result.truncation_flagged && rec) rec->warn(dyn.result.truncation_guidance());

  std::optional<TrajectoryEnsemble> ens;
  if (parts.trajectories) {
    if (rec) rec->note("trajectories: " + std::to_string(c.trajectories));
    ens = run_trajectories(dyn.model, eig, initial_vector(dyn.model, eig, c.start), grid, c.trajectories, c.seed);
  }
  std::vector<AsymptoticPoint> sweep;
  if (parts.sweep)
    for (double nb : c.nbar_sweep) {
      if (rec) rec->note("nbar sweep: " + format_number(nb));
      sweep.push_back(asymptotic_with_cutoff(h0, p, eig, c, nb));
    }
  return {std::move(eig), p, report, std::move(dyn), std::move(ens), std::move(sweep)};
}

inline DetectionHistogram mode_histogram(const TrajectoryEnsemble& ens, const RunConfig& c, int mode) {
  return detection_rate_histogram(ens, c.time(c.bin_width), ChannelFilter{mode, c.include_spontaneous, false});
}

inline void write_fig2(const Fig2Result& r, const RunConfig& c, RunRecorder& rec) {
  write_eigensystem_csv(rec.file("eigensystem.csv"), r.eig);
  const auto& lr = r.lindblad.result;
  write_population_csv(rec.file("populations_lindblad.csv"), lr.times, lr.labels, lr.populations,
                       r.lindblad.model.cutoffs());
  Json meta_traj;
  if (r.ensemble) {
    const auto& e = *r.ensemble;
    write_population_csv(rec.file("populations_trajectory.csv"), e.times, e.labels, e.populations,
                         r.lindblad.model.cutoffs());
    write_histogram_csv(rec.file("detection_a1.csv"), {{"a1", mode_histogram(e, c, 1)}});
    write_histogram_csv(rec.file("detection_a2.csv"), {{"a2", mode_histogram(e, c, 2)}});
    write_records_csv(rec.file("records.csv"), e);
    std::size_t jumps = 0;
    for (const auto& d : e.records) jumps += d.events.size();
    meta_traj = {{"trajectories", e.n_traj}, {"jumps", jumps}, {"channels", e.channel_labels}};
  }
  if (!r.sweep.empty()) {
    CsvWriter w(rec.file("nbar_sweep.csv"));
    w.header({"nbar", "ground_population", "cutoff_n1", "cutoff_n2", "unique_steady_state", "residual",
              "top_fock_population", "integrated_time"});
    for (const auto& s : r.sweep)
      w.row({s.nbar, s.ground, static_cast<double>(s.cutoffs.n1), static_cast<double>(s.cutoffs.n2),
             s.unique ? 1.0 : 0.0, s.residual, s.top_fock, s.integrated_time});
    w.close();
    for (std::size_t i = 1; i < r.sweep.size(); ++i)
      if (!(r.sweep[i].ground < r.sweep[i - 1].ground))
        rec.warn("asymptotic ground population not decreasing between nbar=" + format_number(r.sweep[i - 1].nbar) +
                 " and nbar=" + format_number(r.sweep[i].nbar));
  }
  auto& m = rec.meta();
  m["resolved_drive"] = to_json(r.drive);
  m["validator"] = to_json(r.report);
  m["time_window"] = {0.0, c.time(c.t_max)};
  m["grid_points"] = lr.times.size();
  m["cutoffs"] = {r.lindblad.model.cutoffs().n1, r.lindblad.model.cutoffs().n2};
  m["cutoff_history"] = r.lindblad.cutoff_history;
  m["lindblad_steps"] = {{"accepted", lr.stats.accepted}, {"rejected", lr.stats.rejected},
                         {"rhs_evaluations", lr.stats.rhs_evaluations}};
  m["truncation_monitor"] = lr.truncation_monitor;
  if (r.ensemble) m["trajectory"] = meta_traj;
}

// ---------------------------------------------------------------------------
// fig3: Heisenberg chain, golden-rule Markov chain

struct ChainSetup {
  int n_sites = 0;
  SpinHamiltonian h0;
  EigenSystem eig;
  TransitionTable table;
};

inline ChainSetup chain_setup(const RunConfig& c, int n_sites) {
  if (n_sites > 8) std::cerr << "warning: N=" << n_sites << " exceeds the desk-scale sweep range 4..8\n";
  SpinHamiltonian h0 = build_spin_hamiltonian(c, n_sites);
  EigenSystem eig = diagonalize(h0);
  TransitionTable table(eig);
  return {n_sites, std::move(h0), std::move(eig), std::move(table)};
}

struct MarkovSetup {
  DriveParams drive;
  MarkovDrive markov;
  RateMatrix rates;
};

inline MarkovSetup markov_setup(const RunConfig& c, const ChainSetup& s) {
  DriveParams p = build_drive(c, s.n_sites, &s.eig, &s.table);
  MarkovDrive d = build_markov_drive(c, p, s.eig, s.table);
  RateMatrix r = golden_rule_rates(s.eig, s.table, d);
  return {std::move(p), std::move(d), std::move(r)};
}

inline Eigen::VectorXd initial_distribution(const RateMatrix& r, StartState s) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(r.size());
  const Index m = r.spin_levels();
  if (s == StartState::mixed)
    for (Index mu = 0; mu < m; ++mu) p[*r.index(mu, 0, 0)] = 1.0 / static_cast<double>(m);
  else
    p[*r.index(s == StartState::top ? m - 1 : 0, 0, 0)] = 1.0;
  return p;
}

struct Fig3Point {
  int n_sites = 0;
  double g = 0.0;
  double omega = 0.0;
  double J = 0.0;
  double ground = 0.0;
  std::size_t recurrent_classes = 0;
  double residual = 0.0;
};

struct Fig3Series {
  int n_sites = 0;
  std::vector<double> times;
  std::vector<double> ground;
  double max_photon_population = 0.0;
};

struct Fig3Paths {
  int n_sites = 0;
  std::vector<double> energies;
  std::vector<double> sz;
  std::vector<PathLength> full_band;
  std::vector<PathLength> configured_band;
};

struct Fig3Result {
  std::vector<Fig3Point> sweep;
  std::vector<Fig3Series> series;
  std::vector<Fig3Paths> paths;
};

inline double chain_J(const ChainSetup& s) {
  for (const auto& t : s.h0.terms())
    if (t.factors.size() == 2) return t.coupling;
  return 0.0;
}

inline Fig3Result compute_fig3(const RunConfig& base, RunRecorder* rec = nullptr) {
  check_config(base);
  Fig3Result out;
  for (int n : base.sweep_N) {
    if (rec) rec->note("fig3: N=" + std::to_string(n));
    RunConfig c = base;
    c.n_sites = n;
    const ChainSetup s = chain_setup(c, n);
    for (double g : c.sweep_g) {
      c.g = g;
      const MarkovSetup m = markov_setup(c, s);
      const StationaryResult st = asymptotic_population(m.rates, initial_distribution(m.rates, c.start));
      out.sweep.push_back({n, g, m.drive.atoms[0].omega1.real(), chain_J(s), m.rates.spin_population(st.distribution, 0),
                           st.recurrent_classes.size(), st.residual});
      if (st.multiple_classes() && rec)
        rec->warn("N=" + std::to_string(n) + " g=" + format_number(g) + ": " +
                  std::to_string(st.recurrent_classes.size()) + " recurrent classes");
    }
    c.g = base.series_g;
    const MarkovSetup m = markov_setup(c, s);
    const auto grid = run_grid(c);
    const PopulationTrajectory traj = evolve_populations(m.rates, initial_distribution(m.rates, c.start), grid);
    Fig3Series ser{n, traj.times, traj.spin_population(m.rates, 0), 0.0};
    for (const auto& p : traj.populations)
      for (Index i = 0; i < m.rates.size(); ++i)
        if (m.rates.level(i).n1 + m.rates.level(i).n2 > 0) ser.max_photon_population = std::max(ser.max_photon_population, p[i]);
    out.series.push_back(std::move(ser));

    RunConfig full = c;
    full.band.shape = "full";
    const MarkovSetup mf = markov_setup(full, s);
    Fig3Paths paths{n, s.eig.energies(), s.eig.sz_values(), {}, {}};
    const auto pf = path_lengths_to_ground(mf.rates);
    const auto pc = path_lengths_to_ground(m.rates);
    for (Index mu = 0; mu < s.eig.size(); ++mu) {
      paths.full_band.push_back(pf[static_cast<std::size_t>(*mf.rates.index(mu, 0, 0))]);
      paths.configured_band.push_back(pc[static_cast<std::size_t>(*m.rates.index(mu, 0, 0))]);
    }
    std::size_t unreachable = 0;
    for (const auto& p : paths.configured_band) unreachable += p.reachable ? 0 : 1;
    if (unreachable && rec)
      rec->warn("N=" + std::to_string(n) + ": " + std::to_string(unreachable) +
                " levels cannot reach the ground level under the configured band");
    out.paths.push_back(std::move(paths));
  }
  return out;
}

inline void write_fig3(const Fig3Result& r, const RunConfig& c, RunRecorder& rec) {
  {
    CsvWriter w(rec.file("fig3a_asymptotic.csv"));
    w.header({"N", "g", "omega", "J", "ground_population", "recurrent_classes", "residual"});
    for (const auto& p : r.sweep)
      w.row({static_cast<double>(p.n_sites), p.g, p.omega, p.J, p.ground, static_cast<double>(p.recurrent_classes),
             p.residual});
    w.close();
  }
  if (!r.series.empty()) {
    CsvWriter w(rec.file("fig3b_ground_series.csv"));
    std::vector<std::string> head{"time"};
    for (const auto& s : r.series) head.push_back("ground_N" + std::to_string(s.n_sites));
    w.header(head);
    for (std::size_t t = 0; t < r.series[0].times.size(); ++t) {
      std::vector<double> row{r.series[0].times[t]};
      for (const auto& s : r.series) row.push_back(s.ground[t]);
      w.row(row);
    }
    w.close();
  }
  {
    CsvWriter w(rec.file("path_lengths.csv"));
    w.header({"N", "level", "energy", "sz", "hops_full_band", "hops_configured_band", "bound_2N"});
    for (const auto& p : r.paths)
      for (std::size_t mu = 0; mu < p.energies.size(); ++mu)
        w.row({static_cast<double>(p.n_sites), static_cast<double>(mu), p.energies[mu], p.sz[mu],
               static_cast<double>(p.full_band[mu].hops), static_cast<double>(p.configured_band[mu].hops),
               2.0 * p.n_sites});
    w.close();
  }
  auto& m = rec.meta();
  m["time_window"] = {0.0, c.time(c.t_max)};
  Json photons = Json::object();
  for (const auto& s : r.series) photons[std::to_string(s.n_sites)] = s.max_photon_population;
  m["max_photon_population"] = photons;
  m["rate_convention"] = "corrected_resonance=" + std::string(c.corrected_resonance ? "true" : "false");
}

// ---------------------------------------------------------------------------
// custom: any model, any solver

inline void run_custom(const RunConfig& c, RunRecorder& rec) {
  check_config(c);
  const int n = model_sites(c);
  const SpinHamiltonian h0 = build_spin_hamiltonian(c, n);
  const EigenSystem eig = diagonalize(h0);
  const TransitionTable* table_ptr = nullptr;
  std::optional<TransitionTable> table;
  if (c.calibrate_omega || c.solver == SolverKind::markov) {
    table.emplace(eig);
    table_ptr = &*table;
  }
  const DriveParams p = build_drive(c, n, &eig, table_ptr);
  const RegimeReport report = validate_regime(build_model(h0, p, c.cutoffs), eig, c.regime_threshold);
  rec.meta()["validator"] = to_json(report);
  rec.meta()["resolved_drive"] = to_json(p);
  enforce_regime(report, c, &rec);
  write_eigensystem_csv(rec.file("eigensystem.csv"), eig);
  const auto grid = run_grid(c);
  rec.meta()["time_window"] = {0.0, c.time(c.t_max)};

  switch (c.solver) {
    case SolverKind::lindblad: {
      const DynamicsRun dyn = evolve_with_cutoff(h0, p, eig, c, grid);
      const auto& r = dyn.result;
      write_population_csv(rec.file("populations_lindblad.csv"), r.times, r.labels, r.populations, dyn.model.cutoffs());
      if (r.truncation_flagged) rec.warn(r.truncation_guidance());
      rec.meta()["cutoffs"] = {dyn.model.cutoffs().n1, dyn.model.cutoffs().n2};
      rec.meta()["cutoff_history"] = dyn.cutoff_history;
      rec.meta()["lindblad_steps"] = {{"accepted", r.stats.accepted}, {"rejected", r.stats.rejected},
                                      {"rhs_evaluations", r.stats.rhs_evaluations}};
      break;
    }
    case SolverKind::trajectory: {
      const DynamicsRun dyn = evolve_with_cutoff(h0, p, eig, c, grid);
      const TrajectoryEnsemble e =
          run_trajectories(dyn.model, eig, initial_vector(dyn.model, eig, c.start), grid, c.trajectories, c.seed);
      write_population_csv(rec.file("populations_trajectory.csv"), e.times, e.labels, e.populations, dyn.model.cutoffs());
      write_records_csv(rec.file("records.csv"), e);
      write_histogram_csv(rec.file("detection.csv"), {{"a1", mode_histogram(e, c, 1)}, {"a2", mode_histogram(e, c, 2)}});
      rec.meta()["cutoffs"] = {dyn.model.cutoffs().n1, dyn.model.cutoffs().n2};
      rec.meta()["trajectory"] = {{"trajectories", e.n_traj}, {"channels", e.channel_labels}};
      break;
    }
    case SolverKind::markov: {
      const MarkovDrive d = build_markov_drive(c, p, eig, *table);
      const RateMatrix r = golden_rule_rates(eig, *table, d);
      const Eigen::VectorXd p0 = initial_distribution(r, c.start);
      write_rate_matrix_csv(rec.file("rate_matrix.csv"), r);
      write_markov_populations_csv(rec.file("markov_populations.csv"), r, evolve_populations(r, p0, grid), c.markov_cutoff);
      const StationaryResult st = asymptotic_population(r, p0);
      write_stationary_csv(rec.file("stationary.csv"), r, st);
      if (st.multiple_classes()) rec.warn(std::to_string(st.recurrent_classes.size()) + " recurrent classes");
      const auto paths = path_lengths_to_ground(r);
      CsvWriter w(rec.file("path_lengths.csv"));
      w.header({"level", "energy", "sz", "hops"});
      std::size_t unreachable = 0;
      for (Index mu = 0; mu < eig.size(); ++mu) {
        const auto& pl = paths[static_cast<std::size_t>(*r.index(mu, 0, 0))];
        unreachable += pl.reachable ? 0 : 1;
        w.row({static_cast<double>(mu), eig.energy(mu), eig.sz(mu), static_cast<double>(pl.hops)});
      }
      w.close();
      if (unreachable) rec.warn(std::to_string(unreachable) + " levels cannot reach the ground level");
      rec.meta()["band"] = d.band1.describe();
      break;
    }
  }
}

}  // namespace cavcool
