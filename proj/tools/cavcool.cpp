// Command-line front end.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cavcool/experiments.hpp"

namespace {

using namespace cavcool;

struct Overrides {
  std::string config;
  std::optional<double> kappa, J, B, g, delta, nbar, gamma, tmax, dt;
  std::optional<int> N, cutoff;
  std::optional<std::size_t> trajectories;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> band, solver, out, start, model;
  bool force = false;
  bool echo = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "YAML config file applied on top of the preset");
  cmd->add_option("--kappa-units", o.kappa, "value of kappa; all other inputs are multiples of it");
  cmd->add_option("--model", o.model, "two-spin, chain or custom");
  cmd->add_option("--N", o.N, "chain length");
  cmd->add_option("--J", o.J, "exchange coupling");
  cmd->add_option("--B", o.B, "magnetic field");
  cmd->add_option("--g", o.g, "atom-cavity coupling (uniform)");
  cmd->add_option("--delta", o.delta, "detuning Delta (both drives)");
  cmd->add_option("--nbar", o.nbar, "thermal photon number");
  cmd->add_option("--gamma", o.gamma, "spontaneous emission rate");
  cmd->add_option("--trajectories", o.trajectories, "trajectory count");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--tmax", o.tmax, "end of the time window");
  cmd->add_option("--dt", o.dt, "output grid spacing");
  cmd->add_option("--cutoff", o.cutoff, "photon cutoff (per mode for exact solvers, total for markov)");
  cmd->add_option("--band", o.band, "band edges lo:hi (units of B above (eps_1)_00 for the relative shape)");
  cmd->add_option("--solver", o.solver, "lindblad, trajectory or markov");
  cmd->add_option("--start", o.start, "initial state: top, ground or mixed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_flag("--force", o.force, "run even when the regime validator reports ratios above 1");
  cmd->add_flag("--echo", o.echo, "print the resolved parameters and exit");
}

RunConfig resolve(const std::string& command, const Overrides& o) {
  RunConfig c = preset_for(command);
  c.out = "out/" + command;
  if (!o.config.empty()) load_config(c, o.config);
  if (o.kappa) c.kappa = *o.kappa;
  if (o.model) c.model = parse_model_kind(*o.model);
  if (o.N) c.n_sites = *o.N;
  if (o.N && command == "fig3") c.sweep_N = {*o.N};
  if (o.J) {
    c.J = *o.J;
    c.derive_J = false;
  }
  if (o.B) c.B = *o.B;
  if (o.g) {
    c.g = *o.g;
    if (command == "fig3") c.sweep_g = {*o.g}, c.series_g = *o.g;
  }
  if (o.delta) {
    c.detuning1 = c.detuning2 = *o.delta;
    c.detuning_from_g = false;
  }
  if (o.nbar) {
    c.nbar = *o.nbar;
    if (command == "fig2") c.nbar_sweep = {*o.nbar};
  }
  if (o.gamma) c.gamma = *o.gamma;
  if (o.trajectories) c.trajectories = *o.trajectories;
  if (o.seed) c.seed = *o.seed;
  if (o.tmax) c.t_max = *o.tmax;
  if (o.dt) c.dt = *o.dt;
  if (o.cutoff) {
    c.cutoffs = {*o.cutoff, *o.cutoff};
    c.markov_cutoff = *o.cutoff;
  }
  if (o.band) {
    const auto colon = o.band->find(':');
    if (colon == std::string::npos) throw Error("--band expects lo:hi");
    c.band.lo = std::stod(o.band->substr(0, colon));
    c.band.hi = std::stod(o.band->substr(colon + 1));
    if (c.band.shape == "full" || c.band.shape == "comb" || c.band.shape == "table") c.band.shape = "flat";
  }
  if (o.solver) c.solver = parse_solver_kind(*o.solver);
  if (o.start) c.start = parse_start_state(*o.start);
  if (o.out) c.out = *o.out;
  c.force = c.force || o.force;
  check_config(c);
  return c;
}

int print_validation(const RunConfig& c) {
  const int n = model_sites(c);
  const SpinHamiltonian h0 = build_spin_hamiltonian(c, n);
  const EigenSystem eig = diagonalize(h0);
  std::optional<TransitionTable> table;
  if (c.calibrate_omega) table.emplace(eig);
  const DriveParams p = build_drive(c, n, &eig, table ? &*table : nullptr);
  const RegimeReport r = validate_regime(build_model(h0, p, c.cutoffs), eig, c.regime_threshold);
  std::cout << "condition,ratio,threshold,status\n";
  for (const auto& chk : r.checks)
    std::cout << chk.name << ',' << format_number(chk.ratio) << ',' << format_number(chk.threshold) << ','
              << (chk.ratio > 1.0 ? "fail" : chk.pass ? "pass" : "warn") << '\n';
  return 0;
}

int print_spectrum(const RunConfig& c, bool to_file) {
  const SpinHamiltonian h0 = build_spin_hamiltonian(c, model_sites(c));
  const EigenSystem eig = diagonalize(h0);
  if (to_file) {
    std::filesystem::create_directories(c.out);
    write_eigensystem_csv(std::filesystem::path(c.out) / "eigensystem.csv", eig);
    std::cout << (std::filesystem::path(c.out) / "eigensystem.csv").string() << '\n';
    return 0;
  }
  std::cout << "index,energy,sz\n";
  for (Index mu = 0; mu < eig.size(); ++mu)
    std::cout << mu << ',' << format_number(eig.energy(mu)) << ',' << format_number(eig.sz(mu)) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cavity-assisted cooling of spin systems: exact and golden-rule simulations"};
  app.set_version_flag("--version", std::string(cavcool::version_string));
  app.require_subcommand(1);

  Overrides o;
  auto* fig2 = app.add_subcommand("fig2", "two-spin cascade: populations, detection rates, thermal sweep");
  auto* fig3 = app.add_subcommand("fig3", "Heisenberg chain under broadband driving: Markov-chain sweeps");
  auto* custom = app.add_subcommand("custom", "any model and solver from a config file");
  auto* validate = app.add_subcommand("validate", "print the perturbative-regime report");
  auto* spectrum = app.add_subcommand("spectrum", "dump the eigensystem as CSV");
  for (auto* cmd : {fig2, fig3, custom, validate, spectrum}) add_common(cmd, o);
  std::string preset = "fig2";
  for (auto* cmd : {validate, spectrum})
    cmd->add_option("--preset", preset, "parameter preset: fig2, fig3 or custom")->check(CLI::IsMember({"fig2", "fig3", "custom"}));
  bool spectrum_file = false;
  spectrum->add_flag("--write", spectrum_file, "write eigensystem.csv under --out instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    const std::string base = (name == "validate" || name == "spectrum") ? preset : name;
    RunConfig cfg = resolve(base, o);
    if (o.echo) {
      std::cout << to_json(cfg).dump(2) << '\n';
      return 0;
    }
    if (name == "validate") return print_validation(cfg);
    if (name == "spectrum") return print_spectrum(cfg, spectrum_file);

    RunRecorder rec(cfg, &std::cerr);
    if (name == "fig2") {
      const Fig2Result r = compute_fig2(cfg, {}, &rec);
      write_fig2(r, cfg, rec);
    } else if (name == "fig3") {
      const Fig3Result r = compute_fig3(cfg, &rec);
      write_fig3(r, cfg, rec);
    } else {
      run_custom(cfg, rec);
    }
    rec.finish();
    for (const auto& f : rec.files()) std::cout << (rec.dir() / f).string() << '\n';
    std::cout << (rec.dir() / "metadata.json").string() << '\n';
    return 0;
  } catch (const cavcool::RegimeFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
