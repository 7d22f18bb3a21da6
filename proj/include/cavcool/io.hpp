#pragma once

// Plain-text exchange formats: CSV tables, sparse triplets, YAML
// descriptors for Hamiltonians and drives.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "cavcool/effective_model.hpp"
#include "cavcool/lindblad.hpp"
#include "cavcool/markov.hpp"
#include "cavcool/spin_algebra.hpp"
#include "cavcool/trajectory.hpp"
#include "cavcool/types.hpp"

namespace cavcool {

/// Shortest text that round-trips to the same double.
inline std::string format_number(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : path_(path), out_(path) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
  }

  CsvWriter& header(const std::vector<std::string>& cols) { return row_text(cols); }

  CsvWriter& row_text(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    ++rows_;
    return *this;
  }

  CsvWriter& row(const std::vector<double>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << format_number(cells[i]);
    out_ << '\n';
    ++rows_;
    return *this;
  }

  /// Rows written, header included.
  std::size_t rows() const { return rows_; }
  const std::filesystem::path& path() const { return path_; }

  void close() {
    out_.close();
    if (!out_) throw Error("write to " + path_.string() + " failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t rows_ = 0;
};

/// Reads a CSV file back as a header row plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::size_t start = 0;
      for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (first)
        t.header = std::move(cells);
      else
        t.rows.push_back(std::move(cells));
      first = false;
    }
    return t;
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error("no column '" + name + "'");
  }
  std::vector<double> numbers(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(std::stod(r.at(c)));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Tables

inline void write_eigensystem_csv(const std::filesystem::path& path, const EigenSystem& eig) {
  CsvWriter w(path);
  w.header({"index", "energy", "sz"});
  for (Index mu = 0; mu < eig.size(); ++mu) w.row({static_cast<double>(mu), eig.energy(mu), eig.sz(mu)});
  w.close();
}

/// time, one column per labeled state, then the top-Fock-level population.
inline void write_population_csv(const std::filesystem::path& path, const std::vector<double>& times,
                                 const std::vector<LevelLabel>& labels,
                                 const std::vector<std::vector<double>>& populations, const FockCutoffs& cutoffs) {
  CsvWriter w(path);
  std::vector<std::string> head{"time"};
  for (const auto& l : labels) head.push_back(l.name());
  head.emplace_back("truncation_monitor");
  w.header(head);
  for (std::size_t t = 0; t < times.size(); ++t) {
    std::vector<double> row{times[t]};
    row.insert(row.end(), populations[t].begin(), populations[t].end());
    row.push_back(detail::top_fock_population(populations[t], labels, cutoffs));
    w.row(row);
  }
  w.close();
}

inline void write_records_csv(const std::filesystem::path& path, const TrajectoryEnsemble& ens) {
  CsvWriter w(path);
  w.header({"trajectory", "time", "channel"});
  for (const auto& rec : ens.records)
    for (const auto& ev : rec.events)
      w.row_text({std::to_string(rec.trajectory), format_number(ev.time),
                  ens.channel_labels[static_cast<std::size_t>(ev.channel)]});
  w.close();
}

/// bin_center, rate, channel (long format), plus the raw count per bin.
inline void write_histogram_csv(const std::filesystem::path& path,
                                const std::vector<std::pair<std::string, DetectionHistogram>>& hists) {
  CsvWriter w(path);
  w.header({"bin_center", "rate", "channel", "count"});
  for (const auto& [name, h] : hists)
    for (std::size_t b = 0; b < h.centers.size(); ++b)
      w.row_text({format_number(h.centers[b]), format_number(h.rates[b]), name, std::to_string(h.counts[b])});
  w.close();
}

inline void write_rate_matrix_csv(const std::filesystem::path& path, const RateMatrix& r) {
  CsvWriter w(path);
  w.header({"from", "to", "from_mu", "from_n1", "from_n2", "to_mu", "to_n1", "to_n2", "rate", "provenance"});
  for (const auto& t : r.transitions()) {
    const auto& a = r.level(t.from);
    const auto& b = r.level(t.to);
    w.row_text({std::to_string(t.from), std::to_string(t.to), std::to_string(a.mu), std::to_string(a.n1),
                std::to_string(a.n2), std::to_string(b.mu), std::to_string(b.n1), std::to_string(b.n2),
                format_number(t.rate), provenance_name(t.label)});
  }
  w.close();
}

inline std::string composite_name(const CompositeLevel& l) { return LevelLabel{l.mu, l.n1, l.n2}.name(); }

/// time, one population column per composite level, then the population of
/// levels holding `cutoff` photons (occupancy monitor).
inline void write_markov_populations_csv(const std::filesystem::path& path, const RateMatrix& r,
                                         const PopulationTrajectory& traj, int cutoff) {
  CsvWriter w(path);
  std::vector<std::string> head{"time"};
  for (const auto& l : r.levels()) head.push_back(composite_name(l));
  head.emplace_back("occupancy_monitor");
  w.header(head);
  for (std::size_t t = 0; t < traj.times.size(); ++t) {
    std::vector<double> row{traj.times[t]};
    double top = 0.0;
    for (Index i = 0; i < r.size(); ++i) {
      row.push_back(traj.populations[t][i]);
      if (r.level(i).n1 + r.level(i).n2 == cutoff) top += traj.populations[t][i];
    }
    row.push_back(top);
    w.row(row);
  }
  w.close();
}

inline void write_stationary_csv(const std::filesystem::path& path, const RateMatrix& r, const StationaryResult& s) {
  CsvWriter w(path);
  w.header({"level", "mu", "n1", "n2", "energy", "sz", "population"});
  for (Index i = 0; i < r.size(); ++i) {
    const auto& l = r.level(i);
    w.row_text({composite_name(l), std::to_string(l.mu), std::to_string(l.n1), std::to_string(l.n2),
                format_number(l.energy), format_number(l.sz), format_number(s.distribution[i])});
  }
  w.close();
}

/// Nonzero entries as row, col, re, im.
inline void write_triplets_csv(const std::filesystem::path& path, const SpMat& m) {
  CsvWriter w(path);
  w.header({"row", "col", "re", "im"});
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      w.row_text({std::to_string(it.row()), std::to_string(it.col()), format_number(it.value().real()),
                  format_number(it.value().imag())});
  w.close();
}

inline SpMat read_triplets_csv(const std::filesystem::path& path, Index rows, Index cols) {
  const CsvTable t = CsvTable::read(path);
  require(t.header == std::vector<std::string>{"row", "col", "re", "im"}, "not a triplet file: " + path.string());
  std::vector<Triplet> trips;
  for (const auto& r : t.rows) {
    require(r.size() == 4, "malformed triplet row in " + path.string());
    trips.emplace_back(std::stol(r[0]), std::stol(r[1]), cplx{std::stod(r[2]), std::stod(r[3])});
  }
  SpMat m(rows, cols);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

// ---------------------------------------------------------------------------
// YAML helpers

/// Error carrying the YAML source position.
inline Error yaml_error(const YAML::Node& node, const std::string& message) {
  const auto mark = node.Mark();
  if (mark.line >= 0) return Error("line " + std::to_string(mark.line + 1) + ", column " +
                                   std::to_string(mark.column + 1) + ": " + message);
  return Error(message);
}

/// Rejects keys of a map node that are not in `allowed`.
inline void check_keys(const YAML::Node& node, const std::string& section, const std::vector<std::string>& allowed) {
  if (!node) return;
  if (!node.IsMap()) throw yaml_error(node, "section '" + section + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw yaml_error(kv.first, "unknown field '" + section + "." + key + "' (allowed: " + list + ")");
    }
  }
}

template <class T>
T yaml_get(const YAML::Node& node, const std::string& field) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw yaml_error(node, "field '" + field + "' has the wrong type");
  }
}

inline YAML::Node hamiltonian_descriptor(const SpinHamiltonian& h) {
  YAML::Node n;
  n["sites"] = h.sites();
  for (const auto& t : h.terms()) {
    YAML::Node term;
    term["coupling"] = t.coupling;
    term["ops"] = t.descriptor();
    n["terms"].push_back(term);
  }
  return n;
}

inline SpinHamiltonian parse_hamiltonian(const YAML::Node& node, const SpinLimits& limits = {}) {
  check_keys(node, "hamiltonian", {"sites", "terms"});
  if (!node["sites"]) throw yaml_error(node, "hamiltonian needs 'sites'");
  const int n = yaml_get<int>(node["sites"], "hamiltonian.sites");
  std::vector<SpinTerm> terms;
  if (node["terms"]) {
    if (!node["terms"].IsSequence()) throw yaml_error(node["terms"], "'terms' must be a list");
    for (const auto& t : node["terms"]) {
      check_keys(t, "hamiltonian.terms[]", {"coupling", "ops"});
      if (!t["coupling"] || !t["ops"]) throw yaml_error(t, "each term needs 'coupling' and 'ops'");
      try {
        terms.push_back(SpinTerm::parse(yaml_get<double>(t["coupling"], "coupling"), yaml_get<std::string>(t["ops"], "ops")));
      } catch (const Error& e) {
        throw yaml_error(t, e.what());
      }
    }
  }
  try {
    return SpinHamiltonian::from_terms(n, std::move(terms), limits);
  } catch (const Error& e) {
    throw yaml_error(node, e.what());
  }
}

inline void save_hamiltonian(const std::filesystem::path& path, const SpinHamiltonian& h) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  YAML::Emitter em;
  em.SetDoublePrecision(17);
  em << hamiltonian_descriptor(h);
  out << em.c_str() << '\n';
}

inline SpinHamiltonian load_hamiltonian(const std::filesystem::path& path, const SpinLimits& limits = {}) {
  try {
    return parse_hamiltonian(YAML::LoadFile(path.string()), limits);
  } catch (const YAML::Exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline YAML::Node complex_node(cplx z) {
  if (z.imag() == 0.0) return YAML::Node(z.real());
  YAML::Node n;
  n.push_back(z.real());
  n.push_back(z.imag());
  return n;
}

/// A real number or a [re, im] pair.
inline cplx parse_complex(const YAML::Node& node, const std::string& field) {
  if (node.IsSequence()) {
    if (node.size() != 2) throw yaml_error(node, "field '" + field + "' must be a number or [re, im]");
    return {yaml_get<double>(node[0], field), yaml_get<double>(node[1], field)};
  }
  return {yaml_get<double>(node, field), 0.0};
}

inline YAML::Node drive_descriptor(const DriveParams& p) {
  YAML::Node n;
  n["detuning1"] = p.detuning1;
  n["detuning2"] = p.detuning2;
  n["raman_detuning1"] = p.raman_detuning1;
  n["raman_detuning2"] = p.raman_detuning2;
  n["kappa"] = p.kappa;
  n["nbar"] = p.nbar;
  n["gamma"] = p.gamma;
  for (const auto& a : p.atoms) {
    YAML::Node an;
    an["g1"] = complex_node(a.g1);
    an["g2"] = complex_node(a.g2);
    an["omega1"] = complex_node(a.omega1);
    an["omega2"] = complex_node(a.omega2);
    n["atoms"].push_back(an);
  }
  return n;
}

inline DriveParams parse_drive_descriptor(const YAML::Node& node) {
  check_keys(node, "drive", {"detuning1", "detuning2", "raman_detuning1", "raman_detuning2", "kappa", "nbar", "gamma", "atoms"});
  DriveParams p;
  auto num = [&](const char* key, double& dst) {
    if (node[key]) dst = yaml_get<double>(node[key], std::string("drive.") + key);
  };
  num("detuning1", p.detuning1);
  num("detuning2", p.detuning2);
  num("raman_detuning1", p.raman_detuning1);
  num("raman_detuning2", p.raman_detuning2);
  num("kappa", p.kappa);
  num("nbar", p.nbar);
  num("gamma", p.gamma);
  if (node["atoms"])
    for (const auto& a : node["atoms"]) {
      check_keys(a, "drive.atoms[]", {"g1", "g2", "omega1", "omega2"});
      AtomDrive d;
      if (a["g1"]) d.g1 = parse_complex(a["g1"], "g1");
      if (a["g2"]) d.g2 = parse_complex(a["g2"], "g2");
      if (a["omega1"]) d.omega1 = parse_complex(a["omega1"], "omega1");
      if (a["omega2"]) d.omega2 = parse_complex(a["omega2"], "omega2");
      p.atoms.push_back(d);
    }
  return p;
}

/// Spin Hamiltonian, drive and cutoffs of an assembled model.
inline YAML::Node model_descriptor(const EffectiveModel& m) {
  YAML::Node n;
  n["hamiltonian"] = hamiltonian_descriptor(m.h0());
  n["drive"] = drive_descriptor(m.params());
  n["cutoffs"].push_back(m.cutoffs().n1);
  n["cutoffs"].push_back(m.cutoffs().n2);
  return n;
}

inline EffectiveModel parse_model_descriptor(const YAML::Node& node) {
  check_keys(node, "model", {"hamiltonian", "drive", "cutoffs"});
  const SpinHamiltonian h = parse_hamiltonian(node["hamiltonian"]);
  const DriveParams p = parse_drive_descriptor(node["drive"]);
  FockCutoffs c;
  if (node["cutoffs"]) {
    if (!node["cutoffs"].IsSequence() || node["cutoffs"].size() != 2) throw yaml_error(node["cutoffs"], "cutoffs must be [n1, n2]");
    c = {yaml_get<int>(node["cutoffs"][0], "cutoffs"), yaml_get<int>(node["cutoffs"][1], "cutoffs")};
  }
  return assemble_model(h, build_effective_operators(p, h.sites()), p, c);
}

}  // namespace cavcool
