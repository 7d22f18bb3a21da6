#pragma once

// Monte Carlo wave-function unraveling with photon-counting records.
//
// Between jumps each trajectory evolves under H_eff = H − (i/2) Σ L_k†L_k
// using exact propagators exp(−i H_eff τ) for τ = Δ/2^k, k = 0..K, where Δ
// is the grid spacing. A jump fires when ‖ψ‖² falls to a uniform threshold
// u; since ‖ψ‖² is nonincreasing between jumps the crossing time is found by
// binary descent on the propagator ladder, to a resolution Δ/2^K.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "cavcool/effective_model.hpp"
#include "cavcool/lindblad.hpp"
#include "cavcool/rng.hpp"
#include "cavcool/types.hpp"

namespace cavcool {

struct JumpEvent {
  double time = 0.0;
  int channel = 0;  // index into TrajectoryEnsemble::channel_labels
};

struct DetectionRecord {
  std::size_t trajectory = 0;
  std::vector<JumpEvent> events;
  std::size_t final_state = 0;  // most populated labeled state at the last grid time
};

struct TrajectoryEnsemble {
  std::uint64_t master_seed = 0;
  std::size_t n_traj = 0;
  std::string rng = rng_algorithm;
  std::vector<double> times;
  std::vector<LevelLabel> labels;
  std::vector<std::vector<double>> populations;  // [time][label], ensemble average
  std::vector<DetectionRecord> records;
  std::vector<std::string> channel_labels;
  std::vector<ChannelKind> channel_kinds;
  std::vector<int> channel_modes;

  std::vector<double> level_population(Index mu) const {
    std::vector<double> out(times.size(), 0.0);
    for (std::size_t t = 0; t < times.size(); ++t)
      for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k].mu == mu) out[t] += populations[t][k];
    return out;
  }
};

struct TrajectoryOptions {
  double time_resolution = 1e-3;  // jump-time resolution, units of 1/κ
  unsigned threads = 0;           // 0: hardware concurrency
  std::size_t chunk = 64;         // trajectories per reduction chunk
};

namespace detail {

class PropagatorLadder {
 public:
  PropagatorLadder(const Mat& h_eff, double delta, int levels) : levels_(levels) {
    for (int k = 0; k <= levels; ++k) {
      const double tau = delta / std::ldexp(1.0, k);
      ladder_.push_back(Mat((cplx{0.0, -tau} * h_eff).exp()));
    }
  }
  int levels() const { return levels_; }
  std::int64_t units() const { return std::int64_t{1} << levels_; }
  /// exp(−i H_eff Δ·2^{-k})
  const Mat& step(int k) const { return ladder_[static_cast<std::size_t>(k)]; }
  /// Evolve by `n` units of Δ/2^K.
  Vec advance(Vec psi, std::int64_t n) const {
    if (n == units()) return ladder_[0] * psi;
    for (int k = 1; k <= levels_ && n > 0; ++k) {
      const std::int64_t w = std::int64_t{1} << (levels_ - k);
      if (n >= w) {
        psi = ladder_[static_cast<std::size_t>(k)] * psi;
        n -= w;
      }
    }
    return psi;
  }

 private:
  int levels_;
  std::vector<Mat> ladder_;
};

struct PartialSums {
  std::vector<std::vector<double>> populations;
};

}  // namespace detail

/// Runs `n_traj` trajectories from the pure state ψ0. Trajectory i draws
/// from RandomStream(master_seed, i); the result does not depend on thread
/// count or scheduling.
inline TrajectoryEnsemble run_trajectories(const EffectiveModel& model, const EigenSystem& eig, const Vec& psi0,
                                           std::span<const double> grid, std::size_t n_traj,
                                           std::uint64_t master_seed, const TrajectoryOptions& options = {}) {
  require(n_traj >= 1, "at least one trajectory is required");
  require(psi0.size() == model.dimension(), "initial state dimension does not match the model");
  require(std::abs(psi0.squaredNorm() - 1.0) <= 1e-10, "initial state is not normalized");
  require(!grid.empty(), "empty time grid");
  for (std::size_t i = 1; i < grid.size(); ++i) require(grid[i] > grid[i - 1], "time grid must be strictly increasing");
  require(options.time_resolution > 0.0, "time resolution must be positive");

  TrajectoryEnsemble ens;
  ens.master_seed = master_seed;
  ens.n_traj = n_traj;
  ens.times.assign(grid.begin(), grid.end());
  ens.labels = model.labels();

  const Liouvillian lv(model);
  std::vector<SpMat> ops;
  std::vector<SpMat> ops_dag_op;
  for (const auto& ch : model.channels()) {
    if (ch.rate <= 0.0) continue;
    SpMat l = std::sqrt(ch.rate) * ch.op;
    ops_dag_op.push_back(SpMat(l.adjoint()) * l);
    ops.push_back(std::move(l));
    ens.channel_labels.push_back(ch.label);
    ens.channel_kinds.push_back(ch.kind);
    ens.channel_modes.push_back(ch.mode);
  }
  const Mat h_eff = Mat(lv.effective_hamiltonian());
  const double kappa_scale = std::max(model.params().kappa, 1e-300);

  std::map<double, detail::PropagatorLadder> ladders;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double delta = grid[i] - grid[i - 1];
    if (ladders.count(delta)) continue;
    int levels = 0;
    while (delta / std::ldexp(1.0, levels) > options.time_resolution / kappa_scale && levels < 40) ++levels;
    ladders.emplace(delta, detail::PropagatorLadder(h_eff, delta, levels));
  }

  const SpMat u = model.eigenbasis(eig);
  const SpMat u_adj = u.adjoint();
  const std::size_t n_labels = ens.labels.size();
  const std::size_t n_times = grid.size();

  auto run_one = [&](std::size_t id, std::vector<std::vector<double>>& acc, DetectionRecord& rec) {
    RandomStream rng(master_seed, id);
    rec.trajectory = id;
    Vec psi = psi0;
    double threshold = rng.uniform_open();
    auto record_pops = [&](std::size_t ti, const Vec& state) {
      const Vec c = u_adj * state;
      const double norm2 = state.squaredNorm();
      for (std::size_t k = 0; k < n_labels; ++k) acc[ti][k] += std::norm(c[static_cast<Index>(k)]) / norm2;
    };
    record_pops(0, psi);
    for (std::size_t ti = 1; ti < n_times; ++ti) {
      const detail::PropagatorLadder& lad = ladders.at(grid[ti] - grid[ti - 1]);
      const double unit = (grid[ti] - grid[ti - 1]) / static_cast<double>(lad.units());
      std::int64_t pos = 0;
      while (true) {
        Vec end = lad.advance(psi, lad.units() - pos);
        if (end.squaredNorm() > threshold) {
          psi = std::move(end);
          break;
        }
        // Largest position whose norm is still above the threshold.
        for (int k = 1; k <= lad.levels(); ++k) {
          const std::int64_t w = std::int64_t{1} << (lad.levels() - k);
          if (pos + w > lad.units()) continue;
          Vec trial = lad.step(k) * psi;
          if (trial.squaredNorm() > threshold) {
            psi = std::move(trial);
            pos += w;
          }
        }
        psi = lad.step(lad.levels()) * psi;
        pos += 1;
        const double t_jump = grid[ti - 1] + static_cast<double>(pos) * unit;

        // Channel choice ∝ <ψ|L_k†L_k|ψ>, fixed channel order.
        std::vector<double> weights(ops.size());
        double total = 0.0;
        for (std::size_t c = 0; c < ops.size(); ++c) {
          weights[c] = std::max(0.0, psi.dot(ops_dag_op[c] * psi).real());
          total += weights[c];
        }
        require(total > 0.0, "jump requested with vanishing jump probability at t=" + std::to_string(t_jump));
        const double pick = rng.uniform_open() * total;
        std::size_t chosen = 0;
        double cum = weights[0];
        while (cum < pick && chosen + 1 < ops.size()) cum += weights[++chosen];
        psi = ops[chosen] * psi;
        psi /= psi.norm();
        rec.events.push_back({t_jump, static_cast<int>(chosen)});
        threshold = rng.uniform_open();
        if (pos == lad.units()) break;
      }
      record_pops(ti, psi);
    }
    const Vec c = u_adj * psi;
    Index best = 0;
    c.cwiseAbs2().maxCoeff(&best);
    rec.final_state = static_cast<std::size_t>(best);
  };

  const std::size_t chunk = std::max<std::size_t>(1, options.chunk);
  const std::size_t n_chunks = (n_traj + chunk - 1) / chunk;
  std::vector<detail::PartialSums> partial(n_chunks);
  ens.records.resize(n_traj);
  auto run_chunk = [&](std::size_t c) {
    auto& acc = partial[c].populations;
    acc.assign(n_times, std::vector<double>(n_labels, 0.0));
    const std::size_t end = std::min(n_traj, (c + 1) * chunk);
    for (std::size_t id = c * chunk; id < end; ++id) run_one(id, acc, ens.records[id]);
  };

  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_chunks));
  if (threads <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < n_chunks; c += threads) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }

  // Fixed-order reduction over chunks.
  ens.populations.assign(n_times, std::vector<double>(n_labels, 0.0));
  for (const auto& p : partial)
    for (std::size_t t = 0; t < n_times; ++t)
      for (std::size_t k = 0; k < n_labels; ++k) ens.populations[t][k] += p.populations[t][k];
  for (auto& row : ens.populations)
    for (auto& v : row) v /= static_cast<double>(n_traj);
  return ens;
}

/// Which channels a detection histogram counts.
struct ChannelFilter {
  int mode = 1;                      // cavity mode whose loss channel is counted; 0 for none
  bool include_spontaneous = false;  // also count spontaneous-emission events
  bool include_thermal = false;      // also count thermal absorption events of `mode`

  bool accepts(ChannelKind kind, int channel_mode) const {
    if (kind == ChannelKind::cavity_loss) return channel_mode == mode;
    if (kind == ChannelKind::cavity_gain) return include_thermal && channel_mode == mode;
    return include_spontaneous;
  }
};

struct DetectionHistogram {
  std::vector<double> centers;
  std::vector<double> rates;   // counts / (bin width · n_traj)
  std::vector<std::size_t> counts;
  std::vector<double> widths;
  std::size_t n_traj = 0;
};

inline DetectionHistogram detection_rate_histogram(const TrajectoryEnsemble& ens, double bin_width,
                                                   const ChannelFilter& filter) {
  require(bin_width > 0.0, "bin width must be positive");
  require(ens.n_traj > 0 && !ens.times.empty(), "empty ensemble");
  const double t0 = ens.times.front();
  const double t1 = ens.times.back();
  const auto n_bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((t1 - t0) / bin_width - 1e-9)));
  DetectionHistogram h;
  h.n_traj = ens.n_traj;
  h.counts.assign(n_bins, 0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double lo = t0 + static_cast<double>(b) * bin_width;
    const double hi = std::min(t1, lo + bin_width);
    h.centers.push_back(0.5 * (lo + hi));
    h.widths.push_back(hi - lo);
  }
  for (const auto& rec : ens.records)
    for (const auto& ev : rec.events) {
      const auto c = static_cast<std::size_t>(ev.channel);
      if (!filter.accepts(ens.channel_kinds[c], ens.channel_modes[c])) continue;
      auto b = static_cast<std::size_t>((ev.time - t0) / bin_width);
      b = std::min(b, n_bins - 1);
      ++h.counts[b];
    }
  for (std::size_t b = 0; b < n_bins; ++b)
    h.rates.push_back(static_cast<double>(h.counts[b]) / (h.widths[b] * static_cast<double>(ens.n_traj)));
  return h;
}

}  // namespace cavcool
