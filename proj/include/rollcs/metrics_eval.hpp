#pragma once

// Reconstruction quality metrics, regularization sweeps and the empirical
// sparsity / success-rate phase transition.

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <limits>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rollcs/core_model.hpp"
#include "rollcs/cs_solver.hpp"
#include "rollcs/errors.hpp"
#include "rollcs/rolling_forward.hpp"
#include "rollcs/scenes.hpp"
#include "rollcs/speckle_psf.hpp"

namespace rollcs {

inline constexpr double kPsnrCapDb = 200.0;

namespace detail {

inline void check_same_dims(const VideoTensor& a, const VideoTensor& b) {
  if (a.dims() != b.dims()) {
    throw DimensionError("dims differ: " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  }
}

}  // namespace detail

/// 10 log10(max(truth)^2 / MSE), capped at 200 dB.
inline double psnr(const VideoTensor& truth, const VideoTensor& est) {
  detail::check_same_dims(truth, est);
  const auto t = truth.values();
  const double peak = *std::max_element(t.begin(), t.end());
  if (!(peak > 0.0)) throw ConfigurationError("psnr needs a truth with a positive peak");
  const double mse = detail::squared_distance(t, est.values()) / static_cast<double>(t.size());
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

/// ||est - truth|| / ||truth||
inline double relative_error(const VideoTensor& truth, const VideoTensor& est) {
  detail::check_same_dims(truth, est);
  const double denom = detail::dot(truth.values(), truth.values());
  if (!(denom > 0.0)) throw ConfigurationError("relative_error needs a nonzero truth");
  return std::sqrt(detail::squared_distance(truth.values(), est.values()) / denom);
}

struct SupportScore {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  double f1 = 1.0;
};

/// Support overlap, where the support is the set of entries above `threshold`.
inline SupportScore support_f1(const VideoTensor& truth, const VideoTensor& est, double threshold) {
  detail::check_same_dims(truth, est);
  SupportScore s;
  const auto t = truth.values();
  const auto e = est.values();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool in_t = t[i] > threshold;
    const bool in_e = e[i] > threshold;
    if (in_t && in_e) ++s.true_positive;
    if (!in_t && in_e) ++s.false_positive;
    if (in_t && !in_e) ++s.false_negative;
  }
  const auto denom = 2 * s.true_positive + s.false_positive + s.false_negative;
  s.f1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(s.true_positive) / static_cast<double>(denom);
  return s;
}

/// Index of the largest-magnitude DFT bin in [1, n/2]; ties go to the lower bin.
inline std::size_t dominant_frequency(std::span<const double> trace) {
  const std::size_t n = trace.size();
  if (n < 4) throw ConfigurationError("dominant_frequency needs at least 4 samples");
  double mean = 0.0, scale = 0.0;
  for (double v : trace) {
    mean += v;
    scale = std::max(scale, std::abs(v));
  }
  mean /= static_cast<double>(n);
  double spread = 0.0;
  for (double v : trace) spread = std::max(spread, std::abs(v - mean));
  if (spread <= 1e-14 * scale || spread == 0.0) {
    throw NoDominantFrequencyError("trace is constant; no dominant frequency");
  }
  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n);
      acc += (trace[i] - mean) * std::polar(1.0, ang);
    }
    const double mag = std::abs(acc);
    if (mag > best_mag * (1.0 + 1e-9)) {
      best = k;
      best_mag = mag;
    }
  }
  return best;
}

inline std::vector<double> pixel_trace(const VideoTensor& v, std::size_t row, std::size_t col) {
  if (row >= v.dims().rows || col >= v.dims().cols) throw DimensionError("trace pixel off grid");
  std::vector<double> out(v.dims().bins);
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = v(row, col, t);
  return out;
}

// ---------------------------------------------------------------------------
// Regularization

/// Smallest tau giving the all-zero solution for identity Psi with
/// nonnegativity: max(2 A^T b).
inline double tau_max(const ForwardOperator& op, const SensorFrame& frame) {
  const auto g = op.adjoint(frame);
  double mx = 0.0;
  for (double v : g.values()) mx = std::max(mx, 2.0 * v);
  return mx;
}

/// `count` values log-spaced from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi >= lo) || count == 0) throw ConfigurationError("invalid log grid");
  std::vector<double> g(count);
  if (count == 1) {
    g[0] = lo;
    return g;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return g;
}

inline bool non_increasing(const std::vector<double>& trace) {
  for (std::size_t k = 1; k < trace.size(); ++k) {
    if (trace[k] > trace[k - 1]) return false;
  }
  return true;
}

struct TauSweepResult {
  std::vector<double> taus;
  std::vector<double> errors;
  std::vector<bool> monotone;  // per tau: objective trace never rose
  std::size_t best_index = 0;
  SolveReport best;
};

/// Solves once per tau and keeps the run closest to the known truth.
inline TauSweepResult sweep_tau(const ForwardOperator& op, const SensorFrame& frame,
                                const VideoTensor& truth, const std::vector<double>& taus,
                                SolverConfig cfg, const SolverSetup* prepared = nullptr) {
  if (taus.empty()) throw ConfigurationError("tau grid is empty");
  const auto setup = prepared ? *prepared : prepare_solver(op, cfg);
  TauSweepResult out;
  out.taus = taus;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < taus.size(); ++i) {
    cfg.tau = taus[i];
    auto rep = solve(op, frame, cfg, setup);
    const double err = relative_error(truth, rep.solution);
    out.errors.push_back(err);
    out.monotone.push_back(non_increasing(rep.objective_trace));
    if (err < best_err) {
      best_err = err;
      out.best_index = i;
      out.best = std::move(rep);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phase transition

/// splitmix64 combination of (base, k, trial).
inline std::uint64_t cell_seed(std::uint64_t base, std::uint64_t k, std::uint64_t trial) noexcept {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ k) ^ trial);
}

/// k distinct random positions with amplitudes uniform on [0.5, 1.5].
inline VideoTensor gen_random_spikes(const VideoDims& dims, std::size_t k, std::uint64_t seed) {
  VideoTensor v(dims);
  if (k > v.size()) throw GenerationError("more spikes than scene entries");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    v.values()[idx[i]] = amp(rng);
  }
  return v;
}

struct SweepConfig {
  VideoDims dims{32, 32, 8};
  std::vector<std::size_t> k_list;
  std::optional<double> snr;
  std::size_t trials = 10;
  SolverConfig solver;
  double tau_rel = 1e-4;  // tau = tau_rel * tau_max per trial
  double pupil_radius_frac = 1.0;
  std::size_t psf_scale = 2;  // PSF grid = psf_scale x sensor
  std::uint64_t base_seed = 0;
  double success_threshold = 0.1;
  unsigned threads = 1;
};

struct SweepRow {
  std::size_t k = 0;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double mean_relative_error = 0.0;
};

struct SweepTable {
  double success_threshold = 0.1;
  bool all_traces_monotone = true;
  std::vector<SweepRow> rows;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "k,m,n,trials,success_rate\n";
    for (const auto& r : rows) {
      os << r.k << "," << r.m << "," << r.n << "," << r.trials << "," << r.success_rate << "\n";
    }
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
      rows_json.push_back({{"k", r.k},
                           {"m", r.m},
                           {"n", r.n},
                           {"trials", r.trials},
                           {"successes", r.successes},
                           {"success_rate", r.success_rate},
                           {"mean_relative_error", r.mean_relative_error}});
    }
    return {{"success_threshold", success_threshold},
            {"all_traces_monotone", all_traces_monotone},
            {"rows", rows_json}};
  }
};

/// Operator used by the sweep: seeded speckle PSF on a psf_scale-times larger
/// grid, top-to-bottom schedule with rows / bins rows per bin.
inline ForwardOperator sweep_operator(const SweepConfig& cfg) {
  const auto& d = cfg.dims;
  if (d.bins == 0 || d.rows % d.bins != 0) {
    throw ConfigurationError("sweep needs rows divisible by bins");
  }
  PupilSpec spec{d.rows * cfg.psf_scale, d.cols * cfg.psf_scale, cfg.pupil_radius_frac,
                 cell_seed(cfg.base_seed, ~0ULL, 0)};
  auto psf = synthesize_speckle_psf(spec);
  auto schedule = ShutterSchedule::top_to_bottom(d.rows, d.rows / d.bins, 1.0);
  return ForwardOperator(std::move(psf), std::move(schedule), d);
}

struct TrialOutcome {
  double error = 0.0;  // relative error; for k = 0, 0 if the solution is exactly zero else 1
  bool monotone = true;
};

inline TrialOutcome sweep_trial(const ForwardOperator& op, const SolverSetup& setup,
                                const SweepConfig& cfg, std::size_t k, std::size_t trial) {
  const auto seed = cell_seed(cfg.base_seed, k, trial);
  const auto truth = gen_random_spikes(op.dims(), k, seed);
  auto frame = op.forward(truth);
  if (k > 0 && cfg.snr) frame = add_gaussian_noise(frame, *cfg.snr, seed ^ 0x5bd1e995ULL);
  auto scfg = cfg.solver;
  scfg.tau = cfg.tau_rel * tau_max(op, frame);
  const auto rep = solve(op, frame, scfg, setup);
  TrialOutcome out;
  out.monotone = non_increasing(rep.objective_trace);
  if (k == 0) {
    const auto s = rep.solution.values();
    out.error = std::all_of(s.begin(), s.end(), [](double v) { return v == 0.0; }) ? 0.0 : 1.0;
  } else {
    out.error = relative_error(truth, rep.solution);
  }
  return out;
}

/// Success rate of recovering k-spike scenes for each k. Cells are independent
/// and seeded by (base_seed, k, trial), so the table does not depend on the
/// thread count.
inline SweepTable phase_transition_sweep(const SweepConfig& cfg) {
  if (cfg.trials < 10) throw ConfigurationError("phase transition needs at least 10 trials");
  const auto op = sweep_operator(cfg);
  const auto setup = prepare_solver(op, cfg.solver);
  const auto pd = problem_dims(cfg.dims);
  const std::size_t cells = cfg.k_list.size() * cfg.trials;
  std::vector<TrialOutcome> outcomes(cells);
  const unsigned threads = std::max(1u, cfg.threads);
  std::vector<std::exception_ptr> failures(threads);
  auto run_cells = [&](unsigned first) {
    try {
      for (std::size_t c = first; c < cells; c += threads) {
        outcomes[c] = sweep_trial(op, setup, cfg, cfg.k_list[c / cfg.trials], c % cfg.trials);
      }
    } catch (...) {
      failures[first] = std::current_exception();
    }
  };
  if (threads == 1) {
    run_cells(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(run_cells, i);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  SweepTable table;
  table.success_threshold = cfg.success_threshold;
  for (std::size_t ki = 0; ki < cfg.k_list.size(); ++ki) {
    SweepRow row{cfg.k_list[ki], pd.m, pd.n, cfg.trials, 0, 0.0, 0.0};
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      const auto& o = outcomes[ki * cfg.trials + t];
      const double e = o.error;
      table.all_traces_monotone = table.all_traces_monotone && o.monotone;
      row.mean_relative_error += e / static_cast<double>(cfg.trials);
      if (e < cfg.success_threshold) ++row.successes;
    }
    row.success_rate = static_cast<double>(row.successes) / static_cast<double>(cfg.trials);
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace rollcs
