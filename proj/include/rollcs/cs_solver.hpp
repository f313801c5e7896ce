#pragma once

// Nonnegative sparse recovery of a video from one rolling-shutter frame:
//
//   minimize  ||b - A v||^2 + tau ||Psi v||_1   subject to v >= 0
//
// solved with accelerated proximal gradient (FISTA), optionally in a block
// rank-one metric (see BlockMetric). Whenever an accelerated
// step would raise the objective the momentum is reset and the step is
// replaced by a plain proximal-gradient step from the last accepted iterate,
// so the recorded objective never increases.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rollcs/core_model.hpp"
#include "rollcs/errors.hpp"
#include "rollcs/rolling_forward.hpp"
#include "rollcs/transforms.hpp"

namespace rollcs {

struct SolverConfig {
  double tau = 0.0;
  std::size_t max_iters = 500;
  double rel_tol = 1e-6;
  TransformKind transform = TransformKind::identity;
  std::optional<double> lipschitz;  // lambda_max(A^T A) for the plain metric; empty = estimate
  bool nonneg = true;
  std::size_t power_iters = 100;
  std::uint64_t seed = 0;       // power-method start vector
  std::size_t window = 10;      // iterations spanned by the rel_tol test
  bool precondition = true;     // block rank-one metric (identity Psi with nonneg only)

  void validate() const {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigurationError("tau must be >= 0");
    if (max_iters < 1) throw ConfigurationError("max_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw ConfigurationError("rel_tol must be > 0");
    if (lipschitz && !(*lipschitz > 0.0)) throw ConfigurationError("lipschitz must be > 0");
    if (window < 1) throw ConfigurationError("window must be >= 1");
  }
};

struct SolveReport {
  VideoTensor solution;
  std::vector<double> objective_trace;
  std::size_t iterations_run = 0;
  bool converged = false;
  std::size_t restarts = 0;
  double lipschitz = 0.0;
  double step = 0.0;
  bool preconditioned = false;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double l1_norm(std::span<const double> a) noexcept {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}

}  // namespace detail

/// Power iteration for the largest eigenvalue of a symmetric PSD map given as
/// `apply(x, out)`. Returns the final Rayleigh quotient.
template <class NormalMap>
double power_method(NormalMap&& apply, std::size_t n, std::size_t iters, std::uint64_t seed) {
  if (iters < 10) throw ConfigurationError("power method needs at least 10 iterations");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n), y(n);
  for (auto& v : x) v = normal(rng);
  double norm = std::sqrt(detail::dot(x, x));
  for (auto& v : x) v /= norm;
  double lambda = 0.0;
  for (std::size_t k = 0; k < iters; ++k) {
    apply(std::span<const double>(x), std::span<double>(y));
    lambda = detail::dot(x, y);
    norm = std::sqrt(detail::dot(y, y));
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DegenerateOperatorError("operator maps the power-method iterate to zero");
    }
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / norm;
  }
  return lambda;
}

/// Largest eigenvalue of A^T A.
inline double power_method_lipschitz(const ForwardOperator& op, std::size_t iters,
                                     std::uint64_t seed) {
  const auto pd = problem_dims(op.dims());
  std::vector<double> frame(pd.m);
  return power_method(
      [&](std::span<const double> x, std::span<double> out) {
        op.forward_into(x, frame);
        op.adjoint_into(frame, out);
      },
      pd.n, iters, seed);
}

/// max(v - theta, 0): prox of theta*||.||_1 plus the nonnegativity indicator.
inline std::vector<double> prox_l1_nonneg(std::span<const double> v, double theta) {
  if (!(theta >= 0.0)) throw ConfigurationError("prox threshold must be >= 0");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

/// sign(v) * max(|v| - theta, 0)
inline std::vector<double> soft_threshold(std::span<const double> v, double theta) {
  if (!(theta >= 0.0)) throw ConfigurationError("prox threshold must be >= 0");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]) - theta;
    out[i] = a > 0.0 ? std::copysign(a, v[i]) : 0.0;
  }
  return out;
}

namespace detail {

inline void check_frame(const ForwardOperator& op, const SensorFrame& frame) {
  if (frame.rows() != op.sensor_rows() || frame.cols() != op.sensor_cols()) {
    throw DimensionError("frame is " + std::to_string(frame.rows()) + "x" +
                         std::to_string(frame.cols()) + ", operator expects " +
                         std::to_string(op.sensor_rows()) + "x" + std::to_string(op.sensor_cols()));
  }
}

}  // namespace detail

/// ||b - A v||^2 + tau ||Psi v||_1
inline double objective_value(const ForwardOperator& op, const SensorFrame& frame,
                              const VideoTensor& v, const SolverConfig& cfg) {
  detail::check_frame(op, frame);
  const auto av = op.forward(v);
  const double residual = detail::squared_distance(frame.values(), av.values());
  if (cfg.tau == 0.0) return residual;
  const SparsityTransform psi(cfg.transform, op.dims());
  return residual + cfg.tau * detail::l1_norm(psi.forward(v.values()));
}

/// Gradient of the smooth term: 2 A^T (A v - b).
inline VideoTensor smooth_gradient(const ForwardOperator& op, const SensorFrame& frame,
                                   const VideoTensor& v) {
  detail::check_frame(op, frame);
  auto r = op.forward(v);
  for (std::size_t i = 0; i < r.size(); ++i) r.values()[i] -= frame.values()[i];
  auto g = op.adjoint(r);
  for (double& x : g.values()) x *= 2.0;
  return g;
}

// ---------------------------------------------------------------------------
// Block rank-one metric
//
// The PSF is nonnegative, so every bin block of A^T A carries one Perron
// direction u_t whose eigenvalue exceeds the rest of the spectrum by roughly
// the number of rows in the bin. Proximal steps are taken in the metric
//
//   H = I + sum_t rho_t u_t u_t^T,   rho_t = lambda_1,t / lambda_2 - 1
//
// which flattens those directions. H is block diagonal across bins (A^T A is,
// since each sensor row belongs to one bin), so the prox of
// theta ||v||_1 + indicator(v >= 0) in H splits into one scalar equation per
// bin, solved exactly by a semismooth Newton iteration.

struct BlockMetric {
  VideoDims dims;
  std::vector<double> directions;  // u_t stored in bin t's plane, unit norm per bin
  std::vector<double> rho;         // per bin
  std::vector<double> lambda_top;  // per-bin top eigenvalue of A^T A
  double lambda_rest = 0.0;        // largest eigenvalue orthogonal to all u_t
  double lipschitz = 0.0;          // lambda_max(H^{-1/2} A^T A H^{-1/2})

  std::size_t plane() const noexcept { return dims.rows * dims.cols; }

  /// x <- H^p x for p in {-1, -1/2, 1/2, 1}.
  void apply_power(std::span<double> x, double p) const {
    const auto pl = plane();
    for (std::size_t t = 0; t < dims.bins; ++t) {
      const auto u = std::span<const double>(directions).subspan(t * pl, pl);
      auto xt = x.subspan(t * pl, pl);
      const double s = detail::dot(u, xt);
      const double f = std::pow(1.0 + rho[t], p) - 1.0;
      for (std::size_t i = 0; i < pl; ++i) xt[i] += f * s * u[i];
    }
  }

  /// argmin_v 1/2 ||v - w||_H^2 + theta ||v||_1, v >= 0.
  std::vector<double> prox_l1_nonneg(std::span<const double> w, double theta) const {
    const auto pl = plane();
    std::vector<double> z(w.size());
    for (std::size_t t = 0; t < dims.bins; ++t) {
      const auto u = std::span<const double>(directions).subspan(t * pl, pl);
      const auto wt = w.subspan(t * pl, pl);
      const double r = rho[t];
      // v(s) = max(w - theta - r s u, 0); solve s = u^T (v(s) - w).
      const double uw = detail::dot(u, wt);
      double s = 0.0;
      if (r > 0.0) {
        for (int it = 0; it < 200; ++it) {
          double phi = -uw - s;
          double dphi = -1.0;
          for (std::size_t i = 0; i < pl; ++i) {
            const double v = wt[i] - theta - r * s * u[i];
            if (v > 0.0) {
              phi += u[i] * v;
              dphi -= r * u[i] * u[i];
            }
          }
          const double next = s - phi / dphi;
          const bool done = next == s || std::abs(next - s) <= 1e-15 * std::max(1.0, std::abs(s));
          s = next;
          if (done) break;
        }
      }
      for (std::size_t i = 0; i < pl; ++i) z[t * pl + i] = std::max(wt[i] - theta - r * s * u[i], 0.0);
    }
    return z;
  }
};

/// Estimates the per-bin Perron directions, the remaining spectrum and the
/// Lipschitz constant of the gradient in the resulting metric.
inline BlockMetric build_block_metric(const ForwardOperator& op, std::size_t iters,
                                      std::uint64_t seed) {
  if (iters < 10) throw ConfigurationError("power method needs at least 10 iterations");
  const auto pd = problem_dims(op.dims());
  BlockMetric bm;
  bm.dims = op.dims();
  const auto pl = bm.plane();
  const auto bins = bm.dims.bins;
  std::vector<double> frame(pd.m), y(pd.n);
  auto normal_map = [&](std::span<const double> x, std::span<double> out) {
    op.forward_into(x, frame);
    op.adjoint_into(frame, out);
  };

  // Blockwise power iteration from the all-ones vector (the Perron vector of a
  // nonnegative matrix has nonnegative entries).
  bm.directions.assign(pd.n, 1.0 / std::sqrt(static_cast<double>(pl)));
  bm.lambda_top.assign(bins, 0.0);
  for (std::size_t k = 0; k < iters; ++k) {
    normal_map(bm.directions, y);
    for (std::size_t t = 0; t < bins; ++t) {
      auto u = std::span<double>(bm.directions).subspan(t * pl, pl);
      const auto yt = std::span<const double>(y).subspan(t * pl, pl);
      bm.lambda_top[t] = detail::dot(u, yt);
      const double norm = std::sqrt(detail::dot(yt, yt));
      if (norm > 0.0) {
        for (std::size_t i = 0; i < pl; ++i) u[i] = yt[i] / norm;
      } else {
        std::fill(u.begin(), u.end(), 0.0);
      }
    }
  }
  if (*std::max_element(bm.lambda_top.begin(), bm.lambda_top.end()) <= 0.0) {
    throw DegenerateOperatorError("operator is zero");
  }

  auto deflate = [&](std::span<double> x) {
    for (std::size_t t = 0; t < bins; ++t) {
      const auto u = std::span<const double>(bm.directions).subspan(t * pl, pl);
      auto xt = x.subspan(t * pl, pl);
      const double s = detail::dot(u, xt);
      for (std::size_t i = 0; i < pl; ++i) xt[i] -= s * u[i];
    }
  };
  std::vector<double> tmp(pd.n);
  try {
    bm.lambda_rest = power_method(
        [&](std::span<const double> x, std::span<double> out) {
          std::copy(x.begin(), x.end(), tmp.begin());
          deflate(tmp);
          normal_map(tmp, out);
          deflate(out);
        },
        pd.n, iters, seed);
  } catch (const DegenerateOperatorError&) {
    bm.lambda_rest = 0.0;  // A is rank one per bin
  }
  constexpr double kMaxRho = 1e8;
  bm.rho.assign(bins, 0.0);
  for (std::size_t t = 0; t < bins; ++t) {
    if (bm.lambda_top[t] <= 0.0) continue;
    bm.rho[t] = bm.lambda_rest > 0.0
                    ? std::clamp(bm.lambda_top[t] / bm.lambda_rest - 1.0, 0.0, kMaxRho)
                    : kMaxRho;
  }

  bm.lipschitz = power_method(
      [&](std::span<const double> x, std::span<double> out) {
        std::copy(x.begin(), x.end(), tmp.begin());
        bm.apply_power(tmp, -0.5);
        normal_map(tmp, out);
        bm.apply_power(out, -0.5);
      },
      pd.n, iters, seed + 1);
  return bm;
}

// ---------------------------------------------------------------------------
// Solver

/// Step-size data shared by every solve on one operator (the tau sweep reuses it).
struct SolverSetup {
  double lipschitz = 0.0;             // of the gradient's A^T A part, in the metric used
  std::optional<BlockMetric> metric;  // present when the metric step is active
};

inline bool uses_block_metric(const SolverConfig& cfg) noexcept {
  return cfg.precondition && cfg.nonneg && cfg.transform == TransformKind::identity;
}

inline SolverSetup prepare_solver(const ForwardOperator& op, const SolverConfig& cfg) {
  SolverSetup setup;
  if (uses_block_metric(cfg)) {
    setup.metric = build_block_metric(op, cfg.power_iters, cfg.seed);
    setup.lipschitz = setup.metric->lipschitz;
    return setup;
  }
  if (cfg.lipschitz) {
    setup.lipschitz = *cfg.lipschitz;
    return setup;
  }
  const SparsityTransform psi(cfg.transform, op.dims());
  const auto pd = problem_dims(op.dims());
  std::vector<double> frame(pd.m), v(pd.n);
  setup.lipschitz = power_method(
      [&](std::span<const double> c, std::span<double> out) {
        if (cfg.transform == TransformKind::identity) {
          op.forward_into(c, frame);
          op.adjoint_into(frame, out);
        } else {
          op.forward_into(psi.inverse(c), frame);
          op.adjoint_into(frame, v);
          const auto g = psi.inverse_adjoint(v);
          std::copy(g.begin(), g.end(), out.begin());
        }
      },
      pd.n, cfg.power_iters, cfg.seed);
  return setup;
}

inline SolveReport solve(const ForwardOperator& op, const SensorFrame& frame,
                         const SolverConfig& cfg, const SolverSetup& setup) {
  cfg.validate();
  detail::check_frame(op, frame);
  const auto pd = problem_dims(op.dims());
  const std::size_t n = pd.n;
  const std::size_t m = pd.m;
  const SparsityTransform psi(cfg.transform, op.dims());
  const bool identity = cfg.transform == TransformKind::identity;
  const BlockMetric* metric = setup.metric ? &*setup.metric : nullptr;
  if (metric && metric->dims != op.dims()) throw DimensionError("solver setup built for other dims");
  const std::span<const double> b = frame.values();

  // K = A Psi^{-1} acting on coefficients.
  std::vector<double> scratch_v(n);
  auto apply_k = [&](std::span<const double> c, std::span<double> out) {
    if (identity) {
      op.forward_into(c, out);
    } else {
      op.forward_into(psi.inverse(c), out);
    }
  };
  auto apply_kt = [&](std::span<const double> r, std::span<double> out) {
    if (identity) {
      op.adjoint_into(r, out);
    } else {
      op.adjoint_into(r, scratch_v);
      const auto g = psi.inverse_adjoint(scratch_v);
      std::copy(g.begin(), g.end(), out.begin());
    }
  };

  SolveReport report;
  report.lipschitz = setup.lipschitz;
  report.preconditioned = metric != nullptr;
  if (!(report.lipschitz > 0.0)) throw DegenerateOperatorError("operator has zero norm");
  double step = 0.95 / (2.0 * report.lipschitz);

  const bool nonneg_prox = identity && cfg.nonneg;
  auto prox = [&](std::span<const double> z, double theta) {
    if (metric) return metric->prox_l1_nonneg(z, theta);
    return nonneg_prox ? prox_l1_nonneg(z, theta) : soft_threshold(z, theta);
  };
  auto objective = [&](std::span<const double> c, std::span<const double> kc) {
    return detail::squared_distance(b, kc) + cfg.tau * detail::l1_norm(c);
  };

  std::vector<double> x(n, 0.0), x_prev(n, 0.0), kx(m, 0.0), kx_prev(m, 0.0);
  std::vector<double> y(n), ky(m), resid(m), grad(n), kz(m), w(n);
  double fx = objective(x, kx);
  double t = 1.0;
  double beta = 0.0;

  // Proximal-gradient step from (point, K point) with step h.
  auto prox_step = [&](std::span<const double> point, std::span<const double> kpoint, double h) {
    for (std::size_t i = 0; i < m; ++i) resid[i] = kpoint[i] - b[i];
    apply_kt(resid, grad);
    if (metric) metric->apply_power(grad, -1.0);
    for (std::size_t i = 0; i < n; ++i) w[i] = point[i] - h * 2.0 * grad[i];
    return prox(w, h * cfg.tau);
  };
  auto non_finite = [](std::size_t k) {
    return StepSizeError("objective became non-finite at iteration " + std::to_string(k) +
                         "; use a smaller step (larger lipschitz)");
  };

  for (std::size_t k = 1; k <= cfg.max_iters; ++k) {
    const bool from_x = beta == 0.0 || x == x_prev;
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + beta * (x[i] - x_prev[i]);
    for (std::size_t i = 0; i < m; ++i) ky[i] = kx[i] + beta * (kx[i] - kx_prev[i]);

    auto z = prox_step(y, ky, step);
    apply_k(z, kz);
    double fz = objective(z, kz);
    if (!std::isfinite(fz)) throw non_finite(k);

    bool stalled = false;
    bool restarted = false;
    if (fz > fx) {
      restarted = true;
      ++report.restarts;
      t = 1.0;
      for (int halvings = 0;; ++halvings) {
        z = prox_step(x, kx, step);
        apply_k(z, kz);
        fz = objective(z, kz);
        if (!std::isfinite(fz)) throw non_finite(k);
        if (fz <= fx) break;
        // Roundoff at the optimum: stay put.
        if (fz - fx <= 1e-13 * std::abs(fx) || halvings >= 30) {
          z = x;
          kz = kx;
          fz = fx;
          stalled = true;
          break;
        }
        step *= 0.5;
      }
    }

    const bool fixed_point = (from_x || restarted) && z == x;
    x_prev.swap(x);
    kx_prev.swap(kx);
    x = std::move(z);
    kx = kz;
    fx = fz;
    report.objective_trace.push_back(fx);
    report.iterations_run = k;

    const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
    beta = (t - 1.0) / t_next;
    t = t_next;

    if (fx == 0.0 || stalled || fixed_point) {
      report.converged = true;
      break;
    }
    const auto& tr = report.objective_trace;
    if (tr.size() > cfg.window) {
      const double old = tr[tr.size() - 1 - cfg.window];
      const double denom = std::max(std::abs(old), std::numeric_limits<double>::min());
      if (std::abs(old - fx) / denom < cfg.rel_tol) {
        report.converged = true;
        break;
      }
    }
  }

  report.step = step;
  auto v = identity ? x : psi.inverse(x);
  if (cfg.nonneg) {
    for (double& e : v) e = std::max(e, 0.0);
  }
  report.solution = VideoTensor(op.dims(), std::move(v));
  return report;
}

inline SolveReport solve(const ForwardOperator& op, const SensorFrame& frame,
                         const SolverConfig& cfg) {
  cfg.validate();
  detail::check_frame(op, frame);
  return solve(op, frame, cfg, prepare_solver(op, cfg));
}

/// Fraction of entries above `rel` times the maximum entry.
inline double fraction_above(const VideoTensor& v, double rel) {
  const auto vals = v.values();
  if (vals.empty()) return 0.0;
  const double mx = *std::max_element(vals.begin(), vals.end());
  if (!(mx > 0.0)) return 0.0;
  const auto count =
      std::count_if(vals.begin(), vals.end(), [&](double e) { return e > rel * mx; });
  return static_cast<double>(count) / static_cast<double>(vals.size());
}

}  // namespace rollcs
