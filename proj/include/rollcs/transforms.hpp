#pragma once

// Invertible sparsifying transforms Psi on a VideoTensor's value vector.
//
//   identity             c = v
//   dct3                 orthonormal DCT-II along rows, cols and bins
//   temporal_difference  c_0 = v_0, c_t = v_t - v_{t-1}; inverse is a cumsum

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rollcs/core_model.hpp"
#include "rollcs/errors.hpp"

namespace rollcs {

enum class TransformKind { identity, dct3, temporal_difference };

inline std::string_view to_string(TransformKind k) noexcept {
  switch (k) {
    case TransformKind::identity: return "identity";
    case TransformKind::dct3: return "dct3";
    case TransformKind::temporal_difference: return "temporal_difference";
  }
  return "identity";
}

inline TransformKind parse_transform_kind(std::string_view s) {
  if (s == "identity") return TransformKind::identity;
  if (s == "dct3") return TransformKind::dct3;
  if (s == "temporal_difference") return TransformKind::temporal_difference;
  throw ConfigurationError("unknown transform '" + std::string(s) +
                           "' (expected identity, dct3 or temporal_difference)");
}

namespace detail {

/// Orthonormal DCT-II matrix, row k = frequency.
inline std::vector<double> dct_matrix(std::size_t n) {
  std::vector<double> m(n * n);
  const double pi = std::numbers::pi;
  for (std::size_t k = 0; k < n; ++k) {
    const double w = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n; ++i) {
      m[k * n + i] = w * std::cos(pi * (2.0 * i + 1.0) * k / (2.0 * n));
    }
  }
  return m;
}

// Applies an n x n matrix along one axis of a (bins, rows, cols) array.
inline void apply_along_axis(std::span<double> data, const VideoDims& d, int axis,
                             const std::vector<double>& mat, bool transpose) {
  const std::size_t n = axis == 0 ? d.bins : (axis == 1 ? d.rows : d.cols);
  if (n <= 1) return;
  const std::size_t stride = axis == 0 ? d.rows * d.cols : (axis == 1 ? d.cols : 1);
  const std::size_t outer = d.rows * d.cols * d.bins / n;
  std::vector<double> in(n), out(n);
  for (std::size_t o = 0; o < outer; ++o) {
    // Decompose o into the base offset of a line along `axis`.
    std::size_t base = 0;
    if (axis == 0) {
      base = o;
    } else if (axis == 1) {
      base = (o / d.cols) * d.rows * d.cols + (o % d.cols);
    } else {
      base = o * d.cols;
    }
    for (std::size_t i = 0; i < n; ++i) in[i] = data[base + i * stride];
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0.0;
      if (transpose) {
        for (std::size_t i = 0; i < n; ++i) acc += mat[i * n + k] * in[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) acc += mat[k * n + i] * in[i];
      }
      out[k] = acc;
    }
    for (std::size_t i = 0; i < n; ++i) data[base + i * stride] = out[i];
  }
}

}  // namespace detail

class SparsityTransform {
 public:
  SparsityTransform(TransformKind kind, VideoDims dims) : kind_(kind), dims_(dims) {
    if (kind_ == TransformKind::dct3) {
      dct_rows_ = detail::dct_matrix(dims.rows);
      dct_cols_ = detail::dct_matrix(dims.cols);
      dct_bins_ = detail::dct_matrix(dims.bins);
    }
  }

  TransformKind kind() const noexcept { return kind_; }
  const VideoDims& dims() const noexcept { return dims_; }

  /// c = Psi v
  std::vector<double> forward(std::span<const double> v) const {
    check(v.size());
    std::vector<double> c(v.begin(), v.end());
    switch (kind_) {
      case TransformKind::identity: break;
      case TransformKind::dct3: dct(c, false); break;
      case TransformKind::temporal_difference: {
        const auto plane = dims_.rows * dims_.cols;
        for (std::size_t t = dims_.bins; t-- > 1;)
          for (std::size_t i = 0; i < plane; ++i) c[t * plane + i] -= c[(t - 1) * plane + i];
        break;
      }
    }
    return c;
  }

  /// v = Psi^{-1} c
  std::vector<double> inverse(std::span<const double> c) const {
    check(c.size());
    std::vector<double> v(c.begin(), c.end());
    switch (kind_) {
      case TransformKind::identity: break;
      case TransformKind::dct3: dct(v, true); break;
      case TransformKind::temporal_difference: {
        const auto plane = dims_.rows * dims_.cols;
        for (std::size_t t = 1; t < dims_.bins; ++t)
          for (std::size_t i = 0; i < plane; ++i) v[t * plane + i] += v[(t - 1) * plane + i];
        break;
      }
    }
    return v;
  }

  /// g = Psi^{-T} r, the chain rule term for gradients in coefficient space.
  std::vector<double> inverse_adjoint(std::span<const double> r) const {
    check(r.size());
    std::vector<double> g(r.begin(), r.end());
    switch (kind_) {
      case TransformKind::identity: break;
      case TransformKind::dct3: dct(g, false); break;
      case TransformKind::temporal_difference: {
        const auto plane = dims_.rows * dims_.cols;
        for (std::size_t t = dims_.bins - 1; t-- > 0;)
          for (std::size_t i = 0; i < plane; ++i) g[t * plane + i] += g[(t + 1) * plane + i];
        break;
      }
    }
    return g;
  }

 private:
  void check(std::size_t n) const {
    if (n != dims_.rows * dims_.cols * dims_.bins) {
      throw DimensionError("transform input has " + std::to_string(n) +
                           " entries, expected dims " + to_string(dims_));
    }
  }

  void dct(std::vector<double>& x, bool inverse) const {
    detail::apply_along_axis(x, dims_, 2, dct_cols_, inverse);
    detail::apply_along_axis(x, dims_, 1, dct_rows_, inverse);
    detail::apply_along_axis(x, dims_, 0, dct_bins_, inverse);
  }

  TransformKind kind_;
  VideoDims dims_;
  std::vector<double> dct_rows_, dct_cols_, dct_bins_;
};

}  // namespace rollcs
