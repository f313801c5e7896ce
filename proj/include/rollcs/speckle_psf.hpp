#pragma once

// Speckle PSFs: synthesis from a random pupil phase screen, ingestion of
// measured point-object images, grain and contrast statistics, and the
// row-coverage check for choosing the scattering extent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rollcs/core_model.hpp"
#include "rollcs/errors.hpp"
#include "rollcs/fft.hpp"
#include "rollcs/io.hpp"

namespace rollcs {

struct PupilSpec {
  std::size_t rows = 0;  // PSF grid
  std::size_t cols = 0;
  double pupil_radius_frac = 0.5;  // fraction of the half-grid covered by the pupil
  std::uint64_t rng_seed = 0;

  /// Pupil radius in frequency samples.
  double radius_pixels() const noexcept {
    return pupil_radius_frac * static_cast<double>(std::min(rows, cols)) / 2.0;
  }
};

/// |DFT(pupil * exp(i phi))|^2 with phi i.i.d. uniform on [0, 2 pi), shifted so
/// the zero-delay sample sits on the grid midpoint, normalized to unit sum.
inline PsfImage synthesize_speckle_psf(const PupilSpec& spec) {
  if (spec.rows < 8 || spec.cols < 8) throw ConfigurationError("PSF grid must be at least 8x8");
  if (!(spec.pupil_radius_frac > 0.0 && spec.pupil_radius_frac <= 1.0)) {
    throw ConfigurationError("pupil_radius_frac must lie in (0, 1]");
  }
  const double radius = spec.radius_pixels();
  if (radius < 1.0) {
    throw ConfigurationError("pupil radius is below one frequency sample");
  }
  const auto ny = spec.rows;
  const auto nx = spec.cols;
  fft::ComplexPlan2D plan(ny, nx, FFTW_FORWARD);
  auto field = fft::allocate<fftw_complex>(ny * nx);

  std::mt19937_64 rng(spec.rng_seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double r2 = radius * radius;
  auto signed_freq = [](std::size_t i, std::size_t n) {
    return i <= (n - 1) / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
  };
  for (std::size_t r = 0; r < ny; ++r) {
    const double fy = signed_freq(r, ny);
    for (std::size_t c = 0; c < nx; ++c) {
      const double fx = signed_freq(c, nx);
      // A phase is drawn for every sample so the stream does not depend on the radius.
      const double phase = 2.0 * std::numbers::pi * uniform(rng);
      auto& z = field[r * nx + c];
      if (fy * fy + fx * fx < r2) {
        z[0] = std::cos(phase);
        z[1] = std::sin(phase);
      } else {
        z[0] = 0.0;
        z[1] = 0.0;
      }
    }
  }
  plan.execute(field.get());

  PsfImage psf{Image(ny, nx), grid_midpoint(ny, nx), false};
  for (std::size_t r = 0; r < ny; ++r) {
    for (std::size_t c = 0; c < nx; ++c) {
      const auto& z = field[r * nx + c];
      psf.data((r + ny / 2) % ny, (c + nx / 2) % nx) = z[0] * z[0] + z[1] * z[1];
    }
  }
  psf.normalize();
  return psf;
}

/// Cleans up a recorded point-object image: subtract the minimum, clip at
/// zero, normalize. The center defaults to the grid midpoint.
inline PsfImage psf_from_image(Image img, std::optional<PixelIndex> center = {}) {
  if (img.size() == 0) throw DimensionError("PSF image is empty");
  const auto vals = img.values();
  const double mn = *std::min_element(vals.begin(), vals.end());
  for (double& v : img.values()) v = std::max(v - mn, 0.0);
  if (!(img.sum() > 0.0)) throw ConfigurationError("PSF image is all zero after background removal");
  PsfImage psf{std::move(img), {}, false};
  psf.center = center.value_or(grid_midpoint(psf.rows(), psf.cols()));
  psf.validate();
  psf.normalize();
  return psf;
}

/// With subtract_background off the stored values are only normalized, which
/// keeps a synthetic PSF written by this library unchanged up to rounding.
inline PsfImage load_psf(const std::string& path, std::optional<PixelIndex> center = {},
                         bool subtract_background = true) {
  auto img = io::read_image(path);
  if (subtract_background) return psf_from_image(std::move(img), center);
  PsfImage psf{std::move(img), {}, false};
  psf.center = center.value_or(grid_midpoint(psf.rows(), psf.cols()));
  psf.validate();
  psf.normalize();
  return psf;
}

// ---------------------------------------------------------------------------
// Statistics

namespace detail {

/// Circular autocovariance normalized to 1 at zero lag.
inline Image autocovariance(const Image& img) {
  fft::RealPlan2D plan(img.rows(), img.cols());
  auto real = fft::allocate<double>(plan.real_size());
  auto spec = fft::allocate<fftw_complex>(plan.spectrum_size());
  const double mean = img.sum() / static_cast<double>(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) real[i] = img.values()[i] - mean;
  plan.forward(real.get(), spec.get());
  for (std::size_t i = 0; i < plan.spectrum_size(); ++i) {
    spec[i][0] = spec[i][0] * spec[i][0] + spec[i][1] * spec[i][1];
    spec[i][1] = 0.0;
  }
  plan.inverse(spec.get(), real.get());
  Image out(img.rows(), img.cols());
  const double zero_lag = real[0];
  if (!(zero_lag > 0.0)) throw ConfigurationError("PSF has no intensity fluctuation");
  for (std::size_t i = 0; i < img.size(); ++i) out.values()[i] = real[i] / zero_lag;
  return out;
}

// Lag where `profile` first drops to 0.5, linearly interpolated.
template <class At>
double half_max_lag(At&& profile, std::size_t max_lag) {
  for (std::size_t k = 1; k <= max_lag; ++k) {
    const double a = profile(k - 1);
    const double b = profile(k);
    if (b <= 0.5) return static_cast<double>(k - 1) + (a - 0.5) / (a - b);
  }
  return static_cast<double>(max_lag);
}

}  // namespace detail

/// Speckle grain size: full width at half maximum of the PSF's autocovariance,
/// averaged over the row and column axes.
inline double speckle_grain_fwhm(const PsfImage& psf) {
  const auto ac = detail::autocovariance(psf.data);
  const double hx = detail::half_max_lag([&](std::size_t k) { return ac(0, k); }, ac.cols() / 2);
  const double hy = detail::half_max_lag([&](std::size_t k) { return ac(k, 0); }, ac.rows() / 2);
  return hx + hy;  // 2 * mean half-width
}

/// variance / mean^2 of the PSF intensity; 1 for fully developed speckle.
inline double speckle_contrast_squared(const PsfImage& psf) {
  const auto vals = psf.data.values();
  const double n = static_cast<double>(vals.size());
  const double mean = psf.data.sum() / n;
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= n;
  return var / (mean * mean);
}

// ---------------------------------------------------------------------------
// Coverage

struct CoverageCase {
  std::size_t source_row = 0;
  std::vector<double> row_fraction;  // row energy / mean row energy
  double min_fraction = 0.0;
  double fraction_rows_covered = 0.0;  // rows at or above the threshold
  std::size_t rows_reached = 0;        // rows with nonzero energy
  bool pass = false;
};

struct CoverageReport {
  double threshold_frac = 0.0;
  CoverageCase top;
  CoverageCase bottom;
  bool pass = false;
};

/// Whether a point at the top (and at the bottom) scene row spreads light onto
/// every sensor row under the zero-padded, center-cropped imaging model. Row
/// energy integrates the whole PSF row.
inline CoverageReport check_coverage(const PsfImage& psf, const ShutterSchedule& schedule,
                                     double threshold_frac) {
  psf.validate();
  const std::size_t n_rows = schedule.n_rows();
  std::vector<double> psf_rows(psf.rows(), 0.0);
  for (std::size_t r = 0; r < psf.rows(); ++r)
    for (std::size_t c = 0; c < psf.cols(); ++c) psf_rows[r] += psf.data(r, c);

  auto evaluate = [&](std::size_t source_row) {
    CoverageCase cc;
    cc.source_row = source_row;
    std::vector<double> energy(n_rows, 0.0);
    for (std::size_t r = 0; r < n_rows; ++r) {
      const auto idx = static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(source_row) +
                       static_cast<std::ptrdiff_t>(psf.center.row);
      if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(psf.rows())) energy[r] = psf_rows[idx];
    }
    double mean = 0.0;
    for (double e : energy) mean += e;
    mean /= static_cast<double>(n_rows);
    cc.row_fraction.resize(n_rows, 0.0);
    std::size_t covered = 0;
    for (std::size_t r = 0; r < n_rows; ++r) {
      cc.row_fraction[r] = mean > 0.0 ? energy[r] / mean : 0.0;
      if (energy[r] > 0.0) ++cc.rows_reached;
      if (energy[r] > 0.0 && cc.row_fraction[r] >= threshold_frac) ++covered;
    }
    cc.min_fraction = *std::min_element(cc.row_fraction.begin(), cc.row_fraction.end());
    cc.fraction_rows_covered = static_cast<double>(covered) / static_cast<double>(n_rows);
    cc.pass = covered == n_rows;
    return cc;
  };

  CoverageReport rep;
  rep.threshold_frac = threshold_frac;
  rep.top = evaluate(0);
  rep.bottom = evaluate(n_rows - 1);
  rep.pass = rep.top.pass && rep.bottom.pass;
  return rep;
}

}  // namespace rollcs
