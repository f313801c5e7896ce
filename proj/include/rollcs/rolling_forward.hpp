#pragma once

// Matrix-free forward model of a diffuser-encoded rolling-shutter camera and
// its exact adjoint.
//
// Boundary contract (shared by forward and adjoint): zero-padded linear
// convolution, cropped so that a point at scene pixel q lands the PSF's
// declared center on sensor pixel q:
//
//   out[p] = sum_q img[q] * psf[p - q + center]    (psf is zero off-grid)

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rollcs/core_model.hpp"
#include "rollcs/errors.hpp"
#include "rollcs/fft.hpp"

namespace rollcs {

/// Precomputed FFT convolution of (rows x cols) images with one PSF.
class Convolver {
 public:
  Convolver(std::size_t rows, std::size_t cols, const PsfImage& psf)
      : rows_(rows),
        cols_(cols),
        center_(validated(psf).center),
        flipped_center_{psf.rows() - 1 - psf.center.row, psf.cols() - 1 - psf.center.col},
        plan_(padded_extent(rows, psf.rows(), psf.center.row),
              padded_extent(cols, psf.cols(), psf.center.col)),
        psf_spectrum_(fft::allocate<fftw_complex>(plan_.spectrum_size())),
        flipped_spectrum_(fft::allocate<fftw_complex>(plan_.spectrum_size())) {
    if (rows == 0 || cols == 0) throw DimensionError("image grid must be nonempty");
    auto work = fft::allocate<double>(plan_.real_size());
    const double scale = 1.0 / static_cast<double>(plan_.real_size());
    const auto lx = plan_.cols();

    std::fill_n(work.get(), plan_.real_size(), 0.0);
    for (std::size_t r = 0; r < psf.rows(); ++r)
      for (std::size_t c = 0; c < psf.cols(); ++c) work[r * lx + c] = psf.data(r, c) * scale;
    plan_.forward(work.get(), psf_spectrum_.get());

    std::fill_n(work.get(), plan_.real_size(), 0.0);
    for (std::size_t r = 0; r < psf.rows(); ++r)
      for (std::size_t c = 0; c < psf.cols(); ++c)
        work[r * lx + c] = psf.data(psf.rows() - 1 - r, psf.cols() - 1 - c) * scale;
    plan_.forward(work.get(), flipped_spectrum_.get());
  }

  Convolver(const Convolver&) = delete;
  Convolver& operator=(const Convolver&) = delete;

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t padded_rows() const noexcept { return plan_.rows(); }
  std::size_t padded_cols() const noexcept { return plan_.cols(); }

  /// Scratch buffers for one thread of execution.
  struct Workspace {
    fft::AlignedBuffer<double> real;
    fft::AlignedBuffer<fftw_complex> spectrum;
  };

  Workspace make_workspace() const {
    return {fft::allocate<double>(plan_.real_size()),
            fft::allocate<fftw_complex>(plan_.spectrum_size())};
  }

  /// out = in (*) psf under the crop contract.
  void convolve(std::span<const double> in, std::span<double> out, Workspace& ws) const {
    run(in, out, ws, psf_spectrum_.get(), center_);
  }

  /// out = in correlated with psf; the adjoint of convolve.
  void correlate(std::span<const double> in, std::span<double> out, Workspace& ws) const {
    run(in, out, ws, flipped_spectrum_.get(), flipped_center_);
  }

 private:
  static const PsfImage& validated(const PsfImage& psf) {
    psf.validate();
    return psf;
  }

  // Smallest wrap-free FFT length for the cropped window [c, c + n).
  static std::size_t padded_extent(std::size_t n, std::size_t p, std::size_t c) {
    const std::size_t need = std::max(c + n, n + p - 1 - c);
    return fft::good_size(need);
  }

  void run(std::span<const double> in, std::span<double> out, Workspace& ws,
           const fftw_complex* kernel, PixelIndex center) const {
    if (in.size() != rows_ * cols_ || out.size() != rows_ * cols_) {
      throw DimensionError("convolution buffer size mismatch");
    }
    const auto lx = plan_.cols();
    double* real = ws.real.get();
    std::fill_n(real, plan_.real_size(), 0.0);
    for (std::size_t r = 0; r < rows_; ++r)
      std::copy_n(in.data() + r * cols_, cols_, real + r * lx);
    plan_.forward(real, ws.spectrum.get());
    fftw_complex* s = ws.spectrum.get();
    for (std::size_t i = 0; i < plan_.spectrum_size(); ++i) {
      const double re = s[i][0] * kernel[i][0] - s[i][1] * kernel[i][1];
      const double im = s[i][0] * kernel[i][1] + s[i][1] * kernel[i][0];
      s[i][0] = re;
      s[i][1] = im;
    }
    plan_.inverse(s, real);
    for (std::size_t r = 0; r < rows_; ++r)
      std::copy_n(real + (r + center.row) * lx + center.col, cols_, out.data() + r * cols_);
  }

  std::size_t rows_;
  std::size_t cols_;
  PixelIndex center_;
  PixelIndex flipped_center_;
  fft::RealPlan2D plan_;
  fft::AlignedBuffer<fftw_complex> psf_spectrum_;
  fft::AlignedBuffer<fftw_complex> flipped_spectrum_;
};

/// Zero-padded convolution cropped to the image grid. A delta at pixel p
/// returns the PSF translated so its center sits on p.
inline Image convolve2d_same(const Image& image, const PsfImage& psf) {
  Convolver conv(image.rows(), image.cols(), psf);
  auto ws = conv.make_workspace();
  Image out(image.rows(), image.cols());
  conv.convolve(image.values(), out.values(), ws);
  return out;
}

/// The linear map A from a scene tensor to one rolling-shutter frame: per-bin
/// convolution with the PSF, then row r is taken from bin row_to_bin[r].
/// Immutable; copies share the precomputed spectra.
class ForwardOperator {
 public:
  ForwardOperator(PsfImage psf, ShutterSchedule schedule, VideoDims dims)
      : psf_(std::move(psf)), schedule_(std::move(schedule)), dims_(dims) {
    if (dims_.rows == 0 || dims_.cols == 0 || dims_.bins == 0) {
      throw DimensionError("operator dims must be positive, got " + to_string(dims_));
    }
    if (schedule_.n_rows() != dims_.rows) {
      throw DimensionError("schedule has " + std::to_string(schedule_.n_rows()) +
                           " rows but scene has " + std::to_string(dims_.rows));
    }
    if (schedule_.n_bins() != dims_.bins) {
      throw DimensionError("schedule has " + std::to_string(schedule_.n_bins()) +
                           " bins but scene has " + std::to_string(dims_.bins));
    }
    if (!schedule_.short_exposure_valid()) {
      throw ConfigurationError(
          "exposure exceeds the row period (T_exp <= D_row / V_s required); overlapping-row "
          "exposure is not modeled");
    }
    conv_ = std::make_shared<const Convolver>(dims_.rows, dims_.cols, psf_);
    bin_rows_.resize(dims_.bins);
    for (std::size_t t = 0; t < dims_.bins; ++t) bin_rows_[t] = schedule_.rows_in_bin(t);
  }

  const PsfImage& psf() const noexcept { return psf_; }
  const ShutterSchedule& schedule() const noexcept { return schedule_; }
  const VideoDims& dims() const noexcept { return dims_; }
  const Convolver& convolver() const noexcept { return *conv_; }
  std::size_t sensor_rows() const noexcept { return dims_.rows; }
  std::size_t sensor_cols() const noexcept { return dims_.cols; }

  SensorFrame forward(const VideoTensor& scene) const {
    if (scene.dims() != dims_) {
      throw DimensionError("scene dims " + to_string(scene.dims()) + " do not match operator " +
                           to_string(dims_));
    }
    SensorFrame frame(dims_.rows, dims_.cols);
    forward_into(scene.values(), frame.values());
    return frame;
  }

  VideoTensor adjoint(const SensorFrame& frame) const {
    if (frame.rows() != dims_.rows || frame.cols() != dims_.cols) {
      throw DimensionError("frame is " + std::to_string(frame.rows()) + "x" +
                           std::to_string(frame.cols()) + " but operator sensor is " +
                           std::to_string(dims_.rows) + "x" + std::to_string(dims_.cols));
    }
    VideoTensor out(dims_);
    adjoint_into(frame.values(), out.values());
    return out;
  }

  /// Raw-span form used by the solver; sizes are n and m.
  void forward_into(std::span<const double> scene, std::span<double> frame) const {
    const auto plane = dims_.rows * dims_.cols;
    if (scene.size() != plane * dims_.bins || frame.size() != plane) {
      throw DimensionError("forward buffer size mismatch");
    }
    std::fill(frame.begin(), frame.end(), 0.0);
    auto ws = conv_->make_workspace();
    std::vector<double> blurred(plane);
    for (std::size_t t = 0; t < dims_.bins; ++t) {
      const auto slice = scene.subspan(t * plane, plane);
      if (std::all_of(slice.begin(), slice.end(), [](double v) { return v == 0.0; })) continue;
      conv_->convolve(slice, blurred, ws);
      for (auto r : bin_rows_[t]) {
        std::copy_n(blurred.data() + r * dims_.cols, dims_.cols, frame.data() + r * dims_.cols);
      }
    }
  }

  void adjoint_into(std::span<const double> frame, std::span<double> scene) const {
    const auto plane = dims_.rows * dims_.cols;
    if (scene.size() != plane * dims_.bins || frame.size() != plane) {
      throw DimensionError("adjoint buffer size mismatch");
    }
    auto ws = conv_->make_workspace();
    std::vector<double> scattered(plane);
    for (std::size_t t = 0; t < dims_.bins; ++t) {
      auto slice = scene.subspan(t * plane, plane);
      std::fill(scattered.begin(), scattered.end(), 0.0);
      bool any = false;
      for (auto r : bin_rows_[t]) {
        for (std::size_t c = 0; c < dims_.cols; ++c) {
          const double v = frame[r * dims_.cols + c];
          scattered[r * dims_.cols + c] = v;
          any = any || v != 0.0;
        }
      }
      if (!any) {
        std::fill(slice.begin(), slice.end(), 0.0);
        continue;
      }
      conv_->correlate(scattered, slice, ws);
    }
  }

 private:
  PsfImage psf_;
  ShutterSchedule schedule_;
  VideoDims dims_;
  std::shared_ptr<const Convolver> conv_;
  std::vector<std::vector<std::size_t>> bin_rows_;
};

inline SensorFrame apply_forward(const ForwardOperator& op, const VideoTensor& scene) {
  return op.forward(scene);
}

inline VideoTensor apply_adjoint(const ForwardOperator& op, const SensorFrame& frame) {
  return op.adjoint(frame);
}

/// Row-major dense matrix; test-oracle use only.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double operator()(std::size_t i, std::size_t j) const noexcept { return data[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return data[i * cols + j]; }
};

inline constexpr std::size_t kDenseEntryCap = std::size_t{1} << 24;

/// Materializes A column by column from unit tensors.
inline DenseMatrix build_dense_operator(const ForwardOperator& op,
                                        std::size_t max_entries = kDenseEntryCap) {
  const auto pd = problem_dims(op.dims());
  if (pd.m > max_entries / pd.n) {
    throw ConfigurationError("dense operator would have " + std::to_string(pd.m) + "x" +
                             std::to_string(pd.n) + " entries, above the cap of " +
                             std::to_string(max_entries));
  }
  DenseMatrix a{pd.m, pd.n, std::vector<double>(pd.m * pd.n, 0.0)};
  std::vector<double> unit(pd.n, 0.0);
  std::vector<double> column(pd.m);
  for (std::size_t j = 0; j < pd.n; ++j) {
    unit[j] = 1.0;
    op.forward_into(unit, column);
    unit[j] = 0.0;
    for (std::size_t i = 0; i < pd.m; ++i) a(i, j) = column[i];
  }
  return a;
}

}  // namespace rollcs
