#pragma once

// Shared value types for the rolling-shutter compressive video model.
//
// Memory layout is row-major with x fastest. VideoTensor stores one
// contiguous (rows x cols) plane per time bin, bins slowest, which is also
// the on-disk order of the RCS1 container.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rollcs/errors.hpp"

namespace rollcs {

struct PixelIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

struct VideoDims {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t bins = 0;
  friend bool operator==(const VideoDims&, const VideoDims&) = default;
};

inline std::string to_string(const VideoDims& d) {
  return "(" + std::to_string(d.rows) + "," + std::to_string(d.cols) + "," +
         std::to_string(d.bins) + ")";
}

namespace detail {

inline std::size_t checked_mul(std::size_t a, std::size_t b) {
  std::size_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw DimensionError("dimension product overflows size_t");
  }
  return out;
}

}  // namespace detail

/// Dense real 2D array.
class Image {
 public:
  Image() = default;
  Image(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(detail::checked_mul(rows, cols), fill) {}
  Image(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != detail::checked_mul(rows, cols)) {
      throw DimensionError("image value count " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool same_shape(const Image& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& vector() const noexcept { return data_; }

  double sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// The single captured camera frame b. Entries may go negative only after
/// noise injection.
class SensorFrame : public Image {
 public:
  using Image::Image;
  SensorFrame() = default;
  explicit SensorFrame(Image img) : Image(std::move(img)) {}
};

/// Intensity point-spread function with the pixel that images an on-axis
/// point. The PSF grid may be larger than the sensor.
struct PsfImage {
  Image data;
  PixelIndex center;
  bool normalized = false;

  std::size_t rows() const noexcept { return data.rows(); }
  std::size_t cols() const noexcept { return data.cols(); }

  /// Rescales to unit sum and sets the flag.
  void normalize() {
    const double total = data.sum();
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw ConfigurationError("PSF has no positive energy to normalize");
    }
    for (double& v : data.values()) v /= total;
    normalized = true;
  }

  void validate() const {
    if (data.size() == 0) throw DimensionError("PSF is empty");
    if (center.row >= data.rows() || center.col >= data.cols()) {
      throw DimensionError("PSF center lies outside the PSF grid");
    }
    for (double v : data.values()) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ConfigurationError("PSF entries must be finite and nonnegative");
      }
    }
  }
};

/// Grid midpoint, floor convention: (rows/2, cols/2).
inline PixelIndex grid_midpoint(std::size_t rows, std::size_t cols) noexcept {
  return {rows / 2, cols / 2};
}

/// Dynamic scene O(y, x, t) sampled on the sensor grid.
class VideoTensor {
 public:
  VideoTensor() = default;
  explicit VideoTensor(VideoDims dims, double fill = 0.0)
      : dims_(dims),
        data_(detail::checked_mul(detail::checked_mul(dims.rows, dims.cols), dims.bins), fill) {}
  VideoTensor(VideoDims dims, std::vector<double> values) : dims_(dims), data_(std::move(values)) {
    const auto n = detail::checked_mul(detail::checked_mul(dims.rows, dims.cols), dims.bins);
    if (data_.size() != n) {
      throw DimensionError("tensor value count does not match dims " + to_string(dims));
    }
  }

  const VideoDims& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane_size() const noexcept { return dims_.rows * dims_.cols; }

  double& operator()(std::size_t r, std::size_t c, std::size_t t) noexcept {
    return data_[(t * dims_.rows + r) * dims_.cols + c];
  }
  double operator()(std::size_t r, std::size_t c, std::size_t t) const noexcept {
    return data_[(t * dims_.rows + r) * dims_.cols + c];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& vector() const noexcept { return data_; }

  std::span<double> bin(std::size_t t) noexcept {
    return std::span<double>(data_).subspan(t * plane_size(), plane_size());
  }
  std::span<const double> bin(std::size_t t) const noexcept {
    return std::span<const double>(data_).subspan(t * plane_size(), plane_size());
  }

  Image bin_image(std::size_t t) const {
    const auto v = bin(t);
    return Image(dims_.rows, dims_.cols, std::vector<double>(v.begin(), v.end()));
  }

  bool is_nonnegative() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0; });
  }

  friend bool operator==(const VideoTensor&, const VideoTensor&) = default;

 private:
  VideoDims dims_;
  std::vector<double> data_;
};

/// Row to time-bin table of a rolling-shutter readout.
class ShutterSchedule {
 public:
  /// Default readout: rows swept top to bottom, `rows_per_bin` rows sampled
  /// together, so row r lands in bin floor(r / rows_per_bin).
  static ShutterSchedule top_to_bottom(std::size_t n_rows, std::size_t rows_per_bin,
                                       double row_period_s, std::optional<double> exposure_s = {}) {
    if (rows_per_bin == 0) throw ConfigurationError("rows_per_bin must be >= 1");
    std::vector<std::size_t> table(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) table[r] = r / rows_per_bin;
    return from_table(rows_per_bin, std::move(table), row_period_s, exposure_s.value_or(row_period_s));
  }

  /// Same as top_to_bottom with the row period derived from the time to read a
  /// whole frame: row_period = frame_time / n_bins.
  static ShutterSchedule from_frame_time(std::size_t n_rows, std::size_t rows_per_bin,
                                         double frame_time_s, std::optional<double> exposure_s = {}) {
    if (rows_per_bin == 0) throw ConfigurationError("rows_per_bin must be >= 1");
    const auto bins = (n_rows + rows_per_bin - 1) / rows_per_bin;
    if (bins == 0) throw ConfigurationError("schedule needs at least one row");
    return top_to_bottom(n_rows, rows_per_bin, frame_time_s / static_cast<double>(bins), exposure_s);
  }

  /// Arbitrary readout order (for example center-outward). The table length is
  /// the number of sensor rows.
  static ShutterSchedule from_table(std::size_t rows_per_bin, std::vector<std::size_t> row_to_bin,
                                    double row_period_s, double exposure_s) {
    ShutterSchedule s;
    s.rows_per_bin_ = rows_per_bin;
    s.row_to_bin_ = std::move(row_to_bin);
    s.row_period_s_ = row_period_s;
    s.exposure_s_ = exposure_s;
    s.validate();
    return s;
  }

  std::size_t n_rows() const noexcept { return row_to_bin_.size(); }
  std::size_t rows_per_bin() const noexcept { return rows_per_bin_; }
  std::size_t n_bins() const noexcept { return (n_rows() + rows_per_bin_ - 1) / rows_per_bin_; }
  std::size_t bin_of_row(std::size_t r) const noexcept { return row_to_bin_[r]; }
  std::span<const std::size_t> row_to_bin() const noexcept { return row_to_bin_; }
  double row_period_s() const noexcept { return row_period_s_; }
  double exposure_s() const noexcept { return exposure_s_; }

  /// Rolling-shutter speed V_s in rows per second.
  double shutter_speed_rows_per_s() const noexcept {
    return static_cast<double>(rows_per_bin_) / row_period_s_;
  }

  /// T_exp <= row period: the row sees one instant of the scene.
  bool short_exposure_valid() const noexcept {
    return exposure_s_ <= row_period_s_ * (1.0 + 1e-12);
  }

  /// Rows assigned to bin t, ascending.
  std::vector<std::size_t> rows_in_bin(std::size_t t) const {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < row_to_bin_.size(); ++r) {
      if (row_to_bin_[r] == t) rows.push_back(r);
    }
    return rows;
  }

  friend bool operator==(const ShutterSchedule&, const ShutterSchedule&) = default;

 private:
  ShutterSchedule() = default;

  void validate() const {
    if (rows_per_bin_ == 0) throw ConfigurationError("rows_per_bin must be >= 1");
    if (row_to_bin_.empty()) throw ConfigurationError("schedule needs at least one row");
    if (!(row_period_s_ > 0.0) || !std::isfinite(row_period_s_)) {
      throw ConfigurationError("row period must be positive and finite");
    }
    if (!(exposure_s_ > 0.0) || !std::isfinite(exposure_s_)) {
      throw ConfigurationError("exposure must be positive and finite");
    }
    const auto bins = n_bins();
    std::vector<bool> hit(bins, false);
    for (auto b : row_to_bin_) {
      if (b >= bins) {
        throw ConfigurationError("row_to_bin entry " + std::to_string(b) + " outside [0, " +
                                 std::to_string(bins - 1) + "]");
      }
      hit[b] = true;
    }
    if (std::find(hit.begin(), hit.end(), false) != hit.end()) {
      throw ConfigurationError("every time bin must be sampled by at least one row");
    }
  }

  std::size_t rows_per_bin_ = 1;
  std::vector<std::size_t> row_to_bin_;
  double row_period_s_ = 1.0;
  double exposure_s_ = 1.0;
};

/// Reconstructed-video frame rate.
inline double effective_fps(const ShutterSchedule& schedule) noexcept {
  return 1.0 / schedule.row_period_s();
}

struct AcquisitionParams {
  double magnification = 1.0;  // bookkeeping; scenes live on the sensor grid
  std::optional<double> snr;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (snr && !(*snr > 0.0)) throw ConfigurationError("snr must be strictly positive");
  }
};

struct ProblemDims {
  std::size_t m = 0;  // camera pixels
  std::size_t n = 0;  // spatio-temporal unknowns
  friend bool operator==(const ProblemDims&, const ProblemDims&) = default;
};

inline ProblemDims problem_dims(const VideoDims& d) {
  if (d.rows == 0 || d.cols == 0 || d.bins == 0) {
    throw DimensionError("video dims must be positive, got " + to_string(d));
  }
  const auto m = detail::checked_mul(d.rows, d.cols);
  return {m, detail::checked_mul(m, d.bins)};
}

}  // namespace rollcs
