#pragma once

// Thin RAII layer over FFTW for the real 2D transforms the operators need.
// Plans are created once under a global lock (the FFTW planner is not
// reentrant) and then executed through the new-array interface, which is
// safe to call concurrently on distinct buffers allocated with fftw_malloc.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>

#include "rollcs/errors.hpp"

namespace rollcs::fft {

namespace detail {

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

struct PlanDestroy {
  void operator()(fftw_plan_s* p) const noexcept { fftw_destroy_plan(p); }
};

}  // namespace detail

template <class T>
using AlignedBuffer = std::unique_ptr<T[], detail::FftwFree>;

template <class T>
AlignedBuffer<T> allocate(std::size_t count) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * (count == 0 ? 1 : count)));
  if (p == nullptr) throw std::bad_alloc();
  return AlignedBuffer<T>(p);
}

/// Smallest integer >= n whose prime factors are all in {2, 3, 5, 7}.
inline std::size_t good_size(std::size_t n) {
  if (n <= 1) return 1;
  for (std::size_t m = n;; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u, 7u}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return m;
  }
}

/// Forward and inverse 2D real transforms of a fixed rows x cols grid.
/// The inverse is unnormalized, matching FFTW.
class RealPlan2D {
 public:
  RealPlan2D(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) throw DimensionError("FFT grid must be nonempty");
    auto real = allocate<double>(real_size());
    auto spec = allocate<fftw_complex>(spectrum_size());
    std::lock_guard lock(detail::planner_mutex());
    const int n0 = static_cast<int>(rows);
    const int n1 = static_cast<int>(cols);
    forward_.reset(fftw_plan_dft_r2c_2d(n0, n1, real.get(), spec.get(), FFTW_ESTIMATE));
    inverse_.reset(fftw_plan_dft_c2r_2d(n0, n1, spec.get(), real.get(), FFTW_ESTIMATE));
    if (!forward_ || !inverse_) throw Error("FFTW failed to create a plan");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t real_size() const noexcept { return rows_ * cols_; }
  std::size_t spectrum_cols() const noexcept { return cols_ / 2 + 1; }
  std::size_t spectrum_size() const noexcept { return rows_ * spectrum_cols(); }

  void forward(double* in, fftw_complex* out) const noexcept {
    fftw_execute_dft_r2c(forward_.get(), in, out);
  }

  /// Destroys the contents of `in`.
  void inverse(fftw_complex* in, double* out) const noexcept {
    fftw_execute_dft_c2r(inverse_.get(), in, out);
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::unique_ptr<fftw_plan_s, detail::PlanDestroy> forward_;
  std::unique_ptr<fftw_plan_s, detail::PlanDestroy> inverse_;
};

/// In-place 2D complex DFT, forward (sign -1) or backward (sign +1).
class ComplexPlan2D {
 public:
  ComplexPlan2D(std::size_t rows, std::size_t cols, int sign) : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) throw DimensionError("FFT grid must be nonempty");
    auto buf = allocate<fftw_complex>(rows * cols);
    std::lock_guard lock(detail::planner_mutex());
    plan_.reset(fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf.get(),
                                 buf.get(), sign, FFTW_ESTIMATE));
    if (!plan_) throw Error("FFTW failed to create a plan");
  }

  void execute(fftw_complex* data) const noexcept { fftw_execute_dft(plan_.get(), data, data); }
  std::size_t size() const noexcept { return rows_ * cols_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::unique_ptr<fftw_plan_s, detail::PlanDestroy> plan_;
};

}  // namespace rollcs::fft
