#pragma once

// Ground-truth scene generators and the measurement noise model.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rollcs/core_model.hpp"
#include "rollcs/errors.hpp"

namespace rollcs {

/// 5x3 seven-segment style digits. Atlas version 1; do not edit in place.
inline constexpr int kGlyphAtlasVersion = 1;
inline constexpr std::array<std::array<const char*, 5>, 10> kDigitAtlas{{
    {"111", "101", "101", "101", "111"},
    {"010", "110", "010", "010", "111"},
    {"111", "001", "111", "100", "111"},
    {"111", "001", "111", "001", "111"},
    {"101", "101", "111", "001", "001"},
    {"111", "100", "111", "001", "111"},
    {"111", "100", "111", "101", "111"},
    {"111", "001", "001", "001", "001"},
    {"111", "101", "111", "101", "111"},
    {"111", "101", "111", "001", "111"},
}};

struct GlyphPlacement {
  int digit = 0;
  std::size_t bin = 0;
  std::size_t row = 0;  // top-left corner
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Rendered glyph footprint: glyph_size rows by round(3/5 glyph_size) columns.
inline std::size_t glyph_width(std::size_t glyph_size) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(glyph_size * 3.0 / 5.0)));
}

inline bool glyph_pixel(int digit, std::size_t height, std::size_t width, std::size_t r,
                        std::size_t c) {
  const auto ar = r * 5 / height;
  const auto ac = c * 3 / width;
  return kDigitAtlas[static_cast<std::size_t>(digit)][ar][ac] == '1';
}

/// Seeded layout: glyph i goes to bin i mod n_bins at a random position that
/// does not overlap other glyphs of the same bin.
inline std::vector<GlyphPlacement> place_glyphs(const VideoDims& dims, std::size_t n_glyphs,
                                                std::size_t glyph_size, std::uint64_t seed) {
  if (dims.rows == 0 || dims.cols == 0 || dims.bins == 0) throw DimensionError("empty scene dims");
  if (glyph_size == 0 || glyph_size >= std::min(dims.rows, dims.cols)) {
    throw ConfigurationError("glyph_size must be in [1, min(rows, cols))");
  }
  const auto h = glyph_size;
  const auto w = glyph_width(glyph_size);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> row_dist(0, dims.rows - h);
  std::uniform_int_distribution<std::size_t> col_dist(0, dims.cols - w);
  std::uniform_int_distribution<int> digit_dist(0, 9);

  std::vector<GlyphPlacement> out;
  out.reserve(n_glyphs);
  for (std::size_t i = 0; i < n_glyphs; ++i) {
    GlyphPlacement g;
    g.digit = digit_dist(rng);
    g.bin = i % dims.bins;
    g.height = h;
    g.width = w;
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      g.row = row_dist(rng);
      g.col = col_dist(rng);
      placed = true;
      for (const auto& o : out) {
        if (o.bin != g.bin) continue;
        const bool apart = g.row + h <= o.row || o.row + h <= g.row || g.col + w <= o.col ||
                           o.col + w <= g.col;
        if (!apart) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) {
      throw GenerationError("cannot place glyph " + std::to_string(i) + " in bin " +
                            std::to_string(g.bin) + " without overlap");
    }
    out.push_back(g);
  }
  return out;
}

inline VideoTensor render_glyphs(const VideoDims& dims, const std::vector<GlyphPlacement>& glyphs) {
  VideoTensor v(dims);
  for (const auto& g : glyphs) {
    for (std::size_t r = 0; r < g.height; ++r)
      for (std::size_t c = 0; c < g.width; ++c)
        if (glyph_pixel(g.digit, g.height, g.width, r, c)) v(g.row + r, g.col + c, g.bin) = 1.0;
  }
  return v;
}

/// Binary digit glyphs, each visible in exactly one time bin.
inline VideoTensor gen_moving_glyphs(const VideoDims& dims, std::size_t n_glyphs,
                                     std::size_t glyph_size, std::uint64_t seed) {
  return render_glyphs(dims, place_glyphs(dims, n_glyphs, glyph_size, seed));
}

struct BlinkingSource {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t period_bins = 2;
  std::size_t phase_bins = 0;
  double amplitude = 1.0;
};

/// Square wave with 50% duty: on when 2 * ((t + phase) mod period) < period.
inline bool square_wave_on(std::size_t t, std::size_t period, std::size_t phase) noexcept {
  return 2 * ((t + phase) % period) < period;
}

/// Single-pixel sources toggling as square waves in time-bin units.
inline VideoTensor gen_blinking_sources(const VideoDims& dims,
                                        const std::vector<BlinkingSource>& sources) {
  VideoTensor v(dims);
  for (const auto& s : sources) {
    if (s.row >= dims.rows || s.col >= dims.cols) {
      throw DimensionError("source at (" + std::to_string(s.row) + "," + std::to_string(s.col) +
                           ") lies outside the " + std::to_string(dims.rows) + "x" +
                           std::to_string(dims.cols) + " grid");
    }
    if (s.period_bins < 2) throw ConfigurationError("period_bins must be >= 2");
    for (std::size_t t = 0; t < dims.bins; ++t) {
      if (square_wave_on(t, s.period_bins, s.phase_bins)) v(s.row, s.col, t) += s.amplitude;
    }
  }
  return v;
}

/// Square-wave period in bins for a modulation frequency at a given frame rate.
inline std::size_t period_bins_for_frequency(double fps, double hz) {
  if (!(fps > 0.0) || !(hz > 0.0)) throw ConfigurationError("fps and frequency must be positive");
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(fps / hz)));
}

/// sigma = mean of the positive pixels / snr.
inline double noise_sigma(const SensorFrame& frame, double snr) {
  if (!(snr > 0.0)) throw ConfigurationError("snr must be strictly positive");
  double sum = 0.0;
  std::size_t count = 0;
  for (double v : frame.values()) {
    if (v > 0.0) {
      sum += v;
      ++count;
    }
  }
  if (count == 0) throw SnrUndefinedError("frame has no positive pixels; SNR is undefined");
  return sum / static_cast<double>(count) / snr;
}

inline SensorFrame add_gaussian_noise(const SensorFrame& frame, double snr, std::uint64_t seed) {
  const double sigma = noise_sigma(frame, snr);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  SensorFrame out = frame;
  for (double& v : out.values()) v += normal(rng);
  return out;
}

}  // namespace rollcs
