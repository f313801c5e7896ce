#pragma once

// File formats.
//
// RCS1 container, little-endian:
//   bytes 0..3   magic "RCS1"
//   u32          rank
//   u32[rank]    dims, slowest axis first
//   f64[...]     values, row-major
// A frame or PSF is rank 2 (rows, cols); a video is rank 3 (bins, rows, cols).
//
// PGM (P2 ascii or P5 binary, maxval up to 65535) is accepted for measured
// PSFs, and written for per-bin exports.

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rollcs/core_model.hpp"
#include "rollcs/errors.hpp"

namespace rollcs::io {

struct RawArray {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

namespace detail {

template <class T>
T to_little(T v) noexcept {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <class T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw IoError(path + ": truncated RCS1 file");
  }
  return to_little(v);
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return is;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

}  // namespace detail

inline void write_rcs1(const std::string& path, std::span<const std::uint32_t> dims,
                       std::span<const double> values) {
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  if (count != values.size()) throw DimensionError("RCS1 dims do not match value count");
  auto os = detail::open_out(path);
  os.write("RCS1", 4);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) detail::put<std::uint32_t>(os, d);
  for (double v : values) detail::put<double>(os, v);
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline RawArray read_rcs1(const std::string& path) {
  auto is = detail::open_in(path);
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, "RCS1", 4) != 0) {
    throw IoError(path + ": not an RCS1 file");
  }
  RawArray a;
  const auto rank = detail::get<std::uint32_t>(is, path);
  if (rank == 0 || rank > 8) throw IoError(path + ": unsupported RCS1 rank " + std::to_string(rank));
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    a.dims.push_back(detail::get<std::uint32_t>(is, path));
    count *= a.dims.back();
  }
  a.values.resize(count);
  for (auto& v : a.values) v = detail::get<double>(is, path);
  return a;
}

inline void save_image(const std::string& path, const Image& img) {
  const std::array<std::uint32_t, 2> dims{static_cast<std::uint32_t>(img.rows()),
                                          static_cast<std::uint32_t>(img.cols())};
  write_rcs1(path, dims, img.values());
}

inline void save_video(const std::string& path, const VideoTensor& v) {
  const auto& d = v.dims();
  const std::array<std::uint32_t, 3> dims{static_cast<std::uint32_t>(d.bins),
                                          static_cast<std::uint32_t>(d.rows),
                                          static_cast<std::uint32_t>(d.cols)};
  write_rcs1(path, dims, v.values());
}

inline VideoTensor load_video(const std::string& path) {
  auto a = read_rcs1(path);
  if (a.dims.size() != 3) {
    throw DimensionError(path + ": expected a rank-3 video, found rank " +
                         std::to_string(a.dims.size()));
  }
  return VideoTensor({a.dims[1], a.dims[2], a.dims[0]}, std::move(a.values));
}

/// Reads a PGM exactly as stored (no scaling).
inline Image read_pgm(const std::string& path) {
  auto is = detail::open_in(path);
  std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < content.size()) {
      if (content[pos] == '#') {
        while (pos < content.size() && content[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(content[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_ws();
    if (pos >= content.size() || !std::isdigit(static_cast<unsigned char>(content[pos]))) {
      throw IoError(path + ": malformed PGM header");
    }
    std::size_t v = 0;
    while (pos < content.size() && std::isdigit(static_cast<unsigned char>(content[pos]))) {
      v = v * 10 + static_cast<std::size_t>(content[pos] - '0');
      ++pos;
    }
    return v;
  };
  if (content.size() < 2 || content[0] != 'P' || (content[1] != '2' && content[1] != '5')) {
    throw IoError(path + ": not a P2/P5 PGM file");
  }
  const bool binary = content[1] == '5';
  pos = 2;
  const auto cols = read_uint();
  const auto rows = read_uint();
  const auto maxval = read_uint();
  if (cols == 0 || rows == 0 || maxval == 0 || maxval > 65535) {
    throw IoError(path + ": unsupported PGM dimensions or maxval");
  }
  Image img(rows, cols);
  if (binary) {
    ++pos;  // single whitespace before raster
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    if (content.size() < pos + rows * cols * bytes) throw IoError(path + ": truncated PGM raster");
    for (std::size_t i = 0; i < rows * cols; ++i) {
      const auto* p = reinterpret_cast<const unsigned char*>(content.data() + pos + i * bytes);
      img.values()[i] = bytes == 1 ? p[0] : static_cast<double>((p[0] << 8) | p[1]);
    }
  } else {
    for (std::size_t i = 0; i < rows * cols; ++i) img.values()[i] = static_cast<double>(read_uint());
  }
  return img;
}

struct PgmScaling {
  double lo = 0.0;
  double hi = 1.0;
};

/// Writes an 8-bit P5 image mapping [lo, hi] linearly onto [0, 255].
inline PgmScaling write_pgm(const std::string& path, std::span<const double> values,
                            std::size_t rows, std::size_t cols, PgmScaling scaling) {
  if (values.size() != rows * cols) throw DimensionError("PGM raster size mismatch");
  auto os = detail::open_out(path);
  os << "P5\n" << cols << " " << rows << "\n255\n";
  const double span = scaling.hi > scaling.lo ? scaling.hi - scaling.lo : 1.0;
  for (double v : values) {
    const double u = std::clamp((v - scaling.lo) / span, 0.0, 1.0);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(u * 255.0))));
  }
  if (!os) throw IoError("failed writing '" + path + "'");
  return scaling;
}

/// Full-range scaling of a set of values.
inline PgmScaling full_range(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  return {*mn, *mx};
}

/// Reads a rank-2 array from either an RCS1 container or a PGM file,
/// chosen by the file's magic bytes.
inline Image read_image(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("file not found: '" + path + "'");
  char magic[4] = {};
  {
    auto is = detail::open_in(path);
    is.read(magic, 4);
  }
  if (std::memcmp(magic, "RCS1", 4) == 0) {
    auto a = read_rcs1(path);
    if (a.dims.size() != 2) {
      throw DimensionError(path + ": expected a rank-2 image, found rank " +
                           std::to_string(a.dims.size()));
    }
    return Image(a.dims[0], a.dims[1], std::move(a.values));
  }
  if (magic[0] == 'P' && (magic[1] == '2' || magic[1] == '5')) return read_pgm(path);
  throw IoError(path + ": unrecognized image format (expected RCS1 or PGM)");
}

inline SensorFrame load_frame(const std::string& path) { return SensorFrame(read_image(path)); }

// JSON encodings.

inline nlohmann::json schedule_to_json(const ShutterSchedule& s) {
  return {{"n_rows", s.n_rows()},
          {"rows_per_bin", s.rows_per_bin()},
          {"n_bins", s.n_bins()},
          {"row_to_bin", std::vector<std::size_t>(s.row_to_bin().begin(), s.row_to_bin().end())},
          {"row_period_s", s.row_period_s()},
          {"exposure_s", s.exposure_s()}};
}

inline ShutterSchedule schedule_from_json(const nlohmann::json& j) {
  try {
    const auto& s = j.contains("schedule") ? j.at("schedule") : j;
    return ShutterSchedule::from_table(s.at("rows_per_bin").get<std::size_t>(),
                                       s.at("row_to_bin").get<std::vector<std::size_t>>(),
                                       s.at("row_period_s").get<double>(),
                                       s.at("exposure_s").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid schedule JSON: ") + e.what());
  }
}

inline nlohmann::json read_json(const std::string& path) {
  auto is = detail::open_in(path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  auto os = detail::open_out(path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace rollcs::io
