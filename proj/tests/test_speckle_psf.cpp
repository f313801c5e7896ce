#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "rollcs/io.hpp"
#include "rollcs/speckle_psf.hpp"

using namespace rollcs;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("rollcs_speckle_" + name)).string();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(SynthesizeSpecklePsf, UnitSumNonnegativeCentered) {
  const auto psf = synthesize_speckle_psf({32, 40, 0.5, 3});
  EXPECT_NEAR(psf.data.sum(), 1.0, 1e-12);
  EXPECT_TRUE(psf.normalized);
  EXPECT_EQ(psf.center.row, 16u);
  EXPECT_EQ(psf.center.col, 20u);
  for (double v : psf.data.values()) EXPECT_GE(v, 0.0);
}

TEST(SynthesizeSpecklePsf, SingleSamplePupilGivesFlatPsf) {
  // radius 1 with the strict test admits only the DC sample
  const auto psf = synthesize_speckle_psf({16, 16, 2.0 / 16.0, 5});
  for (double v : psf.data.values()) EXPECT_NEAR(v, 1.0 / 256.0, 1e-15);
}

TEST(SynthesizeSpecklePsf, DeterministicPerSeed) {
  const auto a = synthesize_speckle_psf({24, 24, 0.5, 42});
  const auto b = synthesize_speckle_psf({24, 24, 0.5, 42});
  const auto c = synthesize_speckle_psf({24, 24, 0.5, 43});
  EXPECT_EQ(a.data, b.data);
  EXPECT_FALSE(a.data == c.data);
}

TEST(SynthesizeSpecklePsf, RejectsSmallGridAndRadius) {
  EXPECT_THROW(synthesize_speckle_psf({4, 4, 0.5, 0}), ConfigurationError);
  EXPECT_THROW(synthesize_speckle_psf({16, 16, 0.1, 0}), ConfigurationError);
  EXPECT_THROW(synthesize_speckle_psf({16, 16, 0.0, 0}), ConfigurationError);
  EXPECT_THROW(synthesize_speckle_psf({16, 16, 1.5, 0}), ConfigurationError);
}

TEST(SynthesizeSpecklePsf, GrainSizeNearTwiceInversePupilFraction) {
  // frac 0.25 on 128: diffraction grain about 2 / 0.5 = 4 px
  std::vector<double> g;
  for (std::uint64_t s = 0; s < 20; ++s) g.push_back(speckle_grain_fwhm(synthesize_speckle_psf({128, 128, 0.25, s})));
  EXPECT_NEAR(mean(g), 4.0, 1.0);
}

TEST(SynthesizeSpecklePsf, FullyDevelopedContrast) {
  std::vector<double> c;
  for (std::uint64_t s = 0; s < 20; ++s) c.push_back(speckle_contrast_squared(synthesize_speckle_psf({128, 128, 0.25, s})));
  EXPECT_NEAR(mean(c), 1.0, 0.15);
}

TEST(SpeckleGrainFwhm, GaussianBlobOracle) {
  // periodic Gaussian with sd s: autocovariance sd s*sqrt(2), FWHM 2.3548*s*sqrt(2)
  const std::size_t n = 64;
  const double sd = 2.0;
  PsfImage psf{Image(n, n), {32, 32}, false};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double dy = static_cast<double>(r) - 32.0, dx = static_cast<double>(c) - 32.0;
      psf.data(r, c) = std::exp(-(dy * dy + dx * dx) / (2 * sd * sd));
    }
  psf.normalize();
  const double want = 2.0 * std::sqrt(2.0 * std::log(2.0)) * sd * std::sqrt(2.0);
  // the mean subtraction narrows the profile slightly
  EXPECT_NEAR(speckle_grain_fwhm(psf), want, 0.1 * want);
}

TEST(SpeckleGrainFwhm, FlatPsfRaises) {
  PsfImage flat{Image(16, 16, 1.0), {8, 8}, false};
  flat.normalize();
  EXPECT_THROW(speckle_grain_fwhm(flat), ConfigurationError);
}

TEST(PsfFromImage, BackgroundRemovedAndNormalized) {
  Image img(5, 5, 10.0);
  img(2, 2) = 30.0;
  img(2, 3) = 20.0;
  const auto psf = psf_from_image(img);
  EXPECT_NEAR(psf.data(2, 2), 20.0 / 30.0, 1e-12);
  EXPECT_NEAR(psf.data(2, 3), 10.0 / 30.0, 1e-12);
  EXPECT_EQ(psf.data(0, 0), 0.0);
  EXPECT_EQ(psf.center.row, 2u);
}

TEST(PsfFromImage, ConstantImageRaises) {
  EXPECT_THROW(psf_from_image(Image(4, 4, 7.0)), ConfigurationError);
}

TEST(LoadPsf, PgmAndRcs1) {
  const auto pgm = temp_path("psf.pgm");
  {
    std::ofstream os(pgm);
    os << "P2\n# measured\n3 2\n65535\n0 100 0\n0 300 65535\n";
  }
  const auto a = load_psf(pgm);
  EXPECT_EQ(a.rows(), 2u);
  EXPECT_EQ(a.cols(), 3u);
  EXPECT_NEAR(a.data.sum(), 1.0, 1e-12);
  EXPECT_NEAR(a.data(1, 2) / a.data(0, 1), 65535.0 / 100.0, 1e-9);

  const auto rcs = temp_path("psf.rcs");
  Image img(4, 4, 0.0);
  img(1, 1) = 1.0;
  io::save_image(rcs, img);
  const auto b = load_psf(rcs, PixelIndex{1, 1});
  EXPECT_EQ(b.data(1, 1), 1.0);
  EXPECT_EQ(b.center.col, 1u);
  std::filesystem::remove(pgm);
  std::filesystem::remove(rcs);
}

TEST(LoadPsf, MissingFileNamesPath) {
  try {
    load_psf("/nonexistent/psf.pgm");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/psf.pgm"), std::string::npos);
  }
}

TEST(CheckCoverage, DeltaPsfFails) {
  PsfImage delta{Image(16, 16), {8, 8}, false};
  delta.data(8, 8) = 1.0;
  const auto rep = check_coverage(delta, ShutterSchedule::top_to_bottom(16, 2, 1e-5), 0.1);
  EXPECT_FALSE(rep.pass);
  EXPECT_EQ(rep.top.rows_reached, 1u);
}

TEST(CheckCoverage, FlatDoubleGridPasses) {
  PsfImage flat{Image(32, 32, 1.0), {16, 16}, false};
  flat.normalize();
  const auto rep = check_coverage(flat, ShutterSchedule::top_to_bottom(16, 2, 1e-5), 0.1);
  EXPECT_TRUE(rep.pass);
  EXPECT_NEAR(rep.top.min_fraction, 1.0, 1e-12);
}

TEST(CheckCoverage, SensorSizedPsfCannotReachFarEdge) {
  PsfImage flat{Image(16, 16, 1.0), {8, 8}, false};
  flat.normalize();
  const auto rep = check_coverage(flat, ShutterSchedule::top_to_bottom(16, 2, 1e-5), 0.1);
  EXPECT_FALSE(rep.pass);
  EXPECT_LT(rep.top.rows_reached, 16u);
}

TEST(CheckCoverage, DeskScaleSpecklePasses) {
  const auto psf = synthesize_speckle_psf({216, 216, 0.25, 7});
  const auto rep = check_coverage(psf, ShutterSchedule::top_to_bottom(108, 2, 9.6e-6), 0.1);
  EXPECT_TRUE(rep.pass) << "min fraction top " << rep.top.min_fraction << " bottom "
                        << rep.bottom.min_fraction;
  RecordProperty("min_fraction_top", std::to_string(rep.top.min_fraction));
  RecordProperty("min_fraction_bottom", std::to_string(rep.bottom.min_fraction));
}

TEST(LoadPsf, OneHotAndOffsetGiveDelta) {
  Image one_hot(6, 7);
  one_hot(1, 5) = 4.0;
  Image offset = one_hot;
  for (double& v : offset.values()) v += 3.25;
  const auto a_path = temp_path("onehot.rcs");
  const auto b_path = temp_path("offset.rcs");
  io::save_image(a_path, one_hot);
  io::save_image(b_path, offset);
  const auto a = load_psf(a_path);
  const auto b = load_psf(b_path);
  EXPECT_EQ(a.data(1, 5), 1.0);
  EXPECT_EQ(a.data.sum(), 1.0);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.center.row, 3u);
  EXPECT_EQ(a.center.col, 3u);
  std::filesystem::remove(a_path);
  std::filesystem::remove(b_path);
}

TEST(LoadPsf, SynthesizedRoundTrip) {
  const auto psf = synthesize_speckle_psf({40, 32, 0.5, 9});
  const auto path = temp_path("synth.rcs");
  io::save_image(path, psf.data);
  const auto exact = load_psf(path, {}, false);
  const auto cleaned = load_psf(path);
  const auto vals = psf.data.values();
  const double mn = *std::min_element(vals.begin(), vals.end());
  const double total = psf.data.sum() - mn * static_cast<double>(vals.size());
  for (std::size_t i = 0; i < psf.data.size(); ++i) {
    EXPECT_NEAR(exact.data.values()[i], vals[i], 1e-15);
    EXPECT_NEAR(cleaned.data.values()[i], (vals[i] - mn) / total, 1e-15);
  }
  EXPECT_EQ(exact.center.row, psf.center.row);
  std::filesystem::remove(path);
}

TEST(LoadPsf, WrongRankRaises) {
  const auto path = temp_path("video.rcs");
  io::save_video(path, VideoTensor({4, 4, 2}, 1.0));
  EXPECT_THROW(load_psf(path), DimensionError);
  std::filesystem::remove(path);
}
