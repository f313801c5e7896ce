#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rollcs/transforms.hpp"
#include "test_support.hpp"

using namespace rollcs;
using rollcs::testing::inner;
using rollcs::testing::random_tensor;

namespace {

const TransformKind kAll[] = {TransformKind::identity, TransformKind::dct3,
                              TransformKind::temporal_difference};

}  // namespace

TEST(SparsityTransform, InverseUndoesForward) {
  const VideoDims d{5, 4, 6};
  for (auto kind : kAll) {
    const SparsityTransform psi(kind, d);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto v = random_tensor(d, s);
      const auto back = psi.inverse(psi.forward(v.values()));
      for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back[i], v.values()[i], 1e-12);
    }
  }
}

TEST(SparsityTransform, InverseAdjointIsTransposeOfInverse) {
  const VideoDims d{4, 3, 5};
  for (auto kind : kAll) {
    const SparsityTransform psi(kind, d);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto c = random_tensor(d, 10 + s);
      const auto r = random_tensor(d, 20 + s);
      const double lhs = inner(psi.inverse(c.values()), r.values());
      const double rhs = inner(c.values(), psi.inverse_adjoint(r.values()));
      EXPECT_NEAR(lhs, rhs, 1e-11 * std::max(1.0, std::abs(lhs))) << to_string(kind);
    }
  }
}

TEST(SparsityTransform, DctIsOrthonormal) {
  const VideoDims d{6, 5, 4};
  const SparsityTransform psi(TransformKind::dct3, d);
  const auto v = random_tensor(d, 3);
  const auto c = psi.forward(v.values());
  EXPECT_NEAR(inner(c, c), inner(v.values(), v.values()), 1e-10);
}

TEST(SparsityTransform, DctMatchesClosedFormBasis) {
  // 1-D along bins only: rows = cols = 1
  const std::size_t n = 7;
  const VideoDims d{1, 1, n};
  const SparsityTransform psi(TransformKind::dct3, d);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> basis(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      basis[i] = a * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
    }
    const auto c = psi.forward(basis);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(c[j], j == k ? 1.0 : 0.0, 1e-12);
  }
}

TEST(SparsityTransform, TemporalDifferenceOfStaticSceneIsFirstBinOnly) {
  const VideoDims d{3, 3, 4};
  VideoTensor v(d);
  for (std::size_t t = 0; t < 4; ++t) v(1, 2, t) = 2.0;
  const SparsityTransform psi(TransformKind::temporal_difference, d);
  const auto c = psi.forward(v.values());
  const VideoTensor ct(d, c);
  EXPECT_EQ(ct(1, 2, 0), 2.0);
  for (std::size_t t = 1; t < 4; ++t) EXPECT_EQ(ct(1, 2, t), 0.0);
}

TEST(SparsityTransform, ParseNames) {
  for (auto kind : kAll) EXPECT_EQ(parse_transform_kind(to_string(kind)), kind);
  EXPECT_THROW(parse_transform_kind("wavelet"), ConfigurationError);
}

TEST(SparsityTransform, SizeMismatchRaises) {
  const SparsityTransform psi(TransformKind::dct3, {2, 2, 2});
  std::vector<double> v(7);
  EXPECT_THROW(psi.forward(v), DimensionError);
}
