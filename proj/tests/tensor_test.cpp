#include <algorithm>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "vshuffle/tensor.hpp"
#include "vshuffle/tensor_io.hpp"

namespace vshuffle {
namespace {

Tensor32 counting(const Shape& s) {
  Tensor32 x(s);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i);
  return x;
}

TEST(AllocZeros, SingleElement) {
  const Tensor32 x = alloc_zeros<float>(Shape{1, 1, 1, 1, 1});
  ASSERT_EQ(x.size(), 1u);
  EXPECT_EQ(x[0], 0.0f);
}

TEST(AllocZeros, ProductOfDims) {
  const Tensor64 x = alloc_zeros<double>(Shape{2, 8, 4, 3, 3});
  ASSERT_EQ(x.size(), 576u);
  EXPECT_TRUE(std::all_of(x.values().begin(), x.values().end(), [](double v) { return v == 0.0; }));
}

TEST(AllocZeros, RejectsZeroDim) {
  EXPECT_THROW(alloc_zeros<float>(Shape{1, 0, 1, 1, 1}), ShapeError);
  EXPECT_THROW(alloc_zeros<float>(Shape{1, 1, 1, 1, -2}), ShapeError);
}

TEST(Tensor, DataLengthMismatchThrows) {
  EXPECT_THROW(Tensor32(Shape{1, 1, 2, 1, 1}, std::vector<float>{1.0f}), ShapeError);
}

TEST(Tensor, LayoutIsWFastest) {
  const Tensor32 x = counting(Shape{2, 3, 4, 5, 6});
  // (((n*T + t)*C + c)*H + h)*W + w
  EXPECT_EQ(x.at(1, 2, 3, 4, 5), static_cast<float>(x.size() - 1));
  EXPECT_EQ(x.at(0, 1, 0, 0, 0), static_cast<float>(4 * 5 * 6));
  EXPECT_EQ(x.frame(1, 0) - x.data(), 3 * 4 * 5 * 6);
}

TEST(SliceChannels, FirstTwoPlanes) {
  const Tensor32 x = counting(Shape{2, 3, 4, 2, 2});
  const Tensor32 s = slice_channels(x, 0, 0, 2);
  ASSERT_EQ(s.shape(), (Shape{2, 1, 2, 2, 2}));
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t c = 0; c < 2; ++c)
      for (std::int64_t h = 0; h < 2; ++h)
        for (std::int64_t w = 0; w < 2; ++w) EXPECT_EQ(s.at(n, 0, c, h, w), x.at(n, 0, c, h, w));
}

TEST(SliceChannels, FullRangeCopiesFrame) {
  const Tensor32 x = counting(Shape{2, 3, 4, 2, 2});
  const Tensor32 s = slice_channels(x, 2, 0, 4);
  for (std::int64_t n = 0; n < 2; ++n) {
    EXPECT_TRUE(std::equal(s.frame(n, 0), s.frame(n, 0) + 16, x.frame(n, 2)));
  }
}

TEST(SliceChannels, Errors) {
  const Tensor32 x = counting(Shape{1, 2, 4, 1, 1});
  EXPECT_THROW(slice_channels(x, 0, 3, 2), ShapeError);
  EXPECT_THROW(slice_channels(x, 0, 2, 2), ShapeError);
  EXPECT_THROW(slice_channels(x, 0, 0, 5), ShapeError);
  EXPECT_THROW(slice_channels(x, 2, 0, 1), ShapeError);
  EXPECT_THROW(slice_channels(x, -1, 0, 1), ShapeError);
}

TEST(ConcatChannels, SlicesOfWidthCOverT) {
  const std::int64_t T = 4, C = 8;
  const Tensor32 x = counting(Shape{2, T, C, 3, 3});
  const std::int64_t eta = C / T;
  // Concatenating the T channel groups of one frame rebuilds that frame.
  std::vector<Tensor32> parts;
  for (std::int64_t g = 0; g < T; ++g) parts.push_back(slice_channels(x, 1, g * eta, (g + 1) * eta));
  const Tensor32 y = concat_channels(parts);
  ASSERT_EQ(y.shape(), (Shape{2, 1, C, 3, 3}));
  EXPECT_TRUE(identical(y, slice_channels(x, 1, 0, C)));
}

TEST(ConcatChannels, SingletonIsIdentity) {
  const Tensor32 x = counting(Shape{2, 3, 4, 2, 2});
  EXPECT_TRUE(identical(concat_channels(std::vector<Tensor32>{x}), x));
}

TEST(ConcatChannels, Errors) {
  const std::vector<Tensor32> mismatched{Tensor32(Shape{1, 1, 2, 3, 3}), Tensor32(Shape{1, 1, 2, 4, 3})};
  EXPECT_THROW(concat_channels(mismatched), ShapeError);
  EXPECT_THROW(concat_channels(std::vector<Tensor32>{}), ShapeError);
}

TEST(Compare, ApproxEqualReflexiveAtZeroTol) {
  std::mt19937_64 rng(3);
  Tensor64 x(Shape{2, 2, 3, 4, 5});
  fill_normal(x, rng);
  EXPECT_TRUE(approx_equal(x, x, 0.0));
  Tensor64 y = x;
  y[7] += 1e-3;
  EXPECT_FALSE(approx_equal(x, y, 1e-4));
  EXPECT_TRUE(approx_equal(x, y, 2e-3));
  EXPECT_THROW(approx_equal(x, Tensor64(Shape{1, 1, 1, 1, 1}), 0.0), ShapeError);
}

TEST(Compare, ApproxEqualRejectsNan) {
  Tensor32 x(Shape{1, 1, 1, 1, 2});
  Tensor32 y = x;
  y[1] = std::nanf("");
  EXPECT_FALSE(approx_equal(x, y, 1e9));
}

TEST(Compare, L2Norm) {
  EXPECT_EQ(l2_norm(alloc_zeros<double>(Shape{2, 3, 4, 5, 6})), 0.0);
  const Tensor64 x(Shape{1, 1, 2, 1, 1}, {3.0, 4.0});
  EXPECT_DOUBLE_EQ(l2_norm(x), 5.0);
}

TEST(Compare, SortedValuesMatchesStdSort) {
  std::mt19937_64 rng(11);
  Tensor32 x(Shape{3, 2, 5, 4, 4});
  fill_uniform(x, rng);
  const Tensor32 before = x;
  std::vector<float> oracle(x.values().begin(), x.values().end());
  std::stable_sort(oracle.begin(), oracle.end());
  EXPECT_EQ(sorted_values(x), oracle);
  EXPECT_TRUE(identical(x, before));
}

TEST(Ops, InputsUnmodified) {
  const Tensor32 x = counting(Shape{2, 2, 4, 3, 3});
  const Tensor32 copy = x;
  (void)slice_channels(x, 1, 1, 3);
  (void)concat_channels(std::vector<Tensor32>{x, x});
  (void)l2_norm(x);
  EXPECT_TRUE(identical(x, copy));
}

TEST(Reshape, SizeMustMatch) {
  const Tensor32 x = counting(Shape{1, 2, 3, 1, 1});
  EXPECT_EQ(x.reshaped(Shape{6, 1, 1, 1, 1})[5], 5.0f);
  EXPECT_THROW(x.reshaped(Shape{7, 1, 1, 1, 1}), ShapeError);
}

TEST(TensorIo, RoundTripBothWidths) {
  std::mt19937_64 rng(5);
  Tensor32 a(Shape{2, 3, 4, 5, 6});
  fill_normal(a, rng);
  Tensor64 b(Shape{1, 2, 1, 3, 3});
  fill_normal(b, rng);

  std::stringstream s1, s2;
  write_vst(s1, a);
  write_vst(s2, b);
  const AnyTensor ra = read_vst(s1);
  const AnyTensor rb = read_vst(s2);
  ASSERT_TRUE(std::holds_alternative<Tensor32>(ra));
  ASSERT_TRUE(std::holds_alternative<Tensor64>(rb));
  EXPECT_TRUE(identical(std::get<Tensor32>(ra), a));
  EXPECT_TRUE(identical(std::get<Tensor64>(rb), b));
}

TEST(TensorIo, RejectsGarbage) {
  std::stringstream bad_magic("VSTX\n1 1 1 1 1 f32\n");
  EXPECT_THROW(read_vst(bad_magic), IoError);
  std::stringstream truncated("VST1\n1 1 1 1 4 f32\nab");
  EXPECT_THROW(read_vst(truncated), IoError);
  std::stringstream bad_dtype("VST1\n1 1 1 1 1 i8\n");
  EXPECT_THROW(read_vst(bad_dtype), IoError);
}

}  // namespace
}  // namespace vshuffle
