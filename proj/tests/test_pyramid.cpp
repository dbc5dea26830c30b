#include <gtest/gtest.h>

#include <algorithm>

#include "znext/pyramid.hpp"
#include "znext/random.hpp"

using namespace znext;

namespace {

Tensor<double> ramp(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  Tensor<double> t(Shape{n, c, h, w});
  for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = double(i % (h * w)) / double(h * w);
  return t;
}

}  // namespace

TEST(Pyramid, ViewSides) {
  auto p = build_pyramid(ramp(1, 3, 64, 64));
  EXPECT_EQ(p.views[0].shape(), (Shape{1, 3, 32, 32}));
  EXPECT_EQ(p.views[1].shape(), (Shape{1, 3, 64, 64}));
  EXPECT_EQ(p.views[2].shape(), (Shape{1, 3, 96, 96}));
  auto q = build_pyramid(ramp(2, 3, 36, 44));
  EXPECT_EQ(q.views[0].shape(), (Shape{2, 3, 18, 22}));
  EXPECT_EQ(q.views[2].shape(), (Shape{2, 3, 54, 66}));
}

TEST(Pyramid, ConstantImageGivesConstantViews) {
  Tensor<double> c(Shape{1, 3, 32, 32}, 0.625);
  for (const auto& v : build_pyramid(c).views)
    for (double x : v.data()) EXPECT_DOUBLE_EQ(x, 0.625);
}

TEST(Pyramid, HalfViewIsBilinearResize) {
  auto img = ramp(1, 3, 64, 64);
  EXPECT_TRUE(bit_equal(build_pyramid(img).views[0], bilinear_resize(img, 32, 32)));
  EXPECT_TRUE(bit_equal(build_pyramid(img).views[2], bilinear_resize(img, 96, 96)));
}

TEST(Pyramid, MainViewIsTheInput) {
  Rng rng(9);
  auto img = randn<double>({2, 3, 40, 48}, rng);
  auto p = build_pyramid(img);
  EXPECT_TRUE(bit_equal(p.at(1.0), img));
  EXPECT_THROW(p.at(2.0), ShapeError);
}

TEST(Pyramid, RejectsSmallOrIndivisibleInput) {
  EXPECT_THROW(build_pyramid(Tensor<double>(Shape{1, 3, 28, 64})), ShapeError);
  EXPECT_THROW(build_pyramid(Tensor<double>(Shape{1, 3, 34, 64})), ShapeError);
  EXPECT_THROW(build_pyramid(Tensor<double>(Shape{1, 3, 32, 32}), 64), ShapeError);
  EXPECT_NO_THROW(build_pyramid(Tensor<double>(Shape{1, 3, 64, 64}), 64));
}

TEST(HybridDownsample, Examples) {
  Rng rng(1);
  auto x = randn<double>({1, 2, 5, 7}, rng);
  EXPECT_TRUE(bit_equal(hybrid_downsample(x, 5, 7), x));
  Tensor<double> s(Shape{1, 1, 2, 2}, std::vector<double>{0, 2, 0, 2});
  EXPECT_DOUBLE_EQ(hybrid_downsample(s, 1, 1).item(), 1.5);
  Tensor<double> c(Shape{1, 1, 9, 9}, -0.3);
  for (double v : std::vector<double>(hybrid_downsample(c, 4, 6).values())) EXPECT_DOUBLE_EQ(v, -0.3);
}

TEST(HybridDownsample, StaysWithinWindowRange) {
  Rng rng(2);
  const std::size_t H = 12, W = 9, oh = 5, ow = 4;
  auto x = randn<double>({1, 1, H, W}, rng);
  auto y = hybrid_downsample(x, oh, ow);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      const std::size_t y0 = i * H / oh, y1 = ((i + 1) * H + oh - 1) / oh;
      const std::size_t x0 = j * W / ow, x1 = ((j + 1) * W + ow - 1) / ow;
      double lo = 1e300, hi = -1e300;
      for (std::size_t a = y0; a < y1; ++a)
        for (std::size_t b = x0; b < x1; ++b) {
          lo = std::min(lo, x.at(0, 0, a, b));
          hi = std::max(hi, x.at(0, 0, a, b));
        }
      EXPECT_GE(y.at(0, 0, i, j), lo);
      EXPECT_LE(y.at(0, 0, i, j), hi);
    }
}

TEST(HybridDownsample, RejectsUpsampling) {
  EXPECT_THROW(hybrid_downsample(Tensor<double>(Shape{1, 1, 4, 4}), 5, 4), ShapeError);
}

TEST(AlignToMain, Examples) {
  Rng rng(3);
  auto a = randn<double>({1, 4, 8, 8}, rng);
  auto b = randn<double>({1, 4, 8, 8}, rng);
  auto c = randn<double>({1, 4, 8, 8}, rng);
  auto same = align_to_main(a, b, c);
  EXPECT_TRUE(bit_equal(same.f05, a));
  EXPECT_TRUE(bit_equal(same.f10, b));
  EXPECT_TRUE(bit_equal(same.f15, c));

  auto f15 = randn<double>({1, 4, 12, 12}, rng);
  auto f05 = randn<double>({1, 4, 4, 4}, rng);
  auto r = align_to_main(f05, b, f15);
  EXPECT_TRUE(bit_equal(r.f15, hybrid_downsample(f15, 8, 8)));
  EXPECT_TRUE(bit_equal(r.f05, bilinear_resize(f05, 8, 8)));
  EXPECT_EQ(r.f05.shape(), r.f10.shape());
  EXPECT_EQ(r.f15.shape(), r.f10.shape());

  Tensor<double> k(Shape{1, 4, 12, 12}, 2.5);
  for (double v : align_to_main(f05, b, k).f15.data()) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(AlignToMain, ChannelMismatchThrows) {
  EXPECT_THROW(align_to_main(Tensor<double>(Shape{1, 3, 4, 4}), Tensor<double>(Shape{1, 4, 8, 8}),
                             Tensor<double>(Shape{1, 4, 12, 12})),
               ShapeError);
}

TEST(AlignToMain, SingleModeVariants) {
  Rng rng(4);
  auto f = randn<double>({1, 2, 12, 12}, rng);
  EXPECT_TRUE(bit_equal(downsample(f, 8, 8, DownsampleMode::Max), adaptive_pool(f, 8, 8, PoolMode::Max)));
  EXPECT_TRUE(bit_equal(downsample(f, 8, 8, DownsampleMode::Avg), adaptive_pool(f, 8, 8, PoolMode::Avg)));
  EXPECT_TRUE(bit_equal(downsample(f, 8, 8, DownsampleMode::Bicubic), bilinear_resize(f, 8, 8)));
  for (auto m : {DownsampleMode::Hybrid, DownsampleMode::Max, DownsampleMode::Avg, DownsampleMode::Bilinear,
                 DownsampleMode::Bicubic})
    EXPECT_EQ(parse_downsample(to_string(m)), m);
  EXPECT_THROW(parse_downsample("lanczos"), ShapeError);
}
