#include <gtest/gtest.h>

#include <set>

#include "znext/gradcheck_suite.hpp"
#include "znext/model.hpp"

using namespace znext;

namespace {

ModelConfig small(std::size_t heads = 2, std::size_t groups = 2, std::size_t clip_len = 1) {
  ModelConfig cfg;
  cfg.encoder = {3, 8, {}};
  cfg.heads = heads;
  cfg.groups = groups;
  cfg.clip_len = clip_len;
  return cfg;
}

Model<double> make(const ModelConfig& cfg, std::uint64_t seed = 1) {
  Model<double> m(cfg);
  m.init(seed);
  return m;
}

Tensor<double> images(std::uint64_t seed, std::size_t n, std::size_t side = 32) {
  Rng rng(seed);
  return rand_uniform<double>({n, 3, side, side}, rng);
}

}  // namespace

TEST(Model, OutputShapeAndRange) {
  auto m = make(small());
  auto x = images(1, 2);
  auto y = m.predict(x);
  EXPECT_EQ(y.shape(), (Shape{2, 1, 32, 32}));
  for (double v : y.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(m.forward(images(2, 1, 48), Phase::Train).shape(), (Shape{1, 1, 48, 48}));
}

TEST(Model, RepeatedForwardIsBitIdentical) {
  auto m = make(small(2, 3));
  auto x = images(3, 2);
  EXPECT_TRUE(bit_equal(m.forward(x), m.forward(x)));
}

TEST(Model, ImagePathEqualsSingleFrameClipPath) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto m = make(small(2, 2, 1), seed);
    auto x = images(seed + 10, 3);
    EXPECT_TRUE(bit_equal(m.forward(x), m.forward_clip(x, 1)));
  }
}

TEST(Model, IdenticalFramesGiveIdenticalMaps) {
  for (std::size_t T : {2, 3}) {
    auto m = make(small(2, 2, T), T);
    auto f = images(T, 1);
    std::vector<Tensor<double>> frames(T, f);
    auto y = m.predict(concat(frames, 0));
    auto maps = chunk(y, 0, T);
    for (std::size_t t = 1; t < T; ++t) EXPECT_TRUE(bit_equal(maps[0], maps[t]));
    EXPECT_TRUE(bit_equal(maps[0], m.forward(f)));
  }
}

TEST(Model, ClipFramesInteractWhenTheyDiffer) {
  auto m = make(small(2, 2, 2), 4);
  auto a = images(5, 1), b = images(6, 1);
  auto clip = m.predict(concat(std::vector<Tensor<double>>{a, b}, 0));
  auto alone = m.forward(a);
  EXPECT_FALSE(bit_equal(chunk(clip, 0, 2)[0], alone));
}

TEST(Model, ParamCountTrends) {
  std::size_t prev = 0;
  for (std::size_t G : {2, 4, 6, 8}) {
    const std::size_t n = Model<double>(small(2, G)).param_count();
    EXPECT_GT(n, prev) << "G=" << G;
    prev = n;
  }
  prev = SIZE_MAX;
  for (std::size_t M : {1, 2, 4, 8}) {
    const std::size_t n = Model<double>(small(M, 2)).param_count();
    EXPECT_LE(n, prev) << "M=" << M;
    prev = n;
  }
  EXPECT_EQ(Model<double>(small(4, 6)).param_count(), Model<double>(small(4, 6)).param_count());
}

TEST(Model, ParamCountAddsUpMhsiuUnits) {
  auto with = Model<double>(small(2, 2));
  auto cfg = small(2, 2);
  cfg.fusion = Fusion::Add;
  auto without = Model<double>(cfg);
  EXPECT_EQ(with.param_count() - without.param_count(), 3 * mhsiu_param_count(8, 2));
}

TEST(Model, EveryScaleSubsetAndFusion) {
  const std::vector<std::vector<double>> subsets{{1.0}, {0.5}, {1.5}, {0.5, 1.0}, {1.0, 1.5}, {0.5, 1.5},
                                                 {0.5, 1.0, 1.5}};
  for (const auto& s : subsets)
    for (auto fusion : {Fusion::Mhsiu, Fusion::Add}) {
      auto cfg = small();
      cfg.scales = s;
      cfg.fusion = fusion;
      auto m = make(cfg);
      EXPECT_EQ(m.predict(images(1, 2)).shape(), (Shape{2, 1, 32, 32})) << s.size();
    }
}

TEST(Model, HeadAndGroupCombinations) {
  for (std::size_t M : {1, 2, 4, 8})
    for (std::size_t G : {2, 4, 6, 8}) {
      auto m = make(small(M, G));
      EXPECT_EQ(m.predict(images(M + G, 1)).shape(), (Shape{1, 1, 32, 32})) << M << " " << G;
    }
}

TEST(Model, DownsampleAndTemporalVariants) {
  for (auto mode : {DownsampleMode::Hybrid, DownsampleMode::Max, DownsampleMode::Avg, DownsampleMode::Bilinear,
                    DownsampleMode::Bicubic}) {
    auto cfg = small();
    cfg.downsample = mode;
    EXPECT_EQ(make(cfg).predict(images(1, 1)).shape(), (Shape{1, 1, 32, 32}));
  }
  for (int bits = 0; bits < 8; ++bits) {
    auto cfg = small(2, 2, 2);
    cfg.temporal = {bool(bits & 1), bool(bits & 2), bool(bits & 4)};
    auto y = make(cfg).predict(images(bits, 4));
    EXPECT_EQ(y.shape(), (Shape{4, 1, 32, 32}));
    for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Model, TensorNamesAreUniqueAndCountsConsistent) {
  Model<double> m(small(2, 3, 2));
  std::set<std::string> names;
  std::size_t learnable = 0;
  for (const auto& nt : m.tensors()) {
    EXPECT_TRUE(names.insert(nt.name).second) << nt.name;
    if (nt.learnable) learnable += nt.tensor.numel();
  }
  EXPECT_EQ(learnable, m.param_count());
}

TEST(Model, InitIsSeedDeterministic) {
  auto a = make(small(), 7), b = make(small(), 7), c = make(small(), 8);
  auto x = images(1, 1);
  EXPECT_TRUE(bit_equal(a.predict(x), b.predict(x)));
  EXPECT_FALSE(bit_equal(a.predict(x), c.predict(x)));
}

TEST(ModelConfig, ValidationAndDigest) {
  auto cfg = small();
  cfg.groups = 1;
  EXPECT_THROW(cfg.validate(), ShapeError);
  cfg = small(3);
  EXPECT_THROW(cfg.validate(), ShapeError);
  cfg = small();
  cfg.scales = {0.75};
  EXPECT_THROW(cfg.validate(), ShapeError);
  cfg = small();
  cfg.clip_len = 0;
  EXPECT_THROW(cfg.validate(), ShapeError);

  auto a = small(), b = small();
  EXPECT_EQ(a.digest(), b.digest());
  b.groups = 4;
  EXPECT_NE(a.digest(), b.digest());
  b = small();
  b.temporal.shift = false;
  EXPECT_NE(a.digest(), b.digest());
}

TEST(Model, RejectsBadInput) {
  auto m = make(small());
  EXPECT_THROW(m.predict(Tensor<double>(Shape{1, 1, 32, 32})), ShapeError);
  EXPECT_THROW(m.predict(Tensor<double>(Shape{1, 3, 30, 32})), ShapeError);
  EXPECT_THROW(m.predict(Tensor<double>(Shape{1, 3, 8, 8})), ShapeError);
}

TEST(PredictToGtSize, Examples) {
  Rng rng(1);
  auto p = rand_uniform<double>({1, 1, 8, 6}, rng);
  EXPECT_TRUE(bit_equal(predict_to_gt_size(p, 8, 6), p));
  Tensor<double> c(Shape{1, 1, 4, 4}, 0.3);
  for (double v : std::vector<double>(predict_to_gt_size(c, 9, 5).values())) EXPECT_DOUBLE_EQ(v, 0.3);
  EXPECT_TRUE(bit_equal(predict_to_gt_size(p, 13, 7), bilinear_resize(p, 13, 7)));
  for (double v : std::vector<double>(predict_to_gt_size(p, 3, 17).values())) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Model, GradcheckMicroModel) {
  for (const auto& r : run_gradchecks("model", 2)) EXPECT_TRUE(r.passed) << r.name << " " << r.worst;
}
