#include <gtest/gtest.h>

#include <sstream>

#include "oracles/metrics_oracle.hpp"
#include "znext/metrics.hpp"
#include "znext/random.hpp"

using namespace znext;

namespace {

Image mask(std::size_t h, std::size_t w, const std::vector<int>& bits) {
  Image m(1, h, w);
  for (std::size_t i = 0; i < bits.size(); ++i) m.data[i] = bits[i];
  return m;
}

Image from_code(unsigned code) {
  Image m(1, 3, 3);
  for (int i = 0; i < 9; ++i) m.data[i] = (code >> i) & 1u;
  return m;
}

oracle::Map to_map(const Image& m) { return {int(m.height), int(m.width), m.data}; }

Image complement(const Image& m) {
  Image c = m;
  for (auto& v : c.data) v = 1 - v;
  return c;
}

// Eight 3x3 ground truths: empty, full, single pixel, corner, row, cross, diagonal, L shape.
const unsigned kGts[8] = {0x000, 0x1FF, 0x010, 0x001, 0x038, 0x0BA, 0x111, 0x1C9};

}  // namespace

TEST(Mae, Examples) {
  auto g = mask(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(mae(g, g), 0.0);
  EXPECT_EQ(mae(complement(g), g), 1.0);
  Image half(1, 2, 2, 0.5);
  EXPECT_EQ(mae(half, g), 0.5);
  EXPECT_THROW(mae(Image(1, 2, 3), g), Error);
}

TEST(FBeta, Examples) {
  auto g = mask(3, 3, {1, 1, 1, 0, 0, 0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(f_beta(g, g, 0.5), 1.0);
  EXPECT_EQ(f_beta(Image(1, 3, 3), g, 0.5), 0.0);
  auto p = mask(3, 3, {1, 1, 0, 1, 0, 0, 0, 0, 0});  // TP=2, FP=1, FN=1
  EXPECT_NEAR(f_beta(p, g, 0.5), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(max_f(g, g), 1.0);
}

TEST(DiceIou, Examples) {
  auto g = mask(2, 4, {1, 1, 1, 1, 0, 0, 0, 0});
  EXPECT_EQ(m_dice(g, g), 1.0);
  EXPECT_EQ(m_iou(g, g), 1.0);
  EXPECT_EQ(m_dice(complement(g), g), 0.0);
  EXPECT_EQ(m_iou(complement(g), g), 0.0);
  auto p = mask(2, 4, {0, 0, 1, 1, 1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(m_dice(p, g), 0.5);
  EXPECT_DOUBLE_EQ(m_iou(p, g), 1.0 / 3.0);
  Image empty(1, 2, 2);
  EXPECT_EQ(m_dice(empty, empty), 1.0);
  EXPECT_EQ(m_iou(empty, empty), 1.0);
}

TEST(SMeasure, Examples) {
  auto g = mask(4, 4, {0, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0});
  EXPECT_NEAR(s_measure(g, g), 1.0, 1e-6);
  EXPECT_LT(s_measure(complement(g), g), s_measure(g, g));
  Image empty(1, 4, 4), quarter(1, 4, 4, 0.25);
  EXPECT_DOUBLE_EQ(s_measure(quarter, empty), 0.75);
  Image full(1, 4, 4, 1.0);
  EXPECT_DOUBLE_EQ(s_measure(quarter, full), 0.25);
}

TEST(EMeasure, Examples) {
  auto g = mask(3, 3, {0, 1, 0, 1, 1, 1, 0, 1, 0});
  auto curve = e_curve(g, g);
  EXPECT_NEAR(curve[128], 1.0, 1e-12);
  EXPECT_NEAR(curve[255], 1.0, 1e-12);
  auto inv = e_curve(complement(g), g);
  for (unsigned code = 0; code < 512; ++code) {
    auto other = e_curve(from_code(code), g);
    for (std::size_t t = 0; t < kThresholds; ++t) EXPECT_LE(inv[t], other[t] + 1e-15);
  }
}

TEST(WeightedF, Examples) {
  auto g = mask(3, 3, {0, 1, 0, 1, 1, 1, 0, 1, 0});
  EXPECT_NEAR(weighted_f(g, g), 1.0, 1e-9);
  bool flag = false;
  EXPECT_EQ(weighted_f(g, Image(1, 3, 3), &flag), 0.0);
  EXPECT_TRUE(flag);
  weighted_f(g, g, &flag);
  EXPECT_FALSE(flag);
}

// The location weight B = 2 - exp(ln(0.5)/5 * D) grows with distance from the
// object, so a false positive far from it costs more than one beside it.
TEST(WeightedF, DistanceChangesTheCostOfAFalsePositive) {
  Image g(1, 16, 16);
  for (std::size_t y = 6; y < 10; ++y)
    for (std::size_t x = 6; x < 10; ++x) g(y, x) = 1;
  Image near = g, far = g;
  near(5, 7) = 1;
  far(0, 15) = 1;
  const double wn = weighted_f(near, g), wf = weighted_f(far, g);
  EXPECT_LT(wn, 1.0);
  EXPECT_LT(wf, wn);
  EXPECT_NEAR(wn, oracle::weighted_f(to_map(near), to_map(g)), 1e-12);
  EXPECT_NEAR(wf, oracle::weighted_f(to_map(far), to_map(g)), 1e-12);
}

TEST(DistanceTransform, MatchesBruteForceWithTieRule) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t H = 3 + rng.index(9), W = 3 + rng.index(9);
    std::vector<bool> m(H * W);
    Image g(1, H, W);
    bool any = false;
    for (std::size_t i = 0; i < H * W; ++i) {
      m[i] = rng.bernoulli(0.15);
      g.data[i] = m[i];
      any |= m[i];
    }
    if (!any) continue;
    auto df = distance_transform(m, H, W);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double d = 0;
        int ny = -1, nx = -1;
        oracle::nearest_fg(to_map(g), int(y), int(x), d, ny, nx);
        EXPECT_NEAR(df.dist[y * W + x], d, 1e-12);
        EXPECT_EQ(df.nearest[y * W + x], std::size_t(ny) * W + std::size_t(nx));
      }
  }
}

TEST(PrCurve, Examples) {
  auto g = mask(2, 2, {1, 0, 0, 1});
  Curve p{}, r{};
  pr_curve(g, g, p, r);
  // Threshold 0 admits every pixel.
  EXPECT_EQ(p[0], 0.5);
  for (std::size_t t = 1; t < kThresholds; ++t) EXPECT_EQ(p[t], 1.0);
  EXPECT_EQ(r[0], 1.0);
  Image half(1, 2, 2, 0.5);  // floor(127.5) = 127
  pr_curve(half, g, p, r);
  for (std::size_t t = 0; t < kThresholds; ++t) EXPECT_EQ(r[t], t <= 127 ? 1.0 : 0.0) << t;
  for (std::size_t t = 1; t < kThresholds; ++t) EXPECT_LE(r[t], r[t - 1]);
}

TEST(MetricsOracle, ExhaustiveBinaryPredictions) {
  for (unsigned gc : kGts) {
    const Image g = from_code(gc);
    const auto gm = to_map(g);
    const MetricsReport best = evaluate(g, g);
    for (unsigned pc = 0; pc < 512; ++pc) {
      const Image p = from_code(pc);
      const auto pm = to_map(p);
      const MetricsReport r = evaluate(p, g);
      double dice, iou;
      oracle::dice_iou(pm, gm, dice, iou);
      EXPECT_NEAR(r.mae, oracle::mae(pm, gm), 1e-9);
      EXPECT_NEAR(r.max_f, oracle::max_f(pm, gm), 1e-9);
      EXPECT_NEAR(r.m_dice, dice, 1e-9);
      EXPECT_NEAR(r.m_iou, iou, 1e-9);
      EXPECT_NEAR(r.s_measure, oracle::s_measure(pm, gm), 1e-9) << gc << " " << pc;
      EXPECT_NEAR(r.mean_e, oracle::mean_e(pm, gm), 1e-9) << gc << " " << pc;
      EXPECT_NEAR(r.weighted_f, oracle::weighted_f(pm, gm), 1e-9) << gc << " " << pc;
      EXPECT_LE(r.s_measure, best.s_measure + 1e-12);
      EXPECT_LE(r.mean_e, best.mean_e + 1e-12);
      EXPECT_LE(r.weighted_f, best.weighted_f + 1e-12);
      EXPECT_LE(r.max_f, best.max_f + 1e-12);
      EXPECT_LE(r.m_dice, best.m_dice);
      EXPECT_LE(r.m_iou, best.m_iou);
      EXPECT_GE(r.mae, best.mae);
    }
  }
}

TEST(MetricsOracle, ContinuousPredictions) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t H = 4 + rng.index(8), W = 4 + rng.index(8);
    Image p(1, H, W), g(1, H, W);
    for (auto& v : p.data) v = rng.uniform();
    for (auto& v : g.data) v = rng.bernoulli(0.3);
    const auto r = evaluate(p, g);
    const auto pm = to_map(p), gm = to_map(g);
    EXPECT_NEAR(r.s_measure, oracle::s_measure(pm, gm), 1e-9);
    EXPECT_NEAR(r.mean_e, oracle::mean_e(pm, gm), 1e-9);
    EXPECT_NEAR(r.weighted_f, oracle::weighted_f(pm, gm), 1e-9);
    EXPECT_NEAR(r.max_f, oracle::max_f(pm, gm), 1e-9);
  }
}

TEST(Metrics, RangeAndMaeComplement) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Image p(1, 7, 9), g(1, 7, 9);
    for (auto& v : p.data) v = rng.uniform();
    for (auto& v : g.data) v = rng.bernoulli(trial % 5 == 0 ? 0.0 : 0.4);
    const auto r = evaluate(p, g);
    for (double v : {r.s_measure, r.weighted_f, r.mae, r.max_f, r.mean_e, r.m_dice, r.m_iou}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_NEAR(mae(p, g) + mae(complement(p), g), 1.0, 1e-12);
    EXPECT_EQ(r.f_curve.size(), 256u);
  }
}

TEST(Metrics, AggregateIsPerItemMean) {
  Rng rng(10);
  std::vector<MetricsReport> rs;
  double s = 0, m = 0;
  for (int i = 0; i < 5; ++i) {
    Image p(1, 6, 6), g(1, 6, 6);
    for (auto& v : p.data) v = rng.uniform();
    for (auto& v : g.data) v = rng.bernoulli(0.5);
    rs.push_back(evaluate(p, g));
    s += rs.back().s_measure;
    m += rs.back().mae;
  }
  auto a = aggregate(rs);
  EXPECT_NEAR(a.s_measure, s / 5, 1e-15);
  EXPECT_NEAR(a.mae, m / 5, 1e-15);
  std::ostringstream os;
  write_report_header(os);
  write_report_row(os, "x", a);
  EXPECT_EQ(os.str().substr(0, 5), "name,");
}
