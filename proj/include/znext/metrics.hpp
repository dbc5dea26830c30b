#pragma once

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "znext/image.hpp"

namespace znext {

inline constexpr std::size_t kThresholds = 256;
inline constexpr double kMetricEps = DBL_EPSILON;

using Curve = std::array<double, kThresholds>;

struct MetricsReport {
  double s_measure = 0, weighted_f = 0, mae = 0, max_f = 0, mean_e = 0, m_dice = 0, m_iou = 0;
  Curve precision{}, recall{}, f_curve{}, e_curve{};
  bool empty_gt = false;  // weighted F undefined and reported as 0
};

namespace detail {

inline void require_pair(const Image& p, const Image& g, const char* op) {
  if (p.channels != 1 || g.channels != 1)
    throw ShapeError(std::string(op) + ": prediction and ground truth must be single-channel");
  if (p.height != g.height || p.width != g.width)
    throw ShapeError(std::string(op) + ": size mismatch " + std::to_string(p.height) + "x" +
                     std::to_string(p.width) + " vs " + std::to_string(g.height) + "x" + std::to_string(g.width));
  if (p.data.empty()) throw ShapeError(std::string(op) + ": empty image");
}

inline bool fg(double g) { return g > 0.5; }

inline int quantize(double p) { return std::clamp(static_cast<int>(std::floor(p * 255.0)), 0, 255); }

/// Counts of foreground predictions at each threshold t (q >= t), split by
/// ground truth: [0] over GT foreground, [1] over GT background.
inline std::array<std::array<double, kThresholds>, 2> threshold_counts(const Image& p, const Image& g) {
  std::array<std::array<double, kThresholds>, 2> hist{};
  for (std::size_t i = 0; i < p.data.size(); ++i) hist[fg(g.data[i]) ? 0 : 1][quantize(p.data[i])] += 1;
  std::array<std::array<double, kThresholds>, 2> out{};
  for (int k = 0; k < 2; ++k) {
    double acc = 0;
    for (int t = 255; t >= 0; --t) {
      acc += hist[k][t];
      out[k][t] = acc;
    }
  }
  return out;
}

inline double gt_count(const Image& g) {
  double n = 0;
  for (double v : g.data) n += fg(v) ? 1 : 0;
  return n;
}

}  // namespace detail

inline double mae(const Image& p, const Image& g) {
  detail::require_pair(p, g, "mae");
  double s = 0;
  for (std::size_t i = 0; i < p.data.size(); ++i) s += std::abs(p.data[i] - g.data[i]);
  return s / static_cast<double>(p.data.size());
}

inline double f_from_pr(double precision, double recall, double beta2 = 0.3) {
  const double num = (1 + beta2) * precision * recall;
  return num == 0 ? 0.0 : num / (beta2 * precision + recall);
}

/// F-measure of p binarized at p >= threshold.
inline double f_beta(const Image& p, const Image& g, double threshold, double beta2 = 0.3) {
  detail::require_pair(p, g, "f_beta");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const bool pf = p.data[i] >= threshold, gf = detail::fg(g.data[i]);
    tp += pf && gf;
    fp += pf && !gf;
    fn += !pf && gf;
  }
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return f_from_pr(precision, recall, beta2);
}

/// Precision and recall at thresholds 0..255 over floor(p*255).
inline void pr_curve(const Image& p, const Image& g, Curve& precision, Curve& recall) {
  detail::require_pair(p, g, "pr_curve");
  auto c = detail::threshold_counts(p, g);
  const double gt_fg = std::max(detail::gt_count(g), 1.0);
  for (std::size_t t = 0; t < kThresholds; ++t) {
    const double tp = c[0][t], predicted = c[0][t] + c[1][t];
    precision[t] = tp / (predicted == 0 ? 1.0 : predicted);
    recall[t] = tp / gt_fg;
  }
}

inline Curve f_curve(const Image& p, const Image& g, double beta2 = 0.3) {
  Curve pr{}, rc{}, f{};
  pr_curve(p, g, pr, rc);
  for (std::size_t t = 0; t < kThresholds; ++t) f[t] = f_from_pr(pr[t], rc[t], beta2);
  return f;
}

inline double max_f(const Image& p, const Image& g) {
  Curve f = f_curve(p, g);
  return *std::max_element(f.begin(), f.end());
}

namespace detail {

struct Confusion {
  double tp = 0, fp = 0, fn = 0;
};

inline Confusion confusion_at(const Image& p, const Image& g, double threshold) {
  Confusion c;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const bool pf = p.data[i] >= threshold, gf = fg(g.data[i]);
    c.tp += pf && gf;
    c.fp += pf && !gf;
    c.fn += !pf && gf;
  }
  return c;
}

}  // namespace detail

inline double m_dice(const Image& p, const Image& g, double threshold = 0.5) {
  detail::require_pair(p, g, "m_dice");
  auto c = detail::confusion_at(p, g, threshold);
  const double den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : 2 * c.tp / den;
}

inline double m_iou(const Image& p, const Image& g, double threshold = 0.5) {
  detail::require_pair(p, g, "m_iou");
  auto c = detail::confusion_at(p, g, threshold);
  const double den = c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : c.tp / den;
}

// ---- S-measure ------------------------------------------------------------

namespace detail {

inline double object_similarity(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double m = 0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(std::max<std::size_t>(x.size() - 1, 1)));
  return 2 * m / (m * m + 1 + sd + kMetricEps);
}

inline double ssim_block(const Image& p, const Image& g, std::size_t y0, std::size_t y1, std::size_t x0,
                         std::size_t x1) {
  const double n = static_cast<double>((y1 - y0) * (x1 - x0));
  double mx = 0, my = 0;
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) {
      mx += p(y, x);
      my += fg(g(y, x)) ? 1.0 : 0.0;
    }
  mx /= n;
  my /= n;
  double sx = 0, sy = 0, sxy = 0;
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) {
      const double a = p(y, x) - mx, b = (fg(g(y, x)) ? 1.0 : 0.0) - my;
      sx += a * a;
      sy += b * b;
      sxy += a * b;
    }
  const double d = std::max(n - 1, 1.0);
  sx /= d;
  sy /= d;
  sxy /= d;
  const double alpha = 4 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sx + sy);
  if (alpha != 0) return alpha / (beta + kMetricEps);
  return beta == 0 ? 1.0 : 0.0;
}

}  // namespace detail

inline double s_measure(const Image& p, const Image& g, double alpha = 0.5) {
  detail::require_pair(p, g, "s_measure");
  const std::size_t H = p.height, W = p.width, N = H * W;
  const double area = detail::gt_count(g);
  double pm = 0;
  for (double v : p.data) pm += v;
  pm /= static_cast<double>(N);
  if (area == 0) return 1.0 - pm;
  if (area == static_cast<double>(N)) return pm;

  // Object-aware term.
  std::vector<double> fgv, bgv;
  double cy = 0, cx = 0;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      if (detail::fg(g(y, x))) {
        fgv.push_back(p(y, x));
        cy += static_cast<double>(y);
        cx += static_cast<double>(x);
      } else {
        bgv.push_back(1.0 - p(y, x));
      }
    }
  const double u = area / static_cast<double>(N);
  const double object = u * detail::object_similarity(fgv) + (1 - u) * detail::object_similarity(bgv);

  // Region-aware term: four blocks split at the (1-based) GT centroid.
  const auto X = static_cast<std::size_t>(std::nearbyint(cx / area)) + 1;
  const auto Y = static_cast<std::size_t>(std::nearbyint(cy / area)) + 1;
  const double n = static_cast<double>(N);
  const double w1 = static_cast<double>(X * Y) / n;
  const double w2 = static_cast<double>(Y * (W - X)) / n;
  const double w3 = static_cast<double>((H - Y) * X) / n;
  const double w4 = 1.0 - w1 - w2 - w3;
  double region = 0;
  if (X > 0 && Y > 0) region += w1 * detail::ssim_block(p, g, 0, Y, 0, X);
  if (Y > 0 && X < W) region += w2 * detail::ssim_block(p, g, 0, Y, X, W);
  if (Y < H && X > 0) region += w3 * detail::ssim_block(p, g, Y, H, 0, X);
  if (Y < H && X < W) region += w4 * detail::ssim_block(p, g, Y, H, X, W);

  return std::max(0.0, alpha * object + (1 - alpha) * region);
}

// ---- E-measure ------------------------------------------------------------

/// Enhanced-alignment score at each threshold 0..255.
inline Curve e_curve(const Image& p, const Image& g) {
  detail::require_pair(p, g, "e_measure");
  auto c = detail::threshold_counts(p, g);
  const double n = static_cast<double>(p.data.size());
  const double gt_fg = detail::gt_count(g);
  Curve e{};
  for (std::size_t t = 0; t < kThresholds; ++t) {
    const double ff = c[0][t], fb = c[1][t];  // predicted fg over GT fg / GT bg
    const double pred_fg = ff + fb;
    double total;
    if (gt_fg == 0) {
      total = n - pred_fg;
    } else if (gt_fg == n) {
      total = pred_fg;
    } else {
      const double bf = gt_fg - ff, bb = n - ff - fb - bf;
      const double mp = pred_fg / n, mg = gt_fg / n;
      const double parts[4] = {ff, fb, bf, bb};
      const double pv[4] = {1 - mp, 1 - mp, -mp, -mp};
      const double gv[4] = {1 - mg, -mg, 1 - mg, -mg};
      total = 0;
      for (int k = 0; k < 4; ++k) {
        const double align = 2 * pv[k] * gv[k] / (pv[k] * pv[k] + gv[k] * gv[k] + kMetricEps);
        total += (align + 1) * (align + 1) / 4 * parts[k];
      }
    }
    e[t] = total / n;
  }
  return e;
}

inline double e_measure(const Image& p, const Image& g) {
  Curve e = e_curve(p, g);
  double s = 0;
  for (double v : e) s += v;
  return s / static_cast<double>(kThresholds);
}

// ---- Weighted F-measure ---------------------------------------------------

/// Euclidean distance from every pixel to the nearest foreground pixel of
/// `mask`, plus that pixel's flat index. Ties resolve to the smallest
/// (row, col). Foreground pixels map to themselves at distance 0.
struct DistanceField {
  std::vector<double> dist;
  std::vector<std::size_t> nearest;
};

inline DistanceField distance_transform(const std::vector<bool>& mask, std::size_t H, std::size_t W) {
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  // Nearest foreground row per column, for every row.
  std::vector<std::size_t> col_row(H * W, kNone);
  for (std::size_t x = 0; x < W; ++x) {
    std::size_t last = kNone;
    for (std::size_t y = 0; y < H; ++y) {
      if (mask[y * W + x]) last = y;
      col_row[y * W + x] = last;
    }
    std::size_t next = kNone;
    for (std::size_t y = H; y-- > 0;) {
      if (mask[y * W + x]) next = y;
      std::size_t& best = col_row[y * W + x];
      if (next != kNone && (best == kNone || next - y < y - best)) best = next;
    }
  }
  DistanceField df;
  df.dist.assign(H * W, std::numeric_limits<double>::infinity());
  df.nearest.assign(H * W, kNone);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      std::size_t best_d2 = kNone, best = kNone;
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t r = col_row[y * W + j];
        if (r == kNone) continue;
        const std::size_t dy = r > y ? r - y : y - r, dx = j > x ? j - x : x - j;
        const std::size_t d2 = dy * dy + dx * dx;
        const std::size_t idx = r * W + j;
        if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
          best_d2 = d2;
          best = idx;
        }
      }
      if (best != kNone) {
        df.dist[y * W + x] = std::sqrt(static_cast<double>(best_d2));
        df.nearest[y * W + x] = best;
      }
    }
  return df;
}

/// 7x7 Gaussian (sigma 5) normalized to unit sum, MATLAB fspecial style.
inline std::array<double, 49> gaussian7() {
  std::array<double, 49> k{};
  double mx = 0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      const double y = i - 3, x = j - 3;
      k[i * 7 + j] = std::exp(-(x * x + y * y) / (2.0 * 25.0));
      mx = std::max(mx, k[i * 7 + j]);
    }
  double s = 0;
  for (auto& v : k) {
    if (v < kMetricEps * mx) v = 0;
    s += v;
  }
  for (auto& v : k) v /= s;
  return k;
}

/// Weighted F-measure (beta = 1). An all-background GT yields 0 and sets
/// `*empty_gt` when provided.
inline double weighted_f(const Image& p, const Image& g, bool* empty_gt = nullptr) {
  detail::require_pair(p, g, "weighted_f");
  const std::size_t H = p.height, W = p.width, N = H * W;
  std::vector<bool> gm(N);
  bool any = false;
  for (std::size_t i = 0; i < N; ++i) any |= (gm[i] = detail::fg(g.data[i]));
  if (empty_gt) *empty_gt = !any;
  if (!any) return 0.0;

  auto df = distance_transform(gm, H, W);
  std::vector<double> E(N), Et(N);
  for (std::size_t i = 0; i < N; ++i) E[i] = std::abs(p.data[i] - (gm[i] ? 1.0 : 0.0));
  for (std::size_t i = 0; i < N; ++i) Et[i] = gm[i] ? E[i] : E[df.nearest[i]];

  const auto K = gaussian7();
  std::vector<double> EA(N, 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double s = 0;
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
          const long yy = static_cast<long>(y) + i - 3, xx = static_cast<long>(x) + j - 3;
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
          s += K[i * 7 + j] * Et[yy * W + xx];
        }
      EA[y * W + x] = s;
    }

  double tpw = 0, fpw = 0, ew_fg = 0, n_fg = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double m = (gm[i] && EA[i] < E[i]) ? EA[i] : E[i];
    if (gm[i]) {
      ew_fg += m;
      n_fg += 1;
    } else {
      fpw += m * (2.0 - std::exp(std::log(0.5) / 5.0 * df.dist[i]));
    }
  }
  tpw = n_fg - ew_fg;
  const double R = 1.0 - ew_fg / n_fg;
  const double P = tpw / (tpw + fpw + kMetricEps);
  return 2.0 * R * P / (R + P + kMetricEps);
}

// ---- Report and aggregation -----------------------------------------------

inline MetricsReport evaluate(const Image& p, const Image& g) {
  MetricsReport r;
  r.mae = mae(p, g);
  pr_curve(p, g, r.precision, r.recall);
  for (std::size_t t = 0; t < kThresholds; ++t) r.f_curve[t] = f_from_pr(r.precision[t], r.recall[t]);
  r.max_f = *std::max_element(r.f_curve.begin(), r.f_curve.end());
  r.e_curve = e_curve(p, g);
  double s = 0;
  for (double v : r.e_curve) s += v;
  r.mean_e = s / static_cast<double>(kThresholds);
  r.s_measure = s_measure(p, g);
  r.weighted_f = weighted_f(p, g, &r.empty_gt);
  r.m_dice = m_dice(p, g);
  r.m_iou = m_iou(p, g);
  return r;
}

/// Per-item mean of every scalar and curve point.
inline MetricsReport aggregate(const std::vector<MetricsReport>& rs) {
  MetricsReport m;
  if (rs.empty()) return m;
  const double n = static_cast<double>(rs.size());
  for (const auto& r : rs) {
    m.s_measure += r.s_measure / n;
    m.weighted_f += r.weighted_f / n;
    m.mae += r.mae / n;
    m.max_f += r.max_f / n;
    m.mean_e += r.mean_e / n;
    m.m_dice += r.m_dice / n;
    m.m_iou += r.m_iou / n;
    for (std::size_t t = 0; t < kThresholds; ++t) {
      m.precision[t] += r.precision[t] / n;
      m.recall[t] += r.recall[t] / n;
      m.f_curve[t] += r.f_curve[t] / n;
      m.e_curve[t] += r.e_curve[t] / n;
    }
    m.empty_gt = m.empty_gt || r.empty_gt;
  }
  return m;
}

inline void write_report_header(std::ostream& os) {
  os << "name,s_measure,weighted_f,mae,max_f,mean_e,m_dice,m_iou\n";
}

inline void write_report_row(std::ostream& os, const std::string& name, const MetricsReport& r) {
  os.precision(17);
  os << name << ',' << r.s_measure << ',' << r.weighted_f << ',' << r.mae << ',' << r.max_f << ',' << r.mean_e
     << ',' << r.m_dice << ',' << r.m_iou << '\n';
}

inline void write_curves(std::ostream& os, const MetricsReport& r) {
  os.precision(17);
  os << "threshold,precision,recall,f,e\n";
  for (std::size_t t = 0; t < kThresholds; ++t)
    os << t << ',' << r.precision[t] << ',' << r.recall[t] << ',' << r.f_curve[t] << ',' << r.e_curve[t] << '\n';
}

}  // namespace znext
