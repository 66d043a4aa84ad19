#pragma once

// Hexahedral element quality: scaled Jacobian, edge aspect ratio and skew
// (Verdict conventions), plus aggregate reports.

#include <atlasmesh/core.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <span>

namespace atlasmesh {

/// Eight corners in the standard trilinear ordering: 0-3 counter-clockwise on
/// the bottom face (seen from the top), 4-7 above them.
using HexCorners = std::array<Vec3, 8>;

namespace hex {

inline constexpr std::array<std::array<int, 2>, 12> edges = {
    {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

// Right-handed corner frames: for corner c, edges to (frame[c][0], [1], [2]).
inline constexpr std::array<std::array<int, 3>, 8> corner_frames = {{{1, 3, 4},
                                                                    {2, 0, 5},
                                                                    {3, 1, 6},
                                                                    {0, 2, 7},
                                                                    {7, 5, 0},
                                                                    {4, 6, 1},
                                                                    {5, 7, 2},
                                                                    {6, 4, 3}}};

/// Principal axes joining opposite face centroids (scaled by 4).
inline std::array<Vec3, 3> principal_axes(const HexCorners& x) {
  return {(x[1] - x[0]) + (x[2] - x[3]) + (x[5] - x[4]) + (x[6] - x[7]),
          (x[3] - x[0]) + (x[2] - x[1]) + (x[7] - x[4]) + (x[6] - x[5]),
          (x[4] - x[0]) + (x[5] - x[1]) + (x[6] - x[2]) + (x[7] - x[3])};
}

}  // namespace hex

/// Minimum over the 8 corners and the center of det(J)/(|J1||J2||J3|).
/// 1 for a cube, <= 0 for inverted elements, 0 if any edge or axis has zero length.
inline double scaled_jacobian(const HexCorners& x) {
  constexpr double tiny = std::numeric_limits<double>::min();
  for (const auto& e : hex::edges)
    if (norm2(x[e[1]] - x[e[0]]) <= tiny) return 0.0;

  double result = std::numeric_limits<double>::max();
  for (int c = 0; c < 8; ++c) {
    const auto& f = hex::corner_frames[c];
    const Vec3 a = x[f[0]] - x[c], b = x[f[1]] - x[c], d = x[f[2]] - x[c];
    const double denom = std::sqrt(norm2(a) * norm2(b) * norm2(d));
    result = std::min(result, det3(a, b, d) / denom);
  }
  const auto axes = hex::principal_axes(x);
  const double n0 = norm2(axes[0]), n1 = norm2(axes[1]), n2 = norm2(axes[2]);
  if (n0 <= tiny || n1 <= tiny || n2 <= tiny) return 0.0;
  result = std::min(result, det3(axes[0], axes[1], axes[2]) / std::sqrt(n0 * n1 * n2));
  return std::clamp(result, -1.0, 1.0);
}

/// Longest over shortest of the 12 edges; +infinity when an edge has zero length.
inline double aspect_ratio(const HexCorners& x) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& e : hex::edges) {
    const double len = distance(x[e[0]], x[e[1]]);
    lo = std::min(lo, len);
    hi = std::max(hi, len);
  }
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

inline bool is_degenerate_aspect(double ar) { return std::isinf(ar); }

/// Largest |cos| between pairs of principal axes; 1 when an axis vanishes.
inline double skew(const HexCorners& x) {
  auto axes = hex::principal_axes(x);
  for (auto& a : axes) {
    const double n = norm(a);
    if (n <= std::numeric_limits<double>::min()) return 1.0;
    a = a / n;
  }
  return std::max({std::abs(dot(axes[0], axes[1])), std::abs(dot(axes[0], axes[2])), std::abs(dot(axes[1], axes[2]))});
}

struct ElementQuality {
  double scaled_jacobian{0.0};
  double aspect_ratio{0.0};
  double skew{0.0};
};

inline ElementQuality element_quality(const HexCorners& x) { return {scaled_jacobian(x), aspect_ratio(x), skew(x)}; }

// ---------------------------------------------------------------------------

struct Histogram {
  double lo{0.0};
  double hi{1.0};
  std::vector<std::size_t> counts;
  std::size_t underflow{0};
  std::size_t overflow{0};

  Histogram() = default;
  Histogram(double lo_, double hi_, std::size_t bins) : lo(lo_), hi(hi_), counts(bins, 0) {}

  void add(double v) {
    if (v < lo) {
      ++underflow;
    } else if (v > hi) {
      ++overflow;
    } else {
      auto bin = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(counts.size()));
      ++counts[std::min(bin, counts.size() - 1)];
    }
  }
};

struct MetricSummary {
  double min{0.0};
  double max{0.0};
  double mean{0.0};
  Histogram histogram;
};

struct QualityReport {
  std::size_t element_count{0};
  MetricSummary scaled_jacobian;
  MetricSummary aspect_ratio;
  MetricSummary skew;
  double percent_sj_above_half{0.0};
  double percent_ar_below_3{0.0};
  double percent_skew_below_half{0.0};
  std::size_t inverted{0};    // scaled Jacobian <= 0
  std::size_t degenerate{0};  // zero-length edges
};

/// Aggregates per-element metrics. Histograms: SJ 20 bins on [0,1],
/// AR 20 bins on [1,5] plus overflow, skew 20 bins on [0,1].
inline QualityReport quality_report(std::span<const ElementQuality> q) {
  if (q.empty()) throw ArgumentError("quality report of an empty mesh");
  QualityReport r;
  r.element_count = q.size();
  r.scaled_jacobian.histogram = Histogram(0.0, 1.0, 20);
  r.aspect_ratio.histogram = Histogram(1.0, 5.0, 20);
  r.skew.histogram = Histogram(0.0, 1.0, 20);

  auto fold = [&](MetricSummary& m, auto get) {
    CompensatedSum sum;
    m.min = std::numeric_limits<double>::infinity();
    m.max = -std::numeric_limits<double>::infinity();
    for (const auto& e : q) {
      const double v = get(e);
      m.min = std::min(m.min, v);
      m.max = std::max(m.max, v);
      sum += v;
      m.histogram.add(v);
    }
    m.mean = sum.value() / static_cast<double>(q.size());
    if (std::isfinite(m.mean)) m.mean = std::clamp(m.mean, m.min, m.max);
  };
  fold(r.scaled_jacobian, [](const ElementQuality& e) { return e.scaled_jacobian; });
  fold(r.aspect_ratio, [](const ElementQuality& e) { return e.aspect_ratio; });
  fold(r.skew, [](const ElementQuality& e) { return e.skew; });

  std::size_t sj = 0, ar = 0, sk = 0;
  for (const auto& e : q) {
    sj += e.scaled_jacobian > 0.5 ? 1 : 0;
    ar += e.aspect_ratio < 3.0 ? 1 : 0;
    sk += e.skew < 0.5 ? 1 : 0;
    r.inverted += e.scaled_jacobian <= 0.0 ? 1 : 0;
    r.degenerate += is_degenerate_aspect(e.aspect_ratio) ? 1 : 0;
  }
  const double n = static_cast<double>(q.size());
  r.percent_sj_above_half = 100.0 * static_cast<double>(sj) / n;
  r.percent_ar_below_3 = 100.0 * static_cast<double>(ar) / n;
  r.percent_skew_below_half = 100.0 * static_cast<double>(sk) / n;
  return r;
}

inline nlohmann::json to_json(const Histogram& h) {
  return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}, {"underflow", h.underflow}, {"overflow", h.overflow}};
}

inline nlohmann::json to_json(const MetricSummary& m) {
  auto finite = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"min", finite(m.min)}, {"max", finite(m.max)}, {"mean", finite(m.mean)}, {"histogram", to_json(m.histogram)}};
}

inline nlohmann::json to_json(const QualityReport& r) {
  return {{"element_count", r.element_count},
          {"scaled_jacobian", to_json(r.scaled_jacobian)},
          {"aspect_ratio", to_json(r.aspect_ratio)},
          {"skew", to_json(r.skew)},
          {"thresholds",
           {{"percent_scaled_jacobian_gt_0.5", r.percent_sj_above_half},
            {"percent_aspect_ratio_lt_3", r.percent_ar_below_3},
            {"percent_skew_lt_0.5", r.percent_skew_below_half}}},
          {"inverted", r.inverted},
          {"degenerate", r.degenerate}};
}

inline void write_quality_csv(std::span<const ElementQuality> q, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "element,scaled_jacobian,aspect_ratio,skew\n";
  for (std::size_t i = 0; i < q.size(); ++i)
    out << i << ',' << format_double(q[i].scaled_jacobian) << ',' << format_double(q[i].aspect_ratio) << ','
        << format_double(q[i].skew) << '\n';
}

}  // namespace atlasmesh
