#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace slscan {

/// Per-time-point segment ids: label[t] counts the change-points before
/// time t (0-based t over the T points).
struct Segmentation {
  std::vector<std::int64_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Change-point tau splits after observation tau, so points tau+1.. (1-based)
/// start the next segment.
inline Segmentation segmentation_labels(std::span<const std::int64_t> change_points, std::int64_t length) {
  if (length < 1) throw std::invalid_argument("segmentation needs T >= 1");
  for (std::size_t i = 0; i < change_points.size(); ++i) {
    const auto cp = change_points[i];
    if (cp <= 0 || cp >= length)
      throw std::invalid_argument("change-point " + std::to_string(cp) + " outside (0, " + std::to_string(length) + ")");
    if (i > 0 && cp <= change_points[i - 1]) throw std::invalid_argument("change-points must be sorted and distinct");
  }
  Segmentation seg;
  seg.labels.resize(static_cast<std::size_t>(length));
  std::size_t next = 0;
  std::int64_t label = 0;
  for (std::int64_t t = 0; t < length; ++t) {
    while (next < change_points.size() && change_points[next] <= t) {
      ++label;
      ++next;
    }
    seg.labels[static_cast<std::size_t>(t)] = label;
  }
  return seg;
}

namespace detail {

struct PairCounts {
  // All quantities are pair counts C(n, 2) summed as exact integers.
  __int128 index = 0;  // sum over cells
  __int128 rows = 0;
  __int128 cols = 0;
  __int128 total = 0;
};

inline __int128 choose2(std::int64_t n) { return static_cast<__int128>(n) * (n - 1) / 2; }

inline PairCounts pair_counts(const Segmentation& a, const Segmentation& b) {
  if (a.size() != b.size()) throw std::invalid_argument("segmentations differ in length");
  if (a.size() < 2) throw std::invalid_argument("Rand index needs T >= 2");
  std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> cells;
  std::map<std::int64_t, std::int64_t> row_sizes, col_sizes;
  for (std::size_t t = 0; t < a.size(); ++t) {
    ++cells[{a.labels[t], b.labels[t]}];
    ++row_sizes[a.labels[t]];
    ++col_sizes[b.labels[t]];
  }
  PairCounts pc;
  for (const auto& [key, n] : cells) pc.index += choose2(n);
  for (const auto& [key, n] : row_sizes) pc.rows += choose2(n);
  for (const auto& [key, n] : col_sizes) pc.cols += choose2(n);
  pc.total = choose2(static_cast<std::int64_t>(a.size()));
  return pc;
}

}  // namespace detail

/// Hubert-Arabie adjusted Rand index. Scaled by 2 C(T,2) so numerator and
/// denominator are exact integers before the final division.
inline double adjusted_rand_index(const Segmentation& a, const Segmentation& b) {
  const auto pc = detail::pair_counts(a, b);
  const __int128 num = 2 * pc.index * pc.total - 2 * pc.rows * pc.cols;
  const __int128 den = (pc.rows + pc.cols) * pc.total - 2 * pc.rows * pc.cols;
  if (den == 0) return 1.0;  // both partitions trivial in the same way
  return static_cast<double>(num) / static_cast<double>(den);
}

/// Unadjusted Rand index, for debugging.
inline double rand_index(const Segmentation& a, const Segmentation& b) {
  const auto pc = detail::pair_counts(a, b);
  const __int128 agree = pc.total + 2 * pc.index - pc.rows - pc.cols;
  return static_cast<double>(agree) / static_cast<double>(pc.total);
}

inline double hit_rate(std::span<const std::optional<std::int64_t>> estimates, std::int64_t truth, double k) {
  if (!(k >= 0.0)) throw std::invalid_argument("hit_rate tolerance must be >= 0");
  if (estimates.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& e : estimates)
    if (e && std::abs(static_cast<double>(*e - truth)) <= k) ++hits;
  return static_cast<double>(hits) / static_cast<double>(estimates.size());
}

/// Detection nearest to target (earlier one on ties), or none.
inline std::optional<std::int64_t> nearest(std::span<const std::int64_t> detections, std::int64_t target) {
  std::optional<std::int64_t> best;
  for (auto d : detections) {
    if (!best || std::llabs(d - target) < std::llabs(*best - target)) best = d;
  }
  return best;
}

/// Distribution of estimated change-point counts over replicates with
/// columns 2..6 plus under/overflow bins, and the mean ARI.
struct CountHistogram {
  static constexpr std::int64_t kLow = 2;
  static constexpr std::int64_t kHigh = 6;

  std::size_t below = 0;  // fewer than 2
  std::vector<std::size_t> bins = std::vector<std::size_t>(kHigh - kLow + 1, 0);
  std::size_t above = 0;  // more than 6
  double mean_ari = 0.0;
  std::size_t replicates = 0;

  std::size_t count(std::int64_t j) const {
    if (j < kLow || j > kHigh) throw std::out_of_range("bin outside 2..6");
    return bins[static_cast<std::size_t>(j - kLow)];
  }
};

inline CountHistogram count_histogram(std::span<const std::size_t> counts, std::span<const double> aris) {
  if (!aris.empty() && aris.size() != counts.size())
    throw std::invalid_argument("count_histogram: ARI list must match the count list");
  CountHistogram hist;
  hist.replicates = counts.size();
  for (auto c : counts) {
    const auto j = static_cast<std::int64_t>(c);
    if (j < CountHistogram::kLow)
      ++hist.below;
    else if (j > CountHistogram::kHigh)
      ++hist.above;
    else
      ++hist.bins[static_cast<std::size_t>(j - CountHistogram::kLow)];
  }
  double sum = 0.0;
  for (double a : aris) sum += a;
  hist.mean_ari = aris.empty() ? 0.0 : sum / static_cast<double>(aris.size());
  return hist;
}

}  // namespace slscan
