#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slscan/covariance.hpp"
#include "slscan/parallel.hpp"
#include "slscan/scoring.hpp"
#include "slscan/windows.hpp"

namespace slscan {

struct DetectionConfig {
  double threshold = std::numeric_limits<double>::quiet_NaN();
  std::int64_t i0 = 1;
  SparsityParams params;
  CovarianceKernel kernel = CovarianceKernel::independence();
  WindowSchedule schedule;

  void validate(const SeriesMatrix& data) const {
    if (!std::isfinite(threshold)) throw std::invalid_argument("detection threshold c must be finite");
    if (i0 < 1) throw std::invalid_argument("i0 must be >= 1");
    params.validate();
    if (params.N != data.sequences())
      throw std::invalid_argument("sparsity params N=" + std::to_string(params.N) + " but data has " +
                                  std::to_string(data.sequences()) + " sequences");
    if (schedule.scales() == 0) throw std::invalid_argument("empty window schedule");
    if (!kernel.shift_invariant() && kernel.size() < data.length())
      throw std::invalid_argument("custom kernel smaller than the data length");
  }
};

/// Typical configuration: lambda1 = 1, lambda2 = sqrt(log T / log log T),
/// experimental schedule with growth 1.1.
inline DetectionConfig make_config(std::size_t sequences, std::size_t length, double threshold,
                                   CovarianceKernel kernel) {
  DetectionConfig cfg;
  cfg.threshold = threshold;
  cfg.params.lambda1 = 1.0;
  cfg.params.lambda2 = default_lambda2(static_cast<double>(length));
  cfg.params.N = sequences;
  cfg.kernel = std::move(kernel);
  cfg.schedule = build_schedule(static_cast<std::int64_t>(length));
  return cfg;
}

struct Detection {
  std::int64_t tau = 0;
  std::int64_t scale = 0;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct DetectionDiagnostics {
  std::uint64_t scan_triples = 0;
  std::uint64_t refine_triples = 0;
  std::uint64_t guard_floored = 0;
  std::uint64_t segments = 0;
  std::uint64_t max_depth = 0;

  void merge(const DetectionDiagnostics& o) {
    scan_triples += o.scan_triples;
    refine_triples += o.refine_triples;
    guard_floored += o.guard_floored;
    segments += o.segments;
    max_depth = std::max(max_depth, o.max_depth);
  }
};

struct ChangePointReport {
  std::vector<Detection> detections;
  DetectionConfig config;
  DetectionDiagnostics diagnostics;
  std::size_t sequences = 0;
  std::size_t length = 0;

  std::vector<std::int64_t> locations() const {
    std::vector<std::int64_t> out;
    out.reserve(detections.size());
    for (const auto& d : detections) out.push_back(d.tau);
    return out;
  }
};

struct ScaleMax {
  double score = -std::numeric_limits<double>::infinity();
  std::int64_t k = 0;  // 0 when the approximating set is empty
};

/**
 * Evaluates penalized scores for the segment X_{b..e} (1-based, inclusive).
 *
 * Triples are in local coordinates 0..g; observation local j is global
 * j + b - 1. The penalty uses the full data length T.
 */
class SegmentScorer {
 public:
  SegmentScorer(const SeriesMatrix& data, const DetectionConfig& cfg, const VarianceCache& cache, std::int64_t b,
                std::int64_t e)
      : data_(data), cfg_(cfg), cache_(cache), transform_(cfg.params), base_(b - 1), g_(e - b + 1),
        length_(static_cast<std::int64_t>(data.length())) {
    if (!(1 <= b && b <= e && e <= length_))
      throw std::invalid_argument("segment (" + std::to_string(b) + "," + std::to_string(e) + ") out of range");
  }

  std::int64_t segment_length() const noexcept { return g_; }
  std::int64_t offset() const noexcept { return base_; }

  /// Unpenalized sparsity likelihood of the local triple.
  double score(std::int64_t s, std::int64_t t, std::int64_t u, GuardCounter* guard) const {
    const double var = cfg_.kernel.shift_invariant() ? cache_(s, t, u)
                                                     : mean_diff_variance(cfg_.kernel, s + base_, t + base_, u + base_);
    if (!(var > 0.0)) throw std::domain_error("nonpositive mean-difference variance; kernel is defective");
    const double sd = std::sqrt(var);
    const double left = static_cast<double>(t - s);
    const double right = static_cast<double>(u - t);
    const double* ps = data_.prefix_row(static_cast<std::size_t>(s + base_));
    const double* pt = data_.prefix_row(static_cast<std::size_t>(t + base_));
    const double* pu = data_.prefix_row(static_cast<std::size_t>(u + base_));
    const std::size_t n_seq = data_.sequences();
    double total = 0.0;
    for (std::size_t n = 0; n < n_seq; ++n) {
      const double z = ((pu[n] - pt[n]) / right - (pt[n] - ps[n]) / left) / sd;
      total += transform_.from_z(z, guard);
    }
    return total;
  }

  double penalized(std::int64_t s, std::int64_t t, std::int64_t u, GuardCounter* guard) const {
    return score(s, t, u, guard) - multiscale_penalty(length_, t - s, u - t);
  }

 private:
  const SeriesMatrix& data_;
  const DetectionConfig& cfg_;
  const VarianceCache& cache_;
  SlTransform transform_;
  std::int64_t base_;
  std::int64_t g_;
  std::int64_t length_;
};

namespace detail {

struct ChunkBest {
  double score = -std::numeric_limits<double>::infinity();
  std::int64_t arg = 0;
  GuardCounter guard;
};

// max over arg in [first, last] of eval(arg), smallest arg on ties; chunks
// are reduced in order so the result matches a sequential loop.
template <class Eval>
ChunkBest argmax_range(std::int64_t first, std::int64_t last, const Eval& eval) {
  ChunkBest best;
  if (last < first) return best;
  const auto count = static_cast<std::size_t>(last - first + 1);
  std::vector<ChunkBest> partial(chunk_count(count));
  parallel_chunks(count, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    ChunkBest local;
    for (std::size_t idx = begin; idx < end; ++idx) {
      const std::int64_t arg = first + static_cast<std::int64_t>(idx);
      const double v = eval(arg, &local.guard);
      if (local.arg == 0 || v > local.score) {
        local.score = v;
        local.arg = arg;
      }
    }
    partial[chunk] = local;
  });
  for (const auto& p : partial) {
    best.guard.floored += p.guard.floored;
    if (p.arg != 0 && (best.arg == 0 || p.score > best.score)) {
      best.score = p.score;
      best.arg = p.arg;
    }
  }
  return best;
}

}  // namespace detail

/// Maximum penalized score over A_i(g) for the segment, smallest k on ties.
inline ScaleMax scan_scale(const SegmentScorer& scorer, const WindowSchedule& schedule, std::int64_t i,
                           DetectionDiagnostics* diag = nullptr) {
  const std::int64_t g = scorer.segment_length();
  const std::int64_t count = offset_count(schedule, i, g);
  if (count <= 0) return {};
  const std::int64_t h = schedule.window(i);
  const std::int64_t d = schedule.spacing(i);
  auto best = detail::argmax_range(1, count, [&](std::int64_t k, GuardCounter* guard) {
    const std::int64_t t = k * d;
    const std::int64_t s = t - h > 0 ? t - h : 0;
    const std::int64_t u = t + h < g ? t + h : g;
    return scorer.penalized(s, t, u, guard);
  });
  if (diag) {
    diag->scan_triples += static_cast<std::uint64_t>(count);
    diag->guard_floored += best.guard.floored;
  }
  return {best.score, best.arg};
}

inline ScaleMax scan_scale(const SeriesMatrix& data, const DetectionConfig& cfg, std::int64_t i, std::int64_t b,
                           std::int64_t e) {
  cfg.validate(data);
  const VarianceCache cache(cfg.kernel);
  const SegmentScorer scorer(data, cfg, cache, b, e);
  return scan_scale(scorer, cfg.schedule, i);
}

/// One step of the two-step procedure on X_{b..e}: scan scales i0..i_g,
/// stop at the first scale whose maximum reaches c, then refine the change
/// location over the interior of the firing window.
inline std::optional<Detection> sl_estimate(const SeriesMatrix& data, const DetectionConfig& cfg,
                                            const VarianceCache& cache, std::int64_t i0, std::int64_t b,
                                            std::int64_t e, DetectionDiagnostics* diag = nullptr) {
  if (i0 < 1) throw std::invalid_argument("i0 must be >= 1");
  if (b >= e) return std::nullopt;
  const SegmentScorer scorer(data, cfg, cache, b, e);
  const std::int64_t g = scorer.segment_length();
  const std::int64_t top = max_scale(cfg.schedule, g);
  for (std::int64_t i = i0; i <= top; ++i) {
    const ScaleMax best = scan_scale(scorer, cfg.schedule, i, diag);
    if (best.k == 0 || !(best.score >= cfg.threshold)) continue;
    const ScanTriple fired = scan_triple(cfg.schedule, i, best.k, g);
    auto refined = detail::argmax_range(fired.s + 1, fired.u - 1, [&](std::int64_t t, GuardCounter* guard) {
      return scorer.penalized(fired.s, t, fired.u, guard);
    });
    if (diag) {
      diag->refine_triples += static_cast<std::uint64_t>(fired.u - fired.s - 1);
      diag->guard_floored += refined.guard.floored;
    }
    return Detection{refined.arg + b - 1, i, refined.score};
  }
  return std::nullopt;
}

inline std::optional<Detection> sl_estimate(const SeriesMatrix& data, const DetectionConfig& cfg, std::int64_t i0,
                                            std::int64_t b, std::int64_t e) {
  cfg.validate(data);
  const VarianceCache cache(cfg.kernel);
  return sl_estimate(data, cfg, cache, i0, b, e);
}

/// Recursive segmentation from (c, i0, 1, T). Children of a detection at tau
/// are (b, tau) and (tau + 1, e), both starting at the firing scale.
inline ChangePointReport sl_detect(const SeriesMatrix& data, const DetectionConfig& cfg) {
  cfg.validate(data);
  ChangePointReport report;
  report.config = cfg;
  report.sequences = data.sequences();
  report.length = data.length();
  const VarianceCache cache(cfg.kernel);

  struct Segment {
    std::int64_t i0, b, e;
    std::uint64_t depth;
  };
  std::vector<Segment> stack{{cfg.i0, 1, static_cast<std::int64_t>(data.length()), 1}};
  while (!stack.empty()) {
    const Segment seg = stack.back();
    stack.pop_back();
    ++report.diagnostics.segments;
    report.diagnostics.max_depth = std::max(report.diagnostics.max_depth, seg.depth);
    auto found = sl_estimate(data, cfg, cache, seg.i0, seg.b, seg.e, &report.diagnostics);
    if (!found) continue;
    if (!(seg.b <= found->tau && found->tau < seg.e)) throw std::logic_error("detection outside its segment");
    report.detections.push_back(*found);
    // Right pushed first so the left child is processed first.
    stack.push_back({found->scale, found->tau + 1, seg.e, seg.depth + 1});
    stack.push_back({found->scale, seg.b, found->tau, seg.depth + 1});
  }
  std::sort(report.detections.begin(), report.detections.end(),
            [](const Detection& a, const Detection& b) { return a.tau < b.tau; });
  return report;
}

/// Largest penalized score over every scale and triple of the first pass on
/// the full range. A first pass fires at threshold c iff this is >= c.
inline double first_pass_max(const SeriesMatrix& data, const DetectionConfig& cfg,
                             DetectionDiagnostics* diag = nullptr) {
  cfg.validate(data);
  const VarianceCache cache(cfg.kernel);
  const SegmentScorer scorer(data, cfg, cache, 1, static_cast<std::int64_t>(data.length()));
  const std::int64_t top = max_scale(cfg.schedule, scorer.segment_length());
  double best = -std::numeric_limits<double>::infinity();
  for (std::int64_t i = cfg.i0; i <= top; ++i) best = std::max(best, scan_scale(scorer, cfg.schedule, i, diag).score);
  return best;
}

}  // namespace slscan
