#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace slscan {

enum class ScheduleKind { experimental, theory };

inline const char* to_string(ScheduleKind kind) {
  return kind == ScheduleKind::experimental ? "experimental" : "theory";
}

/// Window lengths h_i and grid spacings d_i, scale index i starting at 1.
/// Entry i lives at position i-1.
struct WindowSchedule {
  std::vector<std::int64_t> h;
  std::vector<std::int64_t> d;
  double growth = 1.1;
  ScheduleKind kind = ScheduleKind::experimental;
  /// Largest admissible scale for the length the schedule was built for.
  std::int64_t i_T = 0;

  std::size_t scales() const noexcept { return h.size(); }
  std::int64_t window(std::int64_t i) const { return h.at(static_cast<std::size_t>(i - 1)); }
  std::int64_t spacing(std::int64_t i) const { return d.at(static_cast<std::size_t>(i - 1)); }
};

struct ScanTriple {
  std::int64_t s = 0;
  std::int64_t t = 0;
  std::int64_t u = 0;
  std::int64_t scale = 0;
  std::int64_t offset = 0;

  friend bool operator==(const ScanTriple&, const ScanTriple&) = default;
};

/// i_g = max{i : h_i + d_i <= g}, or 0 when no scale fits.
inline std::int64_t max_scale(const WindowSchedule& schedule, std::int64_t g) {
  std::int64_t best = 0;
  for (std::size_t k = 0; k < schedule.h.size(); ++k)
    if (schedule.h[k] + schedule.d[k] <= g) best = static_cast<std::int64_t>(k) + 1;
  return best;
}

namespace detail {
// ceil(growth * h), treating products within 1e-9 relative of an integer as
// that integer so that decimal growth factors behave like exact rationals.
inline std::int64_t grow(std::int64_t h, double growth) {
  const double x = growth * static_cast<double>(h);
  const double r = std::round(x);
  std::int64_t next = std::abs(x - r) <= 1e-9 * x ? static_cast<std::int64_t>(r) : static_cast<std::int64_t>(std::ceil(x));
  return next > h ? next : h + 1;
}
}  // namespace detail

/// h_1 = 1, h_{i+1} = ceil(growth * h_i), d_i = floor(h_i / i); scales are
/// generated while h_i <= T.
inline WindowSchedule build_schedule(std::int64_t length, double growth = 1.1) {
  if (length < 2) throw std::invalid_argument("build_schedule requires T >= 2");
  if (!(growth > 1.0) || !std::isfinite(growth)) throw std::invalid_argument("build_schedule requires growth > 1");
  WindowSchedule schedule;
  schedule.growth = growth;
  schedule.kind = ScheduleKind::experimental;
  std::int64_t h = 1;
  for (std::int64_t i = 1; h <= length; ++i) {
    const std::int64_t d = h / i;
    if (d < 1) throw std::logic_error("schedule produced d_i = 0; growth too small for h_i >= i");
    schedule.h.push_back(h);
    schedule.d.push_back(d);
    h = detail::grow(h, growth);
  }
  schedule.i_T = max_scale(schedule, length);
  return schedule;
}

/// h_1 = 1, h_i = ceil(exp(i / log i)) for i >= 2, d_i = max(1, floor(h_i / i)).
/// h is forced strictly increasing (exp(i / log i) dips between i = 2 and 3).
inline WindowSchedule theory_schedule(std::int64_t i_max) {
  if (i_max < 2) throw std::invalid_argument("theory_schedule requires i_max >= 2");
  WindowSchedule schedule;
  schedule.kind = ScheduleKind::theory;
  schedule.growth = 0.0;
  for (std::int64_t i = 1; i <= i_max; ++i) {
    std::int64_t h = 1;
    if (i >= 2) {
      const double x = std::exp(static_cast<double>(i) / std::log(static_cast<double>(i)));
      if (!(x < 4e18)) throw std::overflow_error("theory_schedule window length overflows at i=" + std::to_string(i));
      h = static_cast<std::int64_t>(std::ceil(x));
      if (h <= schedule.h.back()) h = schedule.h.back() + 1;
    }
    schedule.h.push_back(h);
    schedule.d.push_back(std::max<std::int64_t>(1, h / i));
  }
  schedule.i_T = max_scale(schedule, std::numeric_limits<std::int64_t>::max() / 4);
  return schedule;
}

/// Theory schedule truncated to the scales whose window length fits in T.
inline WindowSchedule theory_schedule_for(std::int64_t length) {
  if (length < 2) throw std::invalid_argument("theory_schedule_for requires T >= 2");
  std::int64_t i_max = 2;
  while (i_max < 200) {
    const double x = std::exp(static_cast<double>(i_max + 1) / std::log(static_cast<double>(i_max + 1)));
    if (x > static_cast<double>(length)) break;
    ++i_max;
  }
  WindowSchedule schedule = theory_schedule(i_max);
  schedule.i_T = max_scale(schedule, length);
  return schedule;
}

/// K_i(g) = floor((g - 1) / d_i).
inline std::int64_t offset_count(const WindowSchedule& schedule, std::int64_t i, std::int64_t g) {
  if (g < 1) return 0;
  return (g - 1) / schedule.spacing(i);
}

inline ScanTriple scan_triple(const WindowSchedule& schedule, std::int64_t i, std::int64_t k, std::int64_t g) {
  const std::int64_t h = schedule.window(i);
  const std::int64_t t = k * schedule.spacing(i);
  return ScanTriple{t - h > 0 ? t - h : 0, t, t + h < g ? t + h : g, i, k};
}

/// A_i(g): triples (max(0, k d_i - h_i), k d_i, min(k d_i + h_i, g)) for
/// 1 <= k <= K_i(g). Degenerate triples cannot arise because k d_i <= g - 1.
inline std::vector<ScanTriple> approximating_set(const WindowSchedule& schedule, std::int64_t i, std::int64_t g) {
  if (i < 1 || static_cast<std::size_t>(i) > schedule.scales())
    throw std::out_of_range("scale " + std::to_string(i) + " not in schedule");
  std::vector<ScanTriple> out;
  const std::int64_t count = offset_count(schedule, i, g);
  out.reserve(static_cast<std::size_t>(count > 0 ? count : 0));
  for (std::int64_t k = 1; k <= count; ++k) {
    ScanTriple tr = scan_triple(schedule, i, k, g);
    if (!(tr.s < tr.t && tr.t < tr.u)) throw std::logic_error("degenerate triple in approximating set");
    out.push_back(tr);
  }
  return out;
}

}  // namespace slscan
