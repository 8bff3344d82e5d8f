#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "slscan/covariance.hpp"

namespace slscan {

/**
 * N sequences by T time points with cumulative sums.
 *
 * Observations are stored sequence-major; prefix sums are stored time-major
 * so that the N values needed for one window sit contiguously. prefix(n, t)
 * is the left-to-right sum of the first t observations of sequence n.
 */
class SeriesMatrix {
 public:
  SeriesMatrix() = default;

  /// values holds sequence n at [n*T, (n+1)*T).
  SeriesMatrix(std::vector<double> values, std::size_t sequences, std::size_t length)
      : values_(std::move(values)), n_(sequences), t_(length) {
    if (n_ < 1) throw std::invalid_argument("SeriesMatrix needs at least one sequence");
    if (t_ < 2) throw std::invalid_argument("SeriesMatrix needs at least two time points");
    if (values_.size() != n_ * t_) throw std::invalid_argument("SeriesMatrix value count does not match N x T");
    prefix_.assign((t_ + 1) * n_, 0.0);
    for (std::size_t n = 0; n < n_; ++n) {
      double acc = 0.0;
      const double* row = values_.data() + n * t_;
      for (std::size_t t = 0; t < t_; ++t) {
        acc += row[t];
        prefix_[(t + 1) * n_ + n] = acc;
      }
    }
  }

  static SeriesMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("SeriesMatrix needs at least one sequence");
    const std::size_t length = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * length);
    for (const auto& r : rows) {
      if (r.size() != length) throw std::invalid_argument("SeriesMatrix rows must share one length");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return SeriesMatrix(std::move(flat), rows.size(), length);
  }

  std::size_t sequences() const noexcept { return n_; }
  std::size_t length() const noexcept { return t_; }

  std::span<const double> row(std::size_t n) const { return {values_.data() + n * t_, t_}; }
  const std::vector<double>& values() const noexcept { return values_; }

  double prefix(std::size_t n, std::size_t t) const { return prefix_[t * n_ + n]; }
  /// All N prefix sums at time t.
  const double* prefix_row(std::size_t t) const { return prefix_.data() + t * n_; }

 private:
  std::vector<double> values_;
  std::vector<double> prefix_;
  std::size_t n_ = 0;
  std::size_t t_ = 0;
};

struct WindowTriple {
  std::int64_t s = 0;
  std::int64_t t = 0;
  std::int64_t u = 0;
};

inline void check_triple(const WindowTriple& w, std::int64_t length) {
  if (!(0 <= w.s && w.s < w.t && w.t < w.u && w.u <= length))
    throw std::invalid_argument("invalid window triple (" + std::to_string(w.s) + "," + std::to_string(w.t) + "," +
                                std::to_string(w.u) + ") for length " + std::to_string(length));
}

/// Mean of observations a+1..b of sequence n.
inline double window_mean(const SeriesMatrix& m, std::size_t n, std::int64_t a, std::int64_t b) {
  if (!(0 <= a && a < b && static_cast<std::size_t>(b) <= m.length()))
    throw std::invalid_argument("empty or out-of-range window");
  if (n >= m.sequences()) throw std::out_of_range("sequence index out of range");
  return (m.prefix(n, static_cast<std::size_t>(b)) - m.prefix(n, static_cast<std::size_t>(a))) /
         static_cast<double>(b - a);
}

inline double z_statistic(const SeriesMatrix& m, std::size_t n, const CovarianceKernel& kernel, const WindowTriple& w) {
  check_triple(w, static_cast<std::int64_t>(m.length()));
  const double var = mean_diff_variance(kernel, w.s, w.t, w.u);
  if (!(var > 0.0)) throw std::domain_error("nonpositive mean-difference variance; kernel is defective");
  return (window_mean(m, n, w.t, w.u) - window_mean(m, n, w.s, w.t)) / std::sqrt(var);
}

// ---------------------------------------------------------------------------
// Two-sided normal p-values in log space

namespace detail {
constexpr double kTailSwitch = 37.0;
}

/// log(2 Phi(-|z|)). Uses erfc up to |z| = 37 and the asymptotic Mills-ratio
/// series beyond, where the p-value itself would underflow.
inline double log_p_value(double z) {
  if (!std::isfinite(z)) throw std::domain_error("log_p_value requires finite z");
  const double x = std::abs(z);
  if (x <= detail::kTailSwitch) return std::log(std::erfc(x / std::numbers::sqrt2));
  // 2 phi(x)/x * (1 - 1/x^2 + 3/x^4 - 15/x^6 + ...); truncation error < 2e-15 at x = 37.
  const double inv2 = 1.0 / (x * x);
  double term = 1.0;
  double series = 0.0;
  for (int k = 1; k <= 6; ++k) {
    term *= -static_cast<double>(2 * k - 1) * inv2;
    series += term;
  }
  return std::numbers::ln2 - 0.5 * x * x - std::log(x) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log1p(series);
}

inline double f1(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::domain_error("f1 requires 0 < p <= 1");
  const double lp = std::log(p);
  return 1.0 / (p * (2.0 - lp) * (2.0 - lp)) - 0.5;
}

inline double f2(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::domain_error("f2 requires 0 < p <= 1");
  return 1.0 / std::sqrt(p) - 2.0;
}

/// f1 and f2 from log p, for p too small to pass directly. Overflow to +inf
/// is possible once log p < -709.
inline double f1_log(double log_p) {
  if (!(log_p <= 0.0)) throw std::domain_error("f1_log requires log p <= 0");
  return std::exp(-log_p) / ((2.0 - log_p) * (2.0 - log_p)) - 0.5;
}

inline double f2_log(double log_p) {
  if (!(log_p <= 0.0)) throw std::domain_error("f2_log requires log p <= 0");
  return std::exp(-0.5 * log_p) - 2.0;
}

// ---------------------------------------------------------------------------
// Sparsity likelihood

struct SparsityParams {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::size_t N = 1;

  void validate() const {
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) throw std::invalid_argument("lambda1 must be >= 0");
    if (!(lambda2 > 0.0) || !std::isfinite(lambda2)) throw std::invalid_argument("lambda2 must be > 0");
    if (N < 2) throw std::invalid_argument("N must be >= 2 (log N appears in a denominator)");
  }
  /// lambda2 above sqrt(N) is outside the range the score theory covers.
  bool lambda2_in_range() const { return lambda2 <= std::sqrt(static_cast<double>(N)); }
};

/// Count of score terms whose log argument was nonpositive and got floored.
struct GuardCounter {
  std::uint64_t floored = 0;
};

/**
 * Per-sequence score term l(p) with the coefficients for a fixed (lambda1,
 * lambda2, N) folded in. Works from log p so that p-values far below the
 * double range still produce finite, exact-formula scores.
 */
class SlTransform {
 public:
  static constexpr double kFloor = -23.025850929940457;  // log(1e-10)

  explicit SlTransform(const SparsityParams& params) {
    params.validate();
    const double n = static_cast<double>(params.N);
    const double log_n = std::log(n);
    a1_ = params.lambda1 * log_n / n;
    a2_ = params.lambda2 / std::sqrt(n * log_n);
    log_a1_ = a1_ > 0.0 ? std::log(a1_) : -std::numeric_limits<double>::infinity();
    log_a2_ = std::log(a2_);
    constant_ = 1.0 - 0.5 * a1_ - 2.0 * a2_;
  }

  double coefficient1() const noexcept { return a1_; }
  double coefficient2() const noexcept { return a2_; }

  double operator()(double log_p, GuardCounter* guard = nullptr) const {
    if (log_p > 0.0) log_p = 0.0;
    if (log_p >= kDirectLimit) return direct(std::exp(log_p), log_p, guard);
    return deep_tail(log_p, guard);
  }

  /// l(p) for p = 2 Phi(-|z|); same value as operator()(log_p_value(z)) up
  /// to rounding, without the round trip through exp.
  double from_z(double z, GuardCounter* guard = nullptr) const {
    const double x = std::abs(z);
    if (x <= detail::kTailSwitch) {
      const double p = std::erfc(x / std::numbers::sqrt2);
      return direct(p, std::log(p), guard);
    }
    return deep_tail(log_p_value(x), guard);
  }

 private:
  static constexpr double kDirectLimit = -690.0;  // p >= ~3.5e-300, 1/p still finite

  double direct(double p, double log_p, GuardCounter* guard) const {
    const double q = 2.0 - log_p;
    const double arg = 1.0 + a1_ * (1.0 / (p * q * q) - 0.5) + a2_ * (1.0 / std::sqrt(p) - 2.0);
    if (!(arg > 0.0)) return floored(guard);
    return std::log(arg);
  }

  // Same formula rearranged as log(e^L1 + e^L2 + constant), with L1 and L2 the
  // logs of the p^-1 and p^-1/2 parts, which dominate once p is this small.
  double deep_tail(double log_p, GuardCounter* guard) const {
    const double l1 = log_a1_ - log_p - 2.0 * std::log(2.0 - log_p);
    const double l2 = log_a2_ - 0.5 * log_p;
    const double top = l1 > l2 ? l1 : l2;
    const double rest = std::exp(l1 - top) + std::exp(l2 - top) + constant_ * std::exp(-top);
    if (!(rest > 0.0)) return floored(guard);
    return top + std::log(rest);
  }

  static double floored(GuardCounter* guard) {
    if (guard) ++guard->floored;
    return kFloor;
  }

  double a1_ = 0.0;
  double a2_ = 0.0;
  double log_a1_ = 0.0;
  double log_a2_ = 0.0;
  double constant_ = 1.0;
};

inline double sl_term(double log_p, const SparsityParams& params) {
  if (log_p > 0.0 || std::isnan(log_p)) throw std::domain_error("sl_term requires log p <= 0");
  return SlTransform(params)(log_p);
}

inline double sl_score(std::span<const double> log_p, const SparsityParams& params, GuardCounter* guard = nullptr) {
  if (log_p.size() != params.N)
    throw std::invalid_argument("sl_score expects " + std::to_string(params.N) + " log p-values, got " +
                                std::to_string(log_p.size()));
  const SlTransform transform(params);
  double total = 0.0;
  for (double lp : log_p) total += transform(lp, guard);
  return total;
}

/// log((T/4)(1/(t-s) + 1/(u-t))), evaluated as log(T(L+R)/(4LR)) so balanced
/// full-span windows give exactly zero.
inline double multiscale_penalty(std::int64_t length, std::int64_t left, std::int64_t right) {
  const double l = static_cast<double>(left);
  const double r = static_cast<double>(right);
  return std::log(static_cast<double>(length) * (l + r) / (4.0 * l * r));
}

inline double penalized_score(double score, std::int64_t length, const WindowTriple& w) {
  check_triple(w, length);
  return score - multiscale_penalty(length, w.t - w.s, w.u - w.t);
}

/// sqrt(log T / log log T) with natural logs.
inline double default_lambda2(double length) {
  if (!(length > std::numbers::e)) throw std::invalid_argument("default_lambda2 requires T > e");
  const double lt = std::log(length);
  return std::sqrt(lt / std::log(lt));
}

}  // namespace slscan
