#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace slscan {

enum class KernelKind { independence, stationary_ar1, random_walk, custom };

inline const char* to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::independence: return "independence";
    case KernelKind::stationary_ar1: return "stationary_ar1";
    case KernelKind::random_walk: return "random_walk";
    case KernelKind::custom: return "custom";
  }
  return "unknown";
}

/**
 * Known temporal covariance shared by every sequence.
 *
 * Built-in kinds are shift invariant for the mean-difference variance: the
 * stationary kernel because it is Toeplitz, the random walk (X_0 = 0) because
 * the window weights sum to zero and only innovations inside the window
 * contribute. Custom kernels wrap a dense symmetric table indexed 1..size.
 */
class CovarianceKernel {
 public:
  static CovarianceKernel independence() { return CovarianceKernel(KernelKind::independence, 0.0, 1.0); }

  static CovarianceKernel stationary_ar1(double phi, double sigma_eps) {
    if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("stationary_ar1 requires |phi| < 1");
    if (!(sigma_eps > 0.0)) throw std::invalid_argument("stationary_ar1 requires sigma_eps > 0");
    return CovarianceKernel(KernelKind::stationary_ar1, phi, sigma_eps);
  }

  static CovarianceKernel random_walk(double sigma_eps) {
    if (!(sigma_eps > 0.0)) throw std::invalid_argument("random_walk requires sigma_eps > 0");
    return CovarianceKernel(KernelKind::random_walk, 1.0, sigma_eps);
  }

  /// Row-major size x size table; must be symmetric.
  static CovarianceKernel custom(std::vector<double> table, std::size_t size) {
    if (size == 0 || table.size() != size * size)
      throw std::invalid_argument("custom kernel table must be size x size");
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = i + 1; j < size; ++j) {
        double a = table[i * size + j];
        double b = table[j * size + i];
        if (std::abs(a - b) > 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}))
          throw std::invalid_argument("custom kernel table is not symmetric at (" + std::to_string(i + 1) +
                                      "," + std::to_string(j + 1) + ")");
      }
    }
    CovarianceKernel k(KernelKind::custom, 0.0, 1.0);
    auto data = std::make_shared<CustomTable>();
    data->size = size;
    data->values = std::move(table);
    data->row_cumsum.assign(size * (size + 1), 0.0);
    for (std::size_t i = 0; i < size; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < size; ++j) {
        acc += data->values[i * size + j];
        data->row_cumsum[i * (size + 1) + j + 1] = acc;
      }
    }
    k.custom_ = std::move(data);
    return k;
  }

  /// Materializes cov(i, j) for 1 <= i, j <= size from any callable.
  template <class Fn>
  static CovarianceKernel custom_from(Fn&& fn, std::size_t size) {
    std::vector<double> table(size * size);
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j) table[i * size + j] = fn(i + 1, j + 1);
    return custom(std::move(table), size);
  }

  KernelKind kind() const noexcept { return kind_; }
  double phi() const noexcept { return phi_; }
  double sigma_eps() const noexcept { return sigma_eps_; }
  bool shift_invariant() const noexcept { return kind_ != KernelKind::custom; }
  /// Table size for custom kernels, 0 (unbounded) otherwise.
  std::size_t size() const noexcept { return custom_ ? custom_->size : 0; }

  double operator()(std::int64_t i, std::int64_t j) const {
    if (i < 1 || j < 1) throw std::out_of_range("kernel index must be >= 1");
    switch (kind_) {
      case KernelKind::independence:
        return i == j ? 1.0 : 0.0;
      case KernelKind::stationary_ar1: {
        double lag = static_cast<double>(i > j ? i - j : j - i);
        return sigma_eps_ * sigma_eps_ * std::pow(phi_, lag) / (1.0 - phi_ * phi_);
      }
      case KernelKind::random_walk:
        return sigma_eps_ * sigma_eps_ * static_cast<double>(std::min(i, j));
      case KernelKind::custom: {
        auto n = static_cast<std::int64_t>(custom_->size);
        if (i > n || j > n)
          throw std::out_of_range("custom kernel index (" + std::to_string(i) + "," + std::to_string(j) +
                                  ") outside table of size " + std::to_string(n));
        return custom_->values[static_cast<std::size_t>(i - 1) * custom_->size + static_cast<std::size_t>(j - 1)];
      }
    }
    return 0.0;
  }

  /// Sum of cov(i, j) over rows r0+1..r1 and columns c0+1..c1 (custom only).
  double custom_block_sum(std::int64_t r0, std::int64_t r1, std::int64_t c0, std::int64_t c1) const {
    const auto& tab = *custom_;
    const std::size_t stride = tab.size + 1;
    double acc = 0.0;
    for (std::int64_t i = r0; i < r1; ++i) {
      const double* row = tab.row_cumsum.data() + static_cast<std::size_t>(i) * stride;
      acc += row[c1] - row[c0];
    }
    return acc;
  }

 private:
  struct CustomTable {
    std::size_t size = 0;
    std::vector<double> values;
    std::vector<double> row_cumsum;  // size x (size+1), row i: sum of cov(i+1, 1..j)
  };

  CovarianceKernel(KernelKind kind, double phi, double sigma_eps) : kind_(kind), phi_(phi), sigma_eps_(sigma_eps) {}

  KernelKind kind_;
  double phi_;
  double sigma_eps_;
  std::shared_ptr<const CustomTable> custom_;
};

inline double kernel_value(const CovarianceKernel& kernel, std::int64_t i, std::int64_t j) { return kernel(i, j); }

namespace detail {

// Sum_{k=0}^{m-1} phi^k.
inline double geometric_sum(double phi, std::int64_t m) {
  if (phi == 0.0) return 1.0;
  if (phi > 0.0) return -std::expm1(static_cast<double>(m) * std::log(phi)) / (1.0 - phi);
  return (1.0 - std::pow(phi, static_cast<double>(m))) / (1.0 - phi);
}

// Sum of the stationary correlation phi^|i-j| over an m x m block.
inline double ar1_block_sum(double phi, std::int64_t m) {
  const double md = static_cast<double>(m);
  if (phi == 0.0) return md;
  // m + 2 * sum_{k=1}^{m-1} (m-k) phi^k
  return md + 2.0 * phi * (md - geometric_sum(phi, m)) / (1.0 - phi);
}

inline void check_window(std::int64_t s, std::int64_t t, std::int64_t u) {
  if (s < 0) throw std::invalid_argument("window start must be >= 0");
  if (!(s < t && t < u))
    throw std::invalid_argument("degenerate window (" + std::to_string(s) + "," + std::to_string(t) + "," +
                                std::to_string(u) + "): need s < t < u");
}

}  // namespace detail

/// Variance of mean(X_{t+1..u}) - mean(X_{s+1..t}) under the kernel, as the
/// quadratic form w' Sigma w with weights -1/(t-s) left and +1/(u-t) right.
inline double mean_diff_variance(const CovarianceKernel& kernel, std::int64_t s, std::int64_t t, std::int64_t u) {
  detail::check_window(s, t, u);
  const std::int64_t left = t - s;
  const std::int64_t right = u - t;
  const double l = static_cast<double>(left);
  const double r = static_cast<double>(right);
  switch (kernel.kind()) {
    case KernelKind::independence:
      return 1.0 / l + 1.0 / r;
    case KernelKind::stationary_ar1: {
      const double phi = kernel.phi();
      const double gamma0 = kernel.sigma_eps() * kernel.sigma_eps() / (1.0 - phi * phi);
      const double cross = phi * detail::geometric_sum(phi, left) * detail::geometric_sum(phi, right);
      return gamma0 * (detail::ar1_block_sum(phi, left) / (l * l) + detail::ar1_block_sum(phi, right) / (r * r) -
                       2.0 * cross / (l * r));
    }
    case KernelKind::random_walk: {
      // Innovation j in the window enters with coefficient sum_{i >= j} w_i.
      const double var = kernel.sigma_eps() * kernel.sigma_eps();
      const double left_part = (l - 1.0) * (2.0 * l - 1.0) / (6.0 * l);
      const double right_part = (r + 1.0) * (2.0 * r + 1.0) / (6.0 * r);
      return var * (left_part + right_part);
    }
    case KernelKind::custom: {
      if (u > static_cast<std::int64_t>(kernel.size()))
        throw std::out_of_range("window end " + std::to_string(u) + " beyond custom kernel size " +
                                std::to_string(kernel.size()));
      const double sl = kernel.custom_block_sum(s, t, s, t);
      const double sr = kernel.custom_block_sum(t, u, t, u);
      const double cross = kernel.custom_block_sum(s, t, t, u);
      return sl / (l * l) + sr / (r * r) - 2.0 * cross / (l * r);
    }
  }
  return 0.0;
}

/// h^2 times the variance of adjacent length-h window means.
inline double b_of_h(const CovarianceKernel& kernel, std::int64_t h, std::int64_t length) {
  if (h < 1 || 2 * h > length)
    throw std::invalid_argument("b_of_h requires 1 <= h <= T/2 (h=" + std::to_string(h) +
                                ", T=" + std::to_string(length) + ")");
  const double hd = static_cast<double>(h);
  return hd * hd * mean_diff_variance(kernel, 0, h, 2 * h);
}

/**
 * Memo of mean-difference variances keyed by (t - s, u - t).
 *
 * Only valid for shift-invariant kernels; for custom kernels lookups bypass
 * the memo and evaluate in global coordinates. Concurrent lookups are safe.
 */
class VarianceCache {
 public:
  explicit VarianceCache(CovarianceKernel kernel) : kernel_(std::move(kernel)) {}

  const CovarianceKernel& kernel() const noexcept { return kernel_; }

  double operator()(std::int64_t s, std::int64_t t, std::int64_t u) const {
    if (!kernel_.shift_invariant()) return mean_diff_variance(kernel_, s, t, u);
    detail::check_window(s, t, u);
    const std::uint64_t key = (static_cast<std::uint64_t>(t - s) << 32) | static_cast<std::uint64_t>(u - t);
    {
      std::shared_lock lock(mutex_);
      auto it = memo_.find(key);
      if (it != memo_.end()) return it->second;
    }
    const double value = mean_diff_variance(kernel_, 0, t - s, u - s);
    std::unique_lock lock(mutex_);
    memo_.emplace(key, value);
    return value;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return memo_.size();
  }

 private:
  CovarianceKernel kernel_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::uint64_t, double> memo_;
};

// ---------------------------------------------------------------------------
// Theory diagnostics

namespace detail {
inline double rho_z_sparse_branch(double beta, double zeta) { return beta - (1.0 - zeta) / 2.0; }
inline double rho_z_dense_branch(double beta, double zeta) {
  const double d = std::sqrt(1.0 - zeta) - std::sqrt(std::max(0.0, 1.0 - zeta - beta));
  return d * d;
}
}  // namespace detail

/// Detection-boundary constant as a function of the sparsity exponent beta
/// and the log T ~ N^zeta coupling.
inline double rho_z(double beta, double zeta) {
  if (!(zeta > 0.0 && zeta < 1.0)) throw std::invalid_argument("rho_z requires 0 < zeta < 1");
  const double lo = (1.0 - zeta) / 2.0;
  const double hi = 1.0 - zeta;
  if (!(beta > lo && beta <= hi)) throw std::invalid_argument("rho_z requires (1-zeta)/2 < beta <= 1-zeta");
  if (beta <= 3.0 * (1.0 - zeta) / 4.0) return detail::rho_z_sparse_branch(beta, zeta);
  return detail::rho_z_dense_branch(beta, zeta);
}

struct TheoryParams {
  double beta = 0.0;
  double zeta = 0.5;
  double epsilon = 0.0;
  double delta = 1.0;
  std::int64_t V = 1;
};

enum class TheoryCase { sparse_i, dense_ii };

/// Window-scale threshold on h / B(h) from the two regimes of the detection
/// theorem. T and N are real so asymptotic settings can be probed directly.
inline double required_h_over_b(TheoryCase which, const TheoryParams& p, double length, double count) {
  if (!(p.delta > 0.0)) throw std::invalid_argument("delta must be > 0");
  if (!(p.epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  const double scale = 4.0 * (1.0 + p.epsilon) / (p.delta * p.delta);
  if (which == TheoryCase::sparse_i) {
    if (p.V < 1) throw std::invalid_argument("V must be >= 1");
    if (!(length > 1.0)) throw std::invalid_argument("T must be > 1");
    return scale * std::log(length) / static_cast<double>(p.V);
  }
  if (!(count > 1.0)) throw std::invalid_argument("N must be > 1");
  return scale * rho_z(p.beta, p.zeta) * std::log(count);
}

// ---------------------------------------------------------------------------
// Custom kernel files

enum class KernelFileFormat { dense, triples };

/// Dense: T rows of T comma-separated values. Triples: lines "i,j,value"
/// with 1-based indices; missing mirror entries are filled symmetrically.
inline CovarianceKernel load_custom_kernel(const std::string& path, KernelFileFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open kernel file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-numeric cell '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("kernel file " + path + " is empty");
  if (format == KernelFileFormat::dense) {
    const std::size_t n = rows.size();
    std::vector<double> table;
    table.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].size() != n)
        throw std::runtime_error(path + ": dense kernel row " + std::to_string(i + 1) + " has " +
                                 std::to_string(rows[i].size()) + " values, expected " + std::to_string(n));
      table.insert(table.end(), rows[i].begin(), rows[i].end());
    }
    return CovarianceKernel::custom(std::move(table), n);
  }
  std::map<std::pair<std::size_t, std::size_t>, double> entries;
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != 3) throw std::runtime_error(path + ": triple row " + std::to_string(r + 1) + " needs 3 fields");
    auto i = static_cast<std::int64_t>(rows[r][0]);
    auto j = static_cast<std::int64_t>(rows[r][1]);
    if (i < 1 || j < 1 || static_cast<double>(i) != rows[r][0] || static_cast<double>(j) != rows[r][1])
      throw std::runtime_error(path + ": invalid index in triple row " + std::to_string(r + 1));
    entries[{static_cast<std::size_t>(i), static_cast<std::size_t>(j)}] = rows[r][2];
    n = std::max({n, static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
  }
  std::vector<double> table(n * n, 0.0);
  for (const auto& [key, value] : entries) {
    table[(key.first - 1) * n + (key.second - 1)] = value;
    if (!entries.count({key.second, key.first})) table[(key.second - 1) * n + (key.first - 1)] = value;
  }
  return CovarianceKernel::custom(std::move(table), n);
}

}  // namespace slscan
