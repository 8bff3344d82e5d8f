#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "slscan/scoring.hpp"
#include "slscan/simulation.hpp"

namespace slscan {

/// Malformed or unusable input data (as opposed to a usage error).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CsvLayout { rows_are_time, rows_are_series };

struct CsvOptions {
  CsvLayout layout = CsvLayout::rows_are_time;
  bool header = true;
  std::size_t skip_columns = 0;  // leading columns ignored (dates, labels)
  bool drop_missing = false;     // drop time points with gaps instead of failing
};

struct Dataset {
  std::vector<std::string> names;
  std::vector<std::vector<double>> series;  // N sequences of length T
  std::vector<std::string> provenance{"raw"};

  std::size_t sequences() const noexcept { return series.size(); }
  std::size_t length() const noexcept { return series.empty() ? 0 : series.front().size(); }

  SeriesMatrix matrix() const {
    if (series.empty()) throw DataError("dataset has no sequences");
    return SeriesMatrix::from_rows(series);
  }
};

namespace detail {

inline std::string trim_cell(std::string s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    if (ch == ',' && !quoted) {
      out.push_back(trim_cell(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  out.push_back(trim_cell(cell));
  return out;
}

inline bool is_missing(const std::string& cell) {
  if (cell.empty()) return true;
  std::string low;
  for (char c : cell) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return low == "na" || low == "nan" || low == "null";
}

}  // namespace detail

/// Reads a numeric CSV. Missing cells (empty, NA, NaN) mark their time point
/// as a gap: an error by default, dropped with drop_missing.
inline Dataset read_csv(std::istream& in, const CsvOptions& opt, const std::string& source = "<input>") {
  std::vector<std::vector<double>> rows;
  std::vector<std::string> header;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim_cell(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() <= opt.skip_columns)
      throw DataError(source + ":" + std::to_string(lineno) + ": no data columns after skipping " +
                      std::to_string(opt.skip_columns));
    cells.erase(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(opt.skip_columns));
    if (first) {
      width = cells.size();
      first = false;
      if (opt.header) {
        header = cells;
        continue;
      }
    }
    if (cells.size() != width)
      throw DataError(source + ":" + std::to_string(lineno) + ": ragged row with " + std::to_string(cells.size()) +
                      " fields, expected " + std::to_string(width));
    std::vector<double> row;
    row.reserve(width);
    for (const auto& cell : cells) {
      if (detail::is_missing(cell)) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        throw DataError(source + ":" + std::to_string(lineno) + ": non-numeric cell '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(source + ": no data rows");

  Dataset ds;
  if (opt.layout == CsvLayout::rows_are_time) {
    ds.series.assign(width, {});
    for (const auto& r : rows)
      for (std::size_t c = 0; c < width; ++c) ds.series[c].push_back(r[c]);
    if (opt.header) ds.names = header;
  } else {
    ds.series = rows;
  }
  if (ds.names.empty())
    for (std::size_t n = 0; n < ds.series.size(); ++n) ds.names.push_back("s" + std::to_string(n + 1));

  // Gaps are per time point across all sequences.
  const std::size_t length = ds.length();
  std::vector<bool> gap(length, false);
  for (const auto& s : ds.series)
    for (std::size_t t = 0; t < length; ++t)
      if (std::isnan(s[t])) gap[t] = true;
  const auto gaps = static_cast<std::size_t>(std::count(gap.begin(), gap.end(), true));
  if (gaps > 0) {
    if (!opt.drop_missing)
      throw DataError(source + ": " + std::to_string(gaps) + " time points have missing values (use drop-missing)");
    for (auto& s : ds.series) {
      std::vector<double> kept;
      for (std::size_t t = 0; t < length; ++t)
        if (!gap[t]) kept.push_back(s[t]);
      s = std::move(kept);
    }
    ds.provenance.push_back("dropped " + std::to_string(gaps) + " time points with gaps");
  }
  if (ds.length() < 2) throw DataError(source + ": fewer than two time points");
  return ds;
}

inline Dataset read_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_csv(in, opt, path);
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
  out.precision(17);
  for (std::size_t n = 0; n < ds.names.size(); ++n) out << (n ? "," : "") << ds.names[n];
  out << "\n";
  for (std::size_t t = 0; t < ds.length(); ++t) {
    for (std::size_t n = 0; n < ds.sequences(); ++n) out << (n ? "," : "") << ds.series[n][t];
    out << "\n";
  }
}

inline Dataset dataset_from(const SeriesMatrix& m) {
  Dataset ds;
  for (std::size_t n = 0; n < m.sequences(); ++n) {
    auto row = m.row(n);
    ds.series.emplace_back(row.begin(), row.end());
    ds.names.push_back("s" + std::to_string(n + 1));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Preprocessing

/// y_t = log x_{t+1} - log x_t, computed as log(x_{t+1} / x_t).
inline std::vector<double> log_difference(std::span<const double> x) {
  if (x.size() < 2) throw DataError("log_difference needs at least two values");
  std::vector<double> out;
  out.reserve(x.size() - 1);
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (!(x[t] > 0.0)) throw DataError("log_difference needs positive values; got " + std::to_string(x[t]) +
                                       " at index " + std::to_string(t));
    if (t > 0) out.push_back(std::log(x[t] / x[t - 1]));
  }
  return out;
}

inline Dataset log_difference(const Dataset& ds) {
  Dataset out = ds;
  for (std::size_t n = 0; n < ds.sequences(); ++n) {
    try {
      out.series[n] = log_difference(ds.series[n]);
    } catch (const DataError& e) {
      throw DataError("sequence " + ds.names[n] + ": " + e.what());
    }
  }
  out.provenance.push_back("log-diff");
  return out;
}

/// Sample skewness m3 / m2^{3/2} (population moments); NaN for zero variance.
inline double skewness(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double m2 = 0.0, m3 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= static_cast<double>(x.size());
  m3 /= static_cast<double>(x.size());
  if (!(m2 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return m3 / std::pow(m2, 1.5);
}

struct SkewFilterResult {
  Dataset data;
  std::vector<std::string> kept;
  std::vector<std::pair<std::string, std::string>> dropped;  // name, reason
};

inline SkewFilterResult skewness_filter(const Dataset& ds, double threshold = 1.0) {
  if (!(threshold > 0.0)) throw std::invalid_argument("skewness threshold must be > 0");
  SkewFilterResult res;
  res.data.provenance = ds.provenance;
  for (std::size_t n = 0; n < ds.sequences(); ++n) {
    const double g1 = skewness(ds.series[n]);
    if (std::isnan(g1)) {
      res.dropped.emplace_back(ds.names[n], "zero variance");
    } else if (std::abs(g1) > threshold) {
      std::ostringstream why;
      why << "skewness " << g1;
      res.dropped.emplace_back(ds.names[n], why.str());
    } else {
      res.kept.push_back(ds.names[n]);
      res.data.names.push_back(ds.names[n]);
      res.data.series.push_back(ds.series[n]);
    }
  }
  std::ostringstream note;
  note << "skew-filter |g1| <= " << threshold << ": kept " << res.kept.size() << ", dropped " << res.dropped.size();
  res.data.provenance.push_back(note.str());
  return res;
}

struct Ar1Fit {
  double c_hat = 0.0;
  double phi_hat = 0.0;
  double sigma_eps_hat = 0.0;
};

/// OLS of X_t on (1, X_{t-1}) over t = 2..T; sigma is the root mean squared
/// residual.
inline Ar1Fit estimate_ar1(std::span<const double> x) {
  if (x.size() < 3) throw DataError("estimate_ar1 needs at least three values");
  const std::size_t m = x.size() - 1;
  double mx = 0.0, my = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    mx += x[t];
    my += x[t + 1];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    sxx += (x[t] - mx) * (x[t] - mx);
    sxy += (x[t] - mx) * (x[t + 1] - my);
  }
  if (!(sxx > 0.0)) throw DataError("estimate_ar1: constant predecessor values make the regression singular");
  Ar1Fit fit;
  fit.phi_hat = sxy / sxx;
  fit.c_hat = my - fit.phi_hat * mx;
  double rss = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    const double e = x[t + 1] - fit.c_hat - fit.phi_hat * x[t];
    rss += e * e;
  }
  fit.sigma_eps_hat = std::sqrt(rss / static_cast<double>(m));
  return fit;
}

inline std::vector<Ar1Fit> estimate_ar1(const Dataset& ds) {
  std::vector<Ar1Fit> fits(ds.sequences());
  for (std::size_t n = 0; n < ds.sequences(); ++n) {
    try {
      fits[n] = estimate_ar1(ds.series[n]);
    } catch (const DataError& e) {
      throw DataError("sequence " + ds.names[n] + ": " + e.what());
    }
  }
  return fits;
}

/// Linear-interpolation quantile.
inline double quantile_linear(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Standardized {
  Dataset data;
  Ar1Params pooled;  // phi averaged over sequences, unit innovations
  double phi_iqr = 0.0;
  std::vector<std::string> warnings;
};

/// Rescales each sequence by its innovation sd and pools phi by the mean.
inline Standardized standardize(const Dataset& ds, const std::vector<Ar1Fit>& fits) {
  if (fits.size() != ds.sequences()) throw std::invalid_argument("standardize needs one fit per sequence");
  if (fits.empty()) throw DataError("standardize: no sequences");
  Standardized out;
  out.data = ds;
  std::vector<double> phis;
  double phi_sum = 0.0;
  for (std::size_t n = 0; n < ds.sequences(); ++n) {
    const double sd = fits[n].sigma_eps_hat;
    if (!(sd > 0.0)) throw DataError("sequence " + ds.names[n] + " has zero innovation variance");
    for (double& v : out.data.series[n]) v /= sd;
    phis.push_back(fits[n].phi_hat);
    phi_sum += fits[n].phi_hat;
  }
  out.pooled.c = 0.0;
  out.pooled.phi = phi_sum / static_cast<double>(fits.size());
  out.pooled.sigma_eps = 1.0;
  out.phi_iqr = quantile_linear(phis, 0.75) - quantile_linear(phis, 0.25);
  if (out.phi_iqr > 0.2) {
    std::ostringstream w;
    w << "AR(1) coefficients are heterogeneous across sequences (IQR " << out.phi_iqr
      << " > 0.2); a shared kernel may be inappropriate";
    out.warnings.push_back(w.str());
  }
  out.data.provenance.push_back("standardized");
  return out;
}

/// Largest absolute off-diagonal Pearson correlation between sequences.
inline double max_abs_correlation(const Dataset& ds) {
  const std::size_t n_seq = ds.sequences();
  const std::size_t len = ds.length();
  if (n_seq < 2 || len < 2) return 0.0;
  std::vector<std::vector<double>> centered(n_seq);
  std::vector<double> norms(n_seq);
  for (std::size_t n = 0; n < n_seq; ++n) {
    double mean = 0.0;
    for (double v : ds.series[n]) mean += v;
    mean /= static_cast<double>(len);
    centered[n].resize(len);
    double ss = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      centered[n][t] = ds.series[n][t] - mean;
      ss += centered[n][t] * centered[n][t];
    }
    norms[n] = std::sqrt(ss);
  }
  double best = 0.0;
  for (std::size_t a = 0; a < n_seq; ++a) {
    if (!(norms[a] > 0.0)) continue;
    for (std::size_t b = a + 1; b < n_seq; ++b) {
      if (!(norms[b] > 0.0)) continue;
      double dot = 0.0;
      for (std::size_t t = 0; t < len; ++t) dot += centered[a][t] * centered[b][t];
      best = std::max(best, std::abs(dot / (norms[a] * norms[b])));
    }
  }
  return best;
}

}  // namespace slscan
