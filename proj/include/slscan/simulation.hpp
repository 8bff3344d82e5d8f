#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "slscan/covariance.hpp"
#include "slscan/detector.hpp"
#include "slscan/evaluation.hpp"
#include "slscan/parallel.hpp"
#include "slscan/scoring.hpp"

namespace slscan {

// ---------------------------------------------------------------------------
// Seeding

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of substream `index` under `seed`. Replicate r of a study uses
/// substream(seed, r); sequence n of a dataset uses substream(dataset_seed, n).
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// ---------------------------------------------------------------------------
// Model

struct Ar1Params {
  double c = 0.0;
  double phi = 1.0;
  double sigma_eps = 1.0;

  void validate() const {
    if (!(std::abs(phi) <= 1.0)) throw std::invalid_argument("AR(1) requires |phi| <= 1");
    if (!(sigma_eps > 0.0)) throw std::invalid_argument("AR(1) requires sigma_eps > 0");
  }
};

/// Noise covariance implied by the generator (X_0 = 0 for the random walk).
inline CovarianceKernel kernel_for(const Ar1Params& p) {
  p.validate();
  if (p.phi == 1.0) return CovarianceKernel::random_walk(p.sigma_eps);
  if (p.phi == -1.0) throw std::invalid_argument("phi = -1 has no supported kernel");
  return CovarianceKernel::stationary_ar1(p.phi, p.sigma_eps);
}

/// Deterministic means mu_t^n, sequence-major N x T.
struct MeanMatrix {
  std::size_t N = 0;
  std::size_t T = 0;
  std::vector<double> values;

  MeanMatrix() = default;
  MeanMatrix(std::size_t n, std::size_t t) : N(n), T(t), values(n * t, 0.0) {}

  double& at(std::size_t n, std::size_t t) { return values[n * T + t]; }
  double at(std::size_t n, std::size_t t) const { return values[n * T + t]; }
};

/**
 * X_t = c + phi X_{t-1} + eps_t from X_0 = 0, eps ~ N(0, sigma_eps^2), with
 * the mean profile added to the generated path. Sequence n draws from its own
 * substream of `seed`. For |phi| < 1 an optional burn-in of 10/(1-|phi|)
 * steps is discarded first.
 */
inline SeriesMatrix gen_ar1(const Ar1Params& params, std::size_t sequences, std::size_t length, std::uint64_t seed,
                            const MeanMatrix* means = nullptr, bool burn_in = false) {
  params.validate();
  if (means && (means->N != sequences || means->T != length))
    throw std::invalid_argument("mean matrix dimensions do not match N x T");
  std::size_t warmup = 0;
  if (burn_in && std::abs(params.phi) < 1.0)
    warmup = static_cast<std::size_t>(std::ceil(10.0 / (1.0 - std::abs(params.phi))));
  std::vector<double> values(sequences * length);
  parallel_for(sequences, [&](std::size_t n) {
    std::mt19937_64 engine(substream(seed, n));
    std::normal_distribution<double> noise(0.0, params.sigma_eps);
    double x = 0.0;
    for (std::size_t w = 0; w < warmup; ++w) x = params.c + params.phi * x + noise(engine);
    double* row = values.data() + n * length;
    for (std::size_t t = 0; t < length; ++t) {
      x = params.c + params.phi * x + noise(engine);
      row[t] = means ? x + means->at(n, t) : x;
    }
  });
  return SeriesMatrix(std::move(values), sequences, length);
}

inline double harmonic(std::int64_t v) {
  double h = 0.0;
  for (std::int64_t m = 1; m <= v; ++m) h += 1.0 / static_cast<double>(m);
  return h;
}

/// One change after tau1 on the first V sequences, of size 1.2/sqrt(n H_V).
inline MeanMatrix single_change_scenario(std::size_t sequences, std::size_t length, std::size_t V, std::size_t tau1) {
  if (V < 1 || V > sequences) throw std::invalid_argument("single_change_scenario requires 1 <= V <= N");
  if (tau1 < 1 || tau1 >= length) throw std::invalid_argument("single_change_scenario requires 1 <= tau1 < T");
  MeanMatrix m(sequences, length);
  const double hv = harmonic(static_cast<std::int64_t>(V));
  for (std::size_t n = 1; n <= V; ++n) {
    const double mu = 1.2 / std::sqrt(static_cast<double>(n) * hv);
    for (std::size_t t = tau1; t < length; ++t) m.at(n - 1, t) = mu;
  }
  return m;
}

/// Change j (1-based) adds r/sqrt(n H_V) to sequences k(j-1)+1 .. k(j-1)+V
/// for every t > tau_j. overlap = 0 reuses one block, overlap = V gives
/// disjoint blocks.
inline MeanMatrix multi_change_scenario(std::size_t sequences, std::size_t length, const std::vector<std::int64_t>& tau,
                                        double r, std::size_t overlap, std::size_t V = 40) {
  if (V < 1) throw std::invalid_argument("multi_change_scenario requires V >= 1");
  for (std::size_t j = 0; j < tau.size(); ++j) {
    if (tau[j] < 1 || tau[j] >= static_cast<std::int64_t>(length))
      throw std::invalid_argument("change location outside (0, T)");
    if (j > 0 && tau[j] <= tau[j - 1]) throw std::invalid_argument("change locations must be increasing");
  }
  if (!tau.empty() && overlap * (tau.size() - 1) + V > sequences)
    throw std::invalid_argument("changed block exceeds N sequences");
  MeanMatrix m(sequences, length);
  const double hv = harmonic(static_cast<std::int64_t>(V));
  for (std::size_t j = 0; j < tau.size(); ++j) {
    for (std::size_t n = 1; n <= V; ++n) {
      const std::size_t row = overlap * j + n - 1;
      const double inc = r / std::sqrt(static_cast<double>(n) * hv);
      for (std::size_t t = static_cast<std::size_t>(tau[j]); t < length; ++t) m.at(row, t) += inc;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Scenario files

/**
 * Plain key = value scenario description. Keys: n, t, v, tau (comma list),
 * phi, sigma_eps, c (drift), r, k, seed, reps, alpha, plus kind
 * (null | single | multi), threshold, lambda1, lambda2, calib_reps.
 */
struct ScenarioConfig {
  std::string kind = "null";
  std::size_t n = 200;
  std::size_t t = 2000;
  std::size_t v = 40;
  std::vector<std::int64_t> tau;
  Ar1Params ar1;
  double r = 1.0;
  std::size_t k = 0;
  std::uint64_t seed = 1;
  std::size_t reps = 500;
  double alpha = 0.05;
  std::optional<double> threshold;
  double lambda1 = 1.0;
  std::optional<double> lambda2;
  std::size_t calib_reps = 500;

  void set(const std::string& key, const std::string& value) {
    auto num = [&](const std::string& v) {
      std::size_t used = 0;
      double x = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    };
    auto count = [&](const std::string& v) {
      double x = num(v);
      if (x < 0 || x != std::floor(x)) throw std::invalid_argument(v);
      return static_cast<std::size_t>(x);
    };
    try {
      if (key == "kind") {
        if (value != "null" && value != "single" && value != "multi") throw std::invalid_argument(value);
        kind = value;
      } else if (key == "n") n = count(value);
      else if (key == "t") t = count(value);
      else if (key == "v") v = count(value);
      else if (key == "tau") {
        tau.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) tau.push_back(static_cast<std::int64_t>(count(trim(item))));
      } else if (key == "phi") ar1.phi = num(value);
      else if (key == "sigma_eps") ar1.sigma_eps = num(value);
      else if (key == "c") ar1.c = num(value);
      else if (key == "r") r = num(value);
      else if (key == "k") k = count(value);
      else if (key == "seed") seed = std::stoull(value);
      else if (key == "reps") reps = count(value);
      else if (key == "alpha") alpha = num(value);
      else if (key == "threshold") threshold = num(value);
      else if (key == "lambda1") lambda1 = num(value);
      else if (key == "lambda2") lambda2 = num(value);
      else if (key == "calib_reps") calib_reps = count(value);
      else throw std::out_of_range(key);
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("unknown scenario key '" + key + "'");
    } catch (const std::exception&) {
      throw std::invalid_argument("bad value '" + value + "' for scenario key '" + key + "'");
    }
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static ScenarioConfig parse(std::istream& in) {
    ScenarioConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("scenario line " + std::to_string(lineno) + ": expected key = value");
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static ScenarioConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file " + path);
    return parse(in);
  }

  /// Mean profile for this scenario; tau defaults to 0.4T (single) or
  /// (T/4, T/2, 3T/4) (multi).
  MeanMatrix means() const {
    if (kind == "null") return MeanMatrix(n, t);
    if (kind == "single") {
      const auto tau1 = tau.empty() ? static_cast<std::size_t>(std::llround(0.4 * static_cast<double>(t)))
                                    : static_cast<std::size_t>(tau.front());
      return single_change_scenario(n, t, v, tau1);
    }
    std::vector<std::int64_t> cps = tau;
    if (cps.empty()) {
      const auto q = static_cast<std::int64_t>(t / 4);
      cps = {q, 2 * q, 3 * q};
    }
    return multi_change_scenario(n, t, cps, r, k, v);
  }

  std::vector<std::int64_t> truth() const {
    if (kind == "null") return {};
    if (!tau.empty()) return kind == "single" ? std::vector<std::int64_t>{tau.front()} : tau;
    if (kind == "single") return {static_cast<std::int64_t>(std::llround(0.4 * static_cast<double>(t)))};
    const auto q = static_cast<std::int64_t>(t / 4);
    return {q, 2 * q, 3 * q};
  }
};

// ---------------------------------------------------------------------------
// Threshold calibration

struct NullSpec {
  std::size_t N = 200;
  std::size_t T = 2000;
  Ar1Params ar1;
  double lambda1 = 1.0;
  std::optional<double> lambda2;  // default sqrt(log T / log log T)
  double growth = 1.1;

  DetectionConfig detection_config(double threshold = 0.0) const {
    DetectionConfig cfg;
    cfg.threshold = threshold;
    cfg.params.lambda1 = lambda1;
    cfg.params.lambda2 = lambda2 ? *lambda2 : default_lambda2(static_cast<double>(T));
    cfg.params.N = N;
    cfg.kernel = kernel_for(ar1);
    cfg.schedule = build_schedule(static_cast<std::int64_t>(T), growth);
    return cfg;
  }
};

/// numpy-style "midpoint" quantile: average of the order statistics at
/// floor and ceil of q (n - 1).
inline double quantile_midpoint(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return 0.5 * (values[lo] + values[hi]);
}

/// First-pass maxima of `reps` null datasets; replicate r uses substream(seed, r).
inline std::vector<double> null_maxima(const NullSpec& spec, std::size_t reps, std::uint64_t seed) {
  const DetectionConfig cfg = spec.detection_config();
  std::vector<double> maxima(reps);
  parallel_for(reps, [&](std::size_t r) {
    const SeriesMatrix data = gen_ar1(spec.ar1, spec.N, spec.T, substream(seed, r));
    maxima[r] = first_pass_max(data, cfg);
  });
  return maxima;
}

struct Calibration {
  double threshold = 0.0;
  double alpha = 0.05;
  std::vector<double> maxima;
};

/// Threshold c with P(first pass fires) = alpha under the null, as the
/// empirical (1 - alpha) quantile of simulated first-pass maxima.
inline Calibration calibrate_threshold(const NullSpec& spec, double alpha, std::size_t reps, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (reps < 20) throw std::invalid_argument("calibration needs at least 20 replicates");
  Calibration cal;
  cal.alpha = alpha;
  cal.maxima = null_maxima(spec, reps, seed);
  cal.threshold = quantile_midpoint(cal.maxima, 1.0 - alpha);
  return cal;
}

inline double exceedance_rate(const std::vector<double>& maxima, double threshold) {
  if (maxima.empty()) return 0.0;
  std::size_t hits = 0;
  for (double m : maxima)
    if (m >= threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(maxima.size());
}

// ---------------------------------------------------------------------------
// Studies

struct AccuracyCell {
  std::size_t T = 500;
  std::size_t N = 500;
  std::size_t V = 3;
  double threshold = 0.0;
};

struct AccuracyRow {
  AccuracyCell cell;
  std::int64_t tau1 = 0;
  std::vector<double> k_list;
  std::vector<double> hit;  // parallel to k_list
  std::vector<std::optional<std::int64_t>> estimates;
};

/**
 * Single-change accuracy: for each cell, `reps` datasets with tau1 = 0.4T,
 * detection at the cell threshold, tau1-hat the detection nearest tau1.
 * Cell c replicate r uses substream(substream(seed, c), r).
 */
inline std::vector<AccuracyRow> run_accuracy_study(const std::vector<AccuracyCell>& cells, std::size_t reps,
                                                   const std::vector<double>& k_list, std::uint64_t seed,
                                                   const Ar1Params& ar1 = {}) {
  std::vector<AccuracyRow> rows;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const AccuracyCell& cell = cells[c];
    AccuracyRow row;
    row.cell = cell;
    row.k_list = k_list;
    row.tau1 = static_cast<std::int64_t>(std::llround(0.4 * static_cast<double>(cell.T)));
    const MeanMatrix means = single_change_scenario(cell.N, cell.T, cell.V, static_cast<std::size_t>(row.tau1));
    NullSpec spec;
    spec.N = cell.N;
    spec.T = cell.T;
    spec.ar1 = ar1;
    const DetectionConfig cfg = spec.detection_config(cell.threshold);
    const std::uint64_t cell_seed = substream(seed, c);
    row.estimates.resize(reps);
    parallel_for(reps, [&](std::size_t r) {
      const SeriesMatrix data = gen_ar1(ar1, cell.N, cell.T, substream(cell_seed, r), &means);
      const auto report = sl_detect(data, cfg);
      const auto locs = report.locations();
      row.estimates[r] = nearest(locs, row.tau1);
    });
    for (double k : k_list) row.hit.push_back(hit_rate(row.estimates, row.tau1, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_accuracy_csv(std::ostream& out, const std::vector<AccuracyRow>& rows) {
  out << "T,N,V,threshold";
  if (!rows.empty())
    for (double k : rows.front().k_list) out << ",k=" << k;
  out << "\n";
  for (const auto& row : rows) {
    out << row.cell.T << "," << row.cell.N << "," << row.cell.V << "," << row.cell.threshold;
    for (double h : row.hit) out << "," << h;
    out << "\n";
  }
}

struct SegmentationStudy {
  double r = 1.0;
  std::size_t k = 0;
  CountHistogram histogram;
  std::vector<std::size_t> counts;
  std::vector<double> aris;
};

/// Three-change design (N = 200, T = 2000, tau = 500/1000/1500, 40 changed
/// sequences per change by default); replicate r uses substream(seed, r).
inline SegmentationStudy run_segmentation_study(double r, std::size_t overlap, std::size_t reps, double threshold,
                                                std::uint64_t seed, std::size_t sequences = 200,
                                                std::size_t length = 2000, std::vector<std::int64_t> tau = {500, 1000, 1500},
                                                const Ar1Params& ar1 = {}) {
  SegmentationStudy study;
  study.r = r;
  study.k = overlap;
  const MeanMatrix means = multi_change_scenario(sequences, length, tau, r, overlap);
  NullSpec spec;
  spec.N = sequences;
  spec.T = length;
  spec.ar1 = ar1;
  const DetectionConfig cfg = spec.detection_config(threshold);
  const Segmentation truth = segmentation_labels(tau, static_cast<std::int64_t>(length));
  study.counts.resize(reps);
  study.aris.resize(reps);
  parallel_for(reps, [&](std::size_t rep) {
    const SeriesMatrix data = gen_ar1(ar1, sequences, length, substream(seed, rep), &means);
    const auto report = sl_detect(data, cfg);
    const auto locs = report.locations();
    study.counts[rep] = locs.size();
    study.aris[rep] = adjusted_rand_index(segmentation_labels(locs, static_cast<std::int64_t>(length)), truth);
  });
  study.histogram = count_histogram(study.counts, study.aris);
  return study;
}

inline void write_segmentation_csv(std::ostream& out, const std::vector<SegmentationStudy>& rows) {
  out << "r,k,below2,J2,J3,J4,J5,J6,above6,ARI\n";
  for (const auto& s : rows) {
    out << s.r << "," << s.k << "," << s.histogram.below;
    for (auto b : s.histogram.bins) out << "," << b;
    out << "," << s.histogram.above << "," << s.histogram.mean_ari << "\n";
  }
}

}  // namespace slscan
