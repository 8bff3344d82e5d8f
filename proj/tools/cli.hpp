#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "slscan/slscan.hpp"

namespace slscan::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void open_output(const std::string& path, std::ostream& fallback, std::unique_ptr<std::ofstream>& holder,
                        std::ostream*& target) {
  if (path.empty() || path == "-") {
    target = &fallback;
    return;
  }
  holder = std::make_unique<std::ofstream>(path);
  if (!*holder) throw DataError("cannot write " + path);
  target = holder.get();
}

struct KernelFlags {
  std::string kind;
  double phi = 0.0;
  double sigma_eps = 1.0;
  std::string file;
  std::string format = "dense";
};

inline CovarianceKernel make_kernel(const KernelFlags& f) {
  if (f.kind == "independence") return CovarianceKernel::independence();
  if (f.kind == "ar1") return CovarianceKernel::stationary_ar1(f.phi, f.sigma_eps);
  if (f.kind == "rw") return CovarianceKernel::random_walk(f.sigma_eps);
  if (f.kind == "custom") {
    if (f.file.empty()) throw UsageError("--kernel custom requires --kernel-file");
    return load_custom_kernel(f.file, f.format == "triples" ? KernelFileFormat::triples : KernelFileFormat::dense);
  }
  throw UsageError("unknown kernel '" + f.kind + "'");
}

inline std::size_t count_at(const SeriesMatrix& data, DetectionConfig cfg, double c) {
  cfg.threshold = c;
  return sl_detect(data, cfg).detections.size();
}

// Bisection on c for the boundary where the detection count reaches target.
inline double threshold_for_count(const SeriesMatrix& data, const DetectionConfig& base, std::size_t target,
                                  std::size_t& achieved) {
  const double top = first_pass_max(data, [&] {
    DetectionConfig c = base;
    c.threshold = 0.0;
    return c;
  }());
  double hi = top + 1e-9 * std::max(1.0, std::abs(top));  // nothing fires at hi
  if (target == 0) {
    achieved = 0;
    return hi;
  }
  double step = 1.0;
  double lo = top - step;
  std::size_t lo_count = count_at(data, base, lo);
  while (lo_count < target && step < 1e6) {
    step *= 2.0;
    lo = top - step;
    lo_count = count_at(data, base, lo);
  }
  if (lo_count < target) {
    achieved = lo_count;
    return lo;
  }
  for (int iter = 0; iter < 50 && hi - lo > 1e-9; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const std::size_t n = count_at(data, base, mid);
    if (n >= target) {
      lo = mid;
      lo_count = n;
    } else {
      hi = mid;
    }
  }
  achieved = lo_count;
  return lo;
}

}  // namespace detail

/// Entry point for the slscan tool. Returns 0 on success, 1 on usage
/// errors, 2 on data errors.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Sparse mean-change detection across many parallel time series"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: SLSCAN_THREADS or hardware)");

  // detect ------------------------------------------------------------------
  auto* detect = app.add_subcommand("detect", "detect change-points in a CSV dataset");
  std::string input, layout = "time", out_path, csv_path;
  bool no_header = false, drop_missing = false, log_diff = false, estimate = false;
  std::size_t skip_cols = 0;
  std::optional<double> skew_threshold, c_value, lambda1, lambda2;
  std::optional<std::size_t> target_count;
  double growth = 1.1;
  std::string schedule_kind = "experimental";
  detail::KernelFlags kflags;
  detect->add_option("--input", input, "input CSV")->required();
  detect->add_option("--layout", layout, "rows are 'time' points or 'series'")->check(CLI::IsMember({"time", "series"}));
  bool rows_time = false, rows_series = false;
  auto* rt = detect->add_flag("--rows-time", rows_time, "same as --layout time");
  auto* rs = detect->add_flag("--rows-series", rows_series, "same as --layout series");
  rt->excludes(rs);
  detect->add_flag("--no-header", no_header, "first row is data");
  detect->add_option("--skip-cols", skip_cols, "leading columns to ignore");
  detect->add_flag("--drop-missing", drop_missing, "drop time points with missing values");
  detect->add_flag("--log-diff", log_diff, "log-transform and difference each sequence");
  detect->add_option("--skew-threshold", skew_threshold, "drop sequences with |skewness| above this");
  detect->add_flag("--estimate-ar1", estimate, "fit AR(1) per sequence, standardize, pool phi into the kernel");
  detect->add_option("--kernel", kflags.kind, "independence | ar1 | rw | custom")
      ->check(CLI::IsMember({"independence", "ar1", "rw", "custom"}));
  detect->add_option("--phi", kflags.phi, "AR(1) coefficient for --kernel ar1");
  detect->add_option("--sigma-eps", kflags.sigma_eps, "innovation sd for ar1/rw kernels");
  detect->add_option("--kernel-file", kflags.file, "custom kernel CSV");
  detect->add_option("--kernel-format", kflags.format, "dense | triples")->check(CLI::IsMember({"dense", "triples"}));
  auto* c_opt = detect->add_option("--c", c_value, "detection threshold");
  auto* target_opt = detect->add_option("--target-count", target_count, "choose c to return this many change-points");
  c_opt->excludes(target_opt);
  detect->add_option("--lambda1", lambda1, "f1 weight (default 1)");
  detect->add_option("--lambda2", lambda2, "f2 weight (default sqrt(log T / log log T))");
  detect->add_option("--growth", growth, "window growth factor");
  detect->add_option("--schedule", schedule_kind, "experimental | theory")
      ->check(CLI::IsMember({"experimental", "theory"}));
  detect->add_option("--out", out_path, "JSON report path (default stdout)");
  detect->add_option("--csv", csv_path, "also write t,scale,score CSV here");

  // simulate ----------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "generate scenario datasets and study tables");
  std::string sim_config, sim_out, truth_out, study = "none", study_out;
  std::vector<std::string> sim_sets;
  std::optional<double> sim_c;
  simulate->add_option("--config", sim_config, "scenario file (key = value lines)");
  simulate->add_option("--set", sim_sets, "override a scenario key, e.g. --set n=50");
  simulate->add_option("--out", sim_out, "write replicate 0 as CSV (rows = time)");
  simulate->add_option("--truth-out", truth_out, "write the true change-points");
  simulate->add_option("--study", study, "none | accuracy | segmentation")
      ->check(CLI::IsMember({"none", "accuracy", "segmentation"}));
  simulate->add_option("--c", sim_c, "detection threshold for studies (default: config, else calibrated)");
  simulate->add_option("--study-out", study_out, "study CSV path (default stdout)");

  // calibrate ---------------------------------------------------------------
  auto* calibrate = app.add_subcommand("calibrate", "Monte Carlo detection threshold under the null");
  std::string cal_config, cal_json;
  std::vector<std::string> cal_sets;
  std::optional<std::size_t> cal_n, cal_t, cal_reps;
  std::optional<double> cal_phi, cal_sigma, cal_alpha, cal_l1, cal_l2;
  std::optional<std::uint64_t> cal_seed;
  double cal_growth = 1.1;
  calibrate->add_option("--config", cal_config, "scenario file");
  calibrate->add_option("--set", cal_sets, "override a scenario key, e.g. --set phi=0.5");
  calibrate->add_option("--n", cal_n, "sequences");
  calibrate->add_option("--t", cal_t, "length");
  calibrate->add_option("--phi", cal_phi, "AR(1) coefficient (1 = random walk)");
  calibrate->add_option("--sigma-eps", cal_sigma, "innovation sd");
  calibrate->add_option("--alpha", cal_alpha, "false-alarm level");
  calibrate->add_option("--reps", cal_reps, "null replicates");
  calibrate->add_option("--seed", cal_seed, "seed");
  calibrate->add_option("--lambda1", cal_l1, "f1 weight");
  calibrate->add_option("--lambda2", cal_l2, "f2 weight");
  calibrate->add_option("--growth", cal_growth, "window growth factor");
  calibrate->add_option("--json", cal_json, "write threshold and replicate maxima as JSON");

  // evaluate ----------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "score detections against the truth");
  std::string det_path, truth_path, eval_out;
  std::optional<std::int64_t> eval_t;
  std::vector<double> eval_k{3, 10};
  evaluate->add_option("--detections", det_path, "report JSON or change-point list")->required();
  evaluate->add_option("--truth", truth_path, "true change-points (list or JSON)")->required();
  evaluate->add_option("--t", eval_t, "series length (default: from report config)");
  evaluate->add_option("--k", eval_k, "hit tolerances");
  evaluate->add_option("--out", eval_out, "metrics CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  if (threads > 0) set_num_threads(threads);

  try {
    if (*detect) {
      if (!c_value && !target_count) throw UsageError("detect needs --c or --target-count");
      if (kflags.kind == "custom" && kflags.file.empty()) throw UsageError("--kernel custom requires --kernel-file");
      if (estimate && !kflags.kind.empty()) throw UsageError("--estimate-ar1 and --kernel are mutually exclusive");
      if ((rows_time && layout == "series") || (rows_series && layout == "time" && detect->count("--layout") > 0))
        throw UsageError("contradictory layout flags");
      if (rows_series) layout = "series";
      CsvOptions copt;
      copt.layout = layout == "time" ? CsvLayout::rows_are_time : CsvLayout::rows_are_series;
      copt.header = !no_header;
      copt.skip_columns = skip_cols;
      copt.drop_missing = drop_missing;
      Dataset ds = read_csv(input, copt);
      nlohmann::ordered_json extra;
      extra["input"] = input;
      if (log_diff) ds = log_difference(ds);
      if (skew_threshold) {
        auto filtered = skewness_filter(ds, *skew_threshold);
        nlohmann::ordered_json dropped = nlohmann::ordered_json::array();
        for (const auto& [name, why] : filtered.dropped) dropped.push_back({{"name", name}, {"reason", why}});
        extra["skew_dropped"] = dropped;
        ds = std::move(filtered.data);
      }
      if (ds.sequences() < 2) throw DataError("fewer than two sequences remain after preprocessing");
      std::optional<CovarianceKernel> kernel;
      if (estimate) {
        if (!kflags.kind.empty()) throw UsageError("--estimate-ar1 and --kernel are mutually exclusive");
        const auto fits = estimate_ar1(ds);
        auto st = standardize(ds, fits);
        ds = std::move(st.data);
        extra["pooled_phi"] = st.pooled.phi;
        extra["phi_iqr"] = st.phi_iqr;
        extra["warnings"] = st.warnings;
        for (const auto& w : st.warnings) err << "warning: " << w << "\n";
        kernel = std::abs(st.pooled.phi) < 1.0 ? CovarianceKernel::stationary_ar1(st.pooled.phi, 1.0)
                                               : CovarianceKernel::random_walk(1.0);
      } else {
        if (kflags.kind.empty()) kflags.kind = "independence";
        kernel = detail::make_kernel(kflags);
      }
      extra["max_abs_correlation"] = max_abs_correlation(ds);
      extra["provenance"] = ds.provenance;
      const SeriesMatrix data = ds.matrix();
      DetectionConfig cfg;
      cfg.params.N = data.sequences();
      cfg.params.lambda1 = lambda1.value_or(1.0);
      cfg.params.lambda2 = lambda2 ? *lambda2 : default_lambda2(static_cast<double>(data.length()));
      cfg.kernel = *kernel;
      cfg.schedule = schedule_kind == "theory" ? theory_schedule_for(static_cast<std::int64_t>(data.length()))
                                               : build_schedule(static_cast<std::int64_t>(data.length()), growth);
      if (!cfg.params.lambda2_in_range()) err << "warning: lambda2 exceeds sqrt(N)\n";
      if (target_count) {
        std::size_t achieved = 0;
        cfg.threshold = detail::threshold_for_count(data, cfg, *target_count, achieved);
        extra["target_count"] = *target_count;
        extra["target_achieved"] = achieved;
      } else {
        cfg.threshold = *c_value;
      }
      const auto report = sl_detect(data, cfg);
      std::unique_ptr<std::ofstream> holder;
      std::ostream* target = nullptr;
      detail::open_output(out_path, out, holder, target);
      write_report_json(*target, report, extra);
      if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw DataError("cannot write " + csv_path);
        write_report_csv(csv, report);
      }
      return kOk;
    }

    if (*simulate) {
      ScenarioConfig sc = sim_config.empty() ? ScenarioConfig{} : ScenarioConfig::load(sim_config);
      for (const auto& kv : sim_sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        sc.set(ScenarioConfig::trim(kv.substr(0, eq)), ScenarioConfig::trim(kv.substr(eq + 1)));
      }
      const auto truth = sc.truth();
      if (!sim_out.empty()) {
        const MeanMatrix means = sc.means();
        const SeriesMatrix data = gen_ar1(sc.ar1, sc.n, sc.t, substream(sc.seed, 0), &means);
        std::ofstream f(sim_out);
        if (!f) throw DataError("cannot write " + sim_out);
        write_csv(f, dataset_from(data));
      }
      if (!truth_out.empty()) {
        std::ofstream f(truth_out);
        if (!f) throw DataError("cannot write " + truth_out);
        for (auto cp : truth) f << cp << "\n";
      }
      if (study != "none") {
        double c;
        if (sim_c) c = *sim_c;
        else if (sc.threshold) c = *sc.threshold;
        else {
          NullSpec spec;
          spec.N = sc.n;
          spec.T = sc.t;
          spec.ar1 = sc.ar1;
          spec.lambda1 = sc.lambda1;
          spec.lambda2 = sc.lambda2;
          c = calibrate_threshold(spec, sc.alpha, sc.calib_reps, substream(sc.seed, 0xca11b)).threshold;
        }
        std::unique_ptr<std::ofstream> holder;
        std::ostream* target = nullptr;
        detail::open_output(study_out, out, holder, target);
        target->precision(10);
        if (study == "accuracy") {
          if (sc.kind != "single") throw UsageError("accuracy study needs kind = single");
          const auto rows = run_accuracy_study({{sc.t, sc.n, sc.v, c}}, sc.reps, {3, 10}, sc.seed, sc.ar1);
          write_accuracy_csv(*target, rows);
        } else {
          if (sc.kind != "multi") throw UsageError("segmentation study needs kind = multi");
          const auto s = run_segmentation_study(sc.r, sc.k, sc.reps, c, sc.seed, sc.n, sc.t, truth, sc.ar1);
          write_segmentation_csv(*target, {s});
        }
      } else if (sim_out.empty() && truth_out.empty()) {
        throw UsageError("simulate needs --out, --truth-out or --study");
      }
      return kOk;
    }

    if (*calibrate) {
      ScenarioConfig sc = cal_config.empty() ? ScenarioConfig{} : ScenarioConfig::load(cal_config);
      for (const auto& kv : cal_sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        sc.set(ScenarioConfig::trim(kv.substr(0, eq)), ScenarioConfig::trim(kv.substr(eq + 1)));
      }
      NullSpec spec;
      spec.N = cal_n.value_or(sc.n);
      spec.T = cal_t.value_or(sc.t);
      spec.ar1 = sc.ar1;
      if (cal_phi) spec.ar1.phi = *cal_phi;
      if (cal_sigma) spec.ar1.sigma_eps = *cal_sigma;
      spec.lambda1 = cal_l1.value_or(sc.lambda1);
      spec.lambda2 = cal_l2 ? cal_l2 : sc.lambda2;
      spec.growth = cal_growth;
      const double alpha = cal_alpha.value_or(sc.alpha);
      const std::size_t reps = cal_reps.value_or(sc.reps);
      const std::uint64_t seed = cal_seed.value_or(sc.seed);
      const auto cal = calibrate_threshold(spec, alpha, reps, seed);
      out.precision(17);
      out << cal.threshold << "\n";
      if (!cal_json.empty()) {
        std::ofstream f(cal_json);
        if (!f) throw DataError("cannot write " + cal_json);
        nlohmann::ordered_json j;
        j["threshold"] = cal.threshold;
        j["alpha"] = alpha;
        j["reps"] = reps;
        j["seed"] = seed;
        j["N"] = spec.N;
        j["T"] = spec.T;
        j["phi"] = spec.ar1.phi;
        j["sigma_eps"] = spec.ar1.sigma_eps;
        j["maxima"] = cal.maxima;
        f << j.dump(2) << "\n";
      }
      return kOk;
    }

    if (*evaluate) {
      std::ifstream dfile(det_path);
      if (!dfile) throw DataError("cannot open " + det_path);
      std::stringstream dbuf;
      dbuf << dfile.rdbuf();
      const std::string dtext = dbuf.str();
      std::istringstream dstream(dtext);
      auto detected = read_change_points(dstream);
      std::ifstream tfile(truth_path);
      if (!tfile) throw DataError("cannot open " + truth_path);
      auto truth = read_change_points(tfile);
      std::int64_t length = 0;
      if (eval_t) length = *eval_t;
      else {
        const auto first = dtext.find_first_not_of(" \t\r\n");
        if (first != std::string::npos && dtext[first] == '{') {
          const auto j = nlohmann::json::parse(dtext);
          if (j.contains("config") && j["config"].contains("T")) length = j["config"]["T"].get<std::int64_t>();
        }
      }
      if (length < 2) throw UsageError("evaluate needs --t when the detections file has no config.T");
      std::sort(detected.begin(), detected.end());
      std::sort(truth.begin(), truth.end());
      const auto est = segmentation_labels(detected, length);
      const auto tru = segmentation_labels(truth, length);
      std::unique_ptr<std::ofstream> holder;
      std::ostream* target = nullptr;
      detail::open_output(eval_out, out, holder, target);
      target->precision(10);
      *target << "metric,value\n";
      *target << "changepoints_estimated," << detected.size() << "\n";
      *target << "changepoints_true," << truth.size() << "\n";
      *target << "ari," << adjusted_rand_index(est, tru) << "\n";
      *target << "rand_index," << rand_index(est, tru) << "\n";
      for (double k : eval_k) {
        std::size_t hits = 0;
        for (auto cp : truth) {
          const auto near = nearest(detected, cp);
          if (near && std::abs(static_cast<double>(*near - cp)) <= k) ++hits;
        }
        const double rate = truth.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
        *target << "hit_k" << k << "," << rate << "\n";
      }
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const nlohmann::json::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace slscan::cli
