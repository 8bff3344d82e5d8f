#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"

using namespace slscan;

namespace {

std::vector<CovarianceKernel> kernels_for(std::size_t length) {
  return {CovarianceKernel::independence(), CovarianceKernel::stationary_ar1(0.6, 1.3),
          CovarianceKernel::random_walk(1.0),
          CovarianceKernel::custom_from(
              [](std::size_t i, std::size_t j) {
                const double lag = static_cast<double>(i > j ? i - j : j - i);
                return std::exp(-lag / 2.0) * (1.0 + 0.02 * static_cast<double>(std::min(i, j)));
              },
              length)};
}

SeriesMatrix shifted(std::size_t n, std::size_t t, std::uint64_t seed, std::size_t at, double delta,
                     std::size_t changed) {
  auto base = oracle::gaussian(n, t, seed);
  std::vector<double> v = base.values();
  for (std::size_t s = 0; s < changed; ++s)
    for (std::size_t j = at; j < t; ++j) v[s * t + j] += delta;
  return SeriesMatrix(std::move(v), n, t);
}

struct ThreadGuard {
  ~ThreadGuard() { set_num_threads(0); }
};

}  // namespace

TEST(ScanScale, MatchesBruteForce) {
  const std::size_t T = 50;
  for (const auto& kernel : kernels_for(T)) {
    const auto data = shifted(5, T, 77, 23, 1.0, 2);
    auto cfg = make_config(5, T, 0.0, kernel);
    for (auto [b, e] : std::vector<std::pair<std::int64_t, std::int64_t>>{{1, 50}, {7, 43}, {30, 50}}) {
      for (std::int64_t i = 1; i <= max_scale(cfg.schedule, e - b + 1); ++i) {
        const auto fast = scan_scale(data, cfg, i, b, e);
        const auto slow = oracle::brute_scan(data, kernel, cfg.params, cfg.schedule.window(i),
                                             cfg.schedule.spacing(i), b, e);
        ASSERT_EQ(fast.k, slow.k) << to_string(kernel.kind()) << " i=" << i << " b=" << b;
        ASSERT_NEAR(fast.score, slow.score, 1e-9 * std::max(1.0, std::abs(slow.score)));
      }
    }
  }
}

TEST(ScanScale, EmptyAndSingleton) {
  const auto data = oracle::gaussian(3, 20, 5);
  auto cfg = make_config(3, 20, 0.0, CovarianceKernel::independence());
  // Segment of length 2 admits scale 1 only, with the single triple (0, 1, 2).
  const auto one = scan_scale(data, cfg, 1, 4, 5);
  EXPECT_EQ(one.k, 1);
  EXPECT_NEAR(one.score, oracle::penalized(data, cfg.kernel, cfg.params, 20, 3, 0, 1, 2), 1e-12);
  const auto none = scan_scale(data, cfg, 1, 4, 4);
  EXPECT_EQ(none.k, 0);
  EXPECT_EQ(none.score, -std::numeric_limits<double>::infinity());
}

TEST(ScanScale, TieBreaksToSmallestOffset) {
  // Constant data: every triple of one geometry scores the same.
  const SeriesMatrix flat(std::vector<double>(3 * 30, 1.0), 3, 30);
  auto cfg = make_config(3, 30, 0.0, CovarianceKernel::independence());
  EXPECT_EQ(scan_scale(flat, cfg, 1, 1, 30).k, 1);
  ThreadGuard guard;
  set_num_threads(4);
  EXPECT_EQ(scan_scale(flat, cfg, 1, 1, 30).k, 1);
}

TEST(SlEstimate, StepSeriesExact) {
  std::vector<std::vector<double>> rows(10, std::vector<double>(40, 0.0));
  for (auto& r : rows)
    for (std::size_t t = 20; t < 40; ++t) r[t] = 5.0;
  const auto data = SeriesMatrix::from_rows(rows);
  const auto cfg = make_config(10, 40, 10.0, CovarianceKernel::independence());
  const auto est = sl_estimate(data, cfg, 1, 1, 40);
  ASSERT_TRUE(est);
  EXPECT_EQ(est->tau, 20);
  const auto report = sl_detect(data, cfg);
  ASSERT_EQ(report.detections.size(), 1u);
  EXPECT_EQ(report.detections[0].tau, 20);
  EXPECT_TRUE(std::isfinite(report.detections[0].score));
}

TEST(SlEstimate, ShortSegmentsGiveNothing) {
  const auto data = oracle::gaussian(4, 30, 1);
  const auto cfg = make_config(4, 30, -1e9, CovarianceKernel::independence());
  EXPECT_FALSE(sl_estimate(data, cfg, 1, 5, 5));
  EXPECT_TRUE(sl_estimate(data, cfg, 1, 5, 6));  // anything fires at c = -1e9
  EXPECT_THROW(sl_estimate(data, cfg, 0, 1, 30), std::invalid_argument);
}

TEST(SlEstimate, DetectionLiesInsideSegment) {
  const auto data = shifted(8, 120, 3, 60, 0.8, 8);
  const auto cfg = make_config(8, 120, -1e9, CovarianceKernel::independence());
  for (std::int64_t b = 1; b < 110; b += 9)
    for (std::int64_t e = b + 1; e <= 120; e += 13) {
      const auto est = sl_estimate(data, cfg, 1, b, e);
      ASSERT_TRUE(est);
      EXPECT_GE(est->tau, b);
      EXPECT_LT(est->tau, e);
      // Finest scale fires first at c = -inf, so the window is (t-1, t, t+1) and tau = t.
      EXPECT_EQ(est->scale, 1);
    }
}

TEST(SlEstimate, RefinementStaysInFiringWindow) {
  const auto data = shifted(20, 300, 8, 137, 1.0, 5);
  const auto cfg = make_config(20, 300, 6.0, CovarianceKernel::independence());
  const auto est = sl_estimate(data, cfg, 1, 1, 300);
  ASSERT_TRUE(est);
  // Re-derive the firing offset and check containment.
  const auto best = scan_scale(data, cfg, est->scale, 1, 300);
  const auto fired = scan_triple(cfg.schedule, est->scale, best.k, 300);
  EXPECT_LT(fired.s, est->tau);
  EXPECT_LT(est->tau, fired.u);
  EXPECT_LE(std::abs(est->tau - 137), 5);
}

TEST(SlEstimate, StrongSingleChangeMonteCarlo) {
  NullSpec spec;
  spec.N = 50;
  spec.T = 200;
  spec.ar1.phi = 0.0;
  const auto c = calibrate_threshold(spec, 0.05, 200, 4242).threshold;
  auto cfg = spec.detection_config(c);
  ASSERT_EQ(cfg.kernel.kind(), KernelKind::stationary_ar1);
  cfg.kernel = CovarianceKernel::independence();
  std::size_t close = 0, null_fires = 0;
  for (std::uint64_t r = 0; r < 200; ++r) {
    const auto alt = shifted(50, 200, substream(99, r), 100, 2.0, 50);
    const auto est = sl_estimate(alt, cfg, 1, 1, 200);
    if (est && std::abs(est->tau - 100) <= 3) ++close;
    const auto null = oracle::gaussian(50, 200, substream(1234, r));
    if (sl_estimate(null, cfg, 1, 1, 200)) ++null_fires;
  }
  EXPECT_GE(close, 190u);
  // alpha = 0.05 plus three binomial standard errors at 200 runs.
  EXPECT_LE(static_cast<double>(null_fires) / 200.0, 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / 200.0));
}

TEST(SlDetect, ThreeStrongChanges) {
  NullSpec spec;
  spec.N = 200;
  spec.T = 2000;
  spec.ar1.phi = 0.0;
  const auto c = calibrate_threshold(spec, 0.05, 40, 31).threshold;
  const auto cfg = [&] {
    auto k = spec.detection_config(c);
    k.kernel = CovarianceKernel::independence();
    return k;
  }();
  const std::vector<std::int64_t> truth{500, 1000, 1500};
  std::size_t good = 0;
  const std::size_t runs = 12;
  for (std::uint64_t r = 0; r < runs; ++r) {
    auto v = oracle::gaussian(200, 2000, substream(7, r)).values();
    for (std::size_t n = 0; n < 200; ++n)
      for (std::int64_t tau : truth)
        for (std::size_t t = static_cast<std::size_t>(tau); t < 2000; ++t) v[n * 2000 + t] += 2.0;
    const SeriesMatrix data(std::move(v), 200, 2000);
    const auto locs = sl_detect(data, cfg).locations();
    bool ok = locs.size() == 3;
    for (std::size_t j = 0; ok && j < 3; ++j) ok = std::abs(locs[j] - truth[j]) <= 10;
    if (ok) ++good;
  }
  EXPECT_GE(static_cast<double>(good) / runs, 0.9);
}

TEST(SlDetect, ReportInvariants) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto data = shifted(15, 250, seed, 90, 0.9, 6);
    const auto cfg = make_config(15, 250, 3.0, CovarianceKernel::independence());
    const auto report = sl_detect(data, cfg);
    for (std::size_t j = 0; j < report.detections.size(); ++j) {
      EXPECT_GE(report.detections[j].tau, 1);
      EXPECT_LT(report.detections[j].tau, 250);
      if (j > 0) EXPECT_LT(report.detections[j - 1].tau, report.detections[j].tau);
    }
    EXPECT_LE(report.diagnostics.max_depth, report.detections.size() + 1);
    EXPECT_EQ(report.diagnostics.segments, 2 * report.detections.size() + 1);
  }
}

TEST(SlDetect, MonotoneInThreshold) {
  std::size_t violations = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto data = shifted(20, 200, 500 + seed, 70, 0.7, 8);
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (double c = -2.0; c <= 20.0; c += 1.0) {
      const auto n = sl_detect(data, make_config(20, 200, c, CovarianceKernel::independence())).detections.size();
      if (n > prev) ++violations;
      prev = n;
    }
  }
  EXPECT_EQ(violations, 0u);
}

TEST(SlDetect, FirstPassComplexityBound) {
  const auto data = oracle::gaussian(4, 700, 3);
  const auto cfg = make_config(4, 700, 1e9, CovarianceKernel::independence());
  DetectionDiagnostics diag;
  first_pass_max(data, cfg, &diag);
  double bound = 0.0;
  for (std::int64_t i = 1; i <= cfg.schedule.i_T; ++i) bound += 700.0 / static_cast<double>(cfg.schedule.spacing(i));
  EXPECT_GT(diag.scan_triples, 0u);
  EXPECT_LE(static_cast<double>(diag.scan_triples), bound);
  const auto report = sl_detect(data, cfg);
  EXPECT_TRUE(report.detections.empty());
  EXPECT_EQ(report.diagnostics.scan_triples, diag.scan_triples);
}

TEST(SlDetect, FirstPassMaxDecidesFiring) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = oracle::gaussian(10, 150, 40 + seed);
    auto cfg = make_config(10, 150, 0.0, CovarianceKernel::independence());
    const double m = first_pass_max(data, cfg);
    cfg.threshold = m;
    EXPECT_FALSE(sl_detect(data, cfg).detections.empty());
    cfg.threshold = std::nextafter(m, 1e300);
    EXPECT_TRUE(sl_detect(data, cfg).detections.empty());
  }
}

TEST(SlDetect, IdenticalAcrossThreadCounts) {
  ThreadGuard guard;
  const auto data = shifted(30, 400, 17, 150, 0.8, 10);
  const auto cfg = make_config(30, 400, 2.0, CovarianceKernel::random_walk(1.0));
  set_num_threads(1);
  const auto a = sl_detect(data, cfg);
  const double max1 = first_pass_max(data, cfg);
  for (int threads : {2, 3, 4, 8}) {
    set_num_threads(threads);
    const auto b = sl_detect(data, cfg);
    ASSERT_EQ(a.detections, b.detections) << threads;
    EXPECT_EQ(a.diagnostics.scan_triples, b.diagnostics.scan_triples);
    EXPECT_EQ(first_pass_max(data, cfg), max1);
  }
}

TEST(SlDetect, CustomKernelMatchesEquivalentBuiltin) {
  const std::size_t T = 120;
  const auto data = shifted(6, T, 2, 50, 1.0, 3);
  const auto rw = CovarianceKernel::random_walk(1.0);
  const auto table = CovarianceKernel::custom_from([&](std::size_t i, std::size_t j) { return rw(i, j); }, T);
  const auto a = sl_detect(data, make_config(6, T, 1.0, rw));
  const auto b = sl_detect(data, make_config(6, T, 1.0, table));
  ASSERT_EQ(a.detections.size(), b.detections.size());
  for (std::size_t j = 0; j < a.detections.size(); ++j) {
    EXPECT_EQ(a.detections[j].tau, b.detections[j].tau);
    EXPECT_NEAR(a.detections[j].score, b.detections[j].score, 1e-8);
  }
}

TEST(DetectionConfig, Validation) {
  const auto data = oracle::gaussian(3, 20, 1);
  auto cfg = make_config(3, 20, 1.0, CovarianceKernel::independence());
  cfg.threshold = std::nan("");
  EXPECT_THROW(sl_detect(data, cfg), std::invalid_argument);
  cfg = make_config(4, 20, 1.0, CovarianceKernel::independence());
  EXPECT_THROW(sl_detect(data, cfg), std::invalid_argument);
  cfg = make_config(3, 20, 1.0, CovarianceKernel::custom(std::vector<double>(100, 0.0), 10));
  EXPECT_THROW(sl_detect(data, cfg), std::invalid_argument);
}

TEST(Report, JsonAndCsvShapes) {
  std::vector<std::vector<double>> rows(10, std::vector<double>(40, 0.0));
  for (auto& r : rows)
    for (std::size_t t = 20; t < 40; ++t) r[t] = 5.0;
  const auto report = sl_detect(SeriesMatrix::from_rows(rows), make_config(10, 40, 10.0, CovarianceKernel::independence()));
  const auto j = report_json(report);
  ASSERT_EQ(j["changepoints"].size(), 1u);
  EXPECT_EQ(j["changepoints"][0]["t"], 20);
  EXPECT_EQ(j["config"]["T"], 40);
  EXPECT_EQ(j["config"]["kernel"]["kind"], "independence");
  EXPECT_TRUE(j["diagnostics"].contains("guard_floored"));
  std::ostringstream csv;
  write_report_csv(csv, report);
  EXPECT_EQ(csv.str().substr(0, 17), "t,scale,score\n20,");
  std::istringstream back(j.dump());
  EXPECT_EQ(read_change_points(back), std::vector<std::int64_t>{20});
  std::istringstream plain("3, 7\n12\n");
  EXPECT_EQ(read_change_points(plain), (std::vector<std::int64_t>{3, 7, 12}));
}
