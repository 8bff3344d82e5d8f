#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "support/oracles.hpp"

using namespace slscan;

namespace {

Dataset parse(const std::string& text, CsvOptions opt = {}) {
  std::istringstream in(text);
  return read_csv(in, opt);
}

std::string error_of(const std::string& text, CsvOptions opt = {}) {
  try {
    parse(text, opt);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ReadCsv, RowsAreTime) {
  const auto ds = parse("a,b\n1,2\n3,4\n5,6\n");
  EXPECT_EQ(ds.sequences(), 2u);
  EXPECT_EQ(ds.length(), 3u);
  EXPECT_EQ(ds.names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.series[1], (std::vector<double>{2, 4, 6}));
  const auto m = ds.matrix();
  EXPECT_EQ(m.prefix(0, 3), 9.0);
}

TEST(ReadCsv, RowsAreSeriesAndOptions) {
  CsvOptions opt;
  opt.layout = CsvLayout::rows_are_series;
  opt.header = false;
  const auto ds = parse("1,2,3\n4,5,6\n", opt);
  EXPECT_EQ(ds.sequences(), 2u);
  EXPECT_EQ(ds.length(), 3u);
  EXPECT_EQ(ds.names, (std::vector<std::string>{"s1", "s2"}));
  CsvOptions skip;
  skip.skip_columns = 1;
  const auto dated = parse("date,x,y\n2020-01-01,1,2\n2020-01-02,3,4\n", skip);
  EXPECT_EQ(dated.names, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(dated.series[0], (std::vector<double>{1, 3}));
}

TEST(ReadCsv, Errors) {
  EXPECT_NE(error_of("a,b\n1,2\n3\n").find(":3: ragged"), std::string::npos);
  EXPECT_NE(error_of("a,b\n1,x\n3,4\n").find(":2: non-numeric cell 'x'"), std::string::npos);
  EXPECT_NE(error_of("").find("no data rows"), std::string::npos);
  EXPECT_NE(error_of("a,b\n").find("no data rows"), std::string::npos);
  EXPECT_NE(error_of("a,b\n1,2\n").find("fewer than two"), std::string::npos);
  EXPECT_THROW(read_csv("/nonexistent/file.csv", CsvOptions{}), DataError);
}

TEST(ReadCsv, MissingValues) {
  const std::string text = "a,b\n1,2\nNA,4\n5,\n7,8\n";
  EXPECT_NE(error_of(text).find("2 time points have missing values"), std::string::npos);
  CsvOptions drop;
  drop.drop_missing = true;
  const auto ds = parse(text, drop);
  EXPECT_EQ(ds.series[0], (std::vector<double>{1, 7}));
  EXPECT_EQ(ds.series[1], (std::vector<double>{2, 8}));
  EXPECT_EQ(ds.provenance.back(), "dropped 2 time points with gaps");
}

TEST(WriteCsv, RoundTripIsExact) {
  Ar1Params p;
  const auto m = gen_ar1(p, 4, 30, 17);
  std::stringstream buf;
  write_csv(buf, dataset_from(m));
  const auto back = read_csv(buf, CsvOptions{});
  ASSERT_EQ(back.sequences(), 4u);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t t = 0; t < 30; ++t) EXPECT_EQ(back.series[n][t], m.row(n)[t]);
}

TEST(LogDifference, Examples) {
  const std::vector<double> e{1.0, std::numbers::e, std::numbers::e * std::numbers::e};
  const auto y = log_difference(e);
  ASSERT_EQ(y.size(), 2u);
  EXPECT_NEAR(y[0], 1.0, 1e-15);
  EXPECT_NEAR(y[1], 1.0, 1e-15);
  const std::vector<double> flat{3.0, 3.0, 3.0};
  EXPECT_EQ(log_difference(flat), (std::vector<double>{0.0, 0.0}));
  const std::vector<double> dbl{1, 2, 4};
  EXPECT_NEAR(log_difference(dbl)[0], 0.69314718055994531, 1e-16);
  EXPECT_NEAR(log_difference(dbl)[1], 0.69314718055994531, 1e-16);
  const std::vector<double> bad{1, 0, 2};
  EXPECT_THROW(log_difference(bad), DataError);
}

TEST(LogDifference, ScaleInvariant) {
  std::mt19937_64 gen(3);
  std::lognormal_distribution<double> price(3.0, 0.5);
  std::vector<double> x(500);
  for (auto& v : x) v = price(gen);
  const auto base = log_difference(x);
  for (double c : {0.5, 2.0, 1024.0}) {
    std::vector<double> scaled(x);
    for (auto& v : scaled) v *= c;
    EXPECT_EQ(log_difference(scaled), base) << c;
  }
  for (double c : {3.0, 0.01, 7.77}) {
    std::vector<double> scaled(x);
    for (auto& v : scaled) v *= c;
    const auto y = log_difference(scaled);
    for (std::size_t t = 0; t < y.size(); ++t) EXPECT_NEAR(y[t], base[t], 1e-15);
  }
}

TEST(Skewness, FilterExamples) {
  Dataset ds;
  ds.names = {"sym", "flat", "expo"};
  ds.series.push_back({-2, -1, 0, 1, 2});
  ds.series.push_back({4, 4, 4, 4, 4});
  std::mt19937_64 gen(8);
  std::exponential_distribution<double> ex(1.0);
  // Enough draws that the sample skewness sits near the population value 2.
  std::vector<double> long_e(20000);
  for (auto& v : long_e) v = ex(gen);
  EXPECT_NEAR(skewness(long_e), 2.0, 0.25);
  ds.series.push_back({0.1, 0.2, 0.1, 0.3, 4.0});
  EXPECT_EQ(skewness(ds.series[0]), 0.0);
  EXPECT_GT(std::abs(skewness(ds.series[2])), 1.0);
  const auto res = skewness_filter(ds, 1.0);
  EXPECT_EQ(res.kept, (std::vector<std::string>{"sym"}));
  ASSERT_EQ(res.dropped.size(), 2u);
  EXPECT_EQ(res.dropped[0].first, "flat");
  EXPECT_EQ(res.dropped[0].second, "zero variance");
  EXPECT_EQ(res.data.sequences(), 1u);
  EXPECT_THROW(skewness_filter(ds, 0.0), std::invalid_argument);

  Dataset big;
  big.names = {"expo"};
  big.series = {long_e};
  EXPECT_EQ(skewness_filter(big, 1.0).dropped.size(), 1u);
}

TEST(EstimateAr1, Examples) {
  const std::vector<double> line{1, 2, 3, 4};
  const auto fit = estimate_ar1(line);
  EXPECT_NEAR(fit.phi_hat, 1.0, 1e-15);
  EXPECT_NEAR(fit.c_hat, 1.0, 1e-14);
  EXPECT_NEAR(fit.sigma_eps_hat, 0.0, 1e-14);
  const std::vector<double> flat_pred{2, 2, 5};
  EXPECT_THROW(estimate_ar1(flat_pred), DataError);
  const std::vector<double> two{1, 2};
  EXPECT_THROW(estimate_ar1(two), DataError);
}

TEST(EstimateAr1, LongSeriesConsistency) {
  Ar1Params white;
  white.phi = 0.0;
  const auto w = gen_ar1(white, 1, 100000, 21);
  EXPECT_NEAR(estimate_ar1(w.row(0)).phi_hat, 0.0, 0.02);
  Ar1Params half;
  half.phi = 0.5;
  const auto h = gen_ar1(half, 1, 100000, 22);
  EXPECT_NEAR(estimate_ar1(h.row(0)).phi_hat, 0.5, 0.02);
}

TEST(EstimateAr1, RecoversGeneratorWithinStandardErrors) {
  Ar1Params p;
  p.c = 0.3;
  p.phi = 0.5;
  p.sigma_eps = 2.0;
  const double T = 1e4;
  const double se_phi = std::sqrt((1 - p.phi * p.phi) / T);
  const double se_sigma = p.sigma_eps / std::sqrt(2 * T);
  const auto m = gen_ar1(p, 50, 10000, 404, nullptr, true);
  std::size_t phi_in = 0, sigma_in = 0;
  double phi_mean = 0.0;
  for (std::size_t n = 0; n < 50; ++n) {
    const auto fit = estimate_ar1(m.row(n));
    phi_in += std::abs(fit.phi_hat - p.phi) <= 3 * se_phi;
    sigma_in += std::abs(fit.sigma_eps_hat - p.sigma_eps) <= 3 * se_sigma;
    phi_mean += fit.phi_hat / 50.0;
  }
  EXPECT_GE(phi_in, 48u);
  EXPECT_GE(sigma_in, 48u);
  // OLS bias is about -(1 + 3 phi) / T; allow for it next to the averaged error.
  EXPECT_NEAR(phi_mean, p.phi, 3 * se_phi / std::sqrt(50.0) + 2.5 / T);
}

TEST(Standardize, Examples) {
  Dataset ds;
  ds.names = {"a", "b"};
  Ar1Params p;
  p.phi = 0.4;
  const auto m = gen_ar1(p, 2, 400, 9);
  ds.series = {std::vector<double>(m.row(0).begin(), m.row(0).end()),
               std::vector<double>(m.row(0).begin(), m.row(0).end())};
  for (auto& v : ds.series[1]) v *= 3.0;
  const auto fits = estimate_ar1(ds);
  const auto st = standardize(ds, fits);
  for (std::size_t t = 0; t < 400; ++t) EXPECT_NEAR(st.data.series[1][t], st.data.series[0][t], 1e-12);

  std::vector<Ar1Fit> unit(2);
  unit[0].phi_hat = 0.4;
  unit[1].phi_hat = 0.6;
  unit[0].sigma_eps_hat = unit[1].sigma_eps_hat = 1.0;
  const auto same = standardize(ds, unit);
  EXPECT_EQ(same.data.series, ds.series);
  EXPECT_DOUBLE_EQ(same.pooled.phi, 0.5);
  EXPECT_TRUE(same.warnings.empty());

  unit[1].phi_hat = 0.95;
  unit[0].phi_hat = 0.1;
  EXPECT_EQ(standardize(ds, unit).warnings.size(), 1u);
  unit[0].sigma_eps_hat = 0.0;
  EXPECT_THROW(standardize(ds, unit), DataError);
  EXPECT_THROW(standardize(ds, std::vector<Ar1Fit>(1)), std::invalid_argument);
}

TEST(Pipeline, MarketShapedLengthGivesSixtyEightScales) {
  Dataset prices;
  std::mt19937_64 gen(1);
  std::normal_distribution<double> ret(0.0, 0.01);
  for (int n = 0; n < 3; ++n) {
    std::vector<double> x{100.0};
    for (int t = 1; t < 3850; ++t) x.push_back(x.back() * std::exp(ret(gen)));
    prices.series.push_back(x);
    prices.names.push_back("p" + std::to_string(n));
  }
  const auto returns = log_difference(prices);
  EXPECT_EQ(returns.length(), 3849u);
  EXPECT_EQ(build_schedule(static_cast<std::int64_t>(returns.length())).i_T, 68);
  EXPECT_EQ(returns.provenance, (std::vector<std::string>{"raw", "log-diff"}));
}

TEST(Pipeline, CsvRoundTripDetectsSameChanges) {
  ScenarioConfig sc;
  sc.kind = "single";
  sc.n = 30;
  sc.t = 200;
  sc.v = 30;
  sc.seed = 5;
  const auto mu = sc.means();
  const auto data = gen_ar1(sc.ar1, sc.n, sc.t, substream(sc.seed, 0), &mu);
  const auto cfg = make_config(sc.n, sc.t, 0.0, kernel_for(sc.ar1));
  const auto direct = sl_detect(data, cfg);
  std::stringstream buf;
  write_csv(buf, dataset_from(data));
  const auto reread = read_csv(buf, CsvOptions{}).matrix();
  const auto again = sl_detect(reread, cfg);
  EXPECT_EQ(direct.detections, again.detections);
  EXPECT_FALSE(direct.detections.empty());
}

TEST(MaxAbsCorrelation, Basic) {
  Dataset ds;
  ds.names = {"a", "b", "c"};
  ds.series = {{1, 2, 3, 4}, {2, 4, 6, 8.5}, {1, -1, 1, -1}};
  const double r = max_abs_correlation(ds);
  EXPECT_GT(r, 0.99);
  EXPECT_LE(r, 1.0);
  ds.series[1] = {-4, -3, -2, -1};
  EXPECT_NEAR(max_abs_correlation(ds), 1.0, 1e-12);
}
