#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"

using namespace slscan;

namespace {

Segmentation from_labels(std::vector<std::int64_t> v) { return Segmentation{std::move(v)}; }

std::vector<std::int64_t> random_partition(std::mt19937_64& gen, std::size_t T) {
  std::vector<std::int64_t> labels(T);
  std::uniform_int_distribution<std::int64_t> pick(0, 4);
  for (auto& l : labels) l = pick(gen);
  return labels;
}

}  // namespace

TEST(SegmentationLabels, Examples) {
  EXPECT_EQ(segmentation_labels({}, 5).labels, (std::vector<std::int64_t>{0, 0, 0, 0, 0}));
  const std::vector<std::int64_t> one{2}, two{1, 3};
  EXPECT_EQ(segmentation_labels(one, 5).labels, (std::vector<std::int64_t>{0, 0, 1, 1, 1}));
  EXPECT_EQ(segmentation_labels(two, 5).labels, (std::vector<std::int64_t>{0, 1, 1, 2, 2}));
  const std::vector<std::int64_t> dup{2, 2}, out{5}, zero{0};
  EXPECT_THROW(segmentation_labels(dup, 5), std::invalid_argument);
  EXPECT_THROW(segmentation_labels(out, 5), std::invalid_argument);
  EXPECT_THROW(segmentation_labels(zero, 5), std::invalid_argument);
}

TEST(Ari, HandCase) {
  const auto truth = from_labels({0, 0, 0, 1, 1, 1});
  const auto est = from_labels({0, 0, 1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(adjusted_rand_index(est, truth), 12.0 / 37.0);
  EXPECT_NEAR(adjusted_rand_index(est, truth), 0.324324, 1e-6);
  EXPECT_EQ(adjusted_rand_index(truth, truth), 1.0);
  EXPECT_EQ(adjusted_rand_index(from_labels({3, 3, 3}), from_labels({7, 7, 7})), 1.0);
  EXPECT_THROW(adjusted_rand_index(truth, from_labels({0, 0})), std::invalid_argument);
  EXPECT_THROW(adjusted_rand_index(from_labels({0}), from_labels({0})), std::invalid_argument);
}

TEST(Ari, MatchesPairCountingBruteForce) {
  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t T = std::uniform_int_distribution<std::size_t>(2, 50)(gen);
    const auto a = random_partition(gen, T), b = random_partition(gen, T);
    const double fast = adjusted_rand_index(from_labels(a), from_labels(b));
    EXPECT_EQ(fast, oracle::brute_ari(a, b));
    EXPECT_EQ(fast, adjusted_rand_index(from_labels(b), from_labels(a)));
    auto relabeled = a;
    for (auto& l : relabeled) l = 10 - 3 * l;
    EXPECT_EQ(fast, adjusted_rand_index(from_labels(relabeled), from_labels(b)));
  }
}

TEST(Ari, SingleSegmentEstimate) {
  const std::vector<std::int64_t> tau{5, 10};
  const auto truth = segmentation_labels(tau, 15);
  const auto flat = segmentation_labels({}, 15);
  EXPECT_EQ(adjusted_rand_index(flat, truth), 0.0);
}

TEST(RandIndex, Basic) {
  const auto a = from_labels({0, 0, 0, 1, 1, 1});
  const auto b = from_labels({0, 0, 1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(rand_index(a, b), 10.0 / 15.0);
}

TEST(HitRate, Examples) {
  const std::vector<std::optional<std::int64_t>> exact{100, 100, 100};
  EXPECT_EQ(hit_rate(exact, 100, 0), 1.0);
  const std::vector<std::optional<std::int64_t>> mixed{98, 104, std::nullopt};
  EXPECT_DOUBLE_EQ(hit_rate(mixed, 100, 3), 1.0 / 3.0);
  const std::vector<std::optional<std::int64_t>> far{1, 1000000};
  EXPECT_EQ(hit_rate(far, 100, std::numeric_limits<double>::infinity()), 1.0);
  EXPECT_THROW(hit_rate(far, 100, -1), std::invalid_argument);
  double prev = 0.0;
  for (double k = 0; k < 12; k += 0.5) {
    const double h = hit_rate(mixed, 100, k);
    EXPECT_GE(h, prev);
    prev = h;
  }
}

TEST(Nearest, TiesGoEarlier) {
  const std::vector<std::int64_t> d{90, 110, 300};
  EXPECT_EQ(nearest(d, 100), 90);
  EXPECT_EQ(nearest(d, 250), 300);
  EXPECT_FALSE(nearest(std::vector<std::int64_t>{}, 5));
}

TEST(CountHistogram, Examples) {
  const std::vector<std::size_t> threes(10, 3);
  const std::vector<double> ones(10, 1.0);
  const auto h = count_histogram(threes, ones);
  EXPECT_EQ(h.count(3), 10u);
  EXPECT_EQ(h.count(2) + h.count(4) + h.count(5) + h.count(6) + h.below + h.above, 0u);
  EXPECT_EQ(h.mean_ari, 1.0);
  const std::vector<std::size_t> mixed{0, 1, 2, 3, 3, 4, 6, 7, 9};
  const auto m = count_histogram(mixed, {});
  EXPECT_EQ(m.below, 2u);
  EXPECT_EQ(m.above, 2u);
  std::size_t total = m.below + m.above;
  for (auto b : m.bins) total += b;
  EXPECT_EQ(total, mixed.size());
  EXPECT_THROW(m.count(7), std::out_of_range);
  EXPECT_THROW(count_histogram(mixed, ones), std::invalid_argument);
}
