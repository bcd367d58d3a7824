#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gsco/metrics.hpp"
#include "oracles.hpp"

using namespace gsco;

namespace {

double mean_stat(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace

TEST_CASE("constant data gives a zero-width interval") {
  std::vector<double> values(25, 0.7);
  auto result = bootstrap_ci<double>(values, mean_stat, 500, 99);
  CHECK(result.ci_low == result.point);
  CHECK(result.ci_high == result.point);
  CHECK(result.point == Catch::Approx(0.7).margin(1e-12));
}

TEST_CASE("same seed reproduces the interval; different seeds may not") {
  std::vector<double> values;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> value(0.0, 1.0);
  for (int i = 0; i < 60; ++i) values.push_back(value(rng));

  auto a = bootstrap_ci<double>(values, mean_stat, 400, 1234);
  auto b = bootstrap_ci<double>(values, mean_stat, 400, 1234);
  CHECK(a.point == b.point);
  CHECK(a.ci_low == b.ci_low);
  CHECK(a.ci_high == b.ci_high);
}

TEST_CASE("bootstrap interval tracks the analytic binomial interval") {
  // 160 hits out of 200: the empirical rate is exactly 0.8
  std::vector<double> values(200, 0.0);
  for (int i = 0; i < 160; ++i) values[static_cast<std::size_t>(i)] = 1.0;

  auto result = bootstrap_ci<double>(values, mean_stat, 1000, 7);
  CHECK(result.point == 0.8);
  auto [lo, hi] = oracle::binomial_normal_ci(0.8, 200);
  CHECK(std::abs(result.ci_low - lo) <= 0.03);
  CHECK(std::abs(result.ci_high - hi) <= 0.03);
}

TEST_CASE("interval brackets the point estimate for accuracy and F1") {
  std::mt19937 rng(13);
  std::uniform_int_distribution<std::size_t> label(0, 2);
  std::uniform_int_distribution<int> size(10, 60);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = size(rng);
    std::vector<double> correct;
    std::vector<std::vector<std::size_t>> truth, pred;
    for (int i = 0; i < n; ++i) {
      const std::size_t t = label(rng), p = label(rng);
      truth.push_back({t});
      pred.push_back({p});
      correct.push_back(t == p ? 1.0 : 0.0);
    }

    auto acc = bootstrap_ci<double>(correct, mean_stat, 300, 1000 + trial);
    CHECK(acc.ci_low <= acc.point);
    CHECK(acc.point <= acc.ci_high);

    struct Pair {
      std::vector<std::size_t> t, p;
    };
    std::vector<Pair> pairs;
    for (int i = 0; i < n; ++i) pairs.push_back({truth[i], pred[i]});
    auto f1_stat = [](std::span<const Pair> s) {
      std::vector<std::vector<std::size_t>> t, p;
      for (const auto& pair : s) {
        t.push_back(pair.t);
        p.push_back(pair.p);
      }
      return aggregate_f1(t, p, 3, F1Mode::Macro);
    };
    auto f1 = bootstrap_ci<Pair>(pairs, f1_stat, 300, 2000 + trial);
    CHECK(f1.ci_low <= f1.point + 1e-12);
    CHECK(f1.point <= f1.ci_high + 1e-12);
  }
}

TEST_CASE("empty input and zero replicates are rejected") {
  std::vector<double> empty;
  CHECK_THROWS_AS(bootstrap_ci<double>(empty, mean_stat, 100, 1), EmptyInputError);
  std::vector<double> one = {1.0};
  CHECK_THROWS_AS(bootstrap_ci<double>(one, mean_stat, 0, 1), ValidationError);
}
