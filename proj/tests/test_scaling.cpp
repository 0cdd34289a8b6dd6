#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vbid/scaling.hpp"

using namespace vbid;

TEST_CASE("sigmoid scaling fixed points") {
  CHECK(sigmoid_scale(0.0, 20.0) == 0.5);
  // 1 / (1 + e^-1)
  CHECK(sigmoid_scale(20.0, 20.0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(sigmoid_scale(-20.0, 20.0) == doctest::Approx(0.2689414213699951).epsilon(1e-15));
  CHECK(sigmoid_scale(1e6, 20.0) > 0.999999);
  CHECK(sigmoid_scale(1e6, 20.0) < 1.0);
}

TEST_CASE("sigmoid scale/unscale round trip under 1e-9") {
  for (double theta : {10.0, 20.0, 40.0, 1000.0}) {
    for (double x = -5.0 * theta; x <= 5.0 * theta; x += theta / 7.0) {
      double y = sigmoid_scale(x, theta);
      CHECK(std::fabs(sigmoid_unscale(y, theta) - x) < 1e-9);
    }
  }
}

TEST_CASE("sigmoid domain errors") {
  CHECK_THROWS_AS(sigmoid_scale(0.0, 0.0), NonPositiveTheta);
  CHECK_THROWS_AS(sigmoid_scale(0.0, -3.0), NonPositiveTheta);
  CHECK_THROWS_AS(sigmoid_unscale(0.0, 20.0), OutOfRange);
  CHECK_THROWS_AS(sigmoid_unscale(1.0, 20.0), OutOfRange);
  CHECK_THROWS_AS(sigmoid_unscale(-0.5, 20.0), OutOfRange);
}

TEST_CASE("theta rule clamps spread stddev to [10, 40]") {
  CHECK(theta_from_spread_stddev(5.0) == 10.0);
  CHECK(theta_from_spread_stddev(23.7) == 23.7);
  CHECK(theta_from_spread_stddev(400.0) == 40.0);
}

namespace {
FeatureFrameSeries frame() {
  FeatureFrameSeries f;
  f.names = {"load", "hour_03", "flat"};
  f.hours = {0, 3600, 7200, 10800};
  f.values = {{10.0, 0.0, 2.0},
              {20.0, 1.0, 2.0},
              {30.0, 0.0, 2.0},
              {40.0, 0.0, 2.0}};
  return f;
}
}  // namespace

TEST_CASE("z-score fit: mean 0, sample stddev 1, one-hots untouched") {
  auto [stats, norm] = zscore_fit_apply(frame());
  REQUIRE(stats.size() == 3);
  CHECK(stats[0].mean == 25.0);
  // sample (n-1) stddev of {10,20,30,40}
  CHECK(stats[0].stddev == doctest::Approx(12.909944487358056).epsilon(1e-12));
  CHECK_FALSE(stats[0].onehot);
  CHECK(stats[1].onehot);
  CHECK(stats[2].constant);

  double mean = 0.0;
  for (const auto& row : norm.values) mean += row[0];
  CHECK(std::fabs(mean / 4.0) < 1e-12);
  double var = 0.0;
  for (const auto& row : norm.values) var += row[0] * row[0];
  CHECK(var / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
  // one-hot passthrough
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(norm.values[r][1] == frame().values[r][1]);
  }
  // constant column centered to zero
  for (const auto& row : norm.values) CHECK(row[2] == 0.0);
}

TEST_CASE("frozen stats applied to new data; name mismatch rejected") {
  auto [stats, norm] = zscore_fit_apply(frame());
  FeatureFrameSeries fresh = frame();
  fresh.values = {{25.0, 1.0, 2.0}};
  fresh.hours = {999 * 3600};
  FeatureFrameSeries out = zscore_apply(stats, fresh);
  CHECK(out.values[0][0] == 0.0);  // equals the fitted mean

  fresh.names[0] = "other";
  CHECK_THROWS_AS(zscore_apply(stats, fresh), FeatureMismatch);
}

TEST_CASE("scaling config validation") {
  ScalingConfig cfg;
  cfg.theta_quantity = 15.0;  // must stay above theta_spread (default 20)
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  ScalingConfig ok;
  CHECK_NOTHROW(ok.validate());
}
