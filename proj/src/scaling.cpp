#include "vbid/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vbid {

void ScalingConfig::validate() const {
  if (theta_spread <= 0.0) throw NonPositiveTheta("theta_spread must be > 0");
  if (theta_quantity <= theta_spread) {
    throw InvalidConfig("theta_quantity must exceed theta_spread");
  }
  for (const auto& s : feature_stats) {
    if (!s.onehot && !s.constant && s.stddev <= 0.0) {
      throw InvalidConfig("stored stddev must be > 0 for feature " + s.name);
    }
  }
}

double sigmoid_scale(double x, double theta) {
  if (theta <= 0.0) throw NonPositiveTheta("theta must be > 0");
  double y = 1.0 / (1.0 + std::exp(-x / theta));
  // keep the result strictly inside (0,1) so unscale stays defined
  if (y >= 1.0) y = std::nextafter(1.0, 0.0);
  if (y <= 0.0) y = std::numeric_limits<double>::min();
  return y;
}

double sigmoid_unscale(double y, double theta) {
  if (theta <= 0.0) throw NonPositiveTheta("theta must be > 0");
  if (!(y > 0.0) || !(y < 1.0)) {
    throw OutOfRange("sigmoid_unscale input must lie in (0,1)");
  }
  return theta * std::log(y / (1.0 - y));
}

double theta_from_spread_stddev(double stddev) {
  if (!(stddev > 0.0)) return 10.0;
  return std::clamp(stddev, 10.0, 40.0);
}

std::pair<std::vector<FeatureStat>, FeatureFrameSeries> zscore_fit_apply(
    const FeatureFrameSeries& frames) {
  const std::size_t n = frames.hours.size();
  const std::size_t k = frames.names.size();
  if (n < 2) throw EmptyDataset("zscore fit needs >= 2 samples");

  std::vector<FeatureStat> stats(k);
  for (std::size_t j = 0; j < k; ++j) {
    FeatureStat& s = stats[j];
    s.name = frames.names[j];
    if (s.name.rfind("hour_", 0) == 0) {
      s.onehot = true;
      continue;
    }
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += frames.values[r][j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      double d = frames.values[r][j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n - 1);
    s.mean = mean;
    if (var > 0.0) {
      s.stddev = std::sqrt(var);
    } else {
      s.constant = true;
      s.stddev = 1.0;
    }
  }
  return {stats, zscore_apply(stats, frames)};
}

FeatureFrameSeries zscore_apply(const std::vector<FeatureStat>& stats,
                                const FeatureFrameSeries& frames) {
  if (stats.size() != frames.names.size()) {
    throw FeatureMismatch("feature count mismatch in zscore_apply");
  }
  for (std::size_t j = 0; j < stats.size(); ++j) {
    if (stats[j].name != frames.names[j]) {
      throw FeatureMismatch("feature name mismatch: expected " + stats[j].name +
                            ", got " + frames.names[j]);
    }
  }
  FeatureFrameSeries out = frames;
  for (auto& row : out.values) {
    for (std::size_t j = 0; j < stats.size(); ++j) {
      const FeatureStat& s = stats[j];
      if (s.onehot) continue;
      row[j] = (row[j] - s.mean) / s.stddev;
    }
  }
  return out;
}

}  // namespace vbid
