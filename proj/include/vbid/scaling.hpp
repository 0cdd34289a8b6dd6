// Sigmoid target scaling and z-score feature normalization shared by the
// forecasting models.
#pragma once

#include <string>
#include <vector>

#include "vbid/common.hpp"
#include "vbid/market.hpp"

namespace vbid {

struct FeatureStat {
  std::string name;
  double mean = 0.0;
  double stddev = 1.0;
  bool onehot = false;    // bypassed: indicator columns are left as-is
  bool constant = false;  // ZeroVariance flag: centered only
};

struct ScalingConfig {
  double theta_spread = 20.0;
  double theta_quantity = 1000.0;  // must stay well above theta_spread
  std::vector<FeatureStat> feature_stats;
  void validate() const;
};

// f(x) = 1 / (1 + exp(-x / theta)). Strictly increasing, range (0,1).
double sigmoid_scale(double x, double theta);
// Inverse of sigmoid_scale. Throws OutOfRange for y outside (0,1).
double sigmoid_unscale(double y, double theta);

// Default per-node theta rule: clamp(stddev of training spreads, 10, 40).
double theta_from_spread_stddev(double stddev);

// Fit per-feature mean/stddev on `frames` and return normalized copies.
// Columns whose name starts with "hour_" are treated as one-hot and passed
// through. Constant features are centered and flagged.
std::pair<std::vector<FeatureStat>, FeatureFrameSeries> zscore_fit_apply(
    const FeatureFrameSeries& frames);

// Apply frozen stats to new data. Throws FeatureMismatch on name mismatch.
FeatureFrameSeries zscore_apply(const std::vector<FeatureStat>& stats,
                                const FeatureFrameSeries& frames);

}  // namespace vbid
