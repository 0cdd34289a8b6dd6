// Second-order gradient boosted regression trees with a monotonically
// non-increasing constraint on one designated feature, and extraction of the
// fitted sensitivity as a step function.
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vbid/common.hpp"
#include "vbid/sensitivity.hpp"

namespace vbid {

struct GbtParams {
  int num_rounds = 100;
  int max_depth = 4;
  double reg_lambda = 1.0;      // L2 leaf regularization
  double min_split_gain = 0.0;  // gamma
  double learning_rate = 0.1;   // shrinkage
  int monotone_feature = -1;    // index p; -1 disables the constraint
  std::uint64_t seed = 0;
  void validate() const;
};

struct TreeNode {
  bool is_leaf = true;
  // split
  int feature = -1;
  double threshold = 0.0;
  int left = -1, right = -1;  // indices into the tree's node pool
  // leaf
  double weight = 0.0;
  double bound_lo = -std::numeric_limits<double>::infinity();
  double bound_hi = std::numeric_limits<double>::infinity();
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(const std::vector<double>& x) const;
};

struct GbtEnsemble {
  double base_score = 0.0;
  std::vector<Tree> trees;
  GbtParams params;
  std::size_t n_features = 0;
  bool constant_target = false;  // flagged, not an error

  double predict(const std::vector<double>& x) const;
};

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  double weight_left = 0.0;
  double weight_right = 0.0;
};

// Exact greedy split search over all (feature, threshold) pairs. `features`
// is column-major: features[k][i] is feature k of sample i.
// gain = 0.5*[GL^2/(HL+l) + GR^2/(HR+l) - (GL+GR)^2/(HL+HR+l)] - gamma.
// For the monotone feature a candidate is admissible only when the left leaf
// weight is >= the right leaf weight and both child weights fall inside
// [bound_lo, bound_hi]. Returns nullopt when no admissible candidate has
// positive gain. `parallel` splits the per-feature scan across OpenMP
// threads; the serial path is the reference used by tests.
std::optional<SplitCandidate> find_best_split(
    const std::vector<std::vector<double>>& features,
    const std::vector<std::size_t>& sample_set, const std::vector<double>& g,
    const std::vector<double>& h, const GbtParams& params, double bound_lo,
    double bound_hi, bool parallel = false);

// Squared-error boosting: g_i = prediction - target, h_i = 1.
GbtEnsemble fit_gbt(const std::vector<std::vector<double>>& features,
                    const std::vector<double>& targets, const GbtParams& params,
                    bool parallel = false);

struct StepFunction {
  std::vector<double> breakpoints;  // strictly increasing, inside the domain
  std::vector<double> levels;       // breakpoints.size() + 1 entries
  double x_lo = 0.0, x_hi = 0.0;

  double value_at(double x) const;  // half-open: boundary joins the right side
  // Shift the x-axis by delta (used to move from market-wide net quantity
  // coordinates to the trader's x around a forecast anchor).
  StepFunction translated(double delta) const;
};

// Breakpoints are the union of the ensemble's thresholds on feature p that
// are reachable under `context` (a full feature vector whose p-coordinate is
// ignored), clipped to [x_lo, x_hi]; levels are predictions at interval
// midpoints.
StepFunction extract_step_function(const GbtEnsemble& ensemble,
                                   const std::vector<double>& context,
                                   double x_lo, double x_hi);

// Connect adjacent step midpoints into a continuous piecewise-linear
// function, then re-base intercepts so the shift at x = 0 is exactly 0.
PwlSensitivity step_to_piecewise_linear(const StepFunction& step,
                                        HourStamp hour = 0);

// Versioned text serialization (preorder tree dump).
void save_gbt(const GbtEnsemble& e, const std::string& path);
GbtEnsemble load_gbt(const std::string& path);

}  // namespace vbid
