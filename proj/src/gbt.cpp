#include "vbid/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vbid {

namespace {

std::string fmt_hex(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_hex(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw ParseError("gbt: bad numeric field: " + s);
  return v;
}

// Best admissible split for a single feature, or gain <= 0 when none.
SplitCandidate best_split_for_feature(
    int k, const std::vector<std::vector<double>>& features,
    const std::vector<std::size_t>& sample_set, const std::vector<double>& g,
    const std::vector<double>& h, const GbtParams& params, double bound_lo,
    double bound_hi, double g_total, double h_total) {
  const double lambda = params.reg_lambda;
  const std::vector<double>& col = features[static_cast<std::size_t>(k)];
  std::vector<std::size_t> order = sample_set;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return col[a] != col[b] ? col[a] < col[b] : a < b;
  });

  SplitCandidate best;
  best.gain = 0.0;
  double gl = 0.0, hl = 0.0;
  double parent_term = g_total * g_total / (h_total + lambda);
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    gl += g[order[i]];
    hl += h[order[i]];
    double va = col[order[i]];
    double vb = col[order[i + 1]];
    if (va == vb) continue;
    double gr = g_total - gl, hr = h_total - hl;
    double wl = -gl / (hl + lambda);
    double wr = -gr / (hr + lambda);
    if (k == params.monotone_feature) {
      if (!(wl >= wr)) continue;
      if (wl > bound_hi || wl < bound_lo || wr > bound_hi || wr < bound_lo) {
        continue;
      }
    }
    double gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
                         parent_term) -
                  params.min_split_gain;
    if (gain > best.gain) {
      best.feature = k;
      best.threshold = 0.5 * (va + vb);
      best.gain = gain;
      best.weight_left = wl;
      best.weight_right = wr;
    }
  }
  return best;
}

}  // namespace

void GbtParams::validate() const {
  if (num_rounds < 1) throw InvalidConfig("gbt: num_rounds must be >= 1");
  if (max_depth < 1) throw InvalidConfig("gbt: max_depth must be >= 1");
  if (reg_lambda < 0.0) throw InvalidConfig("gbt: reg_lambda must be >= 0");
  if (min_split_gain < 0.0) throw InvalidConfig("gbt: min_split_gain must be >= 0");
  if (learning_rate <= 0.0 || learning_rate > 1.0) {
    throw InvalidConfig("gbt: learning_rate must be in (0,1]");
  }
}

std::optional<SplitCandidate> find_best_split(
    const std::vector<std::vector<double>>& features,
    const std::vector<std::size_t>& sample_set, const std::vector<double>& g,
    const std::vector<double>& h, const GbtParams& params, double bound_lo,
    double bound_hi, bool parallel) {
  if (sample_set.size() < 2) return std::nullopt;
  const int n_features = static_cast<int>(features.size());
  double g_total = 0.0, h_total = 0.0;
  for (std::size_t i : sample_set) {
    g_total += g[i];
    h_total += h[i];
  }

  std::vector<SplitCandidate> per_feature(static_cast<std::size_t>(n_features));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
  for (int k = 0; k < n_features; ++k) {
    per_feature[static_cast<std::size_t>(k)] =
        best_split_for_feature(k, features, sample_set, g, h, params, bound_lo,
                               bound_hi, g_total, h_total);
  }

  // Deterministic reduction in feature order: ties keep the lowest feature
  // index; within a feature, the ascending scan keeps the lowest threshold.
  SplitCandidate best;
  best.gain = 0.0;
  for (const auto& c : per_feature) {
    if (c.feature >= 0 && c.gain > best.gain) best = c;
  }
  if (best.feature < 0 || !(best.gain > 0.0)) return std::nullopt;
  return best;
}

namespace {

int build_node(Tree& tree, const std::vector<std::vector<double>>& features,
               const std::vector<std::size_t>& sample_set,
               const std::vector<double>& g, const std::vector<double>& h,
               const GbtParams& params, int depth, double bound_lo,
               double bound_hi, bool parallel) {
  double g_sum = 0.0, h_sum = 0.0;
  for (std::size_t i : sample_set) {
    g_sum += g[i];
    h_sum += h[i];
  }

  int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();

  std::optional<SplitCandidate> split;
  if (depth < params.max_depth && sample_set.size() >= 2) {
    split = find_best_split(features, sample_set, g, h, params, bound_lo,
                            bound_hi, parallel);
  }
  if (!split) {
    TreeNode& leaf = tree.nodes[static_cast<std::size_t>(idx)];
    leaf.is_leaf = true;
    leaf.bound_lo = bound_lo;
    leaf.bound_hi = bound_hi;
    double w = (h_sum + params.reg_lambda) > 0.0
                   ? -g_sum / (h_sum + params.reg_lambda)
                   : 0.0;
    leaf.weight = std::clamp(w, bound_lo, bound_hi);
    return idx;
  }

  std::vector<std::size_t> left_set, right_set;
  const std::vector<double>& split_col =
      features[static_cast<std::size_t>(split->feature)];
  for (std::size_t i : sample_set) {
    if (split_col[i] < split->threshold) {
      left_set.push_back(i);
    } else {
      right_set.push_back(i);
    }
  }

  double left_lo = bound_lo, left_hi = bound_hi;
  double right_lo = bound_lo, right_hi = bound_hi;
  if (split->feature == params.monotone_feature) {
    // Lower-bound the left subtree and upper-bound the right one at the
    // midpoint weight so sibling subtrees cannot cross.
    double mid = 0.5 * (split->weight_left + split->weight_right);
    left_lo = std::max(left_lo, mid);
    right_hi = std::min(right_hi, mid);
  }

  int left = build_node(tree, features, left_set, g, h, params, depth + 1,
                        left_lo, left_hi, parallel);
  int right = build_node(tree, features, right_set, g, h, params, depth + 1,
                         right_lo, right_hi, parallel);
  TreeNode& node = tree.nodes[static_cast<std::size_t>(idx)];
  node.is_leaf = false;
  node.feature = split->feature;
  node.threshold = split->threshold;
  node.left = left;
  node.right = right;
  return idx;
}

}  // namespace

double Tree::predict(const std::vector<double>& x) const {
  int idx = 0;
  while (!nodes[static_cast<std::size_t>(idx)].is_leaf) {
    const TreeNode& n = nodes[static_cast<std::size_t>(idx)];
    idx = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(idx)].weight;
}

double GbtEnsemble::predict(const std::vector<double>& x) const {
  if (x.size() != n_features) throw ShapeMismatch("gbt: feature vector length");
  double out = base_score;
  for (const auto& t : trees) out += params.learning_rate * t.predict(x);
  return out;
}

GbtEnsemble fit_gbt(const std::vector<std::vector<double>>& features,
                    const std::vector<double>& targets, const GbtParams& params,
                    bool parallel) {
  params.validate();
  const std::size_t n = targets.size();
  if (n == 0 || features.empty()) throw EmptyDataset("gbt: empty dataset");
  for (const auto& col : features) {
    if (col.size() != n) throw ShapeMismatch("gbt: column length");
  }
  if (n < 2) throw EmptyDataset("gbt: need >= 2 samples");

  GbtEnsemble e;
  e.params = params;
  e.n_features = features.size();
  double mean = 0.0;
  for (double t : targets) mean += t;
  e.base_score = mean / static_cast<double>(n);

  bool constant = std::all_of(targets.begin(), targets.end(),
                              [&](double t) { return t == targets[0]; });
  if (constant) {
    e.constant_target = true;
    return e;
  }

  std::vector<double> preds(n, e.base_score);
  std::vector<double> g(n), h(n, 1.0);
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const double inf = std::numeric_limits<double>::infinity();

  for (int round = 0; round < params.num_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) g[i] = preds[i] - targets[i];
    Tree tree;
    build_node(tree, features, all, g, h, params, 0, -inf, inf, parallel);
    if (tree.nodes.size() == 1 && tree.nodes[0].weight == 0.0) {
      break;  // nothing left to fit
    }
    std::vector<double> row(e.n_features);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t f = 0; f < e.n_features; ++f) row[f] = features[f][i];
      preds[i] += params.learning_rate * tree.predict(row);
    }
    e.trees.push_back(std::move(tree));
  }
  return e;
}

// ---------------------------------------------------------------------------
// Step-function extraction and PWL conversion
// ---------------------------------------------------------------------------

double StepFunction::value_at(double x) const {
  std::size_t j = 0;
  while (j < breakpoints.size() && x >= breakpoints[j]) ++j;
  return levels[j];
}

StepFunction StepFunction::translated(double delta) const {
  StepFunction out = *this;
  out.x_lo += delta;
  out.x_hi += delta;
  for (double& b : out.breakpoints) b += delta;
  return out;
}

namespace {

void collect_thresholds(const Tree& tree, int idx,
                        const std::vector<double>& context, int p,
                        std::set<double>& out) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(idx)];
  if (n.is_leaf) return;
  if (n.feature == p) {
    out.insert(n.threshold);
    collect_thresholds(tree, n.left, context, p, out);
    collect_thresholds(tree, n.right, context, p, out);
  } else {
    int next = context[static_cast<std::size_t>(n.feature)] < n.threshold
                   ? n.left
                   : n.right;
    collect_thresholds(tree, next, context, p, out);
  }
}

}  // namespace

StepFunction extract_step_function(const GbtEnsemble& ensemble,
                                   const std::vector<double>& context,
                                   double x_lo, double x_hi) {
  if (!(x_lo < x_hi)) throw EmptyDomain("step extraction: x_lo >= x_hi");
  if (context.size() != ensemble.n_features) {
    throw ShapeMismatch("gbt: context vector length");
  }
  const int p = ensemble.params.monotone_feature;
  std::set<double> thresholds;
  if (p >= 0) {
    for (const auto& t : ensemble.trees) {
      collect_thresholds(t, 0, context, p, thresholds);
    }
  }

  StepFunction step;
  step.x_lo = x_lo;
  step.x_hi = x_hi;
  for (double t : thresholds) {
    if (t > x_lo && t < x_hi) {
      if (!step.breakpoints.empty() &&
          t - step.breakpoints.back() <
              1e-12 * std::max(1.0, std::fabs(t))) {
        continue;
      }
      step.breakpoints.push_back(t);
    }
  }

  std::vector<double> x = context;
  for (std::size_t j = 0; j <= step.breakpoints.size(); ++j) {
    double a = j == 0 ? x_lo : step.breakpoints[j - 1];
    double b = j == step.breakpoints.size() ? x_hi : step.breakpoints[j];
    x[static_cast<std::size_t>(p >= 0 ? p : 0)] = 0.5 * (a + b);
    step.levels.push_back(p >= 0 ? ensemble.predict(x)
                                 : ensemble.predict(context));
  }
  return step;
}

PwlSensitivity step_to_piecewise_linear(const StepFunction& step,
                                        HourStamp hour) {
  if (step.levels.empty()) throw EmptyDomain("step has no levels");
  PwlSensitivity pwl;
  pwl.hour = hour;
  pwl.x_lo = step.x_lo;
  pwl.x_hi = step.x_hi;

  // Running-min guards FP noise in the extracted levels; slopes must come
  // out <= 0 exactly.
  std::vector<double> levels = step.levels;
  for (std::size_t j = 1; j < levels.size(); ++j) {
    levels[j] = std::min(levels[j], levels[j - 1]);
  }

  if (step.breakpoints.empty()) {
    pwl.intervals.push_back({step.x_lo, 0.0, levels[0]});
  } else {
    // Knots at the midpoint of each step interval; flat extensions at both
    // domain ends keep the function defined on all of [x_lo, x_hi].
    std::vector<double> mids(levels.size());
    for (std::size_t j = 0; j < levels.size(); ++j) {
      double a = j == 0 ? step.x_lo : step.breakpoints[j - 1];
      double b = j == step.breakpoints.size() ? step.x_hi : step.breakpoints[j];
      mids[j] = 0.5 * (a + b);
    }
    pwl.intervals.push_back({step.x_lo, 0.0, levels[0]});
    for (std::size_t j = 0; j + 1 < mids.size(); ++j) {
      double slope = (levels[j + 1] - levels[j]) / (mids[j + 1] - mids[j]);
      double intercept = levels[j] - slope * mids[j];
      pwl.intervals.push_back({mids[j], slope, intercept});
    }
    pwl.intervals.push_back({mids.back(), 0.0, levels.back()});
  }

  // Re-base so the shift at x = 0 is exactly 0.
  double anchor = std::clamp(0.0, pwl.x_lo, pwl.x_hi);
  const PwlInterval& seg = pwl.intervals[pwl.segment_index(anchor)];
  double v0 = seg.a * anchor + seg.b;
  for (auto& s : pwl.intervals) s.b -= v0;
  pwl.big_m = compute_big_m(pwl.intervals, pwl.x_lo, pwl.x_hi);
  return pwl;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

void dump_node(std::ostream& out, const Tree& tree, int idx) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(idx)];
  if (n.is_leaf) {
    out << "L " << fmt_hex(n.weight) << ' ' << fmt_hex(n.bound_lo) << ' '
        << fmt_hex(n.bound_hi) << '\n';
  } else {
    out << "S " << n.feature << ' ' << fmt_hex(n.threshold) << '\n';
    dump_node(out, tree, n.left);
    dump_node(out, tree, n.right);
  }
}

int read_node(std::istream& in, Tree& tree) {
  std::string tag;
  if (!(in >> tag)) throw ParseError("gbt: truncated tree");
  int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (tag == "L") {
    std::string w, lo, hi;
    in >> w >> lo >> hi;
    TreeNode& n = tree.nodes[static_cast<std::size_t>(idx)];
    n.is_leaf = true;
    n.weight = parse_hex(w);
    n.bound_lo = parse_hex(lo);
    n.bound_hi = parse_hex(hi);
  } else if (tag == "S") {
    int feature;
    std::string thr;
    in >> feature >> thr;
    int left = read_node(in, tree);
    int right = read_node(in, tree);
    TreeNode& n = tree.nodes[static_cast<std::size_t>(idx)];
    n.is_leaf = false;
    n.feature = feature;
    n.threshold = parse_hex(thr);
    n.left = left;
    n.right = right;
  } else {
    throw ParseError("gbt: unexpected node tag '" + tag + "'");
  }
  return idx;
}

}  // namespace

void save_gbt(const GbtEnsemble& e, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "vbid-gbt v1\n";
  out << "params " << e.params.num_rounds << ' ' << e.params.max_depth << ' '
      << fmt_hex(e.params.reg_lambda) << ' ' << fmt_hex(e.params.min_split_gain)
      << ' ' << fmt_hex(e.params.learning_rate) << ' '
      << e.params.monotone_feature << ' ' << e.params.seed << '\n';
  out << "n_features " << e.n_features << '\n';
  out << "base_score " << fmt_hex(e.base_score) << '\n';
  out << "constant_target " << (e.constant_target ? 1 : 0) << '\n';
  out << "trees " << e.trees.size() << '\n';
  for (const auto& t : e.trees) dump_node(out, t, 0);
}

GbtEnsemble load_gbt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string magic, version, tok;
  in >> magic >> version;
  if (magic != "vbid-gbt" || version != "v1") {
    throw ParseError(path + ": not a v1 gbt dump");
  }
  GbtEnsemble e;
  std::string lambda, gamma, lr;
  in >> tok >> e.params.num_rounds >> e.params.max_depth >> lambda >> gamma >>
      lr >> e.params.monotone_feature >> e.params.seed;
  if (tok != "params") throw ParseError("gbt: expected 'params'");
  e.params.reg_lambda = parse_hex(lambda);
  e.params.min_split_gain = parse_hex(gamma);
  e.params.learning_rate = parse_hex(lr);
  in >> tok >> e.n_features;
  if (tok != "n_features") throw ParseError("gbt: expected 'n_features'");
  std::string base;
  in >> tok >> base;
  if (tok != "base_score") throw ParseError("gbt: expected 'base_score'");
  e.base_score = parse_hex(base);
  int ct;
  in >> tok >> ct;
  if (tok != "constant_target") throw ParseError("gbt: expected 'constant_target'");
  e.constant_target = ct != 0;
  std::size_t n_trees = 0;
  in >> tok >> n_trees;
  if (tok != "trees") throw ParseError("gbt: expected 'trees'");
  for (std::size_t t = 0; t < n_trees; ++t) {
    Tree tree;
    read_node(in, tree);
    e.trees.push_back(std::move(tree));
  }
  return e;
}

}  // namespace vbid
