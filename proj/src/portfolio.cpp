#include "vbid/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vbid {

namespace {
constexpr double kFeasTol = 1e-9;
}

double expected_bid_profit(double spread, BidSide side, const CostSchedule& costs) {
  return side == BidSide::inc ? spread - costs.gamma_inc
                              : -spread - costs.gamma_dec;
}

double empirical_var(const std::vector<double>& losses, double beta) {
  if (losses.empty()) throw EmptyLosses("empirical_var: no losses");
  if (!(beta > 0.0 && beta < 1.0)) throw OutOfRange("beta must be in (0,1)");
  std::vector<double> s = losses;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  // smallest loss whose empirical CDF reaches beta
  std::size_t k = static_cast<std::size_t>(
      std::ceil(beta * static_cast<double>(n) - kFeasTol));
  if (k > 0) --k;
  while ((static_cast<double>(k) + 1.0) / static_cast<double>(n) < beta - kFeasTol) {
    ++k;
  }
  return s[k];
}

double empirical_cvar(const std::vector<double>& losses, double beta) {
  if (losses.empty()) throw EmptyLosses("empirical_cvar: no losses");
  if (!(beta > 0.0 && beta < 1.0)) throw OutOfRange("beta must be in (0,1)");
  std::vector<double> s = losses;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  std::size_t k = 0;
  while ((static_cast<double>(k) + 1.0) / static_cast<double>(n) < beta - kFeasTol) {
    ++k;
  }
  double var = s[k];
  double tail = 0.0;
  for (std::size_t i = k + 1; i < n; ++i) tail += s[i];
  double prob_at_var = (static_cast<double>(k) + 1.0) / static_cast<double>(n);
  return ((prob_at_var - beta) * var + tail / static_cast<double>(n)) /
         (1.0 - beta);
}

double f_beta(const std::vector<double>& losses, double alpha, double beta) {
  if (losses.empty()) throw EmptyLosses("f_beta: no losses");
  if (!(beta > 0.0 && beta < 1.0)) throw OutOfRange("beta must be in (0,1)");
  double acc = 0.0;
  for (double l : losses) acc += std::max(0.0, l - alpha);
  return alpha + acc / ((1.0 - beta) * static_cast<double>(losses.size()));
}

void PortfolioInstance::validate() const {
  if (n_nodes == 0 || n_hours == 0 || n_hours > 24) {
    throw InvalidConfig("instance: need 1..24 hours and >= 1 node");
  }
  if (!(beta > 0.0 && beta < 1.0)) throw OutOfRange("beta must be in (0,1)");
  if (budget < 0.0 || risk_limit < 0.0) {
    throw InvalidConfig("budget and risk limit must be >= 0");
  }
  costs.validate();
  if (expected_spread.size() != n_nodes || pwl.size() != n_hours ||
      spread_samples.size() != n_hours ||
      (!y_forecast.empty() && y_forecast.size() != n_hours)) {
    throw ShapeMismatch("instance: container shapes");
  }
  for (const auto& row : expected_spread) {
    if (row.size() != n_hours) throw ShapeMismatch("expected_spread shape");
  }
  for (std::size_t h = 0; h < n_hours; ++h) {
    if (spread_samples[h].empty()) {
      throw EmptyLosses("instance: need >= 1 spread sample per hour");
    }
    for (const auto& v : spread_samples[h]) {
      if (v.size() != n_nodes) throw ShapeMismatch("spread sample shape");
    }
  }
}

MiqcpProblem build_problem(const PortfolioInstance& instance) {
  instance.validate();
  MiqcpProblem p;
  p.instance = instance;

  p.n_binaries = 2 * instance.n_nodes * instance.n_hours;
  p.n_variables = p.n_binaries;
  for (std::size_t h = 0; h < instance.n_hours; ++h) {
    const PwlSensitivity& pwl = instance.pwl[h];
    auto violations = validate(pwl);
    if (!violations.empty()) {
      throw InvalidPwl("hour " + std::to_string(h) + ": " + violations.front());
    }
    if (!(pwl.x_lo <= 0.0 && 0.0 <= pwl.x_hi)) {
      throw InfeasibleBounds("hour " + std::to_string(h) +
                             ": x bounds exclude 0");
    }
    // d, v, w per segment; one alpha; one q per sample
    p.n_variables += 3 * pwl.segment_count() + 1 + instance.spread_samples[h].size();
    double lo = std::max(pwl.x_lo, -static_cast<double>(instance.n_nodes));
    double hi = std::min(pwl.x_hi, static_cast<double>(instance.n_nodes));
    p.x_min.push_back(static_cast<int>(std::ceil(lo - kFeasTol)));
    p.x_max.push_back(static_cast<int>(std::floor(hi + kFeasTol)));
  }

  p.margin_inc.assign(instance.n_nodes, std::vector<double>(instance.n_hours));
  p.margin_dec.assign(instance.n_nodes, std::vector<double>(instance.n_hours));
  for (std::size_t i = 0; i < instance.n_nodes; ++i) {
    for (std::size_t h = 0; h < instance.n_hours; ++h) {
      p.margin_inc[i][h] = expected_bid_profit(instance.expected_spread[i][h],
                                               BidSide::inc, instance.costs);
      p.margin_dec[i][h] = expected_bid_profit(instance.expected_spread[i][h],
                                               BidSide::dec, instance.costs);
    }
  }
  return p;
}

double hour_loss(const PortfolioInstance& instance, std::size_t hour,
                 const std::vector<int>& z_inc_col,
                 const std::vector<int>& z_dec_col, std::size_t sample) {
  const auto& s = instance.spread_samples[hour][sample];
  double loss = 0.0;
  for (std::size_t i = 0; i < instance.n_nodes; ++i) {
    if (z_inc_col[i]) {
      loss -= expected_bid_profit(s[i], BidSide::inc, instance.costs);
    }
    if (z_dec_col[i]) {
      loss -= expected_bid_profit(s[i], BidSide::dec, instance.costs);
    }
  }
  return loss;
}

namespace {

// min over alpha of F_beta; the minimizer lies among the sample losses
// (F_beta is convex piecewise-linear in alpha with kinks there).
std::pair<double, double> min_f_beta(const std::vector<double>& losses,
                                     double beta) {
  double best_alpha = losses.front();
  double best = std::numeric_limits<double>::infinity();
  for (double cand : losses) {
    double val = f_beta(losses, cand, beta);
    if (val < best) {
      best = val;
      best_alpha = cand;
    }
  }
  return {best, best_alpha};
}

struct Evaluated {
  bool feasible = false;
  double objective = 0.0;
  double collateral = 0.0;
  double total_cvar = 0.0;
  PortfolioDecision decision;
  std::vector<double> cvar_per_hour;
  int n_bids = 0;
};

// Completes a z assignment: x, active interval, slacks, per-hour alpha and
// CVaR; evaluates objective and both constraints.
Evaluated evaluate_assignment(const MiqcpProblem& p,
                              const std::vector<std::vector<int>>& z_inc,
                              const std::vector<std::vector<int>>& z_dec) {
  const PortfolioInstance& ins = p.instance;
  Evaluated ev;
  ev.decision.z_inc = z_inc;
  ev.decision.z_dec = z_dec;
  ev.objective = 0.0;

  std::vector<int> zi_col(ins.n_nodes), zd_col(ins.n_nodes);
  for (std::size_t h = 0; h < ins.n_hours; ++h) {
    int x = 0;
    double linear = 0.0;
    int bids = 0;
    for (std::size_t i = 0; i < ins.n_nodes; ++i) {
      zi_col[i] = z_inc[i][h];
      zd_col[i] = z_dec[i][h];
      x += z_inc[i][h] - z_dec[i][h];
      bids += z_inc[i][h] + z_dec[i][h];
      linear += z_inc[i][h] * p.margin_inc[i][h] + z_dec[i][h] * p.margin_dec[i][h];
      ev.collateral += z_inc[i][h] * ins.costs.prox_inc +
                       z_dec[i][h] * ins.costs.prox_dec;
    }
    ev.n_bids += bids;
    if (x < p.x_min[h] || x > p.x_max[h]) return ev;  // infeasible

    const PwlSensitivity& pwl = ins.pwl[h];
    std::size_t active = pwl.segment_index(static_cast<double>(x));
    double xd = static_cast<double>(x);
    std::vector<double> v(pwl.segment_count()), w(pwl.segment_count(), 0.0);
    for (std::size_t j = 0; j < pwl.segment_count(); ++j) {
      v[j] = pwl.intervals[j].a * xd * xd + pwl.intervals[j].b * xd;
    }
    w[active] = v[active];
    ev.objective += linear + w[active];

    const std::size_t Ns = ins.spread_samples[h].size();
    std::vector<double> losses(Ns);
    for (std::size_t k = 0; k < Ns; ++k) {
      losses[k] = hour_loss(ins, h, zi_col, zd_col, k);
    }
    auto [cvar, alpha] = min_f_beta(losses, ins.beta);
    ev.total_cvar += cvar;
    ev.cvar_per_hour.push_back(cvar);

    ev.decision.x.push_back(x);
    ev.decision.d.push_back(active);
    ev.decision.v.push_back(std::move(v));
    ev.decision.w.push_back(std::move(w));
    ev.decision.alpha.push_back(alpha);
    std::vector<double> q(Ns);
    for (std::size_t k = 0; k < Ns; ++k) q[k] = std::max(0.0, losses[k] - alpha);
    ev.decision.q.push_back(std::move(q));
  }

  ev.feasible = ev.collateral <= ins.budget + kFeasTol &&
                ev.total_cvar <= ins.risk_limit + kFeasTol;
  return ev;
}

// Lexicographic key for deterministic tie-breaking: fewer bids first, then
// smaller flattened (z_inc, z_dec).
std::vector<int> flatten_z(const std::vector<std::vector<int>>& z_inc,
                           const std::vector<std::vector<int>>& z_dec) {
  std::vector<int> key;
  for (const auto& row : z_inc) key.insert(key.end(), row.begin(), row.end());
  for (const auto& row : z_dec) key.insert(key.end(), row.begin(), row.end());
  return key;
}

bool better_than(const Evaluated& a, const Evaluated& b) {
  if (a.objective != b.objective) return a.objective > b.objective;
  if (a.n_bids != b.n_bids) return a.n_bids < b.n_bids;
  return flatten_z(a.decision.z_inc, a.decision.z_dec) <
         flatten_z(b.decision.z_inc, b.decision.z_dec);
}

void fill_report(SolutionReport& r, const Evaluated& ev, const MiqcpProblem& p) {
  const PortfolioInstance& ins = p.instance;
  r.objective = ev.objective;
  r.decision = ev.decision;
  r.cvar_per_hour = ev.cvar_per_hour;
  r.collateral_used = ev.collateral;
  double min_prox = std::min(ins.costs.prox_inc, ins.costs.prox_dec);
  r.budget_binding = ev.collateral + min_prox > ins.budget + kFeasTol;
  r.risk_binding =
      ins.risk_limit - ev.total_cvar < 1e-6 * std::max(1.0, ins.risk_limit);
}

}  // namespace

SolutionReport solve_enumeration(const MiqcpProblem& problem, int workers) {
  const PortfolioInstance& ins = problem.instance;
  if (problem.n_binaries > 24) {
    throw TooManyBinaries("enumeration guard: > 24 binary variables");
  }
  const std::size_t K = ins.n_nodes * ins.n_hours;
  const std::uint64_t states = ins.exclusive_sides ? 3 : 4;
  std::uint64_t total = 1;
  for (std::size_t k = 0; k < K; ++k) total *= states;

  auto decode = [&](std::uint64_t code, std::vector<std::vector<int>>& zi,
                    std::vector<std::vector<int>>& zd) {
    for (std::size_t i = 0; i < ins.n_nodes; ++i) {
      for (std::size_t h = 0; h < ins.n_hours; ++h) {
        std::uint64_t s = code % states;
        code /= states;
        zi[i][h] = (s == 1 || s == 3) ? 1 : 0;
        zd[i][h] = (s == 2 || s == 3) ? 1 : 0;
      }
    }
  };

  // Each worker scans a contiguous code range and keeps its local best; the
  // reduction below is order-independent because better_than is a strict
  // total order over evaluated assignments.
  int n_threads = std::max(1, workers);
  std::vector<std::optional<Evaluated>> best_per(n_threads);
#ifdef _OPENMP
#pragma omp parallel num_threads(n_threads) if (n_threads > 1)
#endif
  {
#ifdef _OPENMP
    int tid = omp_get_thread_num();
    int nth = omp_get_num_threads();
#else
    int tid = 0, nth = 1;
#endif
    std::vector<std::vector<int>> zi(ins.n_nodes, std::vector<int>(ins.n_hours));
    std::vector<std::vector<int>> zd(ins.n_nodes, std::vector<int>(ins.n_hours));
    std::optional<Evaluated> local;
    for (std::uint64_t code = static_cast<std::uint64_t>(tid); code < total;
         code += static_cast<std::uint64_t>(nth)) {
      decode(code, zi, zd);
      Evaluated ev = evaluate_assignment(problem, zi, zd);
      if (!ev.feasible) continue;
      if (!local || better_than(ev, *local)) local = std::move(ev);
    }
    best_per[static_cast<std::size_t>(tid)] = std::move(local);
  }

  std::optional<Evaluated> best;
  for (auto& cand : best_per) {
    if (cand && (!best || better_than(*cand, *best))) best = std::move(cand);
  }
  if (!best) {
    // The empty portfolio has zero loss and zero collateral, so this can
    // only mean a negative budget/risk limit slipped through validation.
    throw NumericError("enumeration: no feasible assignment (internal error)");
  }
  SolutionReport r;
  fill_report(r, *best, problem);
  r.nodes_explored = total;
  r.gap = 0.0;
  r.optimal = true;
  return r;
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

namespace {

struct Item {
  std::size_t node = 0, hour = 0;
};

// Exact max of the hour's concave-per-piece sensitivity term
// psi(x) = a x^2 + b x over [lo, hi] (interval-wise vertex/endpoint scan).
double psi_max_on_range(const PwlSensitivity& pwl, double lo, double hi) {
  lo = std::max(lo, pwl.x_lo);
  hi = std::min(hi, pwl.x_hi);
  if (lo > hi) return -std::numeric_limits<double>::infinity();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < pwl.segment_count(); ++j) {
    double seg_lo = pwl.intervals[j].c;
    double seg_hi = j + 1 < pwl.segment_count() ? pwl.intervals[j + 1].c : pwl.x_hi;
    double a = std::max(lo, seg_lo), b = std::min(hi, seg_hi);
    if (a > b) continue;
    double ca = pwl.intervals[j].a, cb = pwl.intervals[j].b;
    auto val = [&](double x) { return ca * x * x + cb * x; };
    best = std::max({best, val(a), val(b)});
    if (ca < 0.0) {
      double vx = -cb / (2.0 * ca);
      if (vx > a && vx < b) best = std::max(best, val(vx));
    }
  }
  return best;
}

// Per item the best positive margin and its prox cost, for the fractional
// budget relaxation.
struct BoundItem {
  double margin = 0.0;
  double prox = 0.0;
  std::size_t item_index = 0;
};

struct Bounder {
  std::vector<BoundItem> by_ratio;  // descending margin/prox

  void init(const MiqcpProblem& p, const std::vector<Item>& items) {
    const PortfolioInstance& ins = p.instance;
    for (std::size_t t = 0; t < items.size(); ++t) {
      const Item& it = items[t];
      double mi = p.margin_inc[it.node][it.hour];
      double md = p.margin_dec[it.node][it.hour];
      BoundItem b;
      b.item_index = t;
      if (mi >= md) {
        b.margin = mi;
        b.prox = ins.costs.prox_inc;
      } else {
        b.margin = md;
        b.prox = ins.costs.prox_dec;
      }
      if (!ins.exclusive_sides && mi > 0.0 && md > 0.0) {
        // both sides may be taken; treat as one combined item (still valid
        // as an overestimate handled by summing the two margins)
        b.margin = mi + md;
        b.prox = ins.costs.prox_inc + ins.costs.prox_dec;
      }
      if (b.margin > 0.0) by_ratio.push_back(b);
    }
    std::sort(by_ratio.begin(), by_ratio.end(),
              [](const BoundItem& a, const BoundItem& b) {
                double ra = a.prox > 0.0 ? a.margin / a.prox
                                         : std::numeric_limits<double>::infinity();
                double rb = b.prox > 0.0 ? b.margin / b.prox
                                         : std::numeric_limits<double>::infinity();
                if (ra != rb) return ra > rb;
                return a.item_index < b.item_index;
              });
  }

  // Upper bound on the linear profit attainable from items with index >=
  // `from` under the remaining budget.
  double bound(std::size_t from, double capacity) const {
    double total = 0.0;
    for (const auto& b : by_ratio) {
      if (b.item_index < from) continue;
      if (b.prox <= 0.0 || b.prox <= capacity) {
        total += b.margin;
        capacity -= b.prox;
      } else if (capacity > 0.0) {
        total += b.margin * (capacity / b.prox);
        capacity = 0.0;
        break;
      } else {
        break;
      }
    }
    return total;
  }
};

struct BnbContext {
  const MiqcpProblem* p = nullptr;
  BnbOptions opt;
  std::vector<Item> items;
  std::vector<std::size_t> item_of_hour_end;  // item index one past each hour
  std::vector<double> psi_max_full;
  std::vector<double> cvar_lb;
  Bounder bounder;

  std::vector<std::vector<int>> zi, zd;
  std::optional<Evaluated> incumbent;
  std::uint64_t nodes = 0;
  bool aborted = false;
};

double remaining_psi_bound(const BnbContext& ctx, std::size_t hour_from) {
  double s = 0.0;
  for (std::size_t h = hour_from; h < ctx.psi_max_full.size(); ++h) {
    s += ctx.psi_max_full[h];
  }
  return s;
}

double remaining_cvar_lb(const BnbContext& ctx, std::size_t hour_from) {
  double s = 0.0;
  for (std::size_t h = hour_from; h < ctx.cvar_lb.size(); ++h) s += ctx.cvar_lb[h];
  return s;
}

void bnb_dfs(BnbContext& ctx, std::size_t t, double collateral,
             double completed_value, double completed_cvar, int cur_hour_x,
             double cur_hour_linear) {
  if (ctx.aborted) return;
  if (++ctx.nodes > ctx.opt.max_nodes) {
    ctx.aborted = true;
    return;
  }
  const MiqcpProblem& p = *ctx.p;
  const PortfolioInstance& ins = p.instance;

  if (t == ctx.items.size()) {
    Evaluated ev = evaluate_assignment(p, ctx.zi, ctx.zd);
    if (ev.feasible && (!ctx.incumbent || better_than(ev, *ctx.incumbent))) {
      ctx.incumbent = std::move(ev);
    }
    return;
  }

  const Item& it = ctx.items[t];
  std::size_t h = it.hour;

  // --- prune: upper bound vs incumbent ---
  // remaining items in this hour
  std::size_t hour_end = ctx.item_of_hour_end[h];
  std::size_t n_rest = hour_end - t;
  double x_lo_reach = cur_hour_x - static_cast<double>(n_rest);
  double x_hi_reach = cur_hour_x + static_cast<double>(n_rest);
  double psi_cur = psi_max_on_range(ins.pwl[h], x_lo_reach, x_hi_reach);
  if (psi_cur == -std::numeric_limits<double>::infinity()) return;  // x infeasible
  double ub = completed_value + cur_hour_linear + psi_cur +
              ctx.bounder.bound(t, ins.budget - collateral) +
              remaining_psi_bound(ctx, h + 1);
  if (ctx.incumbent && ub < ctx.incumbent->objective - kFeasTol) return;

  // --- prune: risk lower bound ---
  if (completed_cvar + ctx.cvar_lb[h] + remaining_cvar_lb(ctx, h + 1) >
      ins.risk_limit + kFeasTol) {
    return;
  }

  // Candidate states in decreasing linear-margin order, deterministic.
  double mi = p.margin_inc[it.node][h];
  double md = p.margin_dec[it.node][h];
  struct State {
    int zi, zd;
    double margin, prox;
  };
  std::vector<State> cand;
  cand.push_back({1, 0, mi, ins.costs.prox_inc});
  cand.push_back({0, 1, md, ins.costs.prox_dec});
  cand.push_back({0, 0, 0.0, 0.0});
  if (!ins.exclusive_sides) {
    cand.push_back({1, 1, mi + md, ins.costs.prox_inc + ins.costs.prox_dec});
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [](const State& a, const State& b) { return a.margin > b.margin; });

  bool hour_ends = t + 1 == hour_end;
  for (const State& s : cand) {
    if (collateral + s.prox > ins.budget + kFeasTol) continue;
    int x_next = cur_hour_x + s.zi - s.zd;
    ctx.zi[it.node][h] = s.zi;
    ctx.zd[it.node][h] = s.zd;
    double lin_next = cur_hour_linear + s.zi * mi + s.zd * md;

    if (hour_ends) {
      // complete this hour exactly: x feasibility, psi value, exact CVaR
      if (x_next < p.x_min[h] || x_next > p.x_max[h]) {
        ctx.zi[it.node][h] = ctx.zd[it.node][h] = 0;
        continue;
      }
      double xd = static_cast<double>(x_next);
      const PwlSensitivity& pwl = ins.pwl[h];
      std::size_t active = pwl.segment_index(xd);
      double psi = pwl.intervals[active].a * xd * xd + pwl.intervals[active].b * xd;

      std::vector<int> zi_col(ins.n_nodes), zd_col(ins.n_nodes);
      for (std::size_t i = 0; i < ins.n_nodes; ++i) {
        zi_col[i] = ctx.zi[i][h];
        zd_col[i] = ctx.zd[i][h];
      }
      const std::size_t Ns = ins.spread_samples[h].size();
      std::vector<double> losses(Ns);
      for (std::size_t k = 0; k < Ns; ++k) {
        losses[k] = hour_loss(ins, h, zi_col, zd_col, k);
      }
      double cvar = min_f_beta(losses, ins.beta).first;
      bnb_dfs(ctx, t + 1, collateral + s.prox,
              completed_value + lin_next + psi, completed_cvar + cvar, 0, 0.0);
    } else {
      bnb_dfs(ctx, t + 1, collateral + s.prox, completed_value, completed_cvar,
              x_next, lin_next);
    }
    ctx.zi[it.node][h] = 0;
    ctx.zd[it.node][h] = 0;
    if (ctx.aborted) return;
  }
}

}  // namespace

SolutionReport solve_branch_and_bound(const MiqcpProblem& problem,
                                      const BnbOptions& options) {
  const PortfolioInstance& ins = problem.instance;
  BnbContext ctx;
  ctx.p = &problem;
  ctx.opt = options;

  // Hour-major item order; within an hour, nodes sorted by best margin
  // descending so promising branches come first.
  ctx.item_of_hour_end.resize(ins.n_hours);
  for (std::size_t h = 0; h < ins.n_hours; ++h) {
    std::vector<std::size_t> order(ins.n_nodes);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      double ma = std::max(problem.margin_inc[a][h], problem.margin_dec[a][h]);
      double mb = std::max(problem.margin_inc[b][h], problem.margin_dec[b][h]);
      if (ma != mb) return ma > mb;
      return a < b;
    });
    for (std::size_t i : order) ctx.items.push_back({i, h});
    ctx.item_of_hour_end[h] = ctx.items.size();
  }

  for (std::size_t h = 0; h < ins.n_hours; ++h) {
    ctx.psi_max_full.push_back(
        psi_max_on_range(ins.pwl[h], ins.pwl[h].x_lo, ins.pwl[h].x_hi));
    // Static CVaR lower bound: pointwise-minimal achievable loss per sample
    // (taking every profitable side independently), then CVaR of that vector.
    const std::size_t Ns = ins.spread_samples[h].size();
    std::vector<double> lower(Ns, 0.0);
    for (std::size_t k = 0; k < Ns; ++k) {
      for (std::size_t i = 0; i < ins.n_nodes; ++i) {
        double ri = expected_bid_profit(ins.spread_samples[h][k][i], BidSide::inc,
                                        ins.costs);
        double rd = expected_bid_profit(ins.spread_samples[h][k][i], BidSide::dec,
                                        ins.costs);
        if (ins.exclusive_sides) {
          lower[k] -= std::max({0.0, ri, rd});
        } else {
          lower[k] -= std::max(0.0, ri) + std::max(0.0, rd);
        }
      }
    }
    ctx.cvar_lb.push_back(empirical_cvar(lower, ins.beta));
  }

  ctx.bounder.init(problem, ctx.items);
  ctx.zi.assign(ins.n_nodes, std::vector<int>(ins.n_hours, 0));
  ctx.zd.assign(ins.n_nodes, std::vector<int>(ins.n_hours, 0));

  // Warm start with the empty portfolio so an incumbent always exists.
  ctx.incumbent = evaluate_assignment(problem, ctx.zi, ctx.zd);

  double root_ub = ctx.bounder.bound(0, ins.budget) + remaining_psi_bound(ctx, 0);
  bnb_dfs(ctx, 0, 0.0, 0.0, 0.0, 0, 0.0);

  SolutionReport r;
  fill_report(r, *ctx.incumbent, problem);
  r.nodes_explored = ctx.nodes;
  r.optimal = !ctx.aborted;
  r.gap = ctx.aborted ? std::max(0.0, root_ub - ctx.incumbent->objective) : 0.0;
  return r;
}

CvarCheck realized_cvar_check(const PortfolioDecision& decision,
                              const PortfolioInstance& instance) {
  CvarCheck out;
  double total = 0.0;
  std::vector<int> zi_col(instance.n_nodes), zd_col(instance.n_nodes);
  for (std::size_t h = 0; h < instance.n_hours; ++h) {
    for (std::size_t i = 0; i < instance.n_nodes; ++i) {
      zi_col[i] = decision.z_inc[i][h];
      zd_col[i] = decision.z_dec[i][h];
    }
    const std::size_t Ns = instance.spread_samples[h].size();
    std::vector<double> losses(Ns);
    for (std::size_t k = 0; k < Ns; ++k) {
      losses[k] = hour_loss(instance, h, zi_col, zd_col, k);
    }
    total += min_f_beta(losses, instance.beta).first;
  }
  out.value = total;
  out.pass = total <= instance.risk_limit + 1e-6;
  return out;
}

void MiqcpProblem::dump(std::ostream& out) const {
  const PortfolioInstance& ins = instance;
  out << "miqcp-problem v1\n";
  out << "nodes " << ins.n_nodes << " hours " << ins.n_hours << "\n";
  out << "budget " << ins.budget << " risk " << ins.risk_limit << " beta "
      << ins.beta << "\n";
  out << "binaries " << n_binaries << " variables " << n_variables << "\n";
  out << "objective max sum_h [ sum_i zI[i,h]*mI + zD[i,h]*mD + sum_j w[j,h] ]\n";
  for (std::size_t h = 0; h < ins.n_hours; ++h) {
    for (std::size_t i = 0; i < ins.n_nodes; ++i) {
      out << "var zI[" << i << ',' << h << "] bin margin " << margin_inc[i][h]
          << " prox " << ins.costs.prox_inc << "\n";
      out << "var zD[" << i << ',' << h << "] bin margin " << margin_dec[i][h]
          << " prox " << ins.costs.prox_dec << "\n";
    }
    const PwlSensitivity& pwl = ins.pwl[h];
    out << "hour " << h << " x_bounds [" << x_min[h] << ',' << x_max[h]
        << "] big_m " << pwl.big_m << " samples "
        << ins.spread_samples[h].size() << "\n";
    for (std::size_t j = 0; j < pwl.segment_count(); ++j) {
      out << "  seg " << (j + 1) << " c " << pwl.intervals[j].c << " a "
          << pwl.intervals[j].a << " b " << pwl.intervals[j].b << "\n";
      out << "  con v[" << j << ',' << h << "] <= a*x^2 + b*x\n";
      out << "  con -S*d <= w[" << j << ',' << h << "] <= S*d ; |w - v| <= S*(1-d)\n";
    }
    out << "  con sum_j d[j," << h << "] = 1 ; x in interval of active d\n";
    out << "  con q[k," << h << "] >= f_h - alpha[" << h << "] ; q >= 0\n";
  }
  out << "con sum z*prox <= budget\n";
  out << "con sum_h ( alpha + sum_k q/((1-beta)Ns) ) <= risk\n";
}

void save_decisions_csv(const PortfolioDecision& d,
                        const std::vector<std::string>& nodes,
                        const std::vector<HourStamp>& hours,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "hour,node_id,side,quantity_mwh\n";
  for (std::size_t h = 0; h < hours.size(); ++h) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (d.z_inc[i][h]) {
        out << format_hour_utc(hours[h]) << ',' << nodes[i] << ",inc,1\n";
      }
      if (d.z_dec[i][h]) {
        out << format_hour_utc(hours[h]) << ',' << nodes[i] << ",dec,1\n";
      }
    }
  }
}

}  // namespace vbid
