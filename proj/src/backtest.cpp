#include "vbid/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace vbid {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string date_of(HourStamp day_start) {
  return format_hour_utc(day_start).substr(0, 10);
}

}  // namespace

Scenario scenario_from_string(const std::string& s) {
  if (s == "no_ps" || s == "no-ps") return Scenario::no_ps;
  if (s == "partial_ps" || s == "partial-ps") return Scenario::partial_ps;
  if (s == "full_ps" || s == "full-ps") return Scenario::full_ps;
  throw InvalidConfig("unknown scenario: " + s);
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::no_ps: return "no_ps";
    case Scenario::partial_ps: return "partial_ps";
    default: return "full_ps";
  }
}

void BacktestConfig::validate() const {
  if (train_window_days < 1 || retrain_cadence_months < 1) {
    throw InvalidConfig("train window and retrain cadence must be positive");
  }
  if (train_window_days < 28 * retrain_cadence_months) {
    throw InvalidConfig("train window must cover the retrain cadence");
  }
  if (budget < 0.0) throw InvalidConfig("budget must be >= 0");
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidConfig("beta must be in (0,1)");
  if (n_samples == 0) throw InvalidConfig("need >= 1 CVaR sample");
  for (double s : shares) {
    if (!(s > 0.0 && s <= 0.2)) {
      throw InvalidConfig("sweep shares must lie in (0, 0.2]");
    }
  }
  if (workers < 1) throw InvalidConfig("workers must be >= 1");
  costs.validate();
  spread_hp.validate();
  quantity_hp.validate();
  gbt.validate();
}

DailyResult settle_day(const PortfolioDecision& decision,
                       const std::vector<std::string>& nodes,
                       const std::vector<HourStamp>& hours,
                       const std::vector<std::vector<double>>& realized,
                       const std::vector<PwlSensitivity>& pwl,
                       const CostSchedule& costs, Scenario scenario) {
  DailyResult dr;
  dr.date = hours.empty() ? 0 : (hours.front() / kDaySec) * kDaySec;
  dr.shift_by_hour.assign(hours.size(), 0.0);
  dr.x_by_hour.assign(hours.size(), 0);
  for (std::size_t h = 0; h < hours.size(); ++h) {
    int x = decision.x[h];
    dr.x_by_hour[h] = x;
    double shift = 0.0;
    if (scenario != Scenario::no_ps) {
      // a flat-deciding scenario can place positions outside the fitted
      // support; extrapolate the shift flat from the domain edge
      double xe = std::clamp(static_cast<double>(x), pwl[h].x_lo, pwl[h].x_hi);
      shift = shift_at(pwl[h], xe);
    }
    dr.shift_by_hour[h] = shift;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      double s = realized[i][h] + shift;
      if (decision.z_inc[i][h]) {
        BidLedgerEntry e{hours[h], nodes[i], BidSide::inc, realized[i][h],
                         shift, costs.gamma_inc, s - costs.gamma_inc};
        dr.gross += s;
        dr.net += e.profit;
        dr.collateral += costs.prox_inc;
        dr.ledger.push_back(std::move(e));
      }
      if (decision.z_dec[i][h]) {
        BidLedgerEntry e{hours[h], nodes[i], BidSide::dec, realized[i][h],
                         shift, costs.gamma_dec, -s - costs.gamma_dec};
        dr.gross += -s;
        dr.net += e.profit;
        dr.collateral += costs.prox_dec;
        dr.ledger.push_back(std::move(e));
      }
    }
  }
  return dr;
}

std::pair<double, double> spike_metrics(const std::vector<double>& forecasts,
                                        const std::vector<double>& actuals) {
  if (forecasts.size() != actuals.size()) {
    throw ShapeMismatch("spike_metrics: series lengths differ");
  }
  if (actuals.size() < 100) {
    throw TooFewPoints("spike_metrics: need >= 100 aligned points");
  }
  std::vector<std::size_t> order(actuals.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double fa = std::fabs(actuals[a]), fb = std::fabs(actuals[b]);
    if (fa != fb) return fa > fb;
    return a < b;
  });
  std::size_t top = std::max<std::size_t>(1, actuals.size() / 100);
  auto sgn = [](double v) { return v >= 0.0 ? 1 : -1; };  // sign(0) -> positive
  std::size_t correct = 0;
  double sq = 0.0;
  for (std::size_t k = 0; k < top; ++k) {
    std::size_t i = order[k];
    if (sgn(forecasts[i]) == sgn(actuals[i])) ++correct;
    double d = forecasts[i] - actuals[i];
    sq += d * d;
  }
  return {static_cast<double>(correct) / static_cast<double>(top),
          std::sqrt(sq / static_cast<double>(top))};
}

double sharpe_ratio(const std::vector<double>& daily_returns,
                    double risk_free_daily) {
  if (daily_returns.size() < 2) {
    throw ZeroVariance("sharpe_ratio: need >= 2 observations");
  }
  double mean = 0.0;
  for (double r : daily_returns) mean += r - risk_free_daily;
  mean /= static_cast<double>(daily_returns.size());
  double var = 0.0;
  for (double r : daily_returns) {
    double d = (r - risk_free_daily) - mean;
    var += d * d;
  }
  var /= static_cast<double>(daily_returns.size() - 1);
  if (var <= 0.0) throw ZeroVariance("sharpe_ratio: zero variance of excess");
  return mean / std::sqrt(var) * std::sqrt(252.0);
}

// ---------------------------------------------------------------------------
// run_backtest
// ---------------------------------------------------------------------------

namespace {

struct HourIndex {
  std::unordered_map<HourStamp, std::size_t> map;

  explicit HourIndex(const std::vector<HourStamp>& hours) {
    for (std::size_t i = 0; i < hours.size(); ++i) map.emplace(hours[i], i);
  }
  std::size_t at(HourStamp h) const {
    auto it = map.find(h);
    return it == map.end() ? SpreadPanel::npos : it->second;
  }
};

// Frozen per-period models; rebuilt at each retrain barrier.
struct PeriodModels {
  SpreadForecastModel spread;
  QuantityForecastModel quantity;
  GbtEnsemble gbt;
  double net_min = 0.0, net_max = 0.0;  // trailing-window net quantity range
  HourStamp window_last_hour = 0;       // newest outcome hour seen in training
  bool have_forecasters = false;
  bool have_gbt = false;
};

struct DayOutput {
  DailyResult dr;
  AccessRecord access;
  std::vector<double> forecast_flat, actual_flat;  // node-major per hour
};

SpreadPanel slice_panel(const SpreadPanel& panel, std::size_t i0,
                        std::size_t i1) {
  SpreadPanel out;
  out.nodes = panel.nodes;
  out.ref_node_index = panel.ref_node_index;
  out.hours.assign(panel.hours.begin() + i0, panel.hours.begin() + i1);
  for (std::size_t n = 0; n < panel.node_count(); ++n) {
    out.da.emplace_back(panel.da[n].begin() + i0, panel.da[n].begin() + i1);
    out.rt.emplace_back(panel.rt[n].begin() + i0, panel.rt[n].begin() + i1);
    out.spread.emplace_back(panel.spread[n].begin() + i0,
                            panel.spread[n].begin() + i1);
  }
  return out;
}

PeriodModels retrain(const MarketDataset& data, const BacktestConfig& cfg,
                     std::uint64_t seed, std::size_t period_index,
                     std::size_t i0, std::size_t i1, const HourIndex& vbid_idx) {
  PeriodModels m;
  m.window_last_hour = data.panel.hours[i1 - 1];

  // trailing-window net cleared quantities (also the GBT's p coordinate)
  std::vector<double> net(i1 - i0, 0.0);
  for (std::size_t i = i0; i < i1; ++i) {
    std::size_t vi = vbid_idx.at(data.panel.hours[i]);
    if (vi == SpreadPanel::npos) {
      throw InsufficientHistory("no virtual-bid record at " +
                                format_hour_utc(data.panel.hours[i]));
    }
    net[i - i0] = data.vbids[vi].net_mwh();
  }
  m.net_min = *std::min_element(net.begin(), net.end());
  m.net_max = *std::max_element(net.begin(), net.end());

  if (!cfg.cheat_forecasts) {
    SpreadPanel window = slice_panel(data.panel, i0, i1);
    NnHyperparams shp = cfg.spread_hp;
    shp.seed = child_seed(child_seed(seed, "spread"), std::to_string(period_index));
    m.spread = train_spread_model(window, data.features, cfg.model, shp);

    std::vector<MarketVirtualQuantity> vwin;
    for (std::size_t i = i0; i < i1; ++i) {
      vwin.push_back(data.vbids[vbid_idx.at(data.panel.hours[i])]);
    }
    NnHyperparams qhp = cfg.quantity_hp;
    qhp.seed = child_seed(child_seed(seed, "quantity"), std::to_string(period_index));
    m.quantity = train_quantity_model(vwin, data.features, cfg.model, qhp);
    m.have_forecasters = true;
  }

  if (cfg.scenario != Scenario::no_ps) {
    // GBT over market features + net quantity; target = reference spread.
    HourIndex feat_idx(data.features.hours);
    std::size_t n_feat = data.features.names.size();
    std::vector<std::vector<double>> cols(n_feat + 1);
    std::vector<double> targets;
    for (std::size_t i = i0; i < i1; ++i) {
      std::size_t fi = feat_idx.at(data.panel.hours[i]);
      if (fi == SpreadPanel::npos) {
        throw InsufficientHistory("no features at " +
                                  format_hour_utc(data.panel.hours[i]));
      }
      for (std::size_t f = 0; f < n_feat; ++f) {
        cols[f].push_back(data.features.values[fi][f]);
      }
      cols[n_feat].push_back(net[i - i0]);
      targets.push_back(data.panel.spread[data.panel.ref_node_index][i]);
    }
    GbtParams gp = cfg.gbt;
    gp.monotone_feature = static_cast<int>(n_feat);
    gp.seed = child_seed(child_seed(seed, "gbt"), std::to_string(period_index));
    m.gbt = fit_gbt(cols, targets, gp, /*parallel=*/cfg.workers > 1);
    m.have_gbt = true;
  }
  return m;
}

DayOutput run_day(const MarketDataset& data, const BacktestConfig& cfg,
                  const PeriodModels& models, const HourIndex& feat_idx,
                  const HourIndex& vbid_idx, std::size_t day_i0,
                  HourStamp day_start) {
  const SpreadPanel& panel = data.panel;
  const std::size_t N = panel.node_count();
  const std::size_t H = 24;
  DayOutput out;
  out.access.day_start = day_start;
  auto note = [&](HourStamp h) {
    out.access.max_outcome_hour = std::max(out.access.max_outcome_hour, h);
  };
  note(models.window_last_hour);

  std::vector<HourStamp> hours(H);
  for (std::size_t h = 0; h < H; ++h) {
    hours[h] = day_start + static_cast<HourStamp>(h) * kHourSec;
  }

  // forecasts
  std::vector<std::vector<double>> expected(N, std::vector<double>(H));
  std::vector<double> y(H, 0.0);
  if (cfg.cheat_forecasts) {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t h = 0; h < H; ++h) {
        expected[i][h] = panel.spread[i][day_i0 + h];
      }
    }
    for (std::size_t h = 0; h < H; ++h) {
      note(hours[h]);  // cheat mode deliberately breaches the firewall
      y[h] = data.vbids[vbid_idx.at(hours[h])].net_mwh();
    }
  } else {
    auto sf = models.spread.predict(data.features, hours);
    // points come back node-major per hour in panel node order
    std::size_t k = 0;
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < N; ++i) expected[i][h] = sf[k++].value;
    }
    auto qf = models.quantity.predict(data.features, hours);
    for (std::size_t h = 0; h < H; ++h) y[h] = qf[h].value;
  }

  // same-hour historical spread samples, newest first
  std::vector<std::vector<std::vector<double>>> samples(H);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t k = 1; k <= cfg.n_samples; ++k) {
      std::size_t off = k * 24;
      if (day_i0 + h < off) break;
      std::size_t idx = day_i0 + h - off;
      note(panel.hours[idx]);
      std::vector<double> v(N);
      for (std::size_t i = 0; i < N; ++i) v[i] = panel.spread[i][idx];
      samples[h].push_back(std::move(v));
    }
    if (samples[h].empty()) {
      throw InsufficientHistory("no spread samples before " + date_of(day_start));
    }
  }

  // hourly sensitivity (fit whenever settlement needs it)
  std::vector<PwlSensitivity> fitted(H);
  double flat_hi = static_cast<double>(N) + 1.0;
  if (cfg.scenario != Scenario::no_ps) {
    double range = models.net_max - models.net_min;
    // keep the whole tradable lot range inside the observed net-quantity
    // support so settlement can evaluate any feasible position
    double margin = std::max(flat_hi, 1e-3 * range);
    if (2.0 * margin >= range) margin = 0.5 * range - 1e-9;
    margin = std::max(margin, 1e-6);
    for (std::size_t h = 0; h < H; ++h) {
      std::size_t fi = feat_idx.at(hours[h]);
      if (fi == SpreadPanel::npos) {
        throw InsufficientHistory("no features at " + format_hour_utc(hours[h]));
      }
      std::vector<double> context = data.features.values[fi];
      context.push_back(0.0);  // p coordinate, ignored by extraction
      StepFunction step = extract_step_function(models.gbt, context,
                                                models.net_min, models.net_max);
      double anchor = std::clamp(y[h], models.net_min + margin,
                                 models.net_max - margin);
      fitted[h] = step_to_piecewise_linear(step.translated(-anchor), hours[h]);
    }
  }

  PortfolioInstance instance;
  instance.n_nodes = N;
  instance.n_hours = H;
  instance.expected_spread = expected;
  instance.spread_samples = samples;
  instance.costs = cfg.costs;
  instance.budget = cfg.budget;
  instance.risk_limit = cfg.effective_risk_limit();
  instance.beta = cfg.beta;
  instance.y_forecast = y;
  for (std::size_t h = 0; h < H; ++h) {
    instance.pwl.push_back(cfg.scenario == Scenario::full_ps
                               ? fitted[h]
                               : PwlSensitivity::flat(-flat_hi, flat_hi, hours[h]));
  }

  MiqcpProblem problem = build_problem(instance);
  BnbOptions opt;
  opt.max_nodes = cfg.bnb_max_nodes;
  SolutionReport sol = solve_branch_and_bound(problem, opt);

  std::vector<std::vector<double>> realized(N, std::vector<double>(H));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t h = 0; h < H; ++h) realized[i][h] = panel.spread[i][day_i0 + h];
  }
  const std::vector<PwlSensitivity>& settle_pwl =
      cfg.scenario == Scenario::no_ps ? instance.pwl : fitted;
  out.dr = settle_day(sol.decision, panel.nodes, hours, realized, settle_pwl,
                      cfg.costs, cfg.scenario);
  out.dr.collateral = sol.collateral_used;
  out.dr.cvar = std::accumulate(sol.cvar_per_hour.begin(),
                                sol.cvar_per_hour.end(), 0.0);

  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t h = 0; h < H; ++h) {
      out.forecast_flat.push_back(expected[i][h]);
      out.actual_flat.push_back(realized[i][h]);
    }
  }
  return out;
}

}  // namespace

BacktestReport run_backtest(const MarketDataset& dataset,
                            const BacktestConfig& config, std::uint64_t seed) {
  config.validate();
  const SpreadPanel& panel = dataset.panel;
  if (panel.hour_count() == 0) throw EmptyDataset("backtest: empty panel");
  for (std::size_t i = 1; i < panel.hour_count(); ++i) {
    if (panel.hours[i] != panel.hours[i - 1] + kHourSec) {
      throw DataError("backtest: hourly gap before " +
                      format_hour_utc(panel.hours[i]));
    }
  }

  const HourStamp window_sec =
      static_cast<HourStamp>(config.train_window_days) * kDaySec;
  HourStamp earliest = panel.hours.front() + window_sec;
  HourStamp first_day = ((earliest + kDaySec - 1) / kDaySec) * kDaySec;
  std::vector<HourStamp> day_starts;
  for (HourStamp d = first_day; d + kDaySec - kHourSec <= panel.hours.back();
       d += kDaySec) {
    day_starts.push_back(d);
  }
  if (day_starts.empty()) {
    throw InsufficientHistory(
        "backtest: dataset must span the train window plus >= 1 trading day");
  }

  HourIndex panel_idx(panel.hours);
  HourIndex feat_idx(dataset.features.hours);
  std::vector<HourStamp> vbid_hours;
  for (const auto& v : dataset.vbids) vbid_hours.push_back(v.hour);
  HourIndex vbid_idx(vbid_hours);

  BacktestReport report;
  report.budget = config.budget;
  report.risk_limit = config.effective_risk_limit();
  std::vector<double> forecast_all, actual_all;

  auto period_of = [&](HourStamp d) {
    auto [y, m] = utc_year_month(d);
    return (y * 12 + (m - 1)) / config.retrain_cadence_months;
  };

  std::size_t di = 0, period_index = 0;
  while (di < day_starts.size()) {
    std::size_t dj = di;
    while (dj < day_starts.size() &&
           period_of(day_starts[dj]) == period_of(day_starts[di])) {
      ++dj;
    }
    // retrain barrier
    std::size_t i1 = panel_idx.at(day_starts[di] - kHourSec) + 1;
    std::size_t i0_abs = panel_idx.at(day_starts[di] - window_sec);
    std::size_t i0 = i0_abs == SpreadPanel::npos ? 0 : i0_abs;
    PeriodModels models =
        retrain(dataset, config, seed, period_index, i0, i1, vbid_idx);

    std::vector<DayOutput> outs(dj - di);
    std::vector<std::exception_ptr> errs(dj - di);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(config.workers) \
    if (config.workers > 1)
#endif
    for (long long k = 0; k < static_cast<long long>(dj - di); ++k) {
      try {
        std::size_t day_i0 = panel_idx.at(day_starts[di + k]);
        outs[k] = run_day(dataset, config, models, feat_idx, vbid_idx, day_i0,
                          day_starts[di + k]);
      } catch (...) {
        errs[k] = std::current_exception();
      }
    }
    for (auto& e : errs) {
      if (e) std::rethrow_exception(e);
    }
    for (auto& o : outs) {
      report.days.push_back(std::move(o.dr));
      report.access_log.push_back(o.access);
      forecast_all.insert(forecast_all.end(), o.forecast_flat.begin(),
                          o.forecast_flat.end());
      actual_all.insert(actual_all.end(), o.actual_flat.begin(),
                        o.actual_flat.end());
    }
    di = dj;
    ++period_index;
  }

  // report assembly
  double running = 0.0;
  for (const auto& d : report.days) {
    running += d.net;
    report.cumulative_net.push_back(running);
  }
  if (actual_all.size() >= 100) {
    auto [acc, rmse] = spike_metrics(forecast_all, actual_all);
    report.spike_accuracy = acc;
    report.spike_rmse = rmse;
  }

  double sum_wo = 0.0, sum_w = 0.0;
  std::size_t count = 0;
  for (const auto& d : report.days) {
    std::size_t day_i0 = panel_idx.at(d.date);
    for (std::size_t i = 0; i < panel.node_count(); ++i) {
      for (std::size_t h = 0; h < 24; ++h) {
        double s = panel.spread[i][day_i0 + h];
        sum_wo += std::fabs(s);
        sum_w += std::fabs(s + d.shift_by_hour[h]);
        ++count;
      }
    }
  }
  if (count > 0) {
    report.avg_abs_spread_without = sum_wo / static_cast<double>(count);
    report.avg_abs_spread_with = sum_w / static_cast<double>(count);
  }

  double capital = report.budget + report.risk_limit;
  report.profit_per_dollar = capital > 0.0 ? running / capital : 0.0;

  double rf_daily = config.risk_free_rate / 252.0;
  std::map<int, std::vector<double>> by_year;
  for (const auto& d : report.days) {
    double r = capital > 0.0 ? d.net / capital : 0.0;
    by_year[utc_year(d.date)].push_back(r);
  }
  for (const auto& [year, rets] : by_year) {
    try {
      report.sharpe_by_year[year] = sharpe_ratio(rets, rf_daily);
    } catch (const ZeroVariance&) {
      // degenerate year (flat P&L); omit rather than fabricate
    }
  }
  return report;
}

std::vector<EfficiencyPoint> efficiency_sweep(const MarketDataset& dataset,
                                              const BacktestConfig& config,
                                              std::uint64_t seed) {
  config.validate();
  if (config.shares.empty()) throw InvalidConfig("sweep: no shares configured");

  // trailing-window mean daily market collateral proxy
  const HourStamp window_sec =
      static_cast<HourStamp>(config.train_window_days) * kDaySec;
  HourStamp h0 = dataset.panel.hours.front();
  HourStamp first_day = ((h0 + window_sec + kDaySec - 1) / kDaySec) * kDaySec;
  double avg_prox = 0.5 * (config.costs.prox_inc + config.costs.prox_dec);
  double total = 0.0;
  std::size_t n_days = 0;
  HourStamp d0 = ((h0 + kDaySec - 1) / kDaySec) * kDaySec;
  std::unordered_map<HourStamp, double> vol;
  for (const auto& v : dataset.vbids) {
    vol[v.hour] = v.inc_cleared_mwh + v.dec_cleared_mwh;
  }
  for (HourStamp d = d0; d + kDaySec <= first_day; d += kDaySec) {
    for (std::size_t h = 0; h < 24; ++h) {
      auto it = vol.find(d + static_cast<HourStamp>(h) * kHourSec);
      if (it != vol.end()) total += it->second * avg_prox;
    }
    ++n_days;
  }
  if (n_days == 0 || total <= 0.0) {
    throw InsufficientHistory("sweep: no trailing collateral history");
  }
  double daily_proxy = total / static_cast<double>(n_days);

  std::vector<EfficiencyPoint> out;
  for (double share : config.shares) {
    BacktestConfig c = config;
    c.budget = share * daily_proxy;
    c.risk_limit = -1.0;  // risk limit tracks budget
    c.shares.clear();
    BacktestReport r = run_backtest(dataset, c, seed);
    EfficiencyPoint p;
    p.share = share;
    p.budget = c.budget;
    p.profit_per_dollar = r.profit_per_dollar;
    if (!r.sharpe_by_year.empty()) {
      double acc = 0.0;
      for (const auto& [y, s] : r.sharpe_by_year) acc += s;
      p.sharpe = acc / static_cast<double>(r.sharpe_by_year.size());
      p.sharpe_defined = true;
    }
    out.push_back(p);
  }
  return out;
}

std::vector<ConvergenceRow> convergence_report(const MarketDataset& dataset,
                                               const BacktestReport& report) {
  HourIndex panel_idx(dataset.panel.hours);
  std::map<int, std::pair<double, double>> sums;
  std::map<int, std::size_t> counts;
  for (const auto& d : report.days) {
    std::size_t day_i0 = panel_idx.at(d.date);
    int year = utc_year(d.date);
    for (std::size_t i = 0; i < dataset.panel.node_count(); ++i) {
      for (std::size_t h = 0; h < 24; ++h) {
        double s = dataset.panel.spread[i][day_i0 + h];
        sums[year].first += std::fabs(s);
        sums[year].second += std::fabs(s + d.shift_by_hour[h]);
        ++counts[year];
      }
    }
  }
  std::vector<ConvergenceRow> rows;
  for (const auto& [year, sw] : sums) {
    ConvergenceRow r;
    r.year = year;
    r.avg_abs_without = sw.first / static_cast<double>(counts[year]);
    r.avg_abs_with = sw.second / static_cast<double>(counts[year]);
    rows.push_back(r);
  }
  return rows;
}

void write_pnl_csv(const BacktestReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "date,gross,net,collateral,cvar\n";
  for (const auto& d : report.days) {
    out << date_of(d.date) << ',' << fmt_double(d.gross) << ','
        << fmt_double(d.net) << ',' << fmt_double(d.collateral) << ','
        << fmt_double(d.cvar) << '\n';
  }
}

void write_metrics_txt(const BacktestReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  double total_gross = 0.0, total_net = 0.0;
  for (const auto& d : report.days) {
    total_gross += d.gross;
    total_net += d.net;
  }
  out << "days = " << report.days.size() << '\n';
  out << "budget = " << fmt_double(report.budget) << '\n';
  out << "risk_limit = " << fmt_double(report.risk_limit) << '\n';
  out << "total_gross = " << fmt_double(total_gross) << '\n';
  out << "total_net = " << fmt_double(total_net) << '\n';
  out << "profit_per_dollar = " << fmt_double(report.profit_per_dollar) << '\n';
  out << "spike_accuracy = " << fmt_double(report.spike_accuracy) << '\n';
  out << "spike_rmse = " << fmt_double(report.spike_rmse) << '\n';
  out << "avg_abs_spread_without = "
      << fmt_double(report.avg_abs_spread_without) << '\n';
  out << "avg_abs_spread_with = " << fmt_double(report.avg_abs_spread_with)
      << '\n';
  for (const auto& [year, s] : report.sharpe_by_year) {
    out << "sharpe_" << year << " = " << fmt_double(s) << '\n';
  }
}

void write_curves_csv(const std::vector<EfficiencyPoint>& points,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "share,profit_per_dollar,sharpe\n";
  for (const auto& p : points) {
    out << fmt_double(p.share) << ',' << fmt_double(p.profit_per_dollar) << ','
        << (p.sharpe_defined ? fmt_double(p.sharpe) : "nan") << '\n';
  }
}

}  // namespace vbid
