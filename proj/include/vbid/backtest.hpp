// Rolling train / forecast / optimize / settle backtest loop with the
// profitability and market-efficiency reports.
#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "vbid/common.hpp"
#include "vbid/gbt.hpp"
#include "vbid/market.hpp"
#include "vbid/nn.hpp"
#include "vbid/portfolio.hpp"

namespace vbid {

enum class Scenario { no_ps, partial_ps, full_ps };

// Accepts both spellings: "no_ps"/"no-ps" etc. Throws InvalidConfig.
Scenario scenario_from_string(const std::string& s);
std::string to_string(Scenario s);

struct MarketDataset {
  SpreadPanel panel;
  FeatureFrameSeries features;
  std::vector<MarketVirtualQuantity> vbids;
};

struct BacktestConfig {
  int train_window_days = 365;
  int retrain_cadence_months = 1;  // calendar months
  Scenario scenario = Scenario::no_ps;
  double budget = 500.0;       // B, $ per day
  double risk_limit = -1.0;    // C, $ per day; < 0 means "same as budget"
  double beta = 0.95;
  CostSchedule costs;
  ModelKind model = ModelKind::mlp;
  NnHyperparams spread_hp;
  NnHyperparams quantity_hp;
  GbtParams gbt;
  std::size_t n_samples = 30;     // same-hour spread samples for CVaR
  bool cheat_forecasts = false;   // oracle mode: forecasts = realized values
  std::vector<double> shares;     // market-share sweep, fractions in (0, 0.2]
  double risk_free_rate = 0.0;    // annualized fraction
  int workers = 1;                // day-level parallelism within a period
  std::uint64_t bnb_max_nodes = 500'000;  // per-day solver effort cap

  double effective_risk_limit() const {
    return risk_limit < 0.0 ? budget : risk_limit;
  }
  void validate() const;  // throws InvalidConfig
};

struct BidLedgerEntry {
  HourStamp hour = 0;
  std::string node_id;
  BidSide side = BidSide::inc;
  double realized_spread = 0.0;  // $/MWh, before shift
  double shift = 0.0;            // applied shift, $/MWh
  double fee = 0.0;              // gamma, $
  double profit = 0.0;           // net of fee, $
};

struct DailyResult {
  HourStamp date = 0;  // midnight UTC of the trading day
  double gross = 0.0;  // $, before fees
  double net = 0.0;    // $, gross - fees
  double collateral = 0.0;
  double cvar = 0.0;  // sum of per-hour CVaR at the solved decisions
  std::vector<BidLedgerEntry> ledger;
  std::vector<double> shift_by_hour;  // applied shift per hour (0 untraded)
  std::vector<int> x_by_hour;         // net position per hour
};

// Temporal-firewall evidence: the latest market-outcome timestamp touched
// while producing day d's decisions must precede the day itself.
struct AccessRecord {
  HourStamp day_start = 0;
  HourStamp max_outcome_hour = std::numeric_limits<HourStamp>::min();
};

struct BacktestReport {
  std::vector<DailyResult> days;
  std::vector<double> cumulative_net;  // running sum, one entry per day
  double spike_accuracy = 0.0;
  double spike_rmse = 0.0;
  double avg_abs_spread_without = 0.0;  // traded-period mean |spread|
  double avg_abs_spread_with = 0.0;     // mean |spread + applied shift|
  double profit_per_dollar = 0.0;  // total net / (budget + risk limit)
  std::map<int, double> sharpe_by_year;  // annualized, omitted on degenerate years
  std::vector<AccessRecord> access_log;
  double budget = 0.0;
  double risk_limit = 0.0;
};

// Rolling loop: retrain on the cadence, forecast, fit hourly PWL, solve the
// portfolio, settle against realized spreads. Scenario semantics: full_ps
// optimizes and settles with the fitted sensitivity; partial_ps optimizes
// without it (same decisions as no_ps) but settles with it; no_ps ignores it
// everywhere. Deterministic per seed and invariant to `workers`.
BacktestReport run_backtest(const MarketDataset& dataset,
                            const BacktestConfig& config, std::uint64_t seed);

// Settlement of one day's decisions. `realized[i][h]` are the day's spreads
// in node/hour order matching the decision matrices; `pwl[h]` is the fitted
// sensitivity (ignored under no_ps).
DailyResult settle_day(const PortfolioDecision& decision,
                       const std::vector<std::string>& nodes,
                       const std::vector<HourStamp>& hours,
                       const std::vector<std::vector<double>>& realized,
                       const std::vector<PwlSensitivity>& pwl,
                       const CostSchedule& costs, Scenario scenario);

// Spike metrics over the top 1% of |actual|: sign-accuracy fraction and RMSE
// on that subset. sign(0) counts as positive. Requires >= 100 points.
std::pair<double, double> spike_metrics(const std::vector<double>& forecasts,
                                        const std::vector<double>& actuals);

// Annualized (sqrt 252) Sharpe ratio of daily returns over a constant daily
// risk-free rate. Throws ZeroVariance.
double sharpe_ratio(const std::vector<double>& daily_returns,
                    double risk_free_daily);

struct EfficiencyPoint {
  double share = 0.0;
  double budget = 0.0;
  double profit_per_dollar = 0.0;
  double sharpe = 0.0;             // 0 when degenerate
  bool sharpe_defined = false;
};

// Maps each share to budget = share x trailing-window mean daily market
// collateral proxy, runs the backtest, and reports per-dollar profit and
// Sharpe. Monotonicity across shares is reported by the caller, not asserted.
std::vector<EfficiencyPoint> efficiency_sweep(const MarketDataset& dataset,
                                              const BacktestConfig& config,
                                              std::uint64_t seed);

struct ConvergenceRow {
  int year = 0;
  double avg_abs_without = 0.0;
  double avg_abs_with = 0.0;
};

// Per-year mean |realized spread| vs mean |realized spread + applied shift|,
// over all node-hours of the traded period (shift 0 at untraded hours).
std::vector<ConvergenceRow> convergence_report(const MarketDataset& dataset,
                                               const BacktestReport& report);

// Artifact writers. Doubles are printed with %.17g so identical runs yield
// byte-identical files.
void write_pnl_csv(const BacktestReport& report, const std::string& path);
void write_metrics_txt(const BacktestReport& report, const std::string& path);
void write_curves_csv(const std::vector<EfficiencyPoint>& points,
                      const std::string& path);

}  // namespace vbid
