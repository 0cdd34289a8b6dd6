#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "vbid/backtest.hpp"

using namespace vbid;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

MarketDataset small_market(int days, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_days = days;
  cfg.n_nodes = 3;
  cfg.sensitivity_slope = -0.05;
  SyntheticMarket m = generate_synthetic_market(cfg, seed);
  return {std::move(m.panel), std::move(m.features), std::move(m.vbids)};
}

// small, fast configuration shared by the loop tests
BacktestConfig fast_config(Scenario sc) {
  BacktestConfig c;
  c.train_window_days = 56;
  c.retrain_cadence_months = 1;
  c.scenario = sc;
  c.budget = 400.0;
  c.beta = 0.9;
  c.cheat_forecasts = true;
  c.n_samples = 10;
  c.gbt.num_rounds = 12;
  c.gbt.max_depth = 3;
  c.bnb_max_nodes = 100'000;
  return c;
}

}  // namespace

TEST_CASE("scenario parsing accepts both spellings") {
  CHECK(scenario_from_string("no-ps") == Scenario::no_ps);
  CHECK(scenario_from_string("partial_ps") == Scenario::partial_ps);
  CHECK(scenario_from_string("full-ps") == Scenario::full_ps);
  CHECK_THROWS_AS(scenario_from_string("half-ps"), InvalidConfig);
  CHECK(to_string(Scenario::partial_ps) == "partial_ps");
}

TEST_CASE("settlement arithmetic with and without shift") {
  PortfolioDecision d;
  d.z_inc = {{1}};
  d.z_dec = {{0}};
  d.x = {1};
  PwlSensitivity pwl;
  pwl.x_lo = -3.0;
  pwl.x_hi = 3.0;
  pwl.intervals = {{-3.0, -2.0, 0.0}};  // shift(1) = -2
  pwl.big_m = compute_big_m(pwl.intervals, pwl.x_lo, pwl.x_hi);
  CostSchedule costs;
  costs.gamma_inc = 1.0;

  std::vector<std::vector<double>> realized = {{10.0}};
  DailyResult full = settle_day(d, {"A"}, {1420070400}, realized, {pwl}, costs,
                                Scenario::full_ps);
  CHECK(full.net == doctest::Approx(7.0));  // 10 - 2 - 1
  CHECK(full.gross == doctest::Approx(8.0));
  CHECK(full.shift_by_hour[0] == doctest::Approx(-2.0));
  REQUIRE(full.ledger.size() == 1);
  CHECK(full.ledger[0].profit == doctest::Approx(7.0));
  CHECK(full.net == doctest::Approx(full.gross - full.ledger[0].fee));

  DailyResult none = settle_day(d, {"A"}, {1420070400}, realized, {pwl}, costs,
                                Scenario::no_ps);
  CHECK(none.net == doctest::Approx(9.0));
  CHECK(none.shift_by_hour[0] == 0.0);

  // x = 0 anchors to zero shift even under full_ps
  PortfolioDecision flat;
  flat.z_inc = {{1}, {0}};
  flat.z_dec = {{0}, {1}};
  flat.x = {0};
  DailyResult anchored =
      settle_day(flat, {"A", "B"}, {1420070400}, {{10.0}, {4.0}}, {pwl}, costs,
                 Scenario::full_ps);
  CHECK(anchored.shift_by_hour[0] == 0.0);

  // empty decisions settle to zero everything
  PortfolioDecision empty;
  empty.z_inc = {{0}};
  empty.z_dec = {{0}};
  empty.x = {0};
  DailyResult zero = settle_day(empty, {"A"}, {1420070400}, realized, {pwl},
                                costs, Scenario::full_ps);
  CHECK(zero.gross == 0.0);
  CHECK(zero.net == 0.0);
  CHECK(zero.ledger.empty());
}

TEST_CASE("spike metrics on the top percentile") {
  std::vector<double> actual(200, 0.5);
  actual[7] = 500.0;
  actual[13] = -400.0;
  std::vector<double> forecast(200, 0.1);
  forecast[7] = 80.0;    // right sign
  forecast[13] = 20.0;   // wrong sign
  auto [acc, rmse] = spike_metrics(forecast, actual);
  CHECK(acc == doctest::Approx(0.5));
  // top 2 points: errors 420 and 420
  CHECK(rmse == doctest::Approx(420.0).epsilon(1e-12));

  auto [perfect_acc, perfect_rmse] = spike_metrics(actual, actual);
  CHECK(perfect_acc == 1.0);
  CHECK(perfect_rmse == 0.0);

  std::vector<double> negated(actual);
  for (auto& v : negated) v = -v;
  auto [worst_acc, worst_rmse] = spike_metrics(negated, actual);
  CHECK(worst_acc == 0.0);

  CHECK_THROWS_AS(spike_metrics(std::vector<double>(50, 1.0),
                                std::vector<double>(50, 1.0)),
                  TooFewPoints);
  CHECK_THROWS_AS(spike_metrics(std::vector<double>(200, 1.0),
                                std::vector<double>(100, 1.0)),
                  ShapeMismatch);
}

TEST_CASE("sign(0) counts as positive in spike accuracy") {
  std::vector<double> actual(200, 0.0);
  for (int i = 0; i < 200; ++i) actual[i] = (i % 2 ? 1.0 : -1.0) * (i + 1);
  std::vector<double> forecast(200, 0.0);  // all zero -> positive sign
  auto [acc, rmse] = spike_metrics(forecast, actual);
  // top 1% = 2 points: 200 (negative index 198? values alternate)
  // just assert determinism of the convention: accuracy equals the share of
  // positive actuals among the top points
  std::vector<std::pair<double, double>> top;
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  (void)rmse;
  // direct check of the convention on a crafted pair
  std::vector<double> a2(200, 1.0);
  a2[0] = 300.0;
  a2[1] = -250.0;
  std::vector<double> f2(200, 0.0);
  auto [acc2, rmse2] = spike_metrics(f2, a2);
  CHECK(acc2 == doctest::Approx(0.5));  // zero forecast counts positive
  (void)rmse2;
}

TEST_CASE("sharpe ratio hand value and degeneracy") {
  // mean 1%, sample stddev 1%*sqrt(2) -> 1/sqrt(2) before annualization
  double s = sharpe_ratio({0.02, 0.0}, 0.0);
  CHECK(s == doctest::Approx(std::sqrt(126.0)).epsilon(1e-12));
  CHECK_THROWS_AS(sharpe_ratio({0.01, 0.01}, 0.0), ZeroVariance);
  CHECK_THROWS_AS(sharpe_ratio({0.01}, 0.0), ZeroVariance);
}

TEST_CASE("backtest requires enough history") {
  MarketDataset d = small_market(14, 31);
  BacktestConfig c = fast_config(Scenario::no_ps);
  c.train_window_days = 365;
  CHECK_THROWS_AS(run_backtest(d, c, 1), InsufficientHistory);
}

TEST_CASE("config validation") {
  BacktestConfig c = fast_config(Scenario::no_ps);
  c.budget = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = fast_config(Scenario::no_ps);
  c.shares = {0.5};
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = fast_config(Scenario::no_ps);
  c.train_window_days = 10;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
}

TEST_CASE("cheat-mode no_ps backtest is profitable and deterministic") {
  MarketDataset d = small_market(70, 77);
  BacktestConfig c = fast_config(Scenario::no_ps);
  BacktestReport a = run_backtest(d, c, 5);
  REQUIRE_FALSE(a.days.empty());
  // oracle forecasts with small fees: cumulative profit must be positive
  CHECK(a.cumulative_net.back() > 0.0);
  // ledger conservation
  for (const auto& day : a.days) {
    double net = 0.0, fees = 0.0, gross = 0.0;
    for (const auto& e : day.ledger) {
      net += e.profit;
      fees += e.fee;
    }
    gross = net + fees;
    CHECK(std::fabs(net - day.net) < 1e-6);
    CHECK(std::fabs(gross - day.gross) < 1e-6);
  }

  BacktestReport b = run_backtest(d, c, 5);
  write_pnl_csv(a, "/tmp/vbid_bt_a.csv");
  write_pnl_csv(b, "/tmp/vbid_bt_b.csv");
  write_metrics_txt(a, "/tmp/vbid_bt_a.txt");
  write_metrics_txt(b, "/tmp/vbid_bt_b.txt");
  CHECK(slurp("/tmp/vbid_bt_a.csv") == slurp("/tmp/vbid_bt_b.csv"));
  CHECK(slurp("/tmp/vbid_bt_a.txt") == slurp("/tmp/vbid_bt_b.txt"));
}

TEST_CASE("results are invariant to the worker count") {
  MarketDataset d = small_market(70, 78);
  BacktestConfig c = fast_config(Scenario::full_ps);
  BacktestReport one = run_backtest(d, c, 9);
  c.workers = 4;
  BacktestReport four = run_backtest(d, c, 9);
  write_pnl_csv(one, "/tmp/vbid_bt_w1.csv");
  write_pnl_csv(four, "/tmp/vbid_bt_w4.csv");
  CHECK(slurp("/tmp/vbid_bt_w1.csv") == slurp("/tmp/vbid_bt_w4.csv"));
}

TEST_CASE("zero budget gives a flat zero P&L series") {
  MarketDataset d = small_market(70, 79);
  BacktestConfig c = fast_config(Scenario::no_ps);
  c.budget = 0.0;
  BacktestReport r = run_backtest(d, c, 2);
  for (const auto& day : r.days) {
    CHECK(day.net == 0.0);
    CHECK(day.collateral == 0.0);
    CHECK(day.ledger.empty());
  }
  // convergence columns coincide when nothing trades
  auto rows = convergence_report(d, r);
  for (const auto& row : rows) {
    CHECK(row.avg_abs_without == row.avg_abs_with);
  }
}

TEST_CASE("no_ps and partial_ps share decisions, differ only in settlement") {
  MarketDataset d = small_market(70, 80);
  BacktestConfig c = fast_config(Scenario::no_ps);
  BacktestReport no_ps = run_backtest(d, c, 3);
  c.scenario = Scenario::partial_ps;
  BacktestReport partial = run_backtest(d, c, 3);
  REQUIRE(no_ps.days.size() == partial.days.size());
  for (std::size_t k = 0; k < no_ps.days.size(); ++k) {
    const auto& a = no_ps.days[k];
    const auto& b = partial.days[k];
    REQUIRE(a.ledger.size() == b.ledger.size());
    for (std::size_t e = 0; e < a.ledger.size(); ++e) {
      CHECK(a.ledger[e].hour == b.ledger[e].hour);
      CHECK(a.ledger[e].node_id == b.ledger[e].node_id);
      CHECK(a.ledger[e].side == b.ledger[e].side);
      CHECK(a.ledger[e].realized_spread == b.ledger[e].realized_spread);
      CHECK(a.ledger[e].shift == 0.0);
    }
    CHECK(a.x_by_hour == b.x_by_hour);
  }
}

TEST_CASE("temporal firewall: decisions never touch same-day outcomes") {
  MarketDataset d = small_market(70, 81);
  BacktestConfig c = fast_config(Scenario::full_ps);
  c.cheat_forecasts = false;  // the honest path must respect the firewall
  c.spread_hp.hidden_units = {4};
  c.spread_hp.epochs = 2;
  c.spread_hp.batch_size = 256;
  c.quantity_hp = c.spread_hp;
  BacktestReport r = run_backtest(d, c, 6);
  REQUIRE_FALSE(r.access_log.empty());
  for (const auto& rec : r.access_log) {
    CHECK(rec.max_outcome_hour < rec.day_start);
  }
}

TEST_CASE("efficiency sweep: identical budgets give identical results") {
  MarketDataset d = small_market(70, 82);
  BacktestConfig c = fast_config(Scenario::full_ps);
  c.shares = {0.05, 0.05};
  auto pts = efficiency_sweep(d, c, 4);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].budget == pts[1].budget);
  CHECK(pts[0].profit_per_dollar == pts[1].profit_per_dollar);

  write_curves_csv(pts, "/tmp/vbid_curves.csv");
  std::string text = slurp("/tmp/vbid_curves.csv");
  CHECK(text.rfind("share,profit_per_dollar,sharpe\n", 0) == 0);
}

TEST_CASE("pnl csv format") {
  MarketDataset d = small_market(63, 83);
  BacktestConfig c = fast_config(Scenario::no_ps);
  BacktestReport r = run_backtest(d, c, 8);
  write_pnl_csv(r, "/tmp/vbid_pnl_fmt.csv");
  std::ifstream in("/tmp/vbid_pnl_fmt.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "date,gross,net,collateral,cvar");
  std::string first;
  std::getline(in, first);
  CHECK(first.substr(0, 4) == "2015");
}
