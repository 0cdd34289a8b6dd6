// vbid: ingest/synthesize two-settlement market data, train forecasters, fit
// hourly price sensitivity, optimize virtual-bid portfolios, and backtest.
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vbid/backtest.hpp"
#include "vbid/common.hpp"
#include "vbid/gbt.hpp"
#include "vbid/manifest.hpp"
#include "vbid/market.hpp"
#include "vbid/nn.hpp"
#include "vbid/portfolio.hpp"
#include "vbid/sensitivity.hpp"

namespace fs = std::filesystem;
using namespace vbid;

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

NnHyperparams hp_from_config(const Config& cfg, const std::string& prefix,
                             std::uint64_t seed) {
  NnHyperparams hp;
  hp.hidden_units = parse_int_list(cfg.get(prefix + "hidden", "16"));
  hp.dropout_rate = cfg.get_double(prefix + "dropout", 0.2);
  hp.learning_rate = cfg.get_double(prefix + "learning_rate", 1e-3);
  hp.batch_size = static_cast<int>(cfg.get_int(prefix + "batch_size", 256));
  hp.epochs = static_cast<int>(cfg.get_int(prefix + "epochs", 20));
  hp.lookback = static_cast<int>(cfg.get_int(prefix + "lookback", 24));
  hp.patience = static_cast<int>(cfg.get_int(prefix + "patience", 10));
  hp.seed = seed;
  return hp;
}

GbtParams gbt_from_config(const Config& cfg, std::uint64_t seed) {
  GbtParams gp;
  gp.num_rounds = static_cast<int>(cfg.get_int("gbt_rounds", 50));
  gp.max_depth = static_cast<int>(cfg.get_int("gbt_depth", 4));
  gp.reg_lambda = cfg.get_double("gbt_lambda", 1.0);
  gp.min_split_gain = cfg.get_double("gbt_min_gain", 0.0);
  gp.learning_rate = cfg.get_double("gbt_learning_rate", 0.1);
  gp.seed = seed;
  return gp;
}

CostSchedule costs_from_config(const Config& cfg) {
  CostSchedule c;
  c.gamma_inc = cfg.get_double("gamma_inc", 1.0);
  c.gamma_dec = cfg.get_double("gamma_dec", 1.0);
  c.prox_inc = cfg.get_double("prox_inc", 50.0);
  c.prox_dec = cfg.get_double("prox_dec", 50.0);
  return c;
}

BacktestConfig backtest_from_config(const Config& cfg, std::uint64_t seed) {
  BacktestConfig bc;
  bc.train_window_days =
      static_cast<int>(cfg.get_int("train_window_days", 365));
  bc.retrain_cadence_months =
      static_cast<int>(cfg.get_int("retrain_cadence_months", 1));
  bc.budget = cfg.get_double("budget", 500.0);
  bc.risk_limit = cfg.get_double("risk_limit", -1.0);
  bc.beta = cfg.get_double("beta", 0.95);
  bc.costs = costs_from_config(cfg);
  bc.model = model_kind_from_string(cfg.get("model", "mlp"));
  bc.spread_hp = hp_from_config(cfg, "spread_", child_seed(seed, "spread"));
  bc.quantity_hp =
      hp_from_config(cfg, "quantity_", child_seed(seed, "quantity"));
  bc.gbt = gbt_from_config(cfg, child_seed(seed, "gbt"));
  bc.n_samples = static_cast<std::size_t>(cfg.get_int("n_samples", 30));
  bc.cheat_forecasts = cfg.get_int("cheat_forecasts", 0) != 0;
  if (cfg.has("shares")) bc.shares = parse_double_list(cfg.require("shares"));
  bc.risk_free_rate = cfg.get_double("risk_free_rate", 0.0);
  bc.bnb_max_nodes =
      static_cast<std::uint64_t>(cfg.get_int("bnb_max_nodes", 500000));
  return bc;
}

struct ManifestScope {
  RunManifest m;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  void input(const std::string& path) { m.inputs.push_back({path, digest_file(path)}); }
  void write(const std::string& dir) {
    m.tool_version = kToolVersion;
    m.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    save_manifest(m, (fs::path(dir) / "manifest.txt").string());
  }
};

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 1; i < argc; ++i) {
    if (i > 1) s += ' ';
    s += argv[i];
  }
  return s;
}

MarketDataset load_dataset(const std::string& lmp, const std::string& features,
                           const std::string& vbids,
                           const std::string& ref_node) {
  MarketDataset d;
  d.panel = load_lmp_csv(lmp, ref_node);
  d.features = load_features_csv(features);
  d.vbids = load_vbids_csv(vbids);
  return d;
}

int run(int argc, char** argv) {
  CLI::App app{"machine-learning virtual-bidding pipeline"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string config_path;
  app.add_option("--seed", seed, "root RNG seed (submodules derive children)");
  app.add_option("--config", config_path, "key = value config file");

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "generate a synthetic market");
  int synth_days = 30, synth_nodes = 5;
  std::string synth_out = ".";
  synth->add_option("--days", synth_days, "number of days");
  synth->add_option("--nodes", synth_nodes, "number of nodes");
  synth->add_option("--out", synth_out, "output directory")->required();

  // --- ingest ---
  auto* ingest = app.add_subcommand("ingest", "validate and normalize market CSVs");
  std::string in_lmp, in_ref = "REF", in_out = ".";
  ingest->add_option("--lmp", in_lmp, "lmp.csv (hour,node_id,da_lmp,rt_lmp)")
      ->required();
  ingest->add_option("--ref-node", in_ref, "reference node id");
  ingest->add_option("--out", in_out, "output directory")->required();

  // --- train-spread ---
  auto* tspread = app.add_subcommand("train-spread", "train the spread forecaster");
  std::string ts_lmp, ts_feat, ts_ref = "REF", ts_model = "mlp", ts_out;
  tspread->add_option("--lmp", ts_lmp)->required();
  tspread->add_option("--features", ts_feat)->required();
  tspread->add_option("--ref-node", ts_ref);
  tspread->add_option("--model", ts_model, "mlp or lstm");
  tspread->add_option("--out", ts_out, "model file")->required();

  // --- train-quantity ---
  auto* tq = app.add_subcommand("train-quantity",
                                "train the net-virtual-quantity forecaster");
  std::string tq_vbids, tq_feat, tq_model = "mlp", tq_out;
  tq->add_option("--vbids", tq_vbids)->required();
  tq->add_option("--features", tq_feat)->required();
  tq->add_option("--model", tq_model, "mlp or lstm");
  tq->add_option("--out", tq_out, "model file")->required();

  // --- fit-sensitivity ---
  auto* fits = app.add_subcommand(
      "fit-sensitivity",
      "fit hourly piecewise-linear price sensitivity for the last day");
  std::string fs_lmp, fs_feat, fs_vbids, fs_ref = "REF", fs_out;
  fits->add_option("--lmp", fs_lmp)->required();
  fits->add_option("--features", fs_feat)->required();
  fits->add_option("--vbids", fs_vbids)->required();
  fits->add_option("--ref-node", fs_ref);
  fits->add_option("--out", fs_out, "pwl CSV")->required();

  // --- optimize ---
  auto* opt = app.add_subcommand("optimize", "solve one day's bid portfolio");
  std::string op_lmp, op_feat, op_vbids, op_ref = "REF", op_pwl, op_date,
              op_mode = "no-ps", op_out = "decisions.csv";
  double op_budget = 500.0, op_risk = -1.0, op_beta = 0.95;
  opt->add_option("--lmp", op_lmp, "history incl. the target date")->required();
  opt->add_option("--features", op_feat)->required();
  opt->add_option("--vbids", op_vbids)->required();
  opt->add_option("--ref-node", op_ref);
  opt->add_option("--pwl", op_pwl, "fitted sensitivity (full-ps mode)");
  opt->add_option("--date", op_date, "YYYY-MM-DD")->required();
  opt->add_option("--budget", op_budget);
  opt->add_option("--risk", op_risk);
  opt->add_option("--beta", op_beta);
  opt->add_option("--mode", op_mode, "full-ps or no-ps");
  opt->add_option("--out", op_out, "decisions CSV");

  // --- backtest ---
  auto* bt = app.add_subcommand("backtest", "rolling backtest");
  std::string bt_lmp, bt_feat, bt_vbids, bt_ref = "REF", bt_scenario = "no-ps",
              bt_out = ".";
  int bt_workers = 1;
  bt->add_option("--lmp", bt_lmp)->required();
  bt->add_option("--features", bt_feat)->required();
  bt->add_option("--vbids", bt_vbids)->required();
  bt->add_option("--ref-node", bt_ref);
  bt->add_option("--scenario", bt_scenario, "no-ps, partial-ps, or full-ps");
  bt->add_option("--workers", bt_workers, "day-level parallelism");
  bt->add_option("--out", bt_out, "output directory")->required();

  // --- report ---
  auto* rep = app.add_subcommand("report", "summarize a pnl.csv");
  std::string rp_pnl;
  rep->add_option("--pnl", rp_pnl)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // --help exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage errors
  }

  Config cfg = config_path.empty() ? Config() : Config::from_file(config_path);

  if (*synth) {
    ManifestScope ms;
    SyntheticConfig sc;
    sc.n_days = synth_days;
    sc.n_nodes = synth_nodes;
    sc.spike_prob = cfg.get_double("spike_prob", sc.spike_prob);
    sc.sensitivity_slope = cfg.get_double("sensitivity_slope", sc.sensitivity_slope);
    sc.validate();
    SyntheticMarket m = generate_synthetic_market(sc, child_seed(seed, "synth"));
    fs::create_directories(synth_out);
    save_lmp_csv(m.panel, (fs::path(synth_out) / "lmp.csv").string());
    save_features_csv(m.features, (fs::path(synth_out) / "features.csv").string());
    save_vbids_csv(m.vbids, (fs::path(synth_out) / "vbids.csv").string());
    ms.m.command = join_args(argc, argv);
    ms.m.config_hash = fnv1a_str(cfg.canonical_text());
    ms.m.seed = seed;
    ms.write(synth_out);
    std::cout << "wrote lmp.csv, features.csv, vbids.csv to " << synth_out << "\n";
    return 0;
  }

  if (*ingest) {
    ManifestScope ms;
    ms.input(in_lmp);
    SpreadPanel panel = load_lmp_csv(in_lmp, in_ref);
    fs::create_directories(in_out);
    save_lmp_csv(panel, (fs::path(in_out) / "lmp.csv").string());
    ms.m.command = join_args(argc, argv);
    ms.m.config_hash = fnv1a_str(cfg.canonical_text());
    ms.m.seed = seed;
    ms.write(in_out);
    std::cout << "ingested " << panel.node_count() << " nodes x "
              << panel.hour_count() << " hours\n";
    return 0;
  }

  if (*tspread) {
    ManifestScope ms;
    ms.input(ts_lmp);
    ms.input(ts_feat);
    SpreadPanel panel = load_lmp_csv(ts_lmp, ts_ref);
    FeatureFrameSeries feat = load_features_csv(ts_feat);
    NnHyperparams hp = hp_from_config(cfg, "spread_", child_seed(seed, "spread"));
    TrainStats stats;
    SpreadForecastModel m = train_spread_model(
        panel, feat, model_kind_from_string(ts_model), hp, &stats);
    save_spread_model(m, ts_out);
    ms.m.command = join_args(argc, argv);
    ms.m.config_hash = fnv1a_str(cfg.canonical_text());
    ms.m.seed = seed;
    ms.write(fs::path(ts_out).parent_path().empty()
                 ? "."
                 : fs::path(ts_out).parent_path().string());
    std::cout << "trained " << ts_model << " (" << stats.epochs_run
              << " epochs, val loss " << stats.final_loss << ")\n";
    return 0;
  }

  if (*tq) {
    ManifestScope ms;
    ms.input(tq_vbids);
    ms.input(tq_feat);
    auto vb = load_vbids_csv(tq_vbids);
    FeatureFrameSeries feat = load_features_csv(tq_feat);
    NnHyperparams hp =
        hp_from_config(cfg, "quantity_", child_seed(seed, "quantity"));
    TrainStats stats;
    QuantityForecastModel m = train_quantity_model(
        vb, feat, model_kind_from_string(tq_model), hp, &stats);
    save_quantity_model(m, tq_out);
    ms.m.command = join_args(argc, argv);
    ms.m.config_hash = fnv1a_str(cfg.canonical_text());
    ms.m.seed = seed;
    ms.write(fs::path(tq_out).parent_path().empty()
                 ? "."
                 : fs::path(tq_out).parent_path().string());
    std::cout << "trained " << tq_model << " (" << stats.epochs_run
              << " epochs, val loss " << stats.final_loss << ")\n";
    return 0;
  }

  if (*fits) {
    ManifestScope ms;
    ms.input(fs_lmp);
    ms.input(fs_feat);
    ms.input(fs_vbids);
    MarketDataset d = load_dataset(fs_lmp, fs_feat, fs_vbids, fs_ref);
    // GBT on everything but the last day; PWL for the last day's 24 hours
    // anchored at realized net quantity.
    if (d.panel.hour_count() < 48) {
      throw InsufficientHistory("need >= 2 days to fit sensitivity");
    }
    std::size_t cut = d.panel.hour_count() - 24;
    std::vector<std::vector<double>> cols(d.features.names.size() + 1);
    std::vector<double> targets;
    std::vector<double> nets;
    for (std::size_t i = 0; i < cut; ++i) {
      HourStamp h = d.panel.hours[i];
      std::size_t fi = 0;
      while (fi < d.features.hours.size() && d.features.hours[fi] != h) ++fi;
      std::size_t vi = 0;
      while (vi < d.vbids.size() && d.vbids[vi].hour != h) ++vi;
      if (fi == d.features.hours.size() || vi == d.vbids.size()) {
        throw InsufficientHistory("missing features/vbids at " +
                                  format_hour_utc(h));
      }
      for (std::size_t f = 0; f < d.features.names.size(); ++f) {
        cols[f].push_back(d.features.values[fi][f]);
      }
      double net = d.vbids[vi].net_mwh();
      cols.back().push_back(net);
      nets.push_back(net);
      targets.push_back(d.panel.spread[d.panel.ref_node_index][i]);
    }
    GbtParams gp = gbt_from_config(cfg, child_seed(seed, "gbt"));
    gp.monotone_feature = static_cast<int>(d.features.names.size());
    GbtEnsemble ens = fit_gbt(cols, targets, gp);
    double lo = *std::min_element(nets.begin(), nets.end());
    double hi = *std::max_element(nets.begin(), nets.end());
    double margin = std::max(1e-6, 1e-3 * (hi - lo));
    std::vector<PwlSensitivity> pwls;
    for (std::size_t i = cut; i < d.panel.hour_count(); ++i) {
      HourStamp h = d.panel.hours[i];
      std::size_t fi = 0;
      while (fi < d.features.hours.size() && d.features.hours[fi] != h) ++fi;
      std::size_t vi = 0;
      while (vi < d.vbids.size() && d.vbids[vi].hour != h) ++vi;
      if (fi == d.features.hours.size() || vi == d.vbids.size()) {
        throw InsufficientHistory("missing features/vbids at " +
                                  format_hour_utc(h));
      }
      std::vector<double> context = d.features.values[fi];
      context.push_back(0.0);
      StepFunction step = extract_step_function(ens, context, lo, hi);
      double anchor =
          std::clamp(d.vbids[vi].net_mwh(), lo + margin, hi - margin);
      pwls.push_back(step_to_piecewise_linear(step.translated(-anchor), h));
    }
    save_pwl_csv(pwls, fs_out);
    ms.m.command = join_args(argc, argv);
    ms.m.config_hash = fnv1a_str(cfg.canonical_text());
    ms.m.seed = seed;
    ms.write(fs::path(fs_out).parent_path().empty()
                 ? "."
                 : fs::path(fs_out).parent_path().string());
    std::cout << "fit sensitivity for " << pwls.size() << " hours\n";
    return 0;
  }

  if (*opt) {
    ManifestScope ms;
    ms.input(op_lmp);
    ms.input(op_feat);
    ms.input(op_vbids);
    MarketDataset d = load_dataset(op_lmp, op_feat, op_vbids, op_ref);
    HourStamp day = parse_hour_utc(op_date + "T00:00:00Z");
    std::size_t day_i0 = d.panel.hour_index(day);
    if (day_i0 == SpreadPanel::npos ||
        day_i0 + 24 > d.panel.hour_count()) {
      throw InsufficientHistory("date not fully covered by lmp history");
    }
    const std::size_t N = d.panel.node_count();
    PortfolioInstance ins;
    ins.n_nodes = N;
    ins.n_hours = 24;
    ins.costs = costs_from_config(cfg);
    ins.budget = op_budget;
    ins.risk_limit = op_risk < 0.0 ? op_budget : op_risk;
    ins.beta = op_beta;
    bool full_ps = op_mode == "full-ps" || op_mode == "full_ps";
    if (!full_ps && !(op_mode == "no-ps" || op_mode == "no_ps")) {
      throw InvalidConfig("mode must be full-ps or no-ps");
    }
    std::vector<PwlSensitivity> pwls;
    if (full_ps) {
      if (op_pwl.empty()) throw InvalidConfig("full-ps requires --pwl");
      ms.input(op_pwl);
      pwls = load_pwl_csv(op_pwl);
      if (pwls.size() != 24) throw InvalidConfig("--pwl must cover 24 hours");
    }
    std::size_t n_samples = static_cast<std::size_t>(cfg.get_int("n_samples", 30));
    ins.expected_spread.assign(N, std::vector<double>(24));
    for (std::size_t h = 0; h < 24; ++h) {
      HourStamp hs = day + static_cast<HourStamp>(h) * kHourSec;
      // expected spread: trailing same-hour mean (the CLI's model-free
      // estimator; backtest uses the trained forecaster instead)
      std::vector<std::vector<double>> samp;
      for (std::size_t k = 1; k <= n_samples && day_i0 + h >= 24 * k; ++k) {
        std::size_t idx = day_i0 + h - 24 * k;
        std::vector<double> v(N);
        for (std::size_t i = 0; i < N; ++i) v[i] = d.panel.spread[i][idx];
        samp.push_back(std::move(v));
      }
      if (samp.empty()) throw InsufficientHistory("no history before target date");
      for (std::size_t i = 0; i < N; ++i) {
        double acc = 0.0;
        for (const auto& v : samp) acc += v[i];
        ins.expected_spread[i][h] = acc / static_cast<double>(samp.size());
      }
      ins.spread_samples.push_back(std::move(samp));
      ins.y_forecast.push_back(0.0);
      double flat_hi = static_cast<double>(N) + 1.0;
      ins.pwl.push_back(full_ps ? pwls[h]
                                : PwlSensitivity::flat(-flat_hi, flat_hi, hs));
    }
    MiqcpProblem prob = build_problem(ins);
    SolutionReport sol = solve_branch_and_bound(prob);
    std::vector<HourStamp> hours(24);
    for (std::size_t h = 0; h < 24; ++h) {
      hours[h] = day + static_cast<HourStamp>(h) * kHourSec;
    }
    save_decisions_csv(sol.decision, d.panel.nodes, hours, op_out);
    ms.m.command = join_args(argc, argv);
    ms.m.config_hash = fnv1a_str(cfg.canonical_text());
    ms.m.seed = seed;
    ms.write(fs::path(op_out).parent_path().empty()
                 ? "."
                 : fs::path(op_out).parent_path().string());
    std::cout << "objective " << sol.objective << ", collateral "
              << sol.collateral_used << (sol.optimal ? "" : " (gap > 0)")
              << "\n";
    return 0;
  }

  if (*bt) {
    ManifestScope ms;
    ms.input(bt_lmp);
    ms.input(bt_feat);
    ms.input(bt_vbids);
    MarketDataset d = load_dataset(bt_lmp, bt_feat, bt_vbids, bt_ref);
    BacktestConfig bc = backtest_from_config(cfg, seed);
    bc.scenario = scenario_from_string(bt_scenario);
    bc.workers = bt_workers;
    BacktestReport r = run_backtest(d, bc, seed);
    fs::create_directories(bt_out);
    write_pnl_csv(r, (fs::path(bt_out) / "pnl.csv").string());
    write_metrics_txt(r, (fs::path(bt_out) / "metrics.txt").string());
    if (!bc.shares.empty()) {
      auto pts = efficiency_sweep(d, bc, seed);
      write_curves_csv(pts, (fs::path(bt_out) / "curves.csv").string());
    }
    ms.m.command = join_args(argc, argv);
    ms.m.config_hash = fnv1a_str(cfg.canonical_text());
    ms.m.seed = seed;
    ms.write(bt_out);
    std::cout << "backtested " << r.days.size() << " days, total net "
              << (r.cumulative_net.empty() ? 0.0 : r.cumulative_net.back())
              << "\n";
    return 0;
  }

  if (*rep) {
    std::ifstream in(rp_pnl);
    if (!in) throw DataError("cannot read " + rp_pnl);
    std::string line;
    if (!std::getline(in, line) || line != "date,gross,net,collateral,cvar") {
      throw ParseError(rp_pnl + ": expected pnl.csv header");
    }
    std::size_t days = 0;
    double total_net = 0.0, total_gross = 0.0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string date, gross, net;
      if (!std::getline(ss, date, ',') || !std::getline(ss, gross, ',') ||
          !std::getline(ss, net, ',')) {
        throw ParseError(rp_pnl + ": " + line);
      }
      total_gross += std::stod(gross);
      total_net += std::stod(net);
      ++days;
    }
    std::cout << "days = " << days << "\n";
    std::cout << "total_gross = " << total_gross << "\n";
    std::cout << "total_net = " << total_net << "\n";
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
