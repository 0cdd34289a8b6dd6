#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "vbid/market.hpp"

using namespace vbid;

namespace {

std::string tmp_path(const char* name) {
  return std::string("/tmp/vbid_market_") + name;
}

SpreadPanel tiny_panel() {
  SpreadPanel p;
  p.nodes = {"A", "B"};
  p.hours = {1420070400, 1420074000};
  p.da = {{31.5, 29.0}, {32.25, 28.0}};
  p.rt = {{30.0, 30.0}, {30.0, 27.5}};
  p.spread = compute_spreads(p.da, p.rt);
  p.ref_node_index = 0;
  return p;
}

}  // namespace

TEST_CASE("compute_spreads is exact da - rt") {
  auto s = compute_spreads({{1.25, -2.0}}, {{0.25, 3.0}});
  CHECK(s[0][0] == 1.0);
  CHECK(s[0][1] == -5.0);
  CHECK_THROWS_AS(compute_spreads({{1.0}}, {{1.0, 2.0}}), ShapeMismatch);
}

TEST_CASE("lmp csv round trip preserves every double bit-exactly") {
  SpreadPanel p = tiny_panel();
  p.da[0][0] = 0.1 + 0.2;  // not exactly representable; %.17g must survive
  p.spread = compute_spreads(p.da, p.rt);
  std::string path = tmp_path("roundtrip.csv");
  save_lmp_csv(p, path);
  SpreadPanel q = load_lmp_csv(path, "A");
  REQUIRE(q.nodes == p.nodes);
  REQUIRE(q.hours == p.hours);
  for (std::size_t i = 0; i < p.node_count(); ++i) {
    for (std::size_t h = 0; h < p.hour_count(); ++h) {
      CHECK(q.da[i][h] == p.da[i][h]);
      CHECK(q.rt[i][h] == p.rt[i][h]);
      CHECK(q.spread[i][h] == p.da[i][h] - p.rt[i][h]);
    }
  }
}

TEST_CASE("ingestion rejects malformed input") {
  std::string path = tmp_path("bad.csv");

  SUBCASE("missing cell") {
    std::ofstream out(path);
    out << "hour,node_id,da_lmp,rt_lmp\n";
    out << "2015-01-01T00:00:00Z,A,1,2\n";
    out << "2015-01-01T01:00:00Z,A,1,2\n";
    out << "2015-01-01T00:00:00Z,B,1,2\n";  // B lacks hour 01
    out.close();
    CHECK_THROWS_AS(load_lmp_csv(path, "A"), MissingCell);
  }
  SUBCASE("duplicate record") {
    std::ofstream out(path);
    out << "hour,node_id,da_lmp,rt_lmp\n";
    out << "2015-01-01T00:00:00Z,A,1,2\n";
    out << "2015-01-01T00:00:00Z,A,1,2\n";
    out.close();
    CHECK_THROWS_AS(load_lmp_csv(path, "A"), ParseError);
  }
  SUBCASE("unknown reference node") {
    std::ofstream out(path);
    out << "hour,node_id,da_lmp,rt_lmp\n";
    out << "2015-01-01T00:00:00Z,A,1,2\n";
    out.close();
    CHECK_THROWS_AS(load_lmp_csv(path, "Z"), NoReferenceNode);
  }
  SUBCASE("bad header") {
    std::ofstream out(path);
    out << "hour,node,da,rt\n";
    out.close();
    CHECK_THROWS_AS(load_lmp_csv(path, "A"), ParseError);
  }
}

TEST_CASE("features and vbids csv round trips") {
  FeatureFrameSeries f;
  f.names = {"load", "temp"};
  f.hours = {1420070400, 1420074000};
  f.values = {{0.5, -1.25}, {1.0 / 3.0, 2.0}};
  std::string path = tmp_path("features.csv");
  save_features_csv(f, path);
  FeatureFrameSeries g = load_features_csv(path);
  CHECK(g.names == f.names);
  CHECK(g.hours == f.hours);
  CHECK(g.values == f.values);

  std::vector<MarketVirtualQuantity> v = {{1420070400, 700.0, 650.5}};
  path = tmp_path("vbids.csv");
  save_vbids_csv(v, path);
  auto w = load_vbids_csv(path);
  REQUIRE(w.size() == 1);
  CHECK(w[0].hour == v[0].hour);
  CHECK(w[0].inc_cleared_mwh == v[0].inc_cleared_mwh);
  CHECK(w[0].dec_cleared_mwh == v[0].dec_cleared_mwh);
  CHECK(w[0].net_mwh() == 700.0 - 650.5);
}

TEST_CASE("synthetic market honors its documented structure") {
  SyntheticConfig cfg;
  cfg.n_days = 90;
  cfg.n_nodes = 5;
  SyntheticMarket m = generate_synthetic_market(cfg, 42);

  const std::size_t H = 90 * 24;
  REQUIRE(m.panel.hour_count() == H);
  REQUIRE(m.panel.node_count() == 5);
  REQUIRE(m.features.hours.size() == H);
  REQUIRE(m.vbids.size() == H);

  // spreads are exactly da - rt
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t h = 0; h < H; ++h) {
      CHECK(m.panel.spread[i][h] == m.panel.da[i][h] - m.panel.rt[i][h]);
    }
  }
  // cleared quantities stay non-negative and match the injected net series
  for (std::size_t h = 0; h < H; ++h) {
    CHECK(m.vbids[h].inc_cleared_mwh >= 0.0);
    CHECK(m.vbids[h].dec_cleared_mwh >= 0.0);
    CHECK(m.vbids[h].net_mwh() == doctest::Approx(m.injected_net_mwh[h]).epsilon(1e-12));
  }
  // hour one-hots present
  bool found = false;
  for (const auto& n : m.features.names) found = found || n == "hour_13";
  CHECK(found);
}

TEST_CASE("synthetic spread mean matches configuration within 3 standard errors") {
  SyntheticConfig cfg;
  cfg.n_days = 90;  // 90 * 24 * 5 nodes > 10k samples
  cfg.mean_spread = 3.0;
  cfg.sensitivity_slope = -0.01;
  SyntheticMarket m = generate_synthetic_market(cfg, 7);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& row : m.panel.spread) {
    for (double s : row) {
      sum += s;
      ++n;
    }
  }
  double mean = sum / static_cast<double>(n);
  for (const auto& row : m.panel.spread) {
    for (double s : row) sq += (s - mean) * (s - mean);
  }
  double se = std::sqrt(sq / static_cast<double>(n - 1)) /
              std::sqrt(static_cast<double>(n));
  // the quantity term -0.01 * y has mean ~0 by construction
  CHECK(std::fabs(mean - 3.0) < 3.0 * se + 0.5);
  CHECK(n >= 10000);
}

TEST_CASE("synthetic generator is deterministic per seed") {
  SyntheticConfig cfg;
  cfg.n_days = 3;
  SyntheticMarket a = generate_synthetic_market(cfg, 11);
  SyntheticMarket b = generate_synthetic_market(cfg, 11);
  SyntheticMarket c = generate_synthetic_market(cfg, 12);
  CHECK(a.panel.spread == b.panel.spread);
  CHECK(a.features.values == b.features.values);
  CHECK(a.panel.spread != c.panel.spread);
}

TEST_CASE("config validation") {
  SyntheticConfig cfg;
  cfg.n_nodes = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  CostSchedule costs;
  costs.gamma_inc = -1.0;
  CHECK_THROWS_AS(costs.validate(), InvalidConfig);
  BidPriceConvention conv;
  conv.price_floor = 2000.0;
  CHECK_THROWS_AS(conv.validate(), InvalidConfig);
}
