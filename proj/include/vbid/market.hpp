// Market data model: LMP records, spread panels, CSV ingestion, and the
// seeded synthetic two-settlement market generator.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vbid/common.hpp"

namespace vbid {

struct LmpRecord {
  std::string node_id;
  HourStamp hour = 0;
  double da_lmp = 0.0;
  double rt_lmp = 0.0;
};

// Dense panel of DA/RT LMPs and their spreads. Row = node, column = hour.
struct SpreadPanel {
  std::vector<std::string> nodes;
  std::vector<HourStamp> hours;
  std::vector<std::vector<double>> da;      // [node][hour]
  std::vector<std::vector<double>> rt;      // [node][hour]
  std::vector<std::vector<double>> spread;  // da - rt, exact
  std::size_t ref_node_index = 0;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t hour_count() const { return hours.size(); }
  // Index of an hour stamp, or npos.
  std::size_t hour_index(HourStamp h) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct MarketVirtualQuantity {
  HourStamp hour = 0;
  double inc_cleared_mwh = 0.0;
  double dec_cleared_mwh = 0.0;
  double net_mwh() const { return inc_cleared_mwh - dec_cleared_mwh; }
};

// Named real-valued features for one hour. The name set is shared across a
// dataset (FeatureFrameSeries owns the names once).
struct FeatureFrameSeries {
  std::vector<std::string> names;
  std::vector<HourStamp> hours;
  std::vector<std::vector<double>> values;  // [hour][feature]
};

struct CostSchedule {
  double gamma_inc = 1.0;   // $/MWh trading cost for INC
  double gamma_dec = 1.0;   // $/MWh trading cost for DEC
  double prox_inc = 50.0;   // $ collateral per 1 MWh INC lot
  double prox_dec = 50.0;   // $ collateral per 1 MWh DEC lot
  void validate() const;
};

struct BidPriceConvention {
  double price_floor = -150.0;
  double price_cap = 1000.0;
  void validate() const;
};

// Ingest lmp.csv (header: hour,node_id,da_lmp,rt_lmp) into a dense panel.
// Throws ParseError, MissingCell, NoReferenceNode.
SpreadPanel load_lmp_csv(const std::string& path, const std::string& ref_node);
void save_lmp_csv(const SpreadPanel& panel, const std::string& path);

FeatureFrameSeries load_features_csv(const std::string& path);
void save_features_csv(const FeatureFrameSeries& f, const std::string& path);

std::vector<MarketVirtualQuantity> load_vbids_csv(const std::string& path);
void save_vbids_csv(const std::vector<MarketVirtualQuantity>& v,
                    const std::string& path);

// Elementwise DA - RT. Throws ShapeMismatch.
std::vector<std::vector<double>> compute_spreads(
    const std::vector<std::vector<double>>& da,
    const std::vector<std::vector<double>>& rt);

// Synthetic market generator. The link functions are documented here so
// tests can recover ground truth:
//   load_z, temp_z, fuel_z, wind_z ~ seasonal sinusoids + bounded noise
//   y_h   = quantity_amplitude * load_z + quantity_noise * eps   (net MWh)
//   base  = mean_spread + spread_load_coef*load_z + spread_temp_coef*temp_z
//           + spread_cross_coef*load_z^3 + base_volatility*eps
//   ref spread = clamp(base, mean_spread +- base_range) + sensitivity_slope*y_h
//                + spike (prob spike_prob, magnitude spike_magnitude, signed)
//   node spread = ref spread + node offset + node_noise*eps
// Holding features fixed, the reference spread is strictly decreasing in y_h
// (sensitivity_slope < 0).
struct SyntheticConfig {
  int n_nodes = 5;
  int n_days = 30;
  HourStamp start_hour = 1420070400;  // 2015-01-01T00:00:00Z
  double spike_prob = 0.01;
  double spike_magnitude = 120.0;
  double base_volatility = 2.0;
  double base_range = 50.0;       // clamp half-width of non-spike base spread
  double mean_spread = 0.0;
  double spread_load_coef = 4.0;
  double spread_temp_coef = 2.0;
  double spread_cross_coef = 1.5;
  double sensitivity_slope = -0.01;  // $/MWh per MWh of market net quantity
  double quantity_amplitude = 300.0;
  double quantity_noise = 100.0;
  double quantity_base_dec = 600.0;  // dec volume floor, keeps inc/dec >= 0
  double node_offset_scale = 0.5;
  double node_noise = 0.5;
  double rt_base_price = 30.0;
  void validate() const;  // throws InvalidConfig
};

struct SyntheticMarket {
  SpreadPanel panel;
  FeatureFrameSeries features;
  std::vector<MarketVirtualQuantity> vbids;
  std::vector<double> injected_net_mwh;  // == vbids net, kept for oracles
};

SyntheticMarket generate_synthetic_market(const SyntheticConfig& cfg,
                                          std::uint64_t seed);

}  // namespace vbid
