#include "vbid/market.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace vbid {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_price(const std::string& s, int lineno) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(lineno) + ": bad number '" + s + "'");
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::size_t SpreadPanel::hour_index(HourStamp h) const {
  auto it = std::lower_bound(hours.begin(), hours.end(), h);
  if (it == hours.end() || *it != h) return npos;
  return static_cast<std::size_t>(it - hours.begin());
}

void CostSchedule::validate() const {
  if (gamma_inc < 0 || gamma_dec < 0 || prox_inc < 0 || prox_dec < 0) {
    throw InvalidConfig("cost schedule values must be >= 0");
  }
}

void BidPriceConvention::validate() const {
  if (!(price_floor < price_cap)) {
    throw InvalidConfig("price_floor must be < price_cap");
  }
}

SpreadPanel load_lmp_csv(const std::string& path, const std::string& ref_node) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (split_csv_line(line) !=
      std::vector<std::string>{"hour", "node_id", "da_lmp", "rt_lmp"}) {
    throw ParseError(path + ": expected header hour,node_id,da_lmp,rt_lmp");
  }

  struct Cell { double da, rt; };
  std::map<std::pair<HourStamp, std::string>, Cell> cells;
  std::set<std::string> node_set;
  std::set<HourStamp> hour_set;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": expected 4 fields");
    }
    HourStamp h = parse_hour_utc(f[0]);
    Cell c{parse_price(f[2], lineno), parse_price(f[3], lineno)};
    auto [it, inserted] = cells.emplace(std::make_pair(h, f[1]), c);
    if (!inserted) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": duplicate (hour, node)");
    }
    node_set.insert(f[1]);
    hour_set.insert(h);
  }
  if (cells.empty()) throw ParseError(path + ": no data rows");

  SpreadPanel p;
  p.nodes.assign(node_set.begin(), node_set.end());
  p.hours.assign(hour_set.begin(), hour_set.end());
  auto ref_it = std::find(p.nodes.begin(), p.nodes.end(), ref_node);
  if (ref_it == p.nodes.end()) {
    throw NoReferenceNode("reference node '" + ref_node + "' not in " + path);
  }
  p.ref_node_index = static_cast<std::size_t>(ref_it - p.nodes.begin());

  const std::size_t N = p.nodes.size(), H = p.hours.size();
  p.da.assign(N, std::vector<double>(H));
  p.rt.assign(N, std::vector<double>(H));
  p.spread.assign(N, std::vector<double>(H));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t h = 0; h < H; ++h) {
      auto it = cells.find({p.hours[h], p.nodes[i]});
      if (it == cells.end()) {
        throw MissingCell("missing cell: node " + p.nodes[i] + " hour " +
                          format_hour_utc(p.hours[h]));
      }
      p.da[i][h] = it->second.da;
      p.rt[i][h] = it->second.rt;
      p.spread[i][h] = it->second.da - it->second.rt;
    }
  }
  return p;
}

void save_lmp_csv(const SpreadPanel& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "hour,node_id,da_lmp,rt_lmp\n";
  // Rows sorted by (hour, node), matching the ingestion contract.
  for (std::size_t h = 0; h < panel.hour_count(); ++h) {
    for (std::size_t i = 0; i < panel.node_count(); ++i) {
      out << format_hour_utc(panel.hours[h]) << ',' << panel.nodes[i] << ','
          << fmt_double(panel.da[i][h]) << ',' << fmt_double(panel.rt[i][h])
          << '\n';
    }
  }
}

FeatureFrameSeries load_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "hour") {
    throw ParseError(path + ": expected header hour,<feature...>");
  }
  FeatureFrameSeries f;
  f.names.assign(header.begin() + 1, header.end());
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = split_csv_line(line);
    if (cols.size() != header.size()) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": field count mismatch");
    }
    f.hours.push_back(parse_hour_utc(cols[0]));
    std::vector<double> row(f.names.size());
    for (std::size_t k = 0; k < f.names.size(); ++k) {
      row[k] = parse_price(cols[k + 1], lineno);
    }
    f.values.push_back(std::move(row));
  }
  return f;
}

void save_features_csv(const FeatureFrameSeries& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "hour";
  for (const auto& n : f.names) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < f.hours.size(); ++r) {
    out << format_hour_utc(f.hours[r]);
    for (double v : f.values[r]) out << ',' << fmt_double(v);
    out << '\n';
  }
}

std::vector<MarketVirtualQuantity> load_vbids_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (split_csv_line(line) !=
      std::vector<std::string>{"hour", "inc_cleared_mwh", "dec_cleared_mwh"}) {
    throw ParseError(path +
                     ": expected header hour,inc_cleared_mwh,dec_cleared_mwh");
  }
  std::vector<MarketVirtualQuantity> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 3) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": expected 3 fields");
    }
    MarketVirtualQuantity q;
    q.hour = parse_hour_utc(f[0]);
    q.inc_cleared_mwh = parse_price(f[1], lineno);
    q.dec_cleared_mwh = parse_price(f[2], lineno);
    if (q.inc_cleared_mwh < 0 || q.dec_cleared_mwh < 0) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": cleared quantities must be >= 0");
    }
    out.push_back(q);
  }
  return out;
}

void save_vbids_csv(const std::vector<MarketVirtualQuantity>& v,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "hour,inc_cleared_mwh,dec_cleared_mwh\n";
  for (const auto& q : v) {
    out << format_hour_utc(q.hour) << ',' << fmt_double(q.inc_cleared_mwh)
        << ',' << fmt_double(q.dec_cleared_mwh) << '\n';
  }
}

std::vector<std::vector<double>> compute_spreads(
    const std::vector<std::vector<double>>& da,
    const std::vector<std::vector<double>>& rt) {
  if (da.size() != rt.size()) throw ShapeMismatch("row count mismatch");
  std::vector<std::vector<double>> out(da.size());
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (da[i].size() != rt[i].size()) throw ShapeMismatch("column count mismatch");
    out[i].resize(da[i].size());
    for (std::size_t j = 0; j < da[i].size(); ++j) out[i][j] = da[i][j] - rt[i][j];
  }
  return out;
}

void SyntheticConfig::validate() const {
  if (n_nodes <= 0 || n_days <= 0) {
    throw InvalidConfig("synthetic: n_nodes and n_days must be positive");
  }
  if (spike_prob < 0.0 || spike_prob > 1.0) {
    throw InvalidConfig("synthetic: spike_prob must be in [0,1]");
  }
  if (base_range <= 0.0 || base_volatility < 0.0) {
    throw InvalidConfig("synthetic: base_range must be > 0, volatility >= 0");
  }
  if (sensitivity_slope > 0.0) {
    throw InvalidConfig("synthetic: sensitivity_slope must be <= 0");
  }
}

SyntheticMarket generate_synthetic_market(const SyntheticConfig& cfg,
                                          std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(child_seed(seed, "market_core.synth"));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int H = cfg.n_days * 24;
  const int N = cfg.n_nodes;

  SyntheticMarket m;
  m.features.names = {"load", "temp", "fuel", "wind"};
  for (int h = 0; h < 24; ++h) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "hour_%02d", h);
    m.features.names.push_back(buf);
  }

  std::vector<double> node_offset(N);
  for (int i = 0; i < N; ++i) node_offset[i] = cfg.node_offset_scale * unif(rng);

  m.panel.nodes.resize(N);
  for (int i = 0; i < N; ++i) m.panel.nodes[i] = "n" + std::to_string(i);
  m.panel.ref_node_index = 0;
  m.panel.hours.resize(H);
  m.panel.da.assign(N, std::vector<double>(H));
  m.panel.rt.assign(N, std::vector<double>(H));
  m.panel.spread.assign(N, std::vector<double>(H));

  double fuel = 0.0;
  for (int t = 0; t < H; ++t) {
    HourStamp hour = cfg.start_hour + static_cast<HourStamp>(t) * kHourSec;
    m.panel.hours[t] = hour;
    int hod = t % 24;
    double day = t / 24.0;

    double load_z = 0.8 * std::sin(2.0 * M_PI * (hod - 6) / 24.0) +
                    0.3 * std::sin(2.0 * M_PI * day / 7.0) + 0.25 * unif(rng);
    double temp_z = 0.7 * std::sin(2.0 * M_PI * (hod - 9) / 24.0) +
                    0.4 * std::sin(2.0 * M_PI * day / 365.0) + 0.25 * unif(rng);
    fuel = 0.98 * fuel + 0.1 * unif(rng);
    double wind_z = 0.6 * unif(rng) + 0.4 * std::sin(2.0 * M_PI * day / 11.0);

    std::vector<double> feat(m.features.names.size(), 0.0);
    feat[0] = load_z;
    feat[1] = temp_z;
    feat[2] = fuel;
    feat[3] = wind_z;
    feat[4 + hod] = 1.0;
    m.features.hours.push_back(hour);
    m.features.values.push_back(feat);

    double y = cfg.quantity_amplitude * load_z + cfg.quantity_noise * unif(rng);
    double dec = std::max(0.0, cfg.quantity_base_dec + 0.3 * cfg.quantity_base_dec * unif(rng));
    double inc = y + dec;
    if (inc < 0.0) {  // shift volume into dec to keep both legs nonnegative
      dec -= inc;
      inc = 0.0;
    }
    MarketVirtualQuantity q{hour, inc, dec};
    m.vbids.push_back(q);
    m.injected_net_mwh.push_back(q.net_mwh());

    // Nonlinear link is odd in load_z so it stays zero-mean over whole days.
    double base = cfg.mean_spread + cfg.spread_load_coef * load_z +
                  cfg.spread_temp_coef * temp_z +
                  cfg.spread_cross_coef * load_z * load_z * load_z +
                  cfg.base_volatility * unif(rng);
    base = std::clamp(base, cfg.mean_spread - cfg.base_range,
                      cfg.mean_spread + cfg.base_range);
    double ref_spread = base + cfg.sensitivity_slope * q.net_mwh();
    double spike = 0.0;
    if (unit(rng) < cfg.spike_prob) {
      spike = cfg.spike_magnitude * (unit(rng) < 0.5 ? -1.0 : 1.0) *
              (0.5 + unit(rng));
    }
    ref_spread += spike;

    double rt_price = cfg.rt_base_price + 5.0 * load_z + unif(rng);
    for (int i = 0; i < N; ++i) {
      double s = ref_spread;
      if (i != 0) s += node_offset[i] + cfg.node_noise * unif(rng);
      m.panel.rt[i][t] = rt_price;
      m.panel.da[i][t] = rt_price + s;
      m.panel.spread[i][t] = m.panel.da[i][t] - m.panel.rt[i][t];
    }
  }
  return m;
}

}  // namespace vbid
