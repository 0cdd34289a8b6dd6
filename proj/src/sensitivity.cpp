#include "vbid/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace vbid {

namespace {
constexpr double kContinuityTol = 1e-9;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

PwlSensitivity PwlSensitivity::flat(double lo, double hi, HourStamp hour) {
  PwlSensitivity p;
  p.hour = hour;
  p.x_lo = lo;
  p.x_hi = hi;
  p.intervals.push_back({lo, 0.0, 0.0});
  p.big_m = compute_big_m(p.intervals, lo, hi);
  return p;
}

std::size_t PwlSensitivity::segment_index(double x) const {
  if (intervals.empty()) throw InvalidPwl("no intervals");
  if (x < x_lo || x > x_hi) {
    throw OutOfDomain("x = " + std::to_string(x) + " outside [" +
                      std::to_string(x_lo) + ", " + std::to_string(x_hi) + "]");
  }
  // Half-open convention: the boundary c_{j+1} belongs to segment j+1.
  std::size_t j = intervals.size() - 1;
  for (std::size_t k = 1; k < intervals.size(); ++k) {
    if (x < intervals[k].c) {
      j = k - 1;
      break;
    }
  }
  return j;
}

double shift_at(const PwlSensitivity& pwl, double x) {
  const PwlInterval& seg = pwl.intervals[pwl.segment_index(x)];
  return seg.a * x + seg.b;
}

double shifted_nodal_spread(double base_spread, const PwlSensitivity& pwl,
                            double x) {
  return base_spread + shift_at(pwl, x);
}

void SensitivityBounds::validate() const {
  if (!(x_lo < 0.0 && 0.0 < x_hi)) {
    throw InfeasibleBounds("bounds must satisfy x_lo < 0 < x_hi");
  }
}

std::vector<std::string> validate(const PwlSensitivity& pwl) {
  std::vector<std::string> v;
  if (pwl.intervals.empty()) {
    v.push_back("no intervals");
    return v;
  }
  if (!(pwl.x_lo < pwl.x_hi)) v.push_back("empty domain");
  if (pwl.intervals.front().c != pwl.x_lo) {
    v.push_back("first interval must start at x_lo");
  }
  for (std::size_t j = 0; j < pwl.intervals.size(); ++j) {
    const auto& seg = pwl.intervals[j];
    if (seg.a > 0.0) {
      v.push_back("positive slope at segment " + std::to_string(j));
    }
    if (!std::isfinite(seg.a) || !std::isfinite(seg.b) || !std::isfinite(seg.c)) {
      v.push_back("non-finite coefficient at segment " + std::to_string(j));
    }
    if (j > 0) {
      const auto& prev = pwl.intervals[j - 1];
      if (!(prev.c < seg.c)) {
        v.push_back("intervals not strictly ordered at " + std::to_string(j));
      }
      double left = prev.a * seg.c + prev.b;
      double right = seg.a * seg.c + seg.b;
      if (std::fabs(left - right) > kContinuityTol) {
        v.push_back("continuity violated at boundary " + std::to_string(j));
      }
    }
  }
  if (pwl.intervals.back().c >= pwl.x_hi) {
    v.push_back("last interval starts at or beyond x_hi");
  }
  if (pwl.x_lo <= 0.0 && 0.0 <= pwl.x_hi) {
    const auto& seg = pwl.intervals[pwl.segment_index(0.0)];
    if (std::fabs(seg.b) > kContinuityTol) {
      v.push_back("shift at x = 0 is not 0");
    }
  }
  return v;
}

double compute_big_m(const std::vector<PwlInterval>& intervals, double x_lo,
                     double x_hi) {
  double m = std::max(std::fabs(x_lo), std::fabs(x_hi));
  for (std::size_t j = 0; j < intervals.size(); ++j) {
    double start = intervals[j].c;
    double end = j + 1 < intervals.size() ? intervals[j + 1].c : x_hi;
    m = std::max(m, std::fabs(intervals[j].a * start + intervals[j].b));
    m = std::max(m, std::fabs(intervals[j].a * end + intervals[j].b));
  }
  return 10.0 * m;
}

void save_pwl_csv(const std::vector<PwlSensitivity>& pwls,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "hour,j,c,a,b\n";
  for (const auto& p : pwls) {
    for (std::size_t j = 0; j < p.intervals.size(); ++j) {
      out << format_hour_utc(p.hour) << ',' << (j + 1) << ','
          << fmt_double(p.intervals[j].c) << ',' << fmt_double(p.intervals[j].a)
          << ',' << fmt_double(p.intervals[j].b) << '\n';
    }
    // bounds row: j = 0, c = x_lo, a = x_hi, b = big_m
    out << format_hour_utc(p.hour) << ",0," << fmt_double(p.x_lo) << ','
        << fmt_double(p.x_hi) << ',' << fmt_double(p.big_m) << '\n';
  }
}

std::vector<PwlSensitivity> load_pwl_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "hour,j,c,a,b") {
    throw ParseError(path + ": expected header hour,j,c,a,b");
  }
  std::map<HourStamp, PwlSensitivity> by_hour;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string hour_s, j_s, c_s, a_s, b_s;
    if (!std::getline(ss, hour_s, ',') || !std::getline(ss, j_s, ',') ||
        !std::getline(ss, c_s, ',') || !std::getline(ss, a_s, ',') ||
        !std::getline(ss, b_s)) {
      throw ParseError(path + ": line " + std::to_string(lineno));
    }
    HourStamp hour = parse_hour_utc(hour_s);
    PwlSensitivity& p = by_hour[hour];
    p.hour = hour;
    int j = std::stoi(j_s);
    if (j == 0) {
      p.x_lo = std::stod(c_s);
      p.x_hi = std::stod(a_s);
      p.big_m = std::stod(b_s);
    } else {
      if (static_cast<std::size_t>(j) > p.intervals.size()) {
        p.intervals.resize(static_cast<std::size_t>(j));
      }
      p.intervals[j - 1] = {std::stod(c_s), std::stod(a_s), std::stod(b_s)};
    }
  }
  std::vector<PwlSensitivity> out;
  for (auto& [h, p] : by_hour) {
    auto violations = validate(p);
    if (!violations.empty()) {
      throw InvalidPwl(path + ": hour " + format_hour_utc(h) + ": " +
                       violations.front());
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace vbid
