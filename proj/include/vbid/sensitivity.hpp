// Hourly piecewise-linear LMP-spread sensitivity and the reference-node
// approximation of nodal spread shifts.
#pragma once

#include <string>
#include <vector>

#include "vbid/common.hpp"

namespace vbid {

struct PwlInterval {
  double c = 0.0;  // start of the interval (MWh)
  double a = 0.0;  // slope, $/MWh per MWh, <= 0
  double b = 0.0;  // intercept, $/MWh
};

// Continuous non-increasing piecewise-linear shift of the reference spread
// as a function of the trader's net quantity x. shift(0) == 0 by
// construction (intercepts are re-based after fitting).
struct PwlSensitivity {
  HourStamp hour = 0;
  std::vector<PwlInterval> intervals;  // ordered, contiguous over [x_lo, x_hi]
  double x_lo = 0.0;
  double x_hi = 0.0;
  double big_m = 0.0;  // S, sized from the domain and shift magnitudes

  // Flat zero-shift sensitivity over [lo, hi]; used by the no-sensitivity
  // optimization scenarios.
  static PwlSensitivity flat(double lo, double hi, HourStamp hour = 0);

  std::size_t segment_count() const { return intervals.size(); }
  // Index of the active segment; boundary c_{j+1} resolves to segment j+1.
  std::size_t segment_index(double x) const;  // throws OutOfDomain
};

struct SensitivityBounds {
  double x_lo = 0.0;
  double x_hi = 0.0;
  void validate() const;  // requires x_lo < 0 < x_hi
};

double shift_at(const PwlSensitivity& pwl, double x);
double shifted_nodal_spread(double base_spread, const PwlSensitivity& pwl,
                            double x);

// Invariant checks; empty list iff the model is valid.
std::vector<std::string> validate(const PwlSensitivity& pwl);

// big_m rule: 10 x max(|x_lo|, |x_hi|, max |shift| over the domain).
double compute_big_m(const std::vector<PwlInterval>& intervals, double x_lo,
                     double x_hi);

// CSV serialization: `hour,j,c,a,b` rows plus a final bounds row per hour.
void save_pwl_csv(const std::vector<PwlSensitivity>& pwls,
                  const std::string& path);
std::vector<PwlSensitivity> load_pwl_csv(const std::string& path);

}  // namespace vbid
