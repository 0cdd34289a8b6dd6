// Risk-constrained virtual-bid portfolio optimization: problem assembly,
// CVaR machinery, an exhaustive-enumeration oracle, and a branch-and-bound
// solver.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vbid/common.hpp"
#include "vbid/market.hpp"
#include "vbid/sensitivity.hpp"

namespace vbid {

enum class BidSide { inc, dec };

// Expected per-MWh profit of a cleared 1 MWh lot (floor/cap bidding makes
// clearance certain): inc -> spread - gamma_I, dec -> -spread - gamma_D.
double expected_bid_profit(double spread, BidSide side, const CostSchedule& costs);

// Discrete CVaR at level beta. VaR is the smallest sample loss whose
// empirical CDF reaches beta; CVaR follows the Rockafellar-Uryasev tail
// average, which equals min over alpha of f_beta on the same samples.
double empirical_var(const std::vector<double>& losses, double beta);
double empirical_cvar(const std::vector<double>& losses, double beta);

// F_beta(alpha) = alpha + 1/((1-beta)*N) * sum_k max(0, loss_k - alpha).
double f_beta(const std::vector<double>& losses, double alpha, double beta);

struct PortfolioInstance {
  std::size_t n_nodes = 0;
  std::size_t n_hours = 0;  // <= 24
  std::vector<std::vector<double>> expected_spread;  // [node][hour], $/MWh
  std::vector<PwlSensitivity> pwl;                   // per hour
  // spread_samples[h][k][i]: k-th historical spread vector at hour h
  std::vector<std::vector<std::vector<double>>> spread_samples;
  CostSchedule costs;
  double budget = 0.0;      // B, $
  double risk_limit = 0.0;  // C, $
  double beta = 0.95;
  std::vector<double> y_forecast;  // per hour, MWh (context; not used in x bounds)
  bool exclusive_sides = true;     // z_inc + z_dec <= 1 per node-hour

  void validate() const;
};

// Assembled optimization instance with precomputed coefficient tables and
// the variable/constraint inventory used by dump().
struct MiqcpProblem {
  PortfolioInstance instance;
  std::vector<std::vector<double>> margin_inc;  // [node][hour]
  std::vector<std::vector<double>> margin_dec;
  std::size_t n_binaries = 0;        // z variables
  std::size_t n_variables = 0;       // z + d + v + w + alpha + q
  std::vector<int> x_min, x_max;     // reachable x per hour given bounds

  void dump(std::ostream& out) const;  // text listing for external diffing
};

MiqcpProblem build_problem(const PortfolioInstance& instance);

struct PortfolioDecision {
  std::vector<std::vector<int>> z_inc;  // [node][hour], 0/1
  std::vector<std::vector<int>> z_dec;
  std::vector<int> x;                    // per hour
  std::vector<std::size_t> d;            // active interval per hour
  std::vector<std::vector<double>> v;    // [hour][segment]
  std::vector<std::vector<double>> w;
  std::vector<double> alpha;             // per hour
  std::vector<std::vector<double>> q;    // [hour][sample]
};

struct SolutionReport {
  double objective = 0.0;
  PortfolioDecision decision;
  bool budget_binding = false;
  bool risk_binding = false;
  std::vector<double> cvar_per_hour;
  double collateral_used = 0.0;
  std::uint64_t nodes_explored = 0;
  double gap = 0.0;  // best bound minus incumbent (0 when proven optimal)
  bool optimal = true;
};

// Exhaustive oracle; guards at 24 z binaries. `workers` > 1 splits the
// assignment space across OpenMP threads with a deterministic reduction.
SolutionReport solve_enumeration(const MiqcpProblem& problem, int workers = 1);

struct BnbOptions {
  std::uint64_t max_nodes = 50'000'000;  // deterministic effort cap
};

// Depth-first branch and bound on the z binaries; bounds from a fractional
// budget relaxation plus an exact overestimate of the concave sensitivity
// term on the reachable x range (risk is enforced at leaves and pruned with
// a per-hour CVaR lower bound). Single-threaded and deterministic.
SolutionReport solve_branch_and_bound(const MiqcpProblem& problem,
                                      const BnbOptions& options = {});

struct CvarCheck {
  bool pass = false;
  double value = 0.0;
};

// Recomputes sum_h min_alpha F_beta from the decisions alone.
CvarCheck realized_cvar_check(const PortfolioDecision& decision,
                              const PortfolioInstance& instance);

// Per-hour losses of a decision under one spread sample (Eq. form
// f = -sum_i z*r). Shared by solvers, checks, and tests.
double hour_loss(const PortfolioInstance& instance, std::size_t hour,
                 const std::vector<int>& z_inc_col,
                 const std::vector<int>& z_dec_col, std::size_t sample);

void save_decisions_csv(const PortfolioDecision& d,
                        const std::vector<std::string>& nodes,
                        const std::vector<HourStamp>& hours,
                        const std::string& path);

}  // namespace vbid
