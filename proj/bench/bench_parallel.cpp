// Wall-clock comparison of the serial reference kernels against their
// OpenMP-parallel counterparts. Prints timings and verifies the two paths
// agree before reporting a speedup.
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "vbid/gbt.hpp"
#include "vbid/portfolio.hpp"

using namespace vbid;

namespace {

template <typename Fn>
double time_s(Fn&& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void bench_gbt() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const std::size_t n = 60'000, k = 24;
  std::vector<std::vector<double>> cols(k, std::vector<double>(n));
  std::vector<double> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    double y = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      cols[j][i] = u(rng);
      y += std::sin(cols[j][i] * (1.0 + 0.1 * static_cast<double>(j)));
    }
    targets[i] = y - 2.0 * cols[0][i];
  }
  GbtParams p;
  p.num_rounds = 12;
  p.max_depth = 4;
  p.monotone_feature = 0;

  GbtEnsemble serial, parallel;
  double ts = time_s([&] { serial = fit_gbt(cols, targets, p, false); });
  double tp = time_s([&] { parallel = fit_gbt(cols, targets, p, true); });

  double max_diff = 0.0;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> x(k);
    for (auto& v : x) v = u(rng);
    max_diff = std::max(max_diff,
                        std::fabs(serial.predict(x) - parallel.predict(x)));
  }
  std::printf("gbt fit (%zu rows, %zu features, %d rounds)\n", n, k,
              p.num_rounds);
  std::printf("  serial   %.3fs\n", ts);
  std::printf("  parallel %.3fs  (%.2fx, max prediction diff %.3g)\n", tp,
              ts / tp, max_diff);
}

void bench_enumeration() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> spread_d(-8.0, 8.0),
      noise_d(-5.0, 5.0);
  PortfolioInstance ins;
  ins.n_nodes = 3;
  ins.n_hours = 4;  // 24 z binaries: the enumeration guard limit
  ins.budget = 900.0;
  ins.risk_limit = 120.0;
  ins.beta = 0.9;
  ins.expected_spread.assign(ins.n_nodes, std::vector<double>(ins.n_hours));
  for (auto& row : ins.expected_spread) {
    for (auto& v : row) v = spread_d(rng);
  }
  for (std::size_t h = 0; h < ins.n_hours; ++h) {
    ins.pwl.push_back(PwlSensitivity::flat(-5.0, 5.0));
    std::vector<std::vector<double>> samp;
    for (int s = 0; s < 8; ++s) {
      std::vector<double> v(ins.n_nodes);
      for (auto& e : v) e = spread_d(rng) + noise_d(rng);
      samp.push_back(std::move(v));
    }
    ins.spread_samples.push_back(std::move(samp));
    ins.y_forecast.push_back(0.0);
  }
  MiqcpProblem prob = build_problem(ins);

  int threads = omp_get_max_threads();
  SolutionReport r1, rn;
  double t1 = time_s([&] { r1 = solve_enumeration(prob, 1); });
  double tn = time_s([&] { rn = solve_enumeration(prob, threads); });
  std::printf("enumeration oracle (24 binaries)\n");
  std::printf("  1 worker   %.3fs  objective %.6f\n", t1, r1.objective);
  std::printf("  %d workers  %.3fs  objective %.6f  (%.2fx)\n", threads, tn,
              rn.objective, t1 / tn);
  if (std::fabs(r1.objective - rn.objective) > 1e-9) {
    std::printf("  WARNING: objectives differ\n");
  }
}

}  // namespace

int main() {
  std::printf("omp max threads: %d\n\n", omp_get_max_threads());
  bench_gbt();
  std::printf("\n");
  bench_enumeration();
  return 0;
}
