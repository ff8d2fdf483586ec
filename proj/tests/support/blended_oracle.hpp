#pragma once

// Weak-KAM value of the 1D first-order operator a(x)|q|^gamma - W(x) on one
// period, with a and W read off the periodized Hamiltonian pointwise.
#include <algorithm>
#include <cmath>
#include <vector>

#include "perhom/periodize.hpp"

namespace perhom::testing {

inline double blended_hbar_1d(const PeriodizedHJB& prob, double p, int quad_N) {
  const double gamma = prob.base.gamma;
  std::vector<double> a(quad_N), W(quad_N);
  for (int i = 0; i < quad_N; ++i) {
    const double x = prob.L * ((i + 0.5) / quad_N - 0.5);
    W[i] = -eval_HL(prob, {0.0, 0.0}, {x, 0.0});
    a[i] = eval_HL(prob, {1.0, 0.0}, {x, 0.0}) + W[i];
  }
  const double c_flat = -*std::min_element(W.begin(), W.end());
  auto g = [&](double c) {
    double s = 0.0;
    for (int i = 0; i < quad_N; ++i) s += std::pow(std::max(0.0, W[i] + c) / a[i], 1.0 / gamma);
    return s / quad_N;
  };
  const double target = std::abs(p);
  if (target <= g(c_flat)) return c_flat;
  double lo = c_flat, hi = c_flat + 1.0;
  while (g(hi) < target) hi = c_flat + 2.0 * (hi - c_flat);
  for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace perhom::testing
