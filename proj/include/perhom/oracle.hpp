#pragma once

#include <functional>
#include <vector>

#include "perhom/environment.hpp"

namespace perhom {

using ScalarFn = std::function<double(double)>;
using FieldFn = std::function<double(const Vec2&)>;

/// 1D first-order effective Hamiltonian of c1|q|^gamma - V(x) for 1-periodic V.
double hbar_1d_first_order(const ScalarFn& V, double c1, double gamma, double p, int quad_N);

/// Pieces of the weak-KAM computation, exposed for flat-spot checks.
struct WeakKam1D {
  std::vector<double> samples;  // V at the quadrature nodes
  double v_min = 0.0;           // refined minimum
  double c1 = 1.0;
  double gamma = 2.0;

  static WeakKam1D build(const ScalarFn& V, double c1, double gamma, int quad_N);
  double c_flat() const { return -v_min; }
  /// g(c) = mean over nodes of ((V + c)/c1)^{1/gamma}.
  double g(double c) const;
  double g_flat() const { return g(c_flat()); }
  double hbar(double p) const;
};

/// First-order oracle for the window [-box/2, box/2] of a sample, rescaled
/// to a unit period; nodes_per_length sets the quadrature density.
double hbar_1d_window(const EnvironmentSample& env, double c1, double gamma, double p, double box,
                      int nodes_per_length);

struct FlatSpot {
  double value = 0.0;  // -min V
  double raw_min = 0.0;
  Vec2 location{0.0, 0.0};
};

/// Minimum of V over [-box/2, box/2]^d on grid_N points per axis with local refinement.
FlatSpot hbar_flat_spot_value(const EnvironmentSample& env, double box, int grid_N);

/// (int f/a - P) / int 1/a over one period, rectangle rule on quad_N nodes.
double fbar_linear_1d(const ScalarFn& a, const ScalarFn& f, double P, int quad_N);
double fbar_linear_1d_window(const EnvironmentSample& env, const ScalarFn& a_of_v, const ScalarFn& f_of_v,
                             double P, double box, int nodes_per_length);

struct MinResult {
  double value = 0.0;
  Vec2 location{0.0, 0.0};
};

/// Grid minimum over [lo, hi] (N points per axis) followed by golden-section
/// refinement around the winning node.
MinResult brute_force_min(const FieldFn& fn, const Vec2& lo, const Vec2& hi, int N, int dim);

/// Golden-section minimum of a unimodal function on [a, b].
MinResult golden_section_min(const ScalarFn& fn, double a, double b, double tol = 1e-12);

}  // namespace perhom
