#pragma once

#include <functional>
#include <vector>

#include "perhom/discrete.hpp"
#include "perhom/periodize.hpp"

namespace perhom {

struct ErgodicEstimate {
  double value = 0.0;  // H-bar side sign convention
  double residual = 0.0;
  std::int64_t iterations = 0;
  GridField corrector;
  double lipschitz_estimate = 0.0;
  bool converged = false;
  // Diagnostics.
  double theta_max = 0.0;
  int theta_rounds = 0;
  std::int64_t theta_violations = 0;
  double sup_deviation = 0.0;  // delta route: sup over Q_{1/delta} of |delta v + value|
  bool monotone_input = true;  // delta route: extrapolation inputs monotone in delta
  std::vector<double> raw_values;  // delta route: -delta v(0) per delta
};

using HamiltonianFn = std::function<double(const Vec2& p, const Vec2& x)>;

/// H((p- + p+)/2, x) - sum_i theta_i (p+_i - p-_i)/2.
double lf_numerical_hamiltonian(const HamiltonianFn& H, const Vec2& p_minus, const Vec2& p_plus,
                                const Vec2& x, const Vec2& theta, int dim);

/// Lax-Friedrichs discretization of -tr(A D^2 u) + H(Du + p, x) with
/// H(q, x) = a(x)|q|^gamma - W(x) and per-node, per-axis dissipation.
class HJBOperator final : public DiscreteOperator {
 public:
  HJBOperator(const TorusGrid& grid, const Vec2& p, double gamma, std::vector<HJBNodeData> nodes,
              std::vector<Vec2> theta);

  const TorusGrid& grid() const override { return grid_; }
  void apply(const std::vector<double>& u, std::vector<double>& out, std::vector<MatrixEntry>* jac) const override;
  double explicit_rate() const override;

  const std::vector<HJBNodeData>& nodes() const { return nodes_; }
  const std::vector<Vec2>& theta() const { return theta_; }
  void set_theta(std::vector<Vec2> theta);
  /// Nodes where theta fails to dominate |dH/dq_i| on the box hull of (p-, p+) at u.
  std::vector<std::size_t> theta_violations(const std::vector<double>& u, double slack = 1.0) const;
  /// Spec bound c1 gamma (C_corr(|p|+1) + |p|)^{gamma-1} with a 10% margin.
  static double declared_theta(double c1, double gamma, double C_corr, double p_norm);

 private:
  TorusGrid grid_;
  Vec2 p_;
  double gamma_;
  std::vector<HJBNodeData> nodes_;
  std::vector<std::vector<StencilTerm>> stencils_;
  std::vector<Vec2> theta_;
  std::vector<double> radius_;
  std::vector<double> slope_;

  void update_radius();
};

std::vector<HJBNodeData> sample_nodes(const HamiltonianSpec& spec, const TorusGrid& grid);
std::vector<HJBNodeData> sample_nodes(const PeriodizedHJB& prob, const TorusGrid& grid);

/// Dissipation field for the operator: user theta (global) or the
/// automatic estimate from the expected gradient range.
std::vector<Vec2> initial_theta(const std::vector<HJBNodeData>& nodes, const Vec2& p, double gamma, int dim,
                                const SolverParams& params);

struct DeltaSolution {
  GridField field;
  double residual = 0.0;
  std::int64_t iterations = 0;
  bool converged = false;
  double theta_max = 0.0;
  int theta_rounds = 0;
  std::int64_t theta_violations = 0;
};

/// delta v - tr(A D^2 v) + H(Dv + p, x) = 0 on the grid torus.
DeltaSolution solve_delta_problem(const HamiltonianSpec& spec, const Vec2& p, const TorusGrid& grid,
                                  const SolverParams& params);
DeltaSolution solve_delta_problem(const PeriodizedHJB& prob, const Vec2& p, const TorusGrid& grid,
                                  const SolverParams& params);

/// -tr(A_L D^2 chi) + H_L(D chi + p, x) = value with chi(0) = 0; grid period must be L.
ErgodicEstimate ergodic_constant_periodic(const PeriodizedHJB& prob, const Vec2& p, const TorusGrid& grid,
                                          const SolverParams& params, const std::vector<double>* init = nullptr);
/// Cell problem of an unmodified operator whose medium is periodic with the grid period.
ErgodicEstimate ergodic_constant_cell(const HamiltonianSpec& spec, const Vec2& p, const TorusGrid& grid,
                                      const SolverParams& params, const std::vector<double>* init = nullptr);

/// -delta v^delta(0) for each delta on a torus of period `box`, linearly
/// extrapolated to delta = 0 from the last two entries.
ErgodicEstimate estimate_Hbar_reference(const HamiltonianSpec& spec, const Vec2& p,
                                        const std::vector<double>& delta_seq, double box, int n_per_axis,
                                        const SolverParams& params);

/// Grid maximum of H0(D_h v + p) over nodes and one-sided differences.
double max_H0_over_gradients(const GridField& v, const Vec2& p, double C_H0, double gamma);

}  // namespace perhom
