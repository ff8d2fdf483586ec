#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perhom/grid.hpp"

namespace perhom {

enum class SolveMethod { newton, explicit_iteration };
enum class ThetaMode { local, global };

std::string to_string(SolveMethod m);
SolveMethod solve_method_from_string(const std::string& s);

struct SolverParams {
  double delta = 0.0;
  /// Lax-Friedrichs dissipation per axis; zero components mean "size automatically".
  Vec2 lf_theta{0.0, 0.0};
  ThetaMode theta_mode = ThetaMode::local;
  double cfl_safety = 0.9;
  double tol = 1e-8;
  std::int64_t max_iter = 2'000'000;
  SolveMethod method = SolveMethod::newton;
};

void validate(const SolverParams& params);

struct MatrixEntry {
  std::uint32_t row;
  std::uint32_t col;
  double value;
};

/// A monotone discrete operator G on a torus grid: the unknown u enters
/// either as delta*u + G(u) = 0 or as the ergodic pair G(u) = c.
class DiscreteOperator {
 public:
  virtual ~DiscreteOperator() = default;
  virtual const TorusGrid& grid() const = 0;
  /// out = G(u); if jac is non-null, appends dG/du (duplicates are summed).
  virtual void apply(const std::vector<double>& u, std::vector<double>& out,
                     std::vector<MatrixEntry>* jac) const = 0;
  /// Upper bound on dG_i/du_i, which sets the explicit step.
  virtual double explicit_rate() const = 0;
};

struct FixedPointResult {
  std::vector<double> u;
  double value = 0.0;  // ergodic constant c (ergodic solves only)
  double residual = 0.0;
  std::int64_t iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;  // one entry per Newton step, or sparse for explicit runs
};

/// delta u + G(u) = 0.
FixedPointResult solve_discounted(const DiscreteOperator& op, double delta, std::vector<double> u0,
                                  const SolverParams& params);

/// G(u) = c with u(node 0) = 0.
FixedPointResult solve_ergodic(const DiscreteOperator& op, std::vector<double> u0, const SolverParams& params);

/// One explicit pseudo-time step u - dt (delta u + G(u)).
std::vector<double> explicit_update(const DiscreteOperator& op, double delta, double dt,
                                    const std::vector<double>& u);
double explicit_dt(const DiscreteOperator& op, double delta, double cfl_safety);

/// Weights w_o with tr(A D^2 u)(k) ~ sum_o w_o (u[k+o] - u[k]); monotone
/// (all w_o >= 0) whenever A is diagonally dominant.
struct StencilTerm {
  int di;
  int dj;
  double w;
};
std::vector<StencilTerm> diffusion_stencil(const Sym2& A, const TorusGrid& grid);

}  // namespace perhom
