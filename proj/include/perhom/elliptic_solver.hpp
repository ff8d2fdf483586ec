#pragma once

#include <vector>

#include "perhom/hjb_solver.hpp"

namespace perhom {

/// Monotone discretization of X -> F(X + P, x) at every node: each affine
/// piece -tr(A X) + b uses the diagonally dominant 7-point stencil.
class EllipticOperator final : public DiscreteOperator {
 public:
  EllipticOperator(const TorusGrid& grid, const Sym2& P, const std::vector<EllipticNodeData>& nodes);

  const TorusGrid& grid() const override { return grid_; }
  void apply(const std::vector<double>& u, std::vector<double>& out, std::vector<MatrixEntry>* jac) const override;
  double explicit_rate() const override;

 private:
  struct Piece {
    std::vector<StencilTerm> stencil;
    double constant;  // -tr(A P) + b
  };
  struct Group {
    double weight;
    std::vector<Piece> pieces;
  };
  TorusGrid grid_;
  std::vector<std::vector<Group>> nodes_;
};

/// Unique c with mean_x G(c, x) = 0, where F(G + P, x) = c, over one period
/// sampled at quad_N nodes. The medium must be periodic with `period`.
double ergodic_constant_1d_exact(const EllipticSpec& spec, double P, int quad_N, double period = 1.0);
double ergodic_constant_1d_exact(const PeriodizedElliptic& prob, double P, int quad_N);

/// v + F(D^2 v + P, L x) = 0 on a unit-period grid.
DeltaSolution solve_resolvent(const EllipticSpec& spec, const Sym2& P, double L, const TorusGrid& grid,
                              const SolverParams& params);
DeltaSolution solve_resolvent(const PeriodizedElliptic& prob, const Sym2& P, double L, const TorusGrid& grid,
                              const SolverParams& params);

/// F_L(D^2 chi + P, x) = value with chi(0) = 0; grid period must be L.
ErgodicEstimate ergodic_constant_periodic_elliptic(const PeriodizedElliptic& prob, const Sym2& P,
                                                   const TorusGrid& grid, const SolverParams& params);
/// Cell problem of an unmodified operator whose medium is periodic with the grid period.
ErgodicEstimate ergodic_constant_cell_elliptic(const EllipticSpec& spec, const Sym2& P, const TorusGrid& grid,
                                               const SolverParams& params);

}  // namespace perhom
