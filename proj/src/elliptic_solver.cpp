#include "perhom/elliptic_solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace perhom {

namespace {

double node_F(const EllipticNodeData& n, double X) {
  const Sym2 M{X, 0.0, 0.0};
  double v = 0.0;
  auto group = [&](const std::vector<AffinePiece>& pieces, double w) {
    if (w <= 0.0) return;
    double best = -std::numeric_limits<double>::infinity();
    for (const AffinePiece& p : pieces) best = std::max(best, -trace_product(p.A, M, 1) + p.b);
    v += w * best;
  };
  group(n.base, n.w_base);
  group(n.f0, n.w_f0);
  return v;
}

double bisect_decreasing(const std::function<double(double)>& fn, double target, double lo, double hi, double tol) {
  // fn decreasing, fn(lo) >= target >= fn(hi).
  for (int it = 0; it < 300 && hi - lo > tol * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (fn(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double exact_1d(const std::vector<EllipticNodeData>& nodes, double P, double lambda, double Lambda) {
  require(lambda > 0.0 && Lambda >= lambda, "ellipticity constants must satisfy 0 < lambda <= Lambda");
  const std::size_t n = nodes.size();
  std::vector<double> f0(n);
  for (std::size_t i = 0; i < n; ++i) f0[i] = node_F(nodes[i], P);
  const auto [mn, mx] = std::minmax_element(f0.begin(), f0.end());

  auto G = [&](double c, std::size_t i) {
    // F(P + G) = c with slopes in [lambda, Lambda]; bracket widened by 2.
    const double d = f0[i] - c;
    double lo = std::min(d / Lambda, d / lambda);
    double hi = std::max(d / Lambda, d / lambda);
    const double slack = 1e-12 * (1.0 + std::abs(d));
    const double mid = 0.5 * (lo + hi), half = std::max(hi - lo, slack);
    lo = mid - half - slack;
    hi = mid + half + slack;
    auto F = [&](double g) { return node_F(nodes[i], P + g); };
    if (F(lo) < c || F(hi) > c) throw InvalidArgument("inverse bracket failed; ellipticity bounds violated");
    return bisect_decreasing(F, c, lo, hi, 1e-15);
  };
  auto meanG = [&](double c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += G(c, i);
    return s / double(n);
  };
  const double pad = 1e-9 * (1.0 + std::abs(*mn) + std::abs(*mx));
  return bisect_decreasing(meanG, 0.0, *mn - pad, *mx + pad, 1e-15);
}

template <class Problem>
std::vector<EllipticNodeData> sample_elliptic(const Problem& prob, const TorusGrid& grid, double scale) {
  std::vector<EllipticNodeData> nodes(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Vec2 x = grid.coord(k);
    nodes[k] = elliptic_node_data(prob, {scale * x[0], scale * x[1]});
  }
  return nodes;
}

DeltaSolution resolvent_impl(const std::vector<EllipticNodeData>& nodes, const Sym2& P, const TorusGrid& grid,
                             const SolverParams& params) {
  EllipticOperator op(grid, P, nodes);
  FixedPointResult res = solve_discounted(op, 1.0, std::vector<double>(grid.size(), 0.0), params);
  DeltaSolution out;
  out.field = GridField(grid);
  out.field.values = std::move(res.u);
  out.residual = res.residual;
  out.iterations = res.iterations;
  out.converged = res.converged;
  return out;
}

ErgodicEstimate ergodic_impl(const std::vector<EllipticNodeData>& nodes, const Sym2& P, const TorusGrid& grid,
                             const SolverParams& params) {
  EllipticOperator op(grid, P, nodes);
  FixedPointResult res = solve_ergodic(op, std::vector<double>(grid.size(), 0.0), params);
  ErgodicEstimate out;
  out.value = res.value;
  out.residual = res.residual;
  out.iterations = res.iterations;
  out.converged = res.converged;
  out.corrector = GridField(grid);
  out.corrector.values = std::move(res.u);
  out.lipschitz_estimate = corrector_lipschitz(out.corrector);
  return out;
}

void check_unit_grid(const TorusGrid& grid, int dim) {
  validate(grid);
  require(grid.dim == dim, "grid dimension does not match the operator");
  for (int a = 0; a < dim; ++a) require(std::abs(grid.period[a] - 1.0) <= 1e-12, "resolvent grid must have period 1");
}

}  // namespace

EllipticOperator::EllipticOperator(const TorusGrid& grid, const Sym2& P, const std::vector<EllipticNodeData>& nodes)
    : grid_(grid) {
  require(nodes.size() == grid.size(), "node data does not match the grid");
  const int d = grid.dim;
  nodes_.resize(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    auto add = [&](const std::vector<AffinePiece>& pieces, double w) {
      if (w <= 0.0) return;
      Group g{w, {}};
      for (const AffinePiece& p : pieces) {
        g.pieces.push_back({diffusion_stencil(p.A, grid), -trace_product(p.A, P, d) + p.b});
      }
      nodes_[k].push_back(std::move(g));
    };
    add(nodes[k].base, nodes[k].w_base);
    add(nodes[k].f0, nodes[k].w_f0);
  }
}

void EllipticOperator::apply(const std::vector<double>& u, std::vector<double>& out,
                             std::vector<MatrixEntry>* jac) const {
  out.resize(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    double total = 0.0;
    for (const Group& g : nodes_[k]) {
      double best = -std::numeric_limits<double>::infinity();
      const Piece* arg = nullptr;
      for (const Piece& p : g.pieces) {
        double lap = 0.0;
        for (const StencilTerm& s : p.stencil) lap += s.w * (u[grid_.shift(k, s.di, s.dj)] - u[k]);
        const double v = -lap + p.constant;
        if (v > best) {
          best = v;
          arg = &p;
        }
      }
      total += g.weight * best;
      if (jac && arg) {
        double diag = 0.0;
        for (const StencilTerm& s : arg->stencil) {
          jac->push_back({std::uint32_t(k), std::uint32_t(grid_.shift(k, s.di, s.dj)), -g.weight * s.w});
          diag += g.weight * s.w;
        }
        jac->push_back({std::uint32_t(k), std::uint32_t(k), diag});
      }
    }
    out[k] = total;
  }
}

double EllipticOperator::explicit_rate() const {
  double rate = 0.0;
  for (const auto& groups : nodes_) {
    double r = 0.0;
    for (const Group& g : groups) {
      double m = 0.0;
      for (const Piece& p : g.pieces) {
        double s = 0.0;
        for (const StencilTerm& t : p.stencil) s += t.w;
        m = std::max(m, s);
      }
      r += g.weight * m;
    }
    rate = std::max(rate, r);
  }
  return rate;
}

double ergodic_constant_1d_exact(const EllipticSpec& spec, double P, int quad_N, double period) {
  require(spec.dimension() == 1, "the inverse-integral constant is one-dimensional");
  require(quad_N >= 2 && period > 0.0, "need quad_N >= 2 and a positive period");
  std::vector<EllipticNodeData> nodes(quad_N);
  for (int i = 0; i < quad_N; ++i) nodes[i] = elliptic_node_data(spec, {period * i / quad_N, 0.0});
  return exact_1d(nodes, P, spec.constants.lambda_bar, spec.constants.Lambda_bar);
}

double ergodic_constant_1d_exact(const PeriodizedElliptic& prob, double P, int quad_N) {
  require(prob.dimension() == 1, "the inverse-integral constant is one-dimensional");
  require(quad_N >= 2, "need quad_N >= 2");
  std::vector<EllipticNodeData> nodes(quad_N);
  for (int i = 0; i < quad_N; ++i) nodes[i] = elliptic_node_data(prob, {prob.L * i / quad_N - 0.5 * prob.L, 0.0});
  return exact_1d(nodes, P, prob.base.constants.lambda_bar, prob.base.constants.Lambda_bar);
}

DeltaSolution solve_resolvent(const EllipticSpec& spec, const Sym2& P, double L, const TorusGrid& grid,
                              const SolverParams& params) {
  check_unit_grid(grid, spec.dimension());
  require(L > 0.0, "L must be positive");
  return resolvent_impl(sample_elliptic(spec, grid, L), P, grid, params);
}

DeltaSolution solve_resolvent(const PeriodizedElliptic& prob, const Sym2& P, double L, const TorusGrid& grid,
                              const SolverParams& params) {
  check_unit_grid(grid, prob.dimension());
  require(std::abs(L - prob.L) <= 1e-12 * L, "resolvent scale must equal the periodization L");
  return resolvent_impl(sample_elliptic(prob, grid, L), P, grid, params);
}

ErgodicEstimate ergodic_constant_periodic_elliptic(const PeriodizedElliptic& prob, const Sym2& P,
                                                   const TorusGrid& grid, const SolverParams& params) {
  validate(grid);
  validate(params);
  require(grid.dim == prob.dimension(), "grid dimension does not match the operator");
  for (int a = 0; a < grid.dim; ++a) {
    require(std::abs(grid.period[a] - prob.L) <= 1e-12 * prob.L, "grid period must equal L");
  }
  return ergodic_impl(sample_elliptic(prob, grid, 1.0), P, grid, params);
}

ErgodicEstimate ergodic_constant_cell_elliptic(const EllipticSpec& spec, const Sym2& P, const TorusGrid& grid,
                                               const SolverParams& params) {
  validate(grid);
  validate(params);
  require(grid.dim == spec.dimension(), "grid dimension does not match the operator");
  return ergodic_impl(sample_elliptic(spec, grid, 1.0), P, grid, params);
}

}  // namespace perhom
