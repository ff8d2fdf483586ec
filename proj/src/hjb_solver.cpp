#include "perhom/hjb_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace perhom {

namespace {

constexpr int kMaxThetaRounds = 8;
constexpr double kThetaMargin = 1.1;
constexpr double kThetaGrowth = 1.5;
// Continuation slope as a fraction of theta; the gap keeps every LF
// off-diagonal strictly positive, so the linearized chain is irreducible.
constexpr double kSlopeFraction = 0.9;

bool user_theta(const SolverParams& params, int dim) {
  return params.lf_theta[0] > 0.0 || (dim == 2 && params.lf_theta[1] > 0.0);
}

template <class Solve>
void audit_loop(HJBOperator& op, const SolverParams& params, Solve&& solve, FixedPointResult& res,
                int& rounds, std::int64_t& violations) {
  const int dim = op.grid().dim;
  rounds = 0;
  std::int64_t total_iterations = 0;
  for (;;) {
    total_iterations += res.iterations;
    const auto bad = op.theta_violations(res.u);
    violations = std::int64_t(bad.size());
    if (bad.empty() || user_theta(params, dim) || rounds >= kMaxThetaRounds || !res.converged) break;
    std::vector<Vec2> theta = op.theta();
    if (params.theta_mode == ThetaMode::global) {
      for (Vec2& t : theta) t = {t[0] * kThetaGrowth, t[1] * kThetaGrowth};
    } else {
      for (std::size_t k : bad) theta[k] = {theta[k][0] * kThetaGrowth, theta[k][1] * kThetaGrowth};
    }
    op.set_theta(std::move(theta));
    ++rounds;
    res = solve(res.u);
  }
  res.iterations = total_iterations;
}

double theta_max(const std::vector<Vec2>& theta) {
  double m = 0.0;
  for (const Vec2& t : theta) m = std::max({m, t[0], t[1]});
  return m;
}

template <class Problem>
DeltaSolution delta_impl(const Problem& prob, double gamma, const Vec2& p, const TorusGrid& grid,
                         const SolverParams& params, const std::vector<double>* init) {
  validate(grid);
  validate(params);
  require(params.delta > 0.0, "the delta problem needs delta > 0");
  auto nodes = sample_nodes(prob, grid);
  auto theta = initial_theta(nodes, p, gamma, grid.dim, params);
  double bound = 0.0;
  for (const HJBNodeData& n : nodes) bound = std::max(bound, std::abs(n.a * std::pow(norm(p, grid.dim), gamma) - n.W));
  HJBOperator op(grid, p, gamma, std::move(nodes), std::move(theta));

  std::vector<double> u0 = init ? *init : std::vector<double>(grid.size(), 0.0);
  auto solve = [&](std::vector<double> start) { return solve_discounted(op, params.delta, std::move(start), params); };
  FixedPointResult res = solve(u0);
  DeltaSolution out;
  audit_loop(op, params, solve, res, out.theta_rounds, out.theta_violations);

  // Comparison with constant sub/supersolutions bounds the discrete solution.
  const double limit = (bound + params.tol) / params.delta * (1.0 + 1e-9);
  for (double v : res.u) {
    if (res.converged && std::abs(v) > limit) throw NonConvergence("delta solution violates its sup-norm bound");
  }
  out.field = GridField(grid);
  out.field.values = std::move(res.u);
  out.residual = res.residual;
  out.iterations = res.iterations;
  out.converged = res.converged;
  out.theta_max = theta_max(op.theta());
  return out;
}

template <class Problem>
ErgodicEstimate ergodic_impl(const Problem& prob, double gamma, const Vec2& p, const TorusGrid& grid,
                             const SolverParams& params, const std::vector<double>* init) {
  validate(grid);
  validate(params);
  auto nodes = sample_nodes(prob, grid);
  auto theta = initial_theta(nodes, p, gamma, grid.dim, params);
  HJBOperator op(grid, p, gamma, std::move(nodes), std::move(theta));
  std::vector<double> u0 = init ? *init : std::vector<double>(grid.size(), 0.0);
  auto solve = [&](std::vector<double> start) { return solve_ergodic(op, std::move(start), params); };
  FixedPointResult res = solve(u0);
  ErgodicEstimate out;
  audit_loop(op, params, solve, res, out.theta_rounds, out.theta_violations);
  out.value = res.value;
  out.residual = res.residual;
  out.iterations = res.iterations;
  out.converged = res.converged;
  out.corrector = GridField(grid);
  out.corrector.values = std::move(res.u);
  out.lipschitz_estimate = corrector_lipschitz(out.corrector);
  out.theta_max = theta_max(op.theta());
  return out;
}

}  // namespace

double lf_numerical_hamiltonian(const HamiltonianFn& H, const Vec2& pm, const Vec2& pp, const Vec2& x,
                                const Vec2& theta, int dim) {
  Vec2 mid{0.5 * (pm[0] + pp[0]), 0.5 * (pm[1] + pp[1])};
  if (dim == 1) mid[1] = 0.0;
  double v = H(mid, x);
  for (int a = 0; a < dim; ++a) v -= theta[a] * (pp[a] - pm[a]) * 0.5;
  return v;
}

HJBOperator::HJBOperator(const TorusGrid& grid, const Vec2& p, double gamma, std::vector<HJBNodeData> nodes,
                         std::vector<Vec2> theta)
    : grid_(grid), p_(p), gamma_(gamma), nodes_(std::move(nodes)), theta_(std::move(theta)) {
  require(nodes_.size() == grid_.size() && theta_.size() == grid_.size(), "node data does not match the grid");
  stencils_.reserve(nodes_.size());
  for (const HJBNodeData& n : nodes_) stencils_.push_back(diffusion_stencil(n.A, grid_));
  update_radius();
}

void HJBOperator::set_theta(std::vector<Vec2> theta) {
  require(theta.size() == grid_.size(), "theta field does not match the grid");
  theta_ = std::move(theta);
  update_radius();
}

void HJBOperator::update_radius() {
  radius_.resize(nodes_.size());
  slope_.resize(nodes_.size());
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    double t = theta_[k][0];
    if (grid_.dim == 2) t = std::min(t, theta_[k][1]);
    const double a = nodes_[k].a;
    t *= kSlopeFraction;
    slope_[k] = t;
    radius_[k] = a > 0.0 ? std::pow(t / (gamma_ * a), 1.0 / (gamma_ - 1.0)) : std::numeric_limits<double>::infinity();
  }
}

void HJBOperator::apply(const std::vector<double>& u, std::vector<double>& out,
                        std::vector<MatrixEntry>* jac) const {
  const int dim = grid_.dim;
  out.resize(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    const HJBNodeData& n = nodes_[k];
    std::size_t up[2] = {0, 0}, dn[2] = {0, 0};
    Vec2 q{0.0, 0.0};
    double diss = 0.0;
    for (int a = 0; a < dim; ++a) {
      const double h = grid_.h(a);
      up[a] = a == 0 ? grid_.shift(k, 1, 0) : grid_.shift(k, 0, 1);
      dn[a] = a == 0 ? grid_.shift(k, -1, 0) : grid_.shift(k, 0, -1);
      q[a] = p_[a] + (u[up[a]] - u[dn[a]]) / (2.0 * h);
      diss += theta_[k][a] * (u[up[a]] - 2.0 * u[k] + u[dn[a]]) / (2.0 * h);
    }
    // Beyond radius_[k] the power law is continued linearly with slope
    // below min theta, so the scheme is monotone for every u; at a solution
    // passing the theta audit the continuation is never reached.
    const double nq = norm(q, dim);
    const double R = radius_[k];
    double diff = 0.0;
    for (const StencilTerm& s : stencils_[k]) diff += s.w * (u[grid_.shift(k, s.di, s.dj)] - u[k]);
    const double Hq = nq <= R ? n.a * std::pow(nq, gamma_) : n.a * std::pow(R, gamma_) + slope_[k] * (nq - R);
    out[k] = Hq - n.W - diss - diff;

    if (!jac) continue;
    double scale = 0.0;
    if (nq > R) {
      scale = slope_[k] / nq;
    } else if (nq > 0.0) {
      scale = gamma_ * n.a * std::pow(nq, gamma_ - 2.0);
    }
    double diag = 0.0;
    for (int a = 0; a < dim; ++a) {
      const double h = grid_.h(a);
      const double dH = scale * q[a];
      jac->push_back({std::uint32_t(k), std::uint32_t(up[a]), (dH - theta_[k][a]) / (2.0 * h)});
      jac->push_back({std::uint32_t(k), std::uint32_t(dn[a]), (-dH - theta_[k][a]) / (2.0 * h)});
      diag += theta_[k][a] / h;
    }
    for (const StencilTerm& s : stencils_[k]) {
      jac->push_back({std::uint32_t(k), std::uint32_t(grid_.shift(k, s.di, s.dj)), -s.w});
      diag += s.w;
    }
    jac->push_back({std::uint32_t(k), std::uint32_t(k), diag});
  }
}

double HJBOperator::explicit_rate() const {
  double rate = 0.0;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    double r = 0.0;
    for (int a = 0; a < grid_.dim; ++a) r += theta_[k][a] / grid_.h(a);
    for (const StencilTerm& s : stencils_[k]) r += s.w;
    rate = std::max(rate, r);
  }
  return rate;
}

std::vector<std::size_t> HJBOperator::theta_violations(const std::vector<double>& u, double slack) const {
  const int dim = grid_.dim;
  std::vector<std::size_t> bad;
  for (std::size_t k = 0; k < u.size(); ++k) {
    Vec2 qmax{0.0, 0.0};
    for (int a = 0; a < dim; ++a) {
      const double h = grid_.h(a);
      const std::size_t up = a == 0 ? grid_.shift(k, 1, 0) : grid_.shift(k, 0, 1);
      const std::size_t dn = a == 0 ? grid_.shift(k, -1, 0) : grid_.shift(k, 0, -1);
      const double pm = p_[a] + (u[k] - u[dn]) / h;
      const double pp = p_[a] + (u[up] - u[k]) / h;
      qmax[a] = std::max(std::abs(pm), std::abs(pp));
    }
    const double need = gamma_ * nodes_[k].a * std::pow(norm(qmax, dim), gamma_ - 1.0);
    for (int a = 0; a < dim; ++a) {
      if (need > kSlopeFraction * theta_[k][a] * slack) {
        bad.push_back(k);
        break;
      }
    }
  }
  return bad;
}

double HJBOperator::declared_theta(double c1, double gamma, double C_corr, double p_norm) {
  return kThetaMargin * c1 * gamma * std::pow(C_corr * (p_norm + 1.0) + p_norm, gamma - 1.0);
}

std::vector<HJBNodeData> sample_nodes(const HamiltonianSpec& spec, const TorusGrid& grid) {
  require(spec.dimension() == grid.dim, "grid dimension does not match the Hamiltonian");
  std::vector<HJBNodeData> nodes(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) nodes[k] = hjb_node_data(spec, grid.coord(k));
  return nodes;
}

std::vector<HJBNodeData> sample_nodes(const PeriodizedHJB& prob, const TorusGrid& grid) {
  require(prob.dimension() == grid.dim, "grid dimension does not match the Hamiltonian");
  for (int a = 0; a < grid.dim; ++a) {
    require(std::abs(grid.period[a] - prob.L) <= 1e-12 * prob.L, "grid period must equal L");
  }
  std::vector<HJBNodeData> nodes(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) nodes[k] = hjb_node_data(prob, grid.coord(k));
  return nodes;
}

std::vector<Vec2> initial_theta(const std::vector<HJBNodeData>& nodes, const Vec2& p, double gamma, int dim,
                                const SolverParams& params) {
  if (user_theta(params, dim)) {
    Vec2 t = params.lf_theta;
    if (dim == 2) {
      if (t[0] == 0.0) t[0] = t[1];
      if (t[1] == 0.0) t[1] = t[0];
    }
    return std::vector<Vec2>(nodes.size(), t);
  }
  // At a solution a|q|^gamma ~ W + c with c below the largest H(p, x).
  const double pg = std::pow(norm(p, dim), gamma);
  double c_up = -std::numeric_limits<double>::infinity();
  for (const HJBNodeData& n : nodes) c_up = std::max(c_up, n.a * pg - n.W);
  std::vector<double> est(nodes.size());
  double top = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const HJBNodeData& n = nodes[k];
    est[k] = kThetaMargin * gamma * std::pow(n.a, 1.0 / gamma) *
             std::pow(std::max(n.W + c_up, 0.0), (gamma - 1.0) / gamma);
    top = std::max(top, est[k]);
  }
  const double floor = 0.02 * top + 1e-2;
  std::vector<Vec2> theta(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double t = params.theta_mode == ThetaMode::global ? top + floor : std::max(est[k], floor);
    theta[k] = {t, t};
  }
  return theta;
}

DeltaSolution solve_delta_problem(const HamiltonianSpec& spec, const Vec2& p, const TorusGrid& grid,
                                  const SolverParams& params) {
  return delta_impl(spec, spec.gamma, p, grid, params, nullptr);
}

DeltaSolution solve_delta_problem(const PeriodizedHJB& prob, const Vec2& p, const TorusGrid& grid,
                                  const SolverParams& params) {
  return delta_impl(prob, prob.base.gamma, p, grid, params, nullptr);
}

ErgodicEstimate ergodic_constant_periodic(const PeriodizedHJB& prob, const Vec2& p, const TorusGrid& grid,
                                          const SolverParams& params, const std::vector<double>* init) {
  return ergodic_impl(prob, prob.base.gamma, p, grid, params, init);
}

ErgodicEstimate ergodic_constant_cell(const HamiltonianSpec& spec, const Vec2& p, const TorusGrid& grid,
                                      const SolverParams& params, const std::vector<double>* init) {
  return ergodic_impl(spec, spec.gamma, p, grid, params, init);
}

ErgodicEstimate estimate_Hbar_reference(const HamiltonianSpec& spec, const Vec2& p,
                                        const std::vector<double>& delta_seq, double box, int n_per_axis,
                                        const SolverParams& params) {
  require(delta_seq.size() >= 2, "delta extrapolation needs at least two deltas");
  for (std::size_t i = 0; i < delta_seq.size(); ++i) {
    require(delta_seq[i] > 0.0, "deltas must be positive");
    if (i > 0) require(delta_seq[i] < delta_seq[i - 1], "delta sequence must be decreasing");
  }
  const TorusGrid grid = TorusGrid::make(spec.dimension(), n_per_axis, box);
  ErgodicEstimate out;
  std::vector<double> prev;
  double prev_delta = 0.0;
  bool all_converged = true;
  DeltaSolution last;
  for (double delta : delta_seq) {
    SolverParams sp = params;
    sp.delta = delta;
    std::vector<double> init;
    if (!prev.empty()) {
      init = prev;
      for (double& v : init) v *= prev_delta / delta;
    }
    last = delta_impl(spec, spec.gamma, p, grid, sp, prev.empty() ? nullptr : &init);
    all_converged = all_converged && last.converged;
    out.iterations += last.iterations;
    out.theta_rounds += last.theta_rounds;
    out.theta_violations = last.theta_violations;
    out.theta_max = std::max(out.theta_max, last.theta_max);
    out.raw_values.push_back(-delta * last.field[0]);
    prev = last.field.values;
    prev_delta = delta;
  }
  const std::size_t m = delta_seq.size();
  auto extrapolate = [&](std::size_t i) {
    const double d1 = delta_seq[i - 1], d2 = delta_seq[i];
    const double a1 = out.raw_values[i - 1], a2 = out.raw_values[i];
    return (d1 * a2 - d2 * a1) / (d1 - d2);
  };
  out.value = extrapolate(m - 1);
  out.residual = m >= 3 ? std::abs(out.value - extrapolate(m - 2))
                        : std::abs(out.raw_values[1] - out.raw_values[0]);
  int sign = 0;
  for (std::size_t i = 1; i < m; ++i) {
    const double d = out.raw_values[i] - out.raw_values[i - 1];
    const int s = (d > 0.0) - (d < 0.0);
    if (s != 0 && sign != 0 && s != sign) out.monotone_input = false;
    if (s != 0) sign = s;
  }
  const double delta = delta_seq.back();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (norm_inf(grid.coord(k), grid.dim) <= 1.0 / delta) {
      out.sup_deviation = std::max(out.sup_deviation, std::abs(delta * last.field[k] + out.value));
    }
  }
  out.converged = all_converged;
  out.lipschitz_estimate = corrector_lipschitz(last.field);
  out.corrector = std::move(last.field);
  return out;
}

double max_H0_over_gradients(const GridField& v, const Vec2& p, double C_H0, double gamma) {
  const TorusGrid& g = v.grid;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.size(); ++k) {
    double dx[2][2] = {{0, 0}, {0, 0}};
    for (int a = 0; a < g.dim; ++a) {
      const std::size_t up = a == 0 ? g.shift(k, 1, 0) : g.shift(k, 0, 1);
      const std::size_t dn = a == 0 ? g.shift(k, -1, 0) : g.shift(k, 0, -1);
      dx[a][0] = (v[k] - v[dn]) / g.h(a);
      dx[a][1] = (v[up] - v[k]) / g.h(a);
    }
    for (int s0 = 0; s0 < 2; ++s0) {
      for (int s1 = 0; s1 < (g.dim == 2 ? 2 : 1); ++s1) {
        const Vec2 q{p[0] + dx[0][s0], g.dim == 2 ? p[1] + dx[1][s1] : 0.0};
        best = std::max(best, eval_H0(C_H0, gamma, q, g.dim));
      }
    }
  }
  return best;
}

}  // namespace perhom
