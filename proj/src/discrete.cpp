#include "perhom/discrete.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace perhom {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

constexpr int kMaxNewton = 400;
constexpr int kMaxHalvings = 30;

double sup_norm(const std::vector<double>& r) {
  double m = 0.0;
  for (double v : r) {
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    m = std::max(m, std::abs(v));
  }
  return m;
}

double sup_dev(const std::vector<double>& r, double c) {
  double m = 0.0;
  for (double v : r) {
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    m = std::max(m, std::abs(v - c));
  }
  return m;
}

double mean(const std::vector<double>& r) { return std::accumulate(r.begin(), r.end(), 0.0) / double(r.size()); }

bool lu_solve(const std::vector<Eigen::Triplet<double>>& trips, int n, const Eigen::VectorXd& rhs,
              Eigen::VectorXd& x) {
  SpMat J(n, n);
  J.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(J);
  if (lu.info() != Eigen::Success) return false;
  x = lu.solve(rhs);
  return lu.info() == Eigen::Success && x.allFinite();
}

void to_triplets(const std::vector<MatrixEntry>& jac, std::vector<Eigen::Triplet<double>>& trips) {
  trips.clear();
  trips.reserve(jac.size() + 8);
  for (const MatrixEntry& e : jac) trips.emplace_back(int(e.row), int(e.col), e.value);
}

std::int64_t newton_cap(const SolverParams& p) { return std::min<std::int64_t>(p.max_iter, kMaxNewton); }

// With `bulk` set, u comes back as the O(1) part w and *bulk receives s.
FixedPointResult newton_discounted(const DiscreteOperator& op, double delta, std::vector<double> u,
                                   const SolverParams& params, double* bulk = nullptr) {
  // v = w + s: G sees only differences, so the O(1/delta) bulk lives in the
  // scalar s and w stays O(1); otherwise roundoff in v swamps the tolerance.
  const std::size_t n = u.size();
  double s = u[0];
  for (double& v : u) v -= s;
  std::vector<double> r(n), trial(n), gt(n);
  std::vector<MatrixEntry> jac;
  std::vector<Eigen::Triplet<double>> trips;

  auto residual_at = [&](const std::vector<double>& w, double shift, std::vector<double>& gv,
                         std::vector<MatrixEntry>* j) {
    op.apply(w, gv, j);
    for (std::size_t i = 0; i < n; ++i) gv[i] += delta * (w[i] + shift);
    return sup_norm(gv);
  };

  FixedPointResult out;
  double res = residual_at(u, s, r, &jac);
  out.residual_history.push_back(res);
  std::int64_t it = 0;
  const std::int64_t cap = newton_cap(params);
  while (res > params.tol && it < cap) {
    ++it;
    to_triplets(jac, trips);
    for (std::size_t i = 0; i < n; ++i) trips.emplace_back(int(i), int(i), delta);
    Eigen::VectorXd rhs(n), step;
    for (std::size_t i = 0; i < n; ++i) rhs[i] = -r[i];
    if (!lu_solve(trips, int(n), rhs, step)) break;
    const double bulk = step[0];

    // Howard step: full Newton steps are monotone for a convex M-function;
    // halving only guards against overflow.
    double t = 1.0;
    for (int k = 0; k < kMaxHalvings; ++k, t *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] + t * (step[i] - bulk);
      if (std::isfinite(residual_at(trial, s + t * bulk, gt, nullptr))) break;
    }
    u.swap(trial);
    s += t * bulk;
    jac.clear();
    res = residual_at(u, s, r, &jac);
    out.residual_history.push_back(res);
  }
  if (bulk) {
    *bulk = s;
  } else {
    for (double& v : u) v += s;
  }
  out.u = std::move(u);
  out.residual = res;
  out.iterations = it;
  out.converged = res <= params.tol;
  return out;
}

// `monotone` accepts a step only if it lowers the residual and stops when none does.
FixedPointResult bordered_newton(const DiscreteOperator& op, std::vector<double> u, const SolverParams& params,
                                 bool monotone = false) {
  const std::size_t n = u.size();
  const double shift = u[0];
  for (double& v : u) v -= shift;

  std::vector<double> g(n), trial(n), gt(n);
  std::vector<MatrixEntry> jac;
  std::vector<Eigen::Triplet<double>> trips;

  FixedPointResult out;
  op.apply(u, g, &jac);
  double c = mean(g);
  double res = sup_dev(g, c);
  out.residual_history.push_back(res);
  std::int64_t it = 0;
  const std::int64_t cap = newton_cap(params);
  while (res > params.tol && it < cap) {
    ++it;
    // Bordered system [J -1; e0^T 0] (du, dc) = -(G(u) - c, u0).
    to_triplets(jac, trips);
    for (std::size_t i = 0; i < n; ++i) trips.emplace_back(int(i), int(n), -1.0);
    trips.emplace_back(int(n), 0, 1.0);
    Eigen::VectorXd rhs(n + 1), step;
    for (std::size_t i = 0; i < n; ++i) rhs[i] = -(g[i] - c);
    rhs[n] = -u[0];
    if (!lu_solve(trips, int(n + 1), rhs, step)) break;

    double t = 1.0;
    double c_t = c;
    bool accepted = false;
    for (int k = 0; k < kMaxHalvings; ++k, t *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] + t * step[i];
      c_t = c + t * step[n];
      op.apply(trial, gt, nullptr);
      const double r_t = sup_dev(gt, c_t);
      if (monotone ? r_t < res : std::isfinite(r_t)) {
        accepted = true;
        break;
      }
    }
    if (!accepted && monotone) break;
    u.swap(trial);
    c = c_t;
    jac.clear();
    op.apply(u, g, &jac);
    res = sup_dev(g, c);
    out.residual_history.push_back(res);
  }
  out.u = std::move(u);
  out.value = c;
  out.residual = res;
  out.iterations = it;
  out.converged = res <= params.tol;
  return out;
}

// Ergodic residual of a discounted solution: G(w) is constant up to delta * osc(w).
void ergodic_from_discounted(const DiscreteOperator& op, const std::vector<double>& w, FixedPointResult& r) {
  std::vector<double> g;
  op.apply(w, g, nullptr);
  const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
  r.value = 0.5 * (*lo + *hi);
  r.residual = std::isfinite(r.value) ? 0.5 * (*hi - *lo) : std::numeric_limits<double>::infinity();
}

// Bordered Newton converges fast once the linearized chain has a single
// recurrent class near the solution. From a poor start (large blending
// zones) it can blow up, and with several wells of the potential the
// bordered Jacobian is nearly singular. The fallback walks the discounted
// problem down in delta, whose Newton iteration is globally monotone, until
// delta * osc is below tolerance, then polishes with guarded bordered steps.
FixedPointResult newton_ergodic(const DiscreteOperator& op, std::vector<double> u, const SolverParams& params) {
  FixedPointResult first = bordered_newton(op, u, params);
  if (first.converged) return first;
  std::int64_t spent = first.iterations;
  std::vector<double> history = first.residual_history;

  SolverParams inner = params;
  inner.tol = 0.25 * params.tol;
  FixedPointResult best;
  best.residual = std::numeric_limits<double>::infinity();
  std::vector<double> w(u.size(), 0.0);
  for (double delta = 1.0; delta >= 1e-14; delta *= 1e-1) {
    double s = 0.0;
    FixedPointResult d = newton_discounted(op, delta, std::move(w), inner, &s);
    spent += d.iterations;
    w = std::move(d.u);
    FixedPointResult cand;
    ergodic_from_discounted(op, w, cand);
    history.push_back(cand.residual);
    if (cand.residual < best.residual) {
      best.residual = cand.residual;
      best.value = cand.value;
      best.u = w;
    }
    if (!d.converged || best.residual <= params.tol) break;
  }
  if (best.residual > params.tol && !best.u.empty()) {
    FixedPointResult polish = bordered_newton(op, best.u, params, true);
    spent += polish.iterations;
    history.insert(history.end(), polish.residual_history.begin(), polish.residual_history.end());
    if (polish.residual < best.residual) best = std::move(polish);
  }
  if (best.u.empty()) best = std::move(first);
  best.iterations = spent;
  best.residual_history = std::move(history);
  best.converged = best.residual <= params.tol;
  return best;
}

constexpr std::int64_t kHistoryStride = 1000;

FixedPointResult explicit_discounted(const DiscreteOperator& op, double delta, std::vector<double> u,
                                     const SolverParams& params) {
  const double dt = explicit_dt(op, delta, params.cfl_safety);
  double s = u[0];
  for (double& v : u) v -= s;
  std::vector<double> r(u.size());
  FixedPointResult out;
  std::int64_t it = 0;
  double res = 0.0;
  for (;; ++it) {
    op.apply(u, r, nullptr);
    for (std::size_t i = 0; i < u.size(); ++i) r[i] += delta * (u[i] + s);
    res = sup_norm(r);
    if (it % kHistoryStride == 0) out.residual_history.push_back(res);
    if (res <= params.tol || it >= params.max_iter || !std::isfinite(res)) break;
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= dt * r[i];
    const double m = u[0];
    for (double& v : u) v -= m;
    s += m;
  }
  for (double& v : u) v += s;
  out.u = std::move(u);
  out.residual = res;
  out.iterations = it;
  out.converged = res <= params.tol;
  return out;
}

FixedPointResult explicit_ergodic(const DiscreteOperator& op, std::vector<double> u, const SolverParams& params) {
  const double dt = explicit_dt(op, 0.0, params.cfl_safety);
  std::vector<double> r(u.size());
  FixedPointResult out;
  std::int64_t it = 0;
  double res = 0.0;
  double c = 0.0;
  for (;; ++it) {
    const double u0 = u[0];
    for (double& v : u) v -= u0;
    op.apply(u, r, nullptr);
    c = mean(r);
    res = sup_dev(r, c);
    if (it % kHistoryStride == 0) out.residual_history.push_back(res);
    if (res <= params.tol || it >= params.max_iter || !std::isfinite(res)) break;
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= dt * r[i];
  }
  out.u = std::move(u);
  out.value = c;
  out.residual = res;
  out.iterations = it;
  out.converged = res <= params.tol;
  return out;
}

}  // namespace

std::string to_string(SolveMethod m) { return m == SolveMethod::newton ? "newton" : "explicit"; }

SolveMethod solve_method_from_string(const std::string& s) {
  if (s == "newton") return SolveMethod::newton;
  if (s == "explicit") return SolveMethod::explicit_iteration;
  throw InvalidArgument("unknown solver method '" + s + "'");
}

void validate(const SolverParams& p) {
  require(p.delta >= 0.0 && std::isfinite(p.delta), "delta must be finite and >= 0");
  require(p.lf_theta[0] >= 0.0 && p.lf_theta[1] >= 0.0, "Lax-Friedrichs theta must be >= 0");
  require(p.cfl_safety > 0.0 && p.cfl_safety <= 1.0, "cfl_safety must lie in (0, 1]");
  require(p.tol > 0.0, "tolerance must be positive");
  require(p.max_iter >= 1, "max_iter must be >= 1");
}

double explicit_dt(const DiscreteOperator& op, double delta, double cfl_safety) {
  return cfl_safety / (delta + op.explicit_rate());
}

std::vector<double> explicit_update(const DiscreteOperator& op, double delta, double dt,
                                    const std::vector<double>& u) {
  std::vector<double> r(u.size());
  op.apply(u, r, nullptr);
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] - dt * (delta * u[i] + r[i]);
  return out;
}

FixedPointResult solve_discounted(const DiscreteOperator& op, double delta, std::vector<double> u0,
                                  const SolverParams& params) {
  validate(params);
  require(delta > 0.0, "discounted solve needs delta > 0");
  require(u0.size() == op.grid().size(), "initial field does not match the grid");
  return params.method == SolveMethod::newton ? newton_discounted(op, delta, std::move(u0), params)
                                              : explicit_discounted(op, delta, std::move(u0), params);
}

FixedPointResult solve_ergodic(const DiscreteOperator& op, std::vector<double> u0, const SolverParams& params) {
  validate(params);
  require(u0.size() == op.grid().size(), "initial field does not match the grid");
  return params.method == SolveMethod::newton ? newton_ergodic(op, std::move(u0), params)
                                              : explicit_ergodic(op, std::move(u0), params);
}

std::vector<StencilTerm> diffusion_stencil(const Sym2& A, const TorusGrid& grid) {
  std::vector<StencilTerm> s;
  if (grid.dim == 1) {
    const double w = A.xx / (grid.h(0) * grid.h(0));
    if (w != 0.0) s = {{1, 0, w}, {-1, 0, w}};
    return s;
  }
  const double hx = grid.h(0), hy = grid.h(1);
  const double b = std::abs(A.xy);
  require(A.xx >= b && A.yy >= b, "diffusion matrix is not diagonally dominant; stencil would not be monotone");
  if (b > 0.0) {
    require(std::abs(hx - hy) <= 1e-12 * hx, "cross-derivative stencil needs equal spacing on both axes");
  }
  const double wx = (A.xx - b) / (hx * hx);
  const double wy = (A.yy - b) / (hy * hy);
  const double wd = b / (hx * hy);
  if (wx != 0.0) s.insert(s.end(), {{1, 0, wx}, {-1, 0, wx}});
  if (wy != 0.0) s.insert(s.end(), {{0, 1, wy}, {0, -1, wy}});
  if (wd != 0.0) {
    if (A.xy > 0.0) {
      s.insert(s.end(), {{1, 1, wd}, {-1, -1, wd}});
    } else {
      s.insert(s.end(), {{1, -1, wd}, {-1, 1, wd}});
    }
  }
  return s;
}

}  // namespace perhom
