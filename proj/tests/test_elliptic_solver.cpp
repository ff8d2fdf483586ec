#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "perhom/elliptic_solver.hpp"

using namespace perhom;

namespace {

EnvironmentSample constant_env(int dim, double v) {
  EnvSpec s;
  s.dimension = dim;
  s.v_min = s.v_max = v;
  return sample_env(s, 0);
}

// V(x) = (1 + cos 2 pi x) / 2.
EnvironmentSample cosine_env() {
  EnvSpec s;
  s.kind = EnvKind::periodic_cosine;
  s.v_min = 0.0;
  s.v_max = 1.0;
  return sample_env(s, 0);
}

const CoefMap kZero{CoefMap::Form::affine, 0.0, 0.0};

EllipticSpec bellman_flat() {
  BellmanControl a, b;
  a.matrix = Sym2{1.0, 0.0, 1.0};
  a.f = CoefMap{CoefMap::Form::affine, 0.3, 0.0};
  b.matrix = Sym2{1.5, 0.2, 0.7};
  b.f = CoefMap{CoefMap::Form::affine, -0.1, 0.0};
  return make_bellman_elliptic(constant_env(2, 0.5), {a, b});
}

}  // namespace

TEST_SUITE("elliptic_solver") {
  TEST_CASE("exact 1D cell constants") {
    const auto flat = make_linear_elliptic(constant_env(1, 0.0), CoefMap{}, kZero);
    CHECK(ergodic_constant_1d_exact(flat, 3.0, 64) == doctest::Approx(-3.0));

    // a = 1 / (1 + 0.5 cos 2 pi x): 1/a has unit mean.
    const auto osc = make_linear_elliptic(cosine_env(), CoefMap{CoefMap::Form::reciprocal, 0.5, 1.0}, kZero);
    const int n = 4096;
    double inv_a = 0.0;
    for (int i = 0; i < n; ++i) inv_a += 1.0 + 0.5 * std::cos(2.0 * M_PI * (i + 0.5) / n);
    inv_a /= n;
    for (double P : {-1.0, 0.5, 2.0}) {
      CHECK(ergodic_constant_1d_exact(osc, P, n) == doctest::Approx(-P / inv_a).epsilon(1e-12));
      CHECK(ergodic_constant_1d_exact(osc, P, n) == doctest::Approx(-P).epsilon(1e-12));
    }
  }

  TEST_CASE("x-independent Bellman operator") {
    const auto F = bellman_flat();
    const Sym2 P{0.4, -0.1, 0.9};
    const double FP = eval_F(F, P, {0.0, 0.0});
    const auto grid = TorusGrid::make(2, 16, 1.0);
    const auto v = solve_resolvent(F, P, 8.0, grid, SolverParams{});
    REQUIRE(v.converged);
    for (double x : v.field.values) CHECK(x == doctest::Approx(-FP).epsilon(1e-12));
    const auto prob = periodize_elliptic(F, 4.0, 0.1, frozen_F0(F, {0.0, 0.0}));
    const auto e = ergodic_constant_periodic_elliptic(prob, P, TorusGrid::make(2, 16, 4.0), SolverParams{});
    REQUIRE(e.converged);
    CHECK(e.value == doctest::Approx(FP).epsilon(1e-12));
  }

  TEST_CASE("1D Bellman with one control is its linear counterpart") {
    BellmanControl c;
    c.a = CoefMap{CoefMap::Form::affine, 1.0, 0.5};
    c.f = CoefMap{CoefMap::Form::affine, -0.2, 0.4};
    const auto bel = make_bellman_elliptic(cosine_env(), {c});
    const auto lin = make_linear_elliptic(cosine_env(), CoefMap{CoefMap::Form::affine, 1.0, 0.5},
                                          CoefMap{CoefMap::Form::affine, 0.2, -0.4});
    CHECK(ergodic_constant_1d_exact(bel, 0.7, 2048) == doctest::Approx(ergodic_constant_1d_exact(lin, 0.7, 2048)));
  }

  TEST_CASE("resolvent matches a direct linear solve") {
    const CoefMap a{CoefMap::Form::affine, 1.0, 0.5};
    const CoefMap f{CoefMap::Form::affine, -0.3, 0.8};
    const auto F = make_linear_elliptic(cosine_env(), a, f);
    const int n = 64;
    const auto grid = TorusGrid::make(1, n, 1.0);
    const double P = 0.6;
    const auto sol = solve_resolvent(F, Sym2{P, 0.0, 0.0}, 1.0, grid, SolverParams{});
    REQUIRE(sol.converged);
    // v_k - a_k ((v_{k+1} - 2 v_k + v_{k-1}) / h^2 + P) + f_k = 0.
    const double h = grid.h(0);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs(n);
    for (int k = 0; k < n; ++k) {
      const double v = eval_potential(F.env, grid.coord(std::size_t(k)));
      const double ak = a(v), fk = f(v);
      M(k, k) = 1.0 + 2.0 * ak / (h * h);
      M(k, (k + 1) % n) -= ak / (h * h);
      M(k, (k + n - 1) % n) -= ak / (h * h);
      rhs(k) = ak * P - fk;
    }
    const Eigen::VectorXd v = M.partialPivLu().solve(rhs);
    for (int k = 0; k < n; ++k) CHECK(std::abs(sol.field[std::size_t(k)] - v(k)) <= 1e-8);
  }

  TEST_CASE("periodized 1D linear constant against the blended exact formula") {
    EnvSpec s;
    s.kind = EnvKind::checkerboard;
    s.v_min = 0.0;
    s.v_max = 1.0;
    s.mollify_radius = 0.25;
    const auto F = make_linear_elliptic(sample_env(s, 17), CoefMap{CoefMap::Form::affine, 1.0, 0.5},
                                        CoefMap{CoefMap::Form::affine, 0.1, 0.3});
    const double L = 4.0;
    const auto prob = periodize_elliptic(F, L, 0.1);
    const auto e = ergodic_constant_periodic_elliptic(prob, Sym2{0.8, 0.0, 0.0}, TorusGrid::make(1, 2048, L),
                                                      SolverParams{});
    REQUIRE(e.converged);
    CHECK(std::abs(e.value - ergodic_constant_1d_exact(prob, 0.8, 1 << 16)) <= 1e-4);
    CHECK(std::isfinite(e.corrector.oscillation()));
  }
}
