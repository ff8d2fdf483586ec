#include "perhom/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace perhom {

namespace {

const double kInvPhi = (std::sqrt(5.0) - 1.0) / 2.0;

}  // namespace

MinResult golden_section_min(const ScalarFn& fn, double a, double b, double tol) {
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = fn(c), fd = fn(d);
  while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = fn(d);
    }
  }
  const double x = 0.5 * (a + b);
  MinResult best{fn(x), {x, 0.0}};
  if (fc < best.value) best = {fc, {c, 0.0}};
  if (fd < best.value) best = {fd, {d, 0.0}};
  return best;
}

MinResult brute_force_min(const FieldFn& fn, const Vec2& lo, const Vec2& hi, int N, int dim) {
  require(N >= 2, "brute_force_min needs at least 2 points per axis");
  require(dim == 1 || dim == 2, "dimension must be 1 or 2");
  Vec2 h{(hi[0] - lo[0]) / (N - 1), dim == 2 ? (hi[1] - lo[1]) / (N - 1) : 0.0};
  MinResult best{std::numeric_limits<double>::infinity(), lo};
  const int ny = dim == 2 ? N : 1;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < ny; ++j) {
      const Vec2 x{lo[0] + i * h[0], dim == 2 ? lo[1] + j * h[1] : 0.0};
      const double v = fn(x);
      if (v < best.value) best = {v, x};
    }
  }
  // Coordinate-wise golden-section passes inside the neighbouring cells.
  MinResult refined = best;
  const int passes = dim == 1 ? 1 : 4;
  for (int pass = 0; pass < passes; ++pass) {
    for (int a = 0; a < dim; ++a) {
      const double c = best.location[a];
      const double left = std::max(lo[a], c - h[a]);
      const double right = std::min(hi[a], c + h[a]);
      Vec2 x = refined.location;
      auto line = [&](double t) {
        Vec2 y = x;
        y[a] = t;
        return fn(y);
      };
      MinResult m = golden_section_min(line, left, right);
      if (m.value <= refined.value) {
        refined.value = m.value;
        refined.location[a] = m.location[0];
      }
    }
  }
  return refined;
}

WeakKam1D WeakKam1D::build(const ScalarFn& V, double c1, double gamma, int quad_N) {
  require(quad_N >= 256, "weak-KAM oracle needs quad_N >= 256");
  require(c1 > 0.0 && gamma > 1.0, "oracle needs c1 > 0 and gamma > 1");
  WeakKam1D w;
  w.c1 = c1;
  w.gamma = gamma;
  w.samples.resize(quad_N);
  std::size_t arg = 0;
  for (int i = 0; i < quad_N; ++i) {
    w.samples[i] = V(double(i) / quad_N);
    if (w.samples[i] < w.samples[arg]) arg = std::size_t(i);
  }
  const double h = 1.0 / quad_N;
  const double x0 = double(arg) * h;
  const MinResult m = golden_section_min(V, x0 - h, x0 + h);
  w.v_min = std::min(w.samples[arg], m.value);
  return w;
}

double WeakKam1D::g(double c) const {
  double s = 0.0;
  for (double v : samples) s += std::pow(std::max(v + c, 0.0) / c1, 1.0 / gamma);
  return s / double(samples.size());
}

double WeakKam1D::hbar(double p) const {
  const double ap = std::abs(p);
  const double lo0 = c_flat();
  if (ap <= g(lo0)) return lo0;
  double lo = lo0;
  double hi = c1 * std::pow(ap, gamma) - v_min;
  for (int it = 0; it < 400 && hi - lo > 1e-13 * (1.0 + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < ap ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double hbar_1d_first_order(const ScalarFn& V, double c1, double gamma, double p, int quad_N) {
  return WeakKam1D::build(V, c1, gamma, quad_N).hbar(p);
}

double hbar_1d_window(const EnvironmentSample& env, double c1, double gamma, double p, double box,
                      int nodes_per_length) {
  require(env.dimension() == 1, "window oracle is one-dimensional");
  const int n = std::max(256, int(std::lround(box * nodes_per_length)));
  auto V = [&](double y) { return eval_potential(env, {box * (y - std::floor(y)) - 0.5 * box, 0.0}); };
  return hbar_1d_first_order(V, c1, gamma, p, n);
}

FlatSpot hbar_flat_spot_value(const EnvironmentSample& env, double box, int grid_N) {
  const int d = env.dimension();
  const Vec2 lo{-0.5 * box, d == 2 ? -0.5 * box : 0.0};
  const Vec2 hi{0.5 * box, d == 2 ? 0.5 * box : 0.0};
  const MinResult m = brute_force_min([&](const Vec2& x) { return eval_potential(env, x); }, lo, hi, grid_N, d);
  return {-m.value, m.value, m.location};
}

double fbar_linear_1d(const ScalarFn& a, const ScalarFn& f, double P, int quad_N) {
  require(quad_N >= 2, "quadrature needs at least 2 nodes");
  double s_fa = 0.0, s_ia = 0.0;
  for (int i = 0; i < quad_N; ++i) {
    const double x = double(i) / quad_N;
    const double ai = a(x);
    require(ai > 0.0, "diffusion coefficient must be positive");
    s_fa += f(x) / ai;
    s_ia += 1.0 / ai;
  }
  return (s_fa / quad_N - P) / (s_ia / quad_N);
}

double fbar_linear_1d_window(const EnvironmentSample& env, const ScalarFn& a_of_v, const ScalarFn& f_of_v,
                             double P, double box, int nodes_per_length) {
  require(env.dimension() == 1, "window oracle is one-dimensional");
  const int n = std::max(2, int(std::lround(box * nodes_per_length)));
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = eval_potential(env, {box * double(i) / n - 0.5 * box, 0.0});
  double s_fa = 0.0, s_ia = 0.0;
  for (double vi : v) {
    const double ai = a_of_v(vi);
    s_fa += f_of_v(vi) / ai;
    s_ia += 1.0 / ai;
  }
  return (s_fa / n - P) / (s_ia / n);
}

}  // namespace perhom
