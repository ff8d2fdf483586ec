#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace perhom {

/// Points and gradients live in R^d with d in {1, 2}; unused trailing
/// components are kept at zero.
using Vec2 = std::array<double, 2>;

/// Symmetric 2x2 matrix. In one dimension only `xx` is meaningful.
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  static Sym2 identity(int dim) { return dim == 1 ? Sym2{1.0, 0.0, 0.0} : Sym2{1.0, 0.0, 1.0}; }
  static Sym2 scalar(int dim, double s) {
    return dim == 1 ? Sym2{s, 0.0, 0.0} : Sym2{s, 0.0, s};
  }

  Sym2 operator+(const Sym2& o) const { return {xx + o.xx, xy + o.xy, yy + o.yy}; }
  Sym2 operator-(const Sym2& o) const { return {xx - o.xx, xy - o.xy, yy - o.yy}; }
  Sym2 operator*(double s) const { return {xx * s, xy * s, yy * s}; }

  double trace(int dim) const { return dim == 1 ? xx : xx + yy; }
  /// Frobenius norm.
  double norm(int dim) const {
    return dim == 1 ? std::abs(xx) : std::sqrt(xx * xx + 2.0 * xy * xy + yy * yy);
  }
  double min_eigenvalue(int dim) const {
    if (dim == 1) return xx;
    const double m = 0.5 * (xx + yy);
    const double r = std::hypot(0.5 * (xx - yy), xy);
    return m - r;
  }
  double max_eigenvalue(int dim) const {
    if (dim == 1) return xx;
    const double m = 0.5 * (xx + yy);
    const double r = std::hypot(0.5 * (xx - yy), xy);
    return m + r;
  }
};

/// tr(A X) for symmetric A, X.
inline double trace_product(const Sym2& a, const Sym2& x, int dim) {
  return dim == 1 ? a.xx * x.xx : a.xx * x.xx + 2.0 * a.xy * x.xy + a.yy * x.yy;
}

inline double norm(const Vec2& v, int dim) {
  return dim == 1 ? std::abs(v[0]) : std::hypot(v[0], v[1]);
}

inline double norm_inf(const Vec2& v, int dim) {
  return dim == 1 ? std::abs(v[0]) : std::max(std::abs(v[0]), std::abs(v[1]));
}

/// Thrown for violated preconditions on user-supplied specs and parameters.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an iterative solve stops without meeting its tolerance.
class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace perhom
