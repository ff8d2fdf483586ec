#pragma once

#include <string>
#include <vector>

#include "perhom/environment.hpp"
#include "perhom/types.hpp"

namespace perhom {

struct StructuralConstants {
  double C_struct = 1.0;  // coercivity / regularity constant
  double gamma = 2.0;     // coercivity exponent
  double C_corr = 1.0;    // corrector gradient constant: |Dv + p| <= C_corr (|p| + 1)
  double lambda_bar = 0.5;
  double Lambda_bar = 2.0;
  double C_bar = 1.0;      // bound on |F(0, x)|
  double rho_slope = 1.0;  // modulus rho(r) = rho_slope * r
};

void validate(const StructuralConstants& c);

/// H(p, x) = c1 |p|^gamma - V(x), A(x) = Sigma(x) Sigma(x)^T.
struct HamiltonianSpec {
  EnvironmentSample env;
  double c1 = 1.0;
  double gamma = 2.0;
  StructuralConstants constants;

  int dimension() const { return env.dimension(); }
};

/// Constants that dominate the power-minus-potential family on every
/// checked assumption.
StructuralConstants default_hjb_constants(const EnvironmentSample& env, double c1, double gamma);

HamiltonianSpec make_hamiltonian(const EnvironmentSample& env, double c1, double gamma);
HamiltonianSpec make_hamiltonian(const EnvironmentSample& env, double c1, double gamma,
                                 const StructuralConstants& constants);

double eval_H(const HamiltonianSpec& spec, const Vec2& p, const Vec2& x);
Sym2 eval_A(const HamiltonianSpec& spec, const Vec2& x);

/// Scalar map of the potential value: affine `c0 + c1 v` or reciprocal
/// `1 / (c0 + c1 v)`.
struct CoefMap {
  enum class Form { affine, reciprocal };
  Form form = Form::affine;
  double c0 = 1.0;
  double c1 = 0.0;

  double operator()(double v) const { return form == Form::affine ? c0 + c1 * v : 1.0 / (c0 + c1 * v); }
  /// Lipschitz constant in v over [v_min, v_max].
  double lipschitz(double v_min, double v_max) const;
  double min_over(double v_min, double v_max) const;
  double max_over(double v_min, double v_max) const;
};

/// One control of a Bellman operator: A_alpha(x) = a(V(x)) * matrix, f_alpha = f(V(x)).
struct BellmanControl {
  Sym2 matrix = {1.0, 0.0, 1.0};
  CoefMap a;
  CoefMap f{CoefMap::Form::affine, 0.0, 0.0};
};

/// Node-level affine piece: X -> -tr(A X) + b.
struct AffinePiece {
  Sym2 A;
  double b = 0.0;
};

enum class EllipticFamily { linear, bellman };

/// linear:  F(X, x) = -a(x) tr(X) + f(x)
/// bellman: F(X, x) = max_alpha ( -tr(A_alpha(x) X) - f_alpha(x) )
struct EllipticSpec {
  EnvironmentSample env;
  EllipticFamily family = EllipticFamily::linear;
  CoefMap a;
  CoefMap f{CoefMap::Form::affine, 0.0, 0.0};
  std::vector<BellmanControl> controls;
  StructuralConstants constants;

  int dimension() const { return env.dimension(); }
};

constexpr std::size_t kMaxControls = 8;

/// Throws InvalidArgument unless every A_alpha has eigenvalues in
/// [lambda_bar, Lambda_bar], is diagonally dominant in 2D, and f is bounded by C_bar.
void validate(const EllipticSpec& spec);

/// Ellipticity bracket, C_bar and rho_slope read off the coefficient maps.
StructuralConstants default_elliptic_constants(const EllipticSpec& spec);

EllipticSpec make_linear_elliptic(const EnvironmentSample& env, const CoefMap& a, const CoefMap& f);
EllipticSpec make_bellman_elliptic(const EnvironmentSample& env, std::vector<BellmanControl> controls);

/// The affine pieces of F at x; F(X, x) is their maximum.
std::vector<AffinePiece> elliptic_pieces(const EllipticSpec& spec, const Vec2& x);
double eval_F(const EllipticSpec& spec, const Sym2& X, const Vec2& x);

struct StructureEntry {
  std::string name;
  double measured = 0.0;
  double declared = 0.0;
  bool pass = false;
};

struct StructureReport {
  std::vector<StructureEntry> entries;

  bool all_pass() const;
  const StructureEntry& entry(const std::string& name) const;
};

/// Sampling check of the standing assumptions against the declared constants.
/// Pure sampling, not a proof; failures are report entries.
StructureReport verify_structure(const HamiltonianSpec& spec, int samples, double box,
                                 std::uint64_t rng_seed = 20140101);
StructureReport verify_structure(const EllipticSpec& spec, int samples, double box,
                                 std::uint64_t rng_seed = 20140101);

}  // namespace perhom
