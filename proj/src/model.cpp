#include "perhom/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace perhom {

namespace {

double pow_norm(const Vec2& p, int dim, double gamma) { return std::pow(norm(p, dim), gamma); }

Vec2 random_vec(std::mt19937_64& rng, int dim, double box) {
  std::uniform_real_distribution<double> u(-box, box);
  Vec2 v{u(rng), 0.0};
  if (dim == 2) v[1] = u(rng);
  return v;
}

// Displacement with log-uniform length in [1e-4, 1] * scale.
Vec2 random_step(std::mt19937_64& rng, int dim, double scale) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double len = scale * std::pow(10.0, -4.0 * u(rng));
  if (dim == 1) return {u(rng) < 0.5 ? -len : len, 0.0};
  const double th = 2.0 * 3.141592653589793 * u(rng);
  return {len * std::cos(th), len * std::sin(th)};
}

Sym2 random_sym(std::mt19937_64& rng, int dim, double box) {
  std::uniform_real_distribution<double> u(-box, box);
  if (dim == 1) return {u(rng), 0.0, 0.0};
  return {u(rng), u(rng), u(rng)};
}

// B B^T with B random: positive semidefinite.
Sym2 random_psd(std::mt19937_64& rng, int dim, double box) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  if (dim == 1) {
    const double b = box * u(rng);
    return {b * b, 0.0, 0.0};
  }
  const double b00 = box * u(rng), b01 = box * u(rng), b10 = box * u(rng), b11 = box * u(rng);
  return {b00 * b00 + b01 * b01, b00 * b10 + b01 * b11, b10 * b10 + b11 * b11};
}

Vec2 add(const Vec2& a, const Vec2& b) { return {a[0] + b[0], a[1] + b[1]}; }
Vec2 mid(const Vec2& a, const Vec2& b) { return {0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])}; }
Vec2 sub(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }

bool le_with_slack(double measured, double declared) {
  return measured <= declared * (1.0 + 1e-9) + 1e-12;
}

}  // namespace

void validate(const StructuralConstants& c) {
  require(std::isfinite(c.C_struct) && c.C_struct > 0.0, "C_struct must be finite and positive");
  require(std::isfinite(c.gamma) && c.gamma > 1.0, "gamma must exceed 1");
  require(std::isfinite(c.C_corr) && c.C_corr >= 1.0, "C_corr must be finite and >= 1");
  require(c.lambda_bar > 0.0 && c.lambda_bar < c.Lambda_bar && std::isfinite(c.Lambda_bar),
          "ellipticity constants must satisfy 0 < lambda_bar < Lambda_bar");
  require(c.C_bar >= 0.0 && !std::isnan(c.C_bar), "C_bar must be nonnegative");
  require(c.rho_slope >= 0.0 && !std::isnan(c.rho_slope), "rho_slope must be nonnegative");
}

StructuralConstants default_hjb_constants(const EnvironmentSample& env, double c1, double gamma) {
  const EnvSpec& s = env.spec;
  StructuralConstants c;
  c.gamma = gamma;
  double C = std::max({1.0, c1 * gamma, 1.0 / c1, s.v_max, -s.v_min});
  const double lip_v = potential_lipschitz_bound(s);
  if (std::isfinite(lip_v)) C = std::max(C, lip_v);
  const double lip_sigma = sigma_lipschitz_bound(s);
  if (std::isfinite(lip_sigma)) C = std::max(C, lip_sigma);
  c.C_struct = C;
  // First-order bound c1 |Dv + p|^gamma <= osc V + c1 |p|^gamma.
  c.C_corr = std::max(1.0, std::pow((s.v_max - s.v_min) / c1, 1.0 / gamma));
  return c;
}

HamiltonianSpec make_hamiltonian(const EnvironmentSample& env, double c1, double gamma) {
  return make_hamiltonian(env, c1, gamma, default_hjb_constants(env, c1, gamma));
}

HamiltonianSpec make_hamiltonian(const EnvironmentSample& env, double c1, double gamma,
                                 const StructuralConstants& constants) {
  validate(env.spec);
  require(c1 > 0.0 && std::isfinite(c1), "kinetic coefficient c1 must be positive");
  require(gamma > 1.0 && gamma <= 2.0, "gamma must lie in (1, 2]");
  validate(constants);
  HamiltonianSpec h{env, c1, gamma, constants};
  h.constants.gamma = gamma;
  return h;
}

double eval_H(const HamiltonianSpec& spec, const Vec2& p, const Vec2& x) {
  return spec.c1 * pow_norm(p, spec.dimension(), spec.gamma) - eval_potential(spec.env, x);
}

Sym2 eval_A(const HamiltonianSpec& spec, const Vec2& x) { return eval_sigma(spec.env, x).gram(); }

double CoefMap::lipschitz(double v_min, double v_max) const {
  if (form == Form::affine) return std::abs(c1);
  const double dmin = std::min(c0 + c1 * v_min, c0 + c1 * v_max);
  return std::abs(c1) / (dmin * dmin);
}

double CoefMap::min_over(double v_min, double v_max) const {
  return std::min((*this)(v_min), (*this)(v_max));
}

double CoefMap::max_over(double v_min, double v_max) const {
  return std::max((*this)(v_min), (*this)(v_max));
}

namespace {

void check_coef_map(const CoefMap& m, const EnvSpec& s, const std::string& what) {
  if (m.form == CoefMap::Form::reciprocal) {
    const double d0 = m.c0 + m.c1 * s.v_min;
    const double d1 = m.c0 + m.c1 * s.v_max;
    require(d0 > 0.0 && d1 > 0.0, what + ": reciprocal map denominator must stay positive");
  }
}

struct PieceRange {
  double eig_min;
  double eig_max;
  double b_abs;
  double slope;  // Lipschitz constant of (A, b) in v, Frobenius on A
};

std::vector<PieceRange> piece_ranges(const EllipticSpec& spec) {
  const EnvSpec& s = spec.env.spec;
  const int d = spec.dimension();
  std::vector<PieceRange> out;
  if (spec.family == EllipticFamily::linear) {
    const double amin = spec.a.min_over(s.v_min, s.v_max);
    const double amax = spec.a.max_over(s.v_min, s.v_max);
    const double bmax = std::max(std::abs(spec.f(s.v_min)), std::abs(spec.f(s.v_max)));
    const double slope = spec.a.lipschitz(s.v_min, s.v_max) * std::sqrt(double(d)) +
                         spec.f.lipschitz(s.v_min, s.v_max);
    out.push_back({amin, amax, bmax, slope});
    return out;
  }
  for (const BellmanControl& c : spec.controls) {
    const double amin = c.a.min_over(s.v_min, s.v_max);
    const double amax = c.a.max_over(s.v_min, s.v_max);
    const double mmin = c.matrix.min_eigenvalue(d);
    const double mmax = c.matrix.max_eigenvalue(d);
    const double bmax = std::max(std::abs(c.f(s.v_min)), std::abs(c.f(s.v_max)));
    const double slope = c.a.lipschitz(s.v_min, s.v_max) * c.matrix.norm(d) +
                         c.f.lipschitz(s.v_min, s.v_max);
    out.push_back({std::min(amin * mmin, amax * mmin), std::max(amin * mmax, amax * mmax), bmax, slope});
  }
  return out;
}

}  // namespace

void validate(const EllipticSpec& spec) {
  validate(spec.env.spec);
  validate(spec.constants);
  const EnvSpec& s = spec.env.spec;
  const int d = spec.dimension();
  if (spec.family == EllipticFamily::linear) {
    check_coef_map(spec.a, s, "diffusion coefficient");
    check_coef_map(spec.f, s, "source term");
  } else {
    require(!spec.controls.empty(), "Bellman operator needs at least one control");
    require(spec.controls.size() <= kMaxControls, "Bellman operator supports at most 8 controls");
    for (const BellmanControl& c : spec.controls) {
      check_coef_map(c.a, s, "control coefficient");
      check_coef_map(c.f, s, "control source");
      require(c.a.min_over(s.v_min, s.v_max) > 0.0, "control coefficient must stay positive");
      if (d == 2) {
        require(std::abs(c.matrix.xy) <= std::min(c.matrix.xx, c.matrix.yy),
                "control matrix must be diagonally dominant for the monotone stencil");
      }
    }
  }
  const StructuralConstants& k = spec.constants;
  for (const PieceRange& r : piece_ranges(spec)) {
    require(r.eig_min >= k.lambda_bar * (1.0 - 1e-12) && r.eig_max <= k.Lambda_bar * (1.0 + 1e-12),
            "coefficient eigenvalues leave [lambda_bar, Lambda_bar]");
    require(r.b_abs <= k.C_bar * (1.0 + 1e-12) + 1e-15, "source term exceeds C_bar");
  }
}

StructuralConstants default_elliptic_constants(const EllipticSpec& spec) {
  StructuralConstants c;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  double bmax = 0.0;
  double slope = 0.0;
  for (const PieceRange& r : piece_ranges(spec)) {
    lo = std::min(lo, r.eig_min);
    hi = std::max(hi, r.eig_max);
    bmax = std::max(bmax, r.b_abs);
    slope = std::max(slope, r.slope);
  }
  if (hi <= lo) hi = lo * (1.0 + 1e-9) + 1e-12;
  c.lambda_bar = lo;
  c.Lambda_bar = hi;
  c.C_bar = bmax;
  const double lip_v = potential_lipschitz_bound(spec.env.spec);
  c.rho_slope = slope == 0.0 ? 0.0 : slope * lip_v;
  return c;
}

EllipticSpec make_linear_elliptic(const EnvironmentSample& env, const CoefMap& a, const CoefMap& f) {
  EllipticSpec spec;
  spec.env = env;
  spec.family = EllipticFamily::linear;
  spec.a = a;
  spec.f = f;
  spec.constants = default_elliptic_constants(spec);
  validate(spec);
  return spec;
}

EllipticSpec make_bellman_elliptic(const EnvironmentSample& env, std::vector<BellmanControl> controls) {
  EllipticSpec spec;
  spec.env = env;
  spec.family = EllipticFamily::bellman;
  spec.controls = std::move(controls);
  require(!spec.controls.empty() && spec.controls.size() <= kMaxControls,
          "Bellman operator needs between 1 and 8 controls");
  spec.constants = default_elliptic_constants(spec);
  validate(spec);
  return spec;
}

std::vector<AffinePiece> elliptic_pieces(const EllipticSpec& spec, const Vec2& x) {
  const int d = spec.dimension();
  const double v = eval_potential(spec.env, x);
  std::vector<AffinePiece> out;
  if (spec.family == EllipticFamily::linear) {
    out.push_back({Sym2::scalar(d, spec.a(v)), spec.f(v)});
    return out;
  }
  out.reserve(spec.controls.size());
  for (const BellmanControl& c : spec.controls) out.push_back({c.matrix * c.a(v), -c.f(v)});
  return out;
}

double eval_F(const EllipticSpec& spec, const Sym2& X, const Vec2& x) {
  const int d = spec.dimension();
  double best = -std::numeric_limits<double>::infinity();
  for (const AffinePiece& piece : elliptic_pieces(spec, x)) {
    best = std::max(best, -trace_product(piece.A, X, d) + piece.b);
  }
  return best;
}

bool StructureReport::all_pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const StructureEntry& e) { return e.pass; });
}

const StructureEntry& StructureReport::entry(const std::string& name) const {
  for (const StructureEntry& e : entries) {
    if (e.name == name) return e;
  }
  throw InvalidArgument("no structure entry named '" + name + "'");
}

StructureReport verify_structure(const HamiltonianSpec& spec, int samples, double box,
                                 std::uint64_t rng_seed) {
  require(samples >= 1, "verify_structure needs at least one sample");
  const int d = spec.dimension();
  const double C = spec.constants.C_struct;
  const double g = spec.gamma;
  std::mt19937_64 rng(rng_seed);

  double coercive_violation = -std::numeric_limits<double>::infinity();
  double convex_violation = -std::numeric_limits<double>::infinity();
  double hx_ratio = 0.0, hp_ratio = 0.0, sx_ratio = 0.0;
  const double step_scale = std::max(1.0, spec.env.spec.cell_size);

  for (int i = 0; i < samples; ++i) {
    const Vec2 p = random_vec(rng, d, box);
    const Vec2 q = random_vec(rng, d, box);
    const Vec2 x = random_vec(rng, d, box);
    const Vec2 y = add(x, random_step(rng, d, step_scale));
    const double hp = eval_H(spec, p, x);
    const double np = pow_norm(p, d, g);
    coercive_violation = std::max({coercive_violation, (np / C - C) - hp, hp - (C * np + C)});

    const double hq = eval_H(spec, q, x);
    const double hm = eval_H(spec, mid(p, q), x);
    convex_violation = std::max(convex_violation, hm - 0.5 * (hp + hq) - 1e-12 * (1.0 + std::abs(hm)));

    const double dxy = norm(sub(x, y), d);
    hx_ratio = std::max(hx_ratio, std::abs(hp - eval_H(spec, p, y)) / ((np + 1.0) * dxy));

    const Vec2 q_near = add(p, random_step(rng, d, 1.0));
    const double dpq = norm(sub(p, q_near), d);
    const double wpq = std::pow(norm(p, d), g - 1.0) + std::pow(norm(q_near, d), g - 1.0) + 1.0;
    hp_ratio = std::max(hp_ratio, std::abs(hp - eval_H(spec, q_near, x)) / (wpq * dpq));

    const SigmaMatrix sxm = eval_sigma(spec.env, x);
    const SigmaMatrix sym = eval_sigma(spec.env, y);
    double fro = 0.0;
    for (int k = 0; k < 4; ++k) fro += (sxm.m[k] - sym.m[k]) * (sxm.m[k] - sym.m[k]);
    sx_ratio = std::max(sx_ratio, std::sqrt(fro) / dxy);
  }

  StructureReport r;
  r.entries.push_back({"coercivity", coercive_violation, 0.0, coercive_violation <= 1e-12});
  r.entries.push_back({"convexity", convex_violation, 0.0, convex_violation <= 0.0});
  r.entries.push_back({"Hx-Hy", hx_ratio, C, le_with_slack(hx_ratio, C)});
  r.entries.push_back({"Hp-Hq", hp_ratio, C, le_with_slack(hp_ratio, C)});
  r.entries.push_back({"Sx-Sy", sx_ratio, C, le_with_slack(sx_ratio, C)});
  return r;
}

StructureReport verify_structure(const EllipticSpec& spec, int samples, double box,
                                 std::uint64_t rng_seed) {
  require(samples >= 1, "verify_structure needs at least one sample");
  const int d = spec.dimension();
  const StructuralConstants& k = spec.constants;
  std::mt19937_64 rng(rng_seed);

  double upper_ratio = 0.0;  // max of -(F(X+Y) - F(X)) / |Y|
  double lower_ratio = std::numeric_limits<double>::infinity();
  double bound = 0.0;
  double cont_ratio = 0.0;
  const double step_scale = std::max(1.0, spec.env.spec.cell_size);

  for (int i = 0; i < samples; ++i) {
    const Sym2 X = random_sym(rng, d, box);
    const Sym2 Y = random_psd(rng, d, 1.0);
    const Vec2 x = random_vec(rng, d, box);
    const double ny = Y.norm(d);
    if (ny > 1e-12) {
      const double drop = eval_F(spec, X, x) - eval_F(spec, X + Y, x);
      upper_ratio = std::max(upper_ratio, drop / ny);
      lower_ratio = std::min(lower_ratio, drop / ny);
    }
    bound = std::max(bound, std::abs(eval_F(spec, Sym2{}, x)));
    const Vec2 y = add(x, random_step(rng, d, step_scale));
    const double diff = std::abs(eval_F(spec, X, x) - eval_F(spec, X, y));
    cont_ratio = std::max(cont_ratio, diff / ((1.0 + X.norm(d)) * norm(sub(x, y), d)));
  }

  // Frobenius convention: tr(A Y) <= Lambda tr(Y) <= Lambda sqrt(d) |Y|.
  const double upper_declared = k.Lambda_bar * std::sqrt(double(d));
  StructureReport r;
  r.entries.push_back({"Felliptic-upper", upper_ratio, upper_declared, le_with_slack(upper_ratio, upper_declared)});
  r.entries.push_back({"Felliptic-lower", lower_ratio, k.lambda_bar,
                       lower_ratio >= k.lambda_bar * (1.0 - 1e-9) - 1e-12});
  r.entries.push_back({"Fbounded", bound, k.C_bar, le_with_slack(bound, k.C_bar)});
  r.entries.push_back({"Fcontinuous", cont_ratio, k.rho_slope, le_with_slack(cont_ratio, k.rho_slope)});
  return r;
}

}  // namespace perhom
