#include "perhom/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace perhom {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::uint64_t kEncodingBasis = 0x2545F4914F6CDD1DULL;

double unit_from_bits(std::uint64_t z) { return static_cast<double>(z >> 11) * 0x1.0p-53; }

double quintic_smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

// Unnormalized profile: 1 on |t| <= 1/2, quintic falloff to 0 at |t| = 1.
double plateau_profile(double t) {
  const double r = std::abs(t);
  if (r <= 0.5) return 1.0;
  if (r >= 1.0) return 0.0;
  return 1.0 - quintic_smoothstep(2.0 * r - 1.0);
}

constexpr double kProfileNorm = 2.0 / 3.0;  // 1 / integral of plateau_profile

// 5-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr std::array<double, 5> kGaussNodes{-0.9061798459386640, -0.5384693101056831, 0.0,
                                            0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGaussWeights{0.2369268850561891, 0.4786286704993665,
                                              0.5688888888888889, 0.4786286704993665,
                                              0.2369268850561891};

// Integral over y in [lo, hi] of the mollifier of radius rho centred at x.
// The interval is split at the profile's polynomial breakpoints so the
// 5-point rule is exact on every piece.
double kernel_mass(double x, double rho, double lo, double hi) {
  if (hi <= lo) return 0.0;
  const std::array<double, 4> cuts{x - rho, x - 0.5 * rho, x + 0.5 * rho, x + rho};
  double total = 0.0;
  double a = lo;
  for (std::size_t c = 0; c <= cuts.size(); ++c) {
    const double b = c < cuts.size() ? std::min(hi, cuts[c]) : hi;
    if (b > a) {
      const double mid = 0.5 * (a + b);
      const double half = 0.5 * (b - a);
      double s = 0.0;
      for (std::size_t q = 0; q < kGaussNodes.size(); ++q) {
        const double y = mid + half * kGaussNodes[q];
        s += kGaussWeights[q] * mollifier_profile((x - y) / rho);
      }
      total += half * s / rho;
      a = b;
    }
    if (a >= hi) break;
  }
  return total;
}

// Per-axis weights of the cells touched by the mollifier support.
struct AxisWeights {
  std::int64_t first = 0;
  int count = 0;
  std::array<double, 4> w{};
};

AxisWeights axis_weights(double x, double rho, double cs) {
  AxisWeights out;
  if (rho <= 0.0) {
    out.first = static_cast<std::int64_t>(std::floor(x / cs));
    out.count = 1;
    out.w[0] = 1.0;
    return out;
  }
  const auto kmin = static_cast<std::int64_t>(std::floor((x - rho) / cs));
  const auto kmax = static_cast<std::int64_t>(std::floor((x + rho) / cs));
  out.first = kmin;
  out.count = static_cast<int>(std::min<std::int64_t>(kmax - kmin + 1, 4));
  for (int i = 0; i < out.count; ++i) {
    const double lo = std::max(static_cast<double>(kmin + i) * cs, x - rho);
    const double hi = std::min(static_cast<double>(kmin + i + 1) * cs, x + rho);
    out.w[i] = kernel_mass(x, rho, lo, hi);
  }
  return out;
}

double checkerboard_fraction(const EnvironmentSample& env, const Vec2& x) {
  const EnvSpec& s = env.spec;
  const AxisWeights wx = axis_weights(x[0], s.mollify_radius, s.cell_size);
  double acc = 0.0;
  if (s.dimension == 1) {
    for (int i = 0; i < wx.count; ++i) {
      if (wx.w[i] == 0.0) continue;
      acc += wx.w[i] * cell_uniform(env.seed, {wx.first + i, 0}, 1);
    }
    return acc;
  }
  const AxisWeights wy = axis_weights(x[1], s.mollify_radius, s.cell_size);
  for (int i = 0; i < wx.count; ++i) {
    for (int j = 0; j < wy.count; ++j) {
      const double w = wx.w[i] * wy.w[j];
      if (w == 0.0) continue;
      acc += w * cell_uniform(env.seed, {wx.first + i, wy.first + j}, 2);
    }
  }
  return acc;
}

double bump_shape(double s) {
  if (s >= 1.0) return 0.0;
  const double t = 1.0 - s * s;
  return t * t * t;
}

// max |d/ds (1 - s^2)^3| = 96 / (25 sqrt 5), attained at s = 1/sqrt 5.
const double kBumpLipschitz = 96.0 / (25.0 * std::sqrt(5.0));

int poisson_count(double u, double mean, int cap) {
  // Inverse CDF, truncated at cap.
  double p = std::exp(-mean);
  double cdf = p;
  int n = 0;
  while (u >= cdf && n < cap) {
    ++n;
    p *= mean / n;
    cdf += p;
  }
  return n;
}

double bump_sum(const EnvironmentSample& env, const Vec2& x) {
  const EnvSpec& s = env.spec;
  const int d = s.dimension;
  const double cs = s.cell_size;
  const double r = s.bump.radius;
  const double mean = s.bump.intensity * std::pow(cs, d);
  std::array<std::int64_t, 2> lo{0, 0}, hi{0, 0};
  for (int a = 0; a < d; ++a) {
    lo[a] = static_cast<std::int64_t>(std::floor((x[a] - r) / cs));
    hi[a] = static_cast<std::int64_t>(std::floor((x[a] + r) / cs));
  }
  double total = 0.0;
  for (std::int64_t bi = lo[0]; bi <= hi[0]; ++bi) {
    for (std::int64_t bj = lo[1]; bj <= hi[1]; ++bj) {
      const std::array<std::int64_t, 2> block{bi, d == 2 ? bj : 0};
      const std::uint64_t h0 = splitmix64(env.seed ^ cell_encoding(block, d));
      const int n = poisson_count(unit_from_bits(h0), mean, s.bump.max_points);
      for (int k = 0; k < n; ++k) {
        double dist2 = 0.0;
        for (int a = 0; a < d; ++a) {
          const std::uint64_t stream = 1 + static_cast<std::uint64_t>(k * d + a);
          const double q = (static_cast<double>(block[a]) + unit_from_bits(splitmix64(h0 + stream))) * cs;
          dist2 += (x[a] - q) * (x[a] - q);
        }
        total += s.bump.amplitude * bump_shape(std::sqrt(dist2) / r);
      }
    }
  }
  return total;
}

}  // namespace

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::constant: return "constant";
    case EnvKind::checkerboard: return "checkerboard";
    case EnvKind::poisson_bump: return "poisson_bump";
    case EnvKind::periodic_cosine: return "periodic_cosine";
  }
  return "unknown";
}

EnvKind env_kind_from_string(const std::string& name) {
  if (name == "constant") return EnvKind::constant;
  if (name == "checkerboard") return EnvKind::checkerboard;
  if (name == "poisson_bump") return EnvKind::poisson_bump;
  if (name == "periodic_cosine") return EnvKind::periodic_cosine;
  throw InvalidArgument("unknown environment kind '" + name + "'");
}

void validate(const EnvSpec& spec) {
  require(spec.dimension == 1 || spec.dimension == 2, "environment dimension must be 1 or 2");
  require(std::isfinite(spec.v_min) && std::isfinite(spec.v_max), "value range must be finite");
  require(spec.v_min <= spec.v_max, "empty value range: v_min > v_max");
  require(spec.cell_size > 0.0 && std::isfinite(spec.cell_size), "cell_size must be positive");
  require(spec.mollify_radius >= 0.0, "mollify_radius must be nonnegative");
  require(spec.mollify_radius < 0.5 * spec.cell_size, "mollify_radius must be below cell_size/2");
  if (spec.kind == EnvKind::constant) {
    require(spec.v_min == spec.v_max, "constant environment needs a degenerate range [v0, v0]");
  }
  if (spec.kind == EnvKind::poisson_bump) {
    require(spec.bump.radius > 0.0, "bump radius must be positive");
    require(spec.bump.amplitude >= 0.0, "bump amplitude must be nonnegative");
    require(spec.bump.intensity >= 0.0, "bump intensity must be nonnegative");
    require(spec.bump.max_points >= 1, "bump max_points must be at least 1");
  }
  if (spec.sigma.scale != 0.0) {
    require(sigma_lipschitz_bound(spec) <= spec.sigma.lipschitz_cap,
            "sigma map exceeds its Lipschitz cap");
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t cell_encoding(const std::array<std::int64_t, 2>& cell, int dim) {
  std::uint64_t e = kEncodingBasis;
  for (int a = 0; a < dim; ++a) e = splitmix64(e ^ static_cast<std::uint64_t>(cell[a]));
  return e;
}

double cell_uniform(std::uint64_t seed, const std::array<std::int64_t, 2>& cell, int dim) {
  return unit_from_bits(splitmix64(seed ^ cell_encoding(cell, dim)));
}

double mollifier_profile(double t) { return kProfileNorm * plateau_profile(t); }

EnvironmentSample sample_env(const EnvSpec& spec, std::uint64_t seed) {
  validate(spec);
  return EnvironmentSample{spec, seed, {0, 0}};
}

double eval_potential(const EnvironmentSample& env, const Vec2& x_in) {
  const EnvSpec& s = env.spec;
  Vec2 x{0.0, 0.0};
  for (int a = 0; a < s.dimension; ++a) {
    x[a] = x_in[a] + static_cast<double>(env.lattice_offset[a]) * s.cell_size;
  }
  const double span = s.v_max - s.v_min;
  switch (s.kind) {
    case EnvKind::constant: return s.v_min;
    case EnvKind::checkerboard: {
      const double v = s.v_min + span * checkerboard_fraction(env, x);
      return std::clamp(v, s.v_min, s.v_max);
    }
    case EnvKind::poisson_bump: {
      return s.v_max - std::min(span, bump_sum(env, x));
    }
    case EnvKind::periodic_cosine: {
      double c = 0.0;
      for (int a = 0; a < s.dimension; ++a) c += std::cos(kTwoPi * x[a] / s.cell_size);
      c /= s.dimension;
      return std::clamp(0.5 * (s.v_min + s.v_max) + 0.5 * span * c, s.v_min, s.v_max);
    }
  }
  return s.v_min;
}

EnvironmentSample shift_env(const EnvironmentSample& env, const std::array<std::int64_t, 2>& z) {
  EnvironmentSample out = env;
  for (int a = 0; a < env.spec.dimension; ++a) out.lattice_offset[a] += z[a];
  return out;
}

SigmaMatrix eval_sigma(const EnvironmentSample& env, const Vec2& x) {
  SigmaMatrix out;
  const SigmaParams& sp = env.spec.sigma;
  if (sp.scale == 0.0 && sp.offset == 0.0) return out;
  const double s = sp.scale * eval_potential(env, x) + sp.offset;
  out.m[0] = s;
  if (env.spec.dimension == 2) out.m[3] = s;
  return out;
}

double dependence_range(const EnvironmentSample& env) {
  const EnvSpec& s = env.spec;
  switch (s.kind) {
    case EnvKind::constant: return 0.0;
    case EnvKind::checkerboard: return s.cell_size + 2.0 * s.mollify_radius;
    case EnvKind::poisson_bump: return 2.0 * s.bump.radius;
    case EnvKind::periodic_cosine: return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

double potential_lipschitz_bound(const EnvSpec& s) {
  const double span = s.v_max - s.v_min;
  switch (s.kind) {
    case EnvKind::constant: return 0.0;
    case EnvKind::checkerboard:
      if (span == 0.0) return 0.0;
      return s.mollify_radius > 0.0 ? span / s.mollify_radius
                                    : std::numeric_limits<double>::infinity();
    case EnvKind::poisson_bump: {
      const double blocks_per_axis = std::ceil(2.0 * s.bump.radius / s.cell_size) + 1.0;
      const double overlap = s.bump.max_points * std::pow(blocks_per_axis, s.dimension);
      return s.bump.amplitude * kBumpLipschitz / s.bump.radius * overlap;
    }
    case EnvKind::periodic_cosine: {
      const double per_axis = std::numbers::pi * span / s.cell_size;
      return s.dimension == 1 ? per_axis : per_axis / std::sqrt(2.0);
    }
  }
  return 0.0;
}

double sigma_lipschitz_bound(const EnvSpec& s) {
  if (s.sigma.scale == 0.0) return 0.0;
  return std::abs(s.sigma.scale) * potential_lipschitz_bound(s) * std::sqrt(double(s.dimension));
}

}  // namespace perhom
