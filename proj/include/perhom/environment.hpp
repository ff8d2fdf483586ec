#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>

#include "perhom/types.hpp"

namespace perhom {

enum class EnvKind { constant, checkerboard, poisson_bump, periodic_cosine };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& name);

struct BumpParams {
  double amplitude = 1.0;  // potential units
  double radius = 0.5;     // length
  double intensity = 1.0;  // expected points per unit volume
  int max_points = 8;      // per lattice block; truncation keeps V bounded
};

/// Affine map v -> scale * v + offset producing the diffusion factor
/// Sigma = s(V(x)) * I_d. `lipschitz_cap` bounds the declared Lipschitz
/// constant of Sigma.
struct SigmaParams {
  double scale = 0.0;
  double offset = 0.0;
  double lipschitz_cap = std::numeric_limits<double>::infinity();
};

struct EnvSpec {
  EnvKind kind = EnvKind::constant;
  int dimension = 1;
  double v_min = 0.0;
  double v_max = 0.0;
  double cell_size = 1.0;
  double mollify_radius = 0.0;
  BumpParams bump;
  SigmaParams sigma;
};

/// Throws InvalidArgument when the spec violates its invariants.
void validate(const EnvSpec& spec);

/// One realization of the medium. Evaluation is a pure function of
/// (spec, seed, lattice_offset, x).
struct EnvironmentSample {
  EnvSpec spec;
  std::uint64_t seed = 0;
  std::array<std::int64_t, 2> lattice_offset{0, 0};

  int dimension() const { return spec.dimension; }
};

/// Row-major d x d diffusion factor.
struct SigmaMatrix {
  std::array<double, 4> m{0.0, 0.0, 0.0, 0.0};
  double operator()(int i, int j) const { return m[2 * i + j]; }
  /// Sigma Sigma^T.
  Sym2 gram() const {
    return {m[0] * m[0] + m[1] * m[1], m[0] * m[2] + m[1] * m[3], m[2] * m[2] + m[3] * m[3]};
  }
};

// splitmix64 finalizer; the cell randomness is pinned to it.
std::uint64_t splitmix64(std::uint64_t x);
/// Encoding of an integer cell index folded into the seed by XOR.
std::uint64_t cell_encoding(const std::array<std::int64_t, 2>& cell, int dim);
/// Uniform draw in [0, 1) for a lattice cell: splitmix64(seed ^ encoding) >> 11, scaled by 2^-53.
double cell_uniform(std::uint64_t seed, const std::array<std::int64_t, 2>& cell, int dim);

EnvironmentSample sample_env(const EnvSpec& spec, std::uint64_t seed);
double eval_potential(const EnvironmentSample& env, const Vec2& x);
EnvironmentSample shift_env(const EnvironmentSample& env, const std::array<std::int64_t, 2>& z);
SigmaMatrix eval_sigma(const EnvironmentSample& env, const Vec2& x);
double dependence_range(const EnvironmentSample& env);

/// Declared Lipschitz constant of V (infinite for the unmollified checkerboard).
double potential_lipschitz_bound(const EnvSpec& spec);
/// Declared Lipschitz constant of Sigma in the Frobenius norm.
double sigma_lipschitz_bound(const EnvSpec& spec);

/// The normalized C^2 mollifier profile on [-1, 1] (integral 1, peak 2/3).
double mollifier_profile(double t);

}  // namespace perhom
