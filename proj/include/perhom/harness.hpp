#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "perhom/elliptic_solver.hpp"
#include "perhom/io.hpp"

namespace perhom {

enum class StudyKind { hjb, elliptic };
enum class EtaMode { fixed, hjb_schedule, elliptic_schedule };
/// oracle: 1D closed-form window oracle; delta: discounted extrapolation on a
/// large torus (HJB only); cell: cell problem over ref_box, for periodic media.
enum class ReferenceMethod { oracle, delta, cell };

struct StudyConfig {
  StudyKind kind = StudyKind::hjb;
  EnvSpec env;

  // HJB model.
  double c1 = 1.0;
  double gamma = 2.0;
  std::optional<double> H0_constant;

  // Elliptic model.
  EllipticFamily family = EllipticFamily::linear;
  CoefMap a;
  CoefMap f{CoefMap::Form::affine, 0.0, 0.0};
  std::vector<BellmanControl> controls;
  std::optional<double> F0_coefficient;  // F0(X) = -c tr X

  Json constants_override;  // partial StructuralConstants, null if absent

  // Gradients (d entries) or Hessians (d*d row-major entries).
  std::vector<std::vector<double>> p_list;
  std::vector<double> L_list;
  std::vector<std::uint64_t> seeds;

  EtaMode eta_mode = EtaMode::fixed;
  double eta = 0.1;
  double a_bar = 0.5;

  int nodes_per_unit = 32;
  SolverParams solver;

  ReferenceMethod reference = ReferenceMethod::oracle;
  double ref_box = 4096.0;
  int ref_nodes_per_unit = 16;
  std::vector<double> ref_deltas{4e-3, 2e-3, 1e-3};

  std::string csv_path;
  std::string json_path;
  bool timing = false;
  int threads = 1;

  Json raw;  // the config as read, embedded in JSON output
};

/// Throws InvalidArgument on empty lists, non-increasing L, repeated seeds
/// or malformed gradients.
void validate(const StudyConfig& config);
StudyConfig study_config_from_json(const Json& j);
/// Study config for one (p, L, seed) from a single-shot document that names
/// `p` and `L` instead of lists; `kind` must match when present.
StudyConfig single_shot_config(Json j, const std::string& kind, bool need_L, std::optional<std::uint64_t> seed,
                               std::optional<double> tol);

struct StudyRow {
  std::uint64_t seed = 0;
  double L = 0.0;
  double eta_used = 0.0;
  std::vector<double> p;
  double constant_L = 0.0;
  double constant_ref = 0.0;
  double abs_err = 0.0;
  double residual = 0.0;
  std::int64_t iterations = 0;
  double lipschitz_estimate = 0.0;
  double wall_time = 0.0;
  bool converged = false;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  Json config;
};

/// Constants of the study's model for one seed.
HamiltonianSpec study_hamiltonian(const StudyConfig& config, std::uint64_t seed);
EllipticSpec study_elliptic(const StudyConfig& config, std::uint64_t seed);
double study_eta(const StudyConfig& config, double L, bool* clamped = nullptr);

/// Single periodized constant and reference constant, as the study computes them.
ErgodicEstimate compute_constant_L(const StudyConfig& config, std::uint64_t seed, double L,
                                   const std::vector<double>& p);
double compute_reference(const StudyConfig& config, std::uint64_t seed, const std::vector<double>& p);

/// Runs every (seed, L, p) row. Rows already present in config.csv_path are
/// kept and skipped. Writes csv/json outputs when the paths are set.
StudyResult run_convergence_study(const StudyConfig& config);

std::string csv_text(const StudyResult& result);
Json result_json(const StudyResult& result);
void emit_csv(const StudyResult& result, const std::filesystem::path& path);
void emit_json(const StudyResult& result, const std::filesystem::path& path);
std::vector<StudyRow> parse_csv(const std::string& text);
std::vector<StudyRow> read_csv(const std::filesystem::path& path);
std::vector<StudyRow> rows_from_json(const Json& j);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t dropped = 0;  // pairs with err <= 0 or non-finite
};

/// Least squares of log err on log L.
RateFit fit_rate(const std::vector<std::pair<double, double>>& pairs);

/// (L, median abs_err) pooled over seeds and gradients, NaN rows skipped.
std::vector<std::pair<double, double>> median_abs_err_by_L(const StudyResult& result);

struct SandwichLevel {
  double L = 0.0;
  std::size_t rows = 0;
  std::size_t upper_pass = 0;
  std::size_t lower_pass = 0;
  double upper_rate() const { return rows ? double(upper_pass) / double(rows) : 0.0; }
  double lower_rate() const { return rows ? double(lower_pass) / double(rows) : 0.0; }
};

struct SandwichReport {
  double C_report = 0.0;
  std::vector<SandwichLevel> levels;
};

/// Upper: constant_L <= constant_ref + margin. Lower: constant_ref <=
/// constant_L + C (|p|^gamma + 1) eta + margin, with C the smallest value
/// passing every finite row. Non-finite rows fail both branches.
SandwichReport check_sandwich(const StudyResult& result, const StructuralConstants& constants, double tol_margin);

struct ValidationCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Built-in fixture suite of structural invariants; scratch files go to `workdir`.
std::vector<ValidationCheck> run_validation(const std::filesystem::path& workdir, int threads);

}  // namespace perhom
