#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "perhom/harness.hpp"
#include "perhom/oracle.hpp"

namespace perhom {

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

ValidationCheck cutoff_check() {
  // Plateaus and derivative bounds on a grid finer than the transition layer.
  double worst_d1 = 0.0, worst_d2 = 0.0;
  bool values_ok = true;
  for (double eta : {0.05, 0.1, 0.2, 0.25}) {
    const CutoffProfile prof{eta};
    for (int dim : {1, 2}) {
      const int n = dim == 1 ? 8000 : 400;
      const double h = 1.0 / n;
      auto z = [&](double x, double y) { return eval_cutoff(prof, {x, y}, dim); };
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < (dim == 1 ? 1 : n); ++j) {
          const double x = -0.5 + (i + 0.5) * h, y = dim == 1 ? 0.0 : -0.5 + (j + 0.5) * h;
          const double v = z(x, y);
          const double r = dim == 1 ? std::abs(x) : std::max(std::abs(x), std::abs(y));
          if (v < 0.0 || v > 1.0) values_ok = false;
          if (r <= 0.5 - eta && v != 0.0) values_ok = false;
          if (r >= 0.5 - 0.5 * eta && v != 1.0) values_ok = false;
          const double dx = (z(x + h, y) - z(x - h, y)) / (2 * h);
          const double dxx = (z(x + h, y) - 2 * v + z(x - h, y)) / (h * h);
          double g = std::abs(dx), hess = std::abs(dxx);
          if (dim == 2) {
            const double dy = (z(x, y + h) - z(x, y - h)) / (2 * h);
            const double dyy = (z(x, y + h) - 2 * v + z(x, y - h)) / (h * h);
            const double dxy = (z(x + h, y + h) - z(x + h, y - h) - z(x - h, y + h) + z(x - h, y - h)) / (4 * h * h);
            g = std::hypot(dx, dy);
            hess = Sym2{dxx, dxy, dyy}.norm(2);
          }
          worst_d1 = std::max(worst_d1, g * eta / 4.0);
          worst_d2 = std::max(worst_d2, hess * eta * eta / 60.0);
        }
      }
    }
  }
  return {"cutoff bounds", values_ok && worst_d1 <= 1.0 && worst_d2 <= 1.0,
          std::string(values_ok ? "plateaus ok" : "plateaus BAD") +
              fmt(", max |Dz|/(4/eta) = %.3f, max |D2z|/(60/eta^2) = %.3f", worst_d1, worst_d2)};
}

ValidationCheck stationarity_check() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> ux(-20.0, 20.0);
  std::uniform_int_distribution<int> uz(-50, 50);
  std::int64_t mismatches = 0, trials = 0;
  std::vector<EnvSpec> specs;
  for (int dim : {1, 2}) {
    EnvSpec cb;
    cb.kind = EnvKind::checkerboard;
    cb.dimension = dim;
    cb.v_min = 0.0;
    cb.v_max = 3.0;
    specs.push_back(cb);
    cb.mollify_radius = 0.25;
    cb.sigma = {0.2, 0.1, std::numeric_limits<double>::infinity()};
    specs.push_back(cb);
    EnvSpec pb;
    pb.kind = EnvKind::poisson_bump;
    pb.dimension = dim;
    pb.v_min = 0.0;
    pb.v_max = 2.0;
    specs.push_back(pb);
  }
  for (const EnvSpec& s : specs) {
    const EnvironmentSample env = sample_env(s, 12345);
    for (int t = 0; t < 1000; ++t) {
      const Vec2 x{ux(rng), s.dimension == 2 ? ux(rng) : 0.0};
      const std::array<std::int64_t, 2> z{uz(rng), s.dimension == 2 ? uz(rng) : 0};
      const EnvironmentSample moved = shift_env(env, z);
      const Vec2 xz{x[0] + double(z[0]), x[1] + double(z[1])};
      ++trials;
      if (eval_potential(moved, x) != eval_potential(env, xz)) ++mismatches;
      const SigmaMatrix a = eval_sigma(moved, x), b = eval_sigma(env, xz);
      if (a.m != b.m) ++mismatches;
    }
  }
  return {"stationarity bit-equality", mismatches == 0,
          std::to_string(mismatches) + " mismatches over " + std::to_string(trials) + " shifted evaluations"};
}

ValidationCheck monotonicity_check() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit;
  std::int64_t violations = 0, trials = 0;

  EnvSpec s;
  s.kind = EnvKind::checkerboard;
  s.v_min = 0.0;
  s.v_max = 3.0;
  s.mollify_radius = 0.25;
  s.sigma = {0.3, 0.0, std::numeric_limits<double>::infinity()};
  for (int dim : {1, 2}) {
    s.dimension = dim;
    const HamiltonianSpec spec = make_hamiltonian(sample_env(s, 3), 1.0, 2.0);
    const PeriodizedHJB prob = periodize_hjb(spec, 4.0, 0.2);
    const TorusGrid grid = TorusGrid::make(dim, dim == 1 ? 64 : 24, 4.0);
    const Vec2 p{1.0, dim == 2 ? -0.5 : 0.0};
    auto nodes = sample_nodes(prob, grid);
    auto theta = initial_theta(nodes, p, 2.0, dim, SolverParams{});
    const HJBOperator op(grid, p, 2.0, std::move(nodes), std::move(theta));
    const double dt = explicit_dt(op, 0.0, 0.9);
    for (int t = 0; t < 500; ++t, ++trials) {
      std::vector<double> u(grid.size()), v(grid.size());
      const double scale = 0.05 + unit(rng);
      for (std::size_t k = 0; k < u.size(); ++k) {
        u[k] = scale * gauss(rng);
        v[k] = u[k] + (unit(rng) < 0.3 ? unit(rng) : 0.0);
      }
      const auto fu = explicit_update(op, 0.0, dt, u), fv = explicit_update(op, 0.0, dt, v);
      for (std::size_t k = 0; k < u.size(); ++k) {
        if (fv[k] < fu[k] - 1e-12 * (1.0 + std::abs(fu[k]))) {
          ++violations;
          break;
        }
      }
    }
  }
  return {"scheme monotonicity audit", violations == 0,
          std::to_string(violations) + " violations / " + std::to_string(trials) + " trials"};
}

HamiltonianSpec cosine_hamiltonian() {
  EnvSpec s;
  s.kind = EnvKind::periodic_cosine;
  s.v_min = 1.0;
  s.v_max = 3.0;
  return make_hamiltonian(sample_env(s, 0), 1.0, 2.0);
}

bool sandwich_ok(double value, double p, double C, double gamma, double tol) {
  const double pg = std::pow(std::abs(p), gamma);
  return value >= pg / C - C - tol && value <= C * pg + C + tol;
}

std::vector<ValidationCheck> periodize_checks() {
  std::vector<ValidationCheck> out;
  const HamiltonianSpec spec = cosine_hamiltonian();
  const double C_H0 = choose_H0_constant(spec.constants);
  const TorusGrid grid = TorusGrid::make(1, 512, 1.0);
  SolverParams sp;
  sp.delta = 1e-3;
  double worst = -1e300;
  bool sandwich = true;
  for (double p : {0.0, 0.5, 2.0, 5.0}) {
    const DeltaSolution sol = solve_delta_problem(spec, {p, 0.0}, grid, sp);
    const double hbar = -sp.delta * sol.field[0];
    const double h0 = max_H0_over_gradients(sol.field, {p, 0.0}, C_H0, spec.gamma);
    worst = std::max(worst, h0 - hbar);
    sandwich = sandwich && sol.converged && sandwich_ok(hbar, p, spec.constants.C_struct, spec.gamma, 1e-6);
  }
  out.push_back({"H0 domination", worst <= sp.tol, fmt("max over p of max H0(Dv+p) - Hbar = %.3g", worst)});

  // Interior identity and uniform coercivity of H_L on sampled (p, x).
  EnvSpec s;
  s.kind = EnvKind::checkerboard;
  s.v_min = 0.0;
  s.v_max = 3.0;
  s.mollify_radius = 0.25;
  const HamiltonianSpec base = make_hamiltonian(sample_env(s, 17), 1.0, 2.0);
  const PeriodizedHJB prob = periodize_hjb(base, 16.0, 0.1);
  const double Cmax = std::max(base.constants.C_struct, prob.H0_constant);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(-8.0, 8.0), up(-30.0, 30.0);
  bool identity = true, coercive = true;
  for (int t = 0; t < 20000; ++t) {
    const Vec2 x{ux(rng), 0.0}, p{up(rng), 0.0};
    const double h = eval_HL(prob, p, x);
    if (std::abs(x[0]) <= 0.5 * 16.0 * (1.0 - 2 * 0.1) && h != eval_H(base, p, x)) identity = false;
    const double pg = p[0] * p[0];
    if (h < pg / Cmax - Cmax || h > Cmax * pg + Cmax) coercive = false;
  }
  out.push_back({"interior identity", identity, "H_L == H bitwise on Q_{L(1-2eta)}"});
  out.push_back({"uniform coercivity of H_L", coercive, fmt("constant max(C, C_H0) = %.4g", Cmax)});

  // Sandwich on oracle values too.
  const WeakKam1D wk = WeakKam1D::build([&](double x) { return eval_potential(spec.env, {x, 0.0}); }, 1.0, 2.0, 4096);
  for (double p : {0.0, 0.5, 1.0, 2.0, 5.0}) {
    sandwich = sandwich && sandwich_ok(wk.hbar(p), p, spec.constants.C_struct, 2.0, 1e-9);
  }
  out.push_back({"coercivity sandwich (cell constants)", sandwich,
                 "C^-1|p|^g - C <= Hbar <= C|p|^g + C on solver and oracle values"});
  return out;
}

ValidationCheck structure_check() {
  std::vector<std::string> failed;
  EnvSpec s;
  s.kind = EnvKind::checkerboard;
  s.v_min = 0.0;
  s.v_max = 3.0;
  s.mollify_radius = 0.25;
  for (int dim : {1, 2}) {
    s.dimension = dim;
    s.sigma = {0.2, 0.1, std::numeric_limits<double>::infinity()};
    const StructureReport h = verify_structure(make_hamiltonian(sample_env(s, 11), 1.0, 1.5), 2000, 20.0);
    for (const auto& e : h.entries) {
      if (!e.pass) failed.push_back("hjb:" + e.name);
    }
    s.sigma = {};
    const EllipticSpec lin = make_linear_elliptic(sample_env(s, 11), {CoefMap::Form::reciprocal, 1.0, 0.2},
                                                  {CoefMap::Form::affine, 0.5, 1.0});
    for (const auto& e : verify_structure(lin, 2000, 20.0).entries) {
      if (!e.pass) failed.push_back("linear:" + e.name);
    }
  }
  std::string detail = failed.empty() ? "all sampled assumptions hold" : "failed:";
  for (const auto& f : failed) detail += " " + f;
  return {"structure assumptions", failed.empty(), detail};
}

std::vector<ValidationCheck> study_checks(const std::filesystem::path& dir, int threads) {
  std::vector<ValidationCheck> out;
  const Json cfg_json = {
      {"kind", "hjb"},
      {"env", {{"kind", "checkerboard"}, {"dimension", 1}, {"value_range", {0.0, 3.0}}, {"mollify_radius", 0.25}}},
      {"model", {{"c1", 1.0}, {"gamma", 2.0}}},
      {"p_list", {0.0, 1.0}},
      {"L_list", {4.0, 8.0}},
      {"seeds", {1, 2, 3}},
      {"eta", {{"mode", "fixed"}, {"value", 0.1}}},
      {"nodes_per_unit", 16},
      {"reference", {{"method", "oracle"}, {"box", 256.0}, {"nodes_per_unit", 16}}}};
  StudyConfig cfg = study_config_from_json(cfg_json);
  std::filesystem::create_directories(dir);
  const auto a = dir / "validate_serial.csv", b = dir / "validate_parallel.csv", c = dir / "validate_resume.csv";
  for (const auto& f : {a, b, c}) std::filesystem::remove(f);

  cfg.threads = 1;
  cfg.csv_path = a.string();
  const StudyResult serial = run_convergence_study(cfg);
  cfg.threads = std::max(2, threads);
  cfg.csv_path = b.string();
  run_convergence_study(cfg);
  const std::string text_a = csv_text(serial);
  std::stringstream sb;
  sb << std::ifstream(b, std::ios::binary).rdbuf();
  out.push_back({"determinism across worker counts", text_a == sb.str(),
                 std::to_string(serial.rows.size()) + " rows, serial vs " + std::to_string(cfg.threads) + " workers"});

  // Drop every other data row and rerun on the truncated file.
  std::vector<std::string> lines;
  {
    std::stringstream ss(text_a);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line + "\n");
  }
  std::string half;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == 0 || i % 2 == 1) half += lines[i];
  }
  write_text_file(c.string(), half);
  cfg.csv_path = c.string();
  const StudyResult resumed = run_convergence_study(cfg);
  out.push_back({"resumability", csv_text(resumed) == text_a, "half the rows deleted and recomputed"});

  StudyResult parsed{parse_csv(text_a), serial.config};
  const bool json_ok = result_json(parsed) == result_json(serial) &&
                       rows_from_json(result_json(serial)).size() == serial.rows.size();
  out.push_back({"CSV/JSON round trip", json_ok, "CSV -> rows -> JSON equals the direct JSON"});

  // Sandwich of the blended operator on the study constants.
  bool ok = true;
  for (const StudyRow& r : serial.rows) {
    const HamiltonianSpec spec = study_hamiltonian(cfg, r.seed);
    const double C = std::max(spec.constants.C_struct, choose_H0_constant(spec.constants));
    ok = ok && r.converged && sandwich_ok(r.constant_L, r.p[0], C, 2.0, 1e-6) &&
         sandwich_ok(r.constant_ref, r.p[0], spec.constants.C_struct, 2.0, 1e-6);
  }
  out.push_back({"coercivity sandwich (study constants)", ok, "every H_L and reference value of the study"});
  return out;
}

}  // namespace

std::vector<ValidationCheck> run_validation(const std::filesystem::path& workdir, int threads) {
  std::vector<ValidationCheck> checks;
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      checks.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("cutoff bounds", [&] { checks.push_back(cutoff_check()); });
  guarded("stationarity bit-equality", [&] { checks.push_back(stationarity_check()); });
  guarded("scheme monotonicity audit", [&] { checks.push_back(monotonicity_check()); });
  guarded("periodization invariants", [&] {
    for (auto& c : periodize_checks()) checks.push_back(std::move(c));
  });
  guarded("structure assumptions", [&] { checks.push_back(structure_check()); });
  guarded("study round trips", [&] {
    for (auto& c : study_checks(workdir, threads)) checks.push_back(std::move(c));
  });
  return checks;
}

}  // namespace perhom
