// Acceptance gate: one line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <thread>

#include "perhom/harness.hpp"
#include "perhom/oracle.hpp"
#include "support/blended_oracle.hpp"

using namespace perhom;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

int hardware_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

EnvironmentSample cosine_env(double lo, double hi) {
  EnvSpec s;
  s.kind = EnvKind::periodic_cosine;
  s.v_min = lo;
  s.v_max = hi;
  return sample_env(s, 0);
}

ScalarFn potential_1d(const EnvironmentSample& env) {
  return [env](double x) { return eval_potential(env, {x, 0.0}); };
}

// 1. Constant medium V = 2.
Outcome criterion1() {
  EnvSpec s;
  s.kind = EnvKind::constant;
  s.v_min = s.v_max = 2.0;
  const EnvironmentSample env = sample_env(s, 0);
  const HamiltonianSpec spec = make_hamiltonian(env, 1.0, 2.0);
  SolverParams sp;
  double worst_ref = 0.0, worst_oracle = 0.0, worst_L = 0.0, worst_blend = 0.0;
  std::string per;
  for (double p : {0.0, 1.0, 2.5}) {
    const double exact = p * p - 2.0;
    const ErgodicEstimate ref = estimate_Hbar_reference(spec, {p, 0.0}, {4e-3, 2e-3, 1e-3}, 8.0, 256, sp);
    worst_ref = std::max(worst_ref, std::abs(ref.value - exact));
    const double orc = hbar_1d_first_order(potential_1d(env), 1.0, 2.0, p, 1024);
    worst_oracle = std::max(worst_oracle, std::abs(orc - exact));
    for (double L : {4.0, 16.0}) {
      const PeriodizedHJB prob = periodize_hjb(spec, L, 0.1);
      const ErgodicEstimate e = ergodic_constant_periodic(prob, {p, 0.0}, TorusGrid::make(1, int(64 * L), L), sp);
      const double err = std::abs(e.value - exact);
      worst_L = std::max(worst_L, err);
      // What the periodized operator should give: its own 1D weak-KAM value.
      worst_blend = std::max(worst_blend, std::abs(e.value - testing::blended_hbar_1d(prob, p, 1 << 16)));
      per += fmt(" HL(p=%g,L=%g)=%.6f", p, L, e.value);
    }
  }
  const bool pass = worst_ref <= 1e-6 && worst_oracle <= 1e-6 && worst_L <= 1e-6;
  return {pass, fmt("max err ref %.2e, oracle %.2e, H_L %.2e (H_L vs blended-operator oracle %.2e);", worst_ref,
                   worst_oracle, worst_L, worst_blend) +
                    per};
}

// 2. Cosine oracle agreement for the delta-extrapolated reference.
Outcome criterion2() {
  const EnvironmentSample env = cosine_env(1.0, 3.0);
  const HamiltonianSpec spec = make_hamiltonian(env, 1.0, 2.0);
  SolverParams sp;
  double worst = 0.0, flat = 0.0;
  std::string per;
  for (double p : {0.0, 0.5, 2.0, 5.0}) {
    const ErgodicEstimate e = estimate_Hbar_reference(spec, {p, 0.0}, {4e-3, 2e-3, 1e-3}, 1.0, 2048, sp);
    const double orc = hbar_1d_first_order(potential_1d(env), 1.0, 2.0, p, 4096);
    worst = std::max(worst, std::abs(e.value - orc));
    if (p == 0.0) flat = e.value;
    per += fmt(" p=%g: %.6f vs %.6f", p, e.value, orc);
  }
  const bool pass = worst <= 2e-3 && std::abs(flat + 1.0) <= 2e-3;
  return {pass, fmt("max |ref - oracle| = %.2e, flat value %.6f;", worst, flat) + per};
}

// 3. Flat piece of the cosine fixture.
Outcome criterion3() {
  const EnvironmentSample env = cosine_env(1.0, 3.0);
  const HamiltonianSpec spec = make_hamiltonian(env, 1.0, 2.0);
  const double g_flat = WeakKam1D::build(potential_1d(env), 1.0, 2.0, 4096).g_flat();
  SolverParams sp;
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i <= 8; ++i) {
    const double p = 0.9 * g_flat * i / 8.0;
    const double v = estimate_Hbar_reference(spec, {p, 0.0}, {4e-3, 2e-3, 1e-3}, 1.0, 2048, sp).value;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {hi - lo <= 5e-3, fmt("g(c_flat) = %.6f, variation over |p| <= 0.9 g = %.2e (range [%.6f, %.6f])", g_flat,
                               hi - lo, lo, hi)};
}

StudyConfig criterion4_config(const std::filesystem::path& dir) {
  const Json j = {
      {"kind", "hjb"},
      {"env", {{"kind", "checkerboard"}, {"dimension", 1}, {"value_range", {0.0, 3.0}}, {"mollify_radius", 0.25}}},
      {"model", {{"c1", 1.0}, {"gamma", 2.0}}},
      {"p_list", {0.0, 1.0, 2.0}},
      {"L_list", {8.0, 16.0, 32.0, 64.0}},
      {"seeds", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16}},
      {"eta", {{"mode", "fixed"}, {"value", 0.1}}},
      {"nodes_per_unit", 32},
      {"reference", {{"method", "oracle"}, {"box", 4096.0}, {"nodes_per_unit", 16}}}};
  StudyConfig c = study_config_from_json(j);
  c.threads = hardware_threads();
  c.csv_path = (dir / "criterion4.csv").string();
  return c;
}

std::string per_p_medians(const StudyResult& r, double L) {
  std::map<std::string, std::vector<double>> by_p;
  for (const StudyRow& row : r.rows) {
    if (row.L == L && std::isfinite(row.abs_err)) by_p[format_vector(row.p)].push_back(row.abs_err);
  }
  std::string out;
  for (auto& [p, v] : by_p) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    out += fmt(" p=%s:%.4g", p.c_str(), v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]));
  }
  return out;
}

// 4. Periodization convergence on the random checkerboard.
Outcome criterion4(const std::filesystem::path& dir, StudyResult& keep) {
  const StudyConfig cfg = criterion4_config(dir);
  std::filesystem::remove(cfg.csv_path);
  keep = run_convergence_study(cfg);
  std::size_t flagged = 0;
  for (const StudyRow& r : keep.rows) flagged += !r.converged;
  const auto med = median_abs_err_by_L(keep);
  const double m8 = med.front().second, m64 = med.back().second;
  const StructuralConstants k = study_hamiltonian(cfg, cfg.seeds[0]).constants;
  const SandwichReport rep = check_sandwich(keep, k, 2e-3);
  const SandwichLevel& top = rep.levels.back();
  const double need = 15.0 / 16.0;
  const bool pass = flagged == 0 && m64 <= 0.5 * m8 && top.upper_rate() >= need && top.lower_rate() >= need &&
                    std::isfinite(rep.C_report);
  return {pass, fmt("%zu rows (%zu flagged); pooled median L=8 %.4g, L=64 %.4g (ratio %.3f); L=64 sandwich upper "
                    "%.3f lower %.3f, C_report %.4g; per-p medians L=8",
                    keep.rows.size(), flagged, m8, m64, m64 / m8, top.upper_rate(), top.lower_rate(), rep.C_report) +
                    per_p_medians(keep, 8.0) + ", L=64" + per_p_medians(keep, 64.0)};
}

// 5. Rate fit on planted data and on the criterion 4 study.
Outcome criterion5(const StudyResult& study) {
  const double a = 0.5, expo = -a / (4.0 * (a + 1.0));
  std::vector<std::pair<double, double>> pairs;
  for (double L : {8.0, 16.0, 32.0, 64.0, 128.0}) pairs.emplace_back(L, std::pow(L, expo));
  const auto t0 = std::chrono::steady_clock::now();
  const RateFit synth = fit_rate(pairs);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const RateFit real = fit_rate(median_abs_err_by_L(study));
  const bool pass = std::abs(synth.slope + 1.0 / 12.0) <= 1e-10 && real.slope < 0.0 && dt < 1.0;
  return {pass, fmt("synthetic slope %.15f (target %.15f, r2 %.12f); study slope %.4f (r2 %.4f)", synth.slope,
                    -1.0 / 12.0, synth.r_squared, real.slope, real.r_squared)};
}

// 6. 1D elliptic: cell constant vs oracle, then periodized convergence.
Outcome criterion6(const std::filesystem::path& dir) {
  const EnvironmentSample env = cosine_env(-1.0, 1.0);
  const CoefMap a{CoefMap::Form::reciprocal, 1.0, 0.5}, f{CoefMap::Form::affine, 0.5, 1.0};
  const EllipticSpec spec = make_linear_elliptic(env, a, f);
  SolverParams sp;
  double worst = 0.0;
  std::string per;
  for (double P : {-1.0, 0.0, 2.0}) {
    const ErgodicEstimate e = ergodic_constant_cell_elliptic(spec, {P, 0.0, 0.0}, TorusGrid::make(1, 2048, 1.0), sp);
    const auto V = potential_1d(env);
    const double orc = fbar_linear_1d([&](double x) { return a(V(x)); }, [&](double x) { return f(V(x)); }, P, 4096);
    worst = std::max(worst, std::abs(e.value - orc));
    per += fmt(" P=%g: %.8f vs %.8f", P, e.value, orc);
  }

  const Json j = {
      {"kind", "elliptic"},
      {"env", {{"kind", "checkerboard"}, {"dimension", 1}, {"value_range", {-1.0, 1.0}}, {"mollify_radius", 0.25}}},
      {"model",
       {{"family", "linear"},
        {"a", {{"form", "reciprocal"}, {"c0", 1.0}, {"c1", 0.5}}},
        {"f", {{"form", "affine"}, {"c0", 0.5}, {"c1", 1.0}}}}},
      {"p_list", {-1.0, 0.0, 2.0}},
      {"L_list", {4.0, 8.0, 16.0}},
      {"seeds", Json::array()},
      {"eta", {{"mode", "elliptic"}, {"a_bar", 3.0}}},
      {"nodes_per_unit", 32},
      {"reference", {{"method", "oracle"}, {"box", 4096.0}, {"nodes_per_unit", 16}}}};
  Json jj = j;
  for (int s = 1; s <= 32; ++s) jj["seeds"].push_back(s);
  StudyConfig cfg = study_config_from_json(jj);
  cfg.threads = hardware_threads();
  cfg.csv_path = (dir / "criterion6.csv").string();
  std::filesystem::remove(cfg.csv_path);
  const StudyResult r = run_convergence_study(cfg);
  std::size_t flagged = 0;
  for (const StudyRow& row : r.rows) flagged += !row.converged;
  const auto med = median_abs_err_by_L(r);
  bool decreasing = med.size() == 3;
  for (std::size_t i = 1; i < med.size(); ++i) decreasing = decreasing && med[i].second < med[i - 1].second;
  const bool pass = worst <= 1e-4 && decreasing && flagged == 0;
  return {pass, fmt("cell vs oracle max err %.2e;", worst) + per +
                    fmt("; periodized medians L=4 %.4g, L=8 %.4g, L=16 %.4g (%zu flagged)", med[0].second,
                        med[1].second, med[2].second, flagged)};
}

// 7. Ellipticity bracket of the effective 2D Bellman operator.
Outcome criterion7() {
  EnvSpec s;
  s.kind = EnvKind::checkerboard;
  s.dimension = 2;
  s.v_min = 1.0;
  s.v_max = 2.0;
  s.mollify_radius = 0.25;
  BellmanControl c;
  c.matrix = {1.0, 0.25, 1.0};
  c.a = {CoefMap::Form::affine, 0.0, 1.0};
  c.f = {CoefMap::Form::affine, 0.0, 0.0};
  SolverParams sp;
  const double t = 1e-2, d = 2.0;
  bool pass = true;
  std::string per;
  for (std::uint64_t seed : {1, 2, 3}) {
    const EllipticSpec spec = make_bellman_elliptic(sample_env(s, seed), {c});
    const PeriodizedElliptic prob = periodize_elliptic(spec, 8.0, 0.125);
    const TorusGrid grid = TorusGrid::make(2, 128, 8.0);
    const Sym2 P{0.3, 0.1, -0.2};
    const ErgodicEstimate e0 = ergodic_constant_periodic_elliptic(prob, P, grid, sp);
    const ErgodicEstimate e1 = ergodic_constant_periodic_elliptic(prob, P + Sym2::identity(2) * t, grid, sp);
    const double diff = e1.value - e0.value;
    const double lam = spec.constants.lambda_bar, Lam = spec.constants.Lambda_bar;
    const double lo = -Lam * t * d - 4 * sp.tol, hi = -lam * t * (1 - 0.05) + 4 * sp.tol;
    pass = pass && e0.converged && e1.converged && diff >= lo && diff <= hi;
    per += fmt(" seed %llu: diff %.6f in [%.4f, %.4f]", (unsigned long long)seed, diff, lo, hi);
  }
  return {pass, "lambda/Lambda bracket;" + per};
}

// 8. Structural invariant suite.
Outcome criterion8(const std::filesystem::path& dir) {
  const auto checks = run_validation(dir / "validate", hardware_threads());
  bool all = true;
  std::string failed;
  for (const auto& k : checks) {
    all = all && k.pass;
    if (!k.pass) failed += " [" + k.name + ": " + k.detail + "]";
  }
  return {all, fmt("%zu checks", checks.size()) + (all ? std::string(", all green") : ", failed:" + failed)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path dir =
      argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::temp_directory_path() / "perhom-acceptance";
  std::filesystem::create_directories(dir);
  StudyResult study4;
  const std::vector<std::tuple<int, double, std::function<Outcome()>>> criteria = {
      {1, 10.0, criterion1},
      {2, 120.0, criterion2},
      {3, 120.0, criterion3},
      {4, 1200.0, [&] { return criterion4(dir, study4); }},
      {5, 1.0, [&] { return criterion5(study4); }},
      {6, 600.0, [&] { return criterion6(dir); }},
      {7, 600.0, criterion7},
      {8, 300.0, [&] { return criterion8(dir); }},
  };
  int failures = 0;
  for (const auto& [id, budget, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= budget;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("criterion %d: %s (%.1f s of %.0f s) %s%s\n", id, pass ? "PASS" : "FAIL", secs, budget,
                o.detail.c_str(), in_time ? "" : " [over time budget]");
    std::fflush(stdout);
  }
  std::printf("acceptance: %d of %zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
