// perhom: periodization studies for random homogenization.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "perhom/harness.hpp"

using namespace perhom;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNonConvergence = 2;
constexpr int kIo = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  std::optional<double> tol;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "JSON config file");
  if (config_required) opt->required();
  sub->add_option("--seed", c.seed, "environment seed");
  sub->add_option("--out", c.out, "output path");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--tol", c.tol, "solver tolerance")->check(CLI::PositiveNumber);
}

StudyConfig single_shot(const Common& c, const std::string& kind, bool need_L) {
  return single_shot_config(read_json_file(c.config), kind, need_L, c.seed, c.tol);
}

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

int cmd_gen_env(const Common& c, double box, int n) {
  const Json j = read_json_file(c.config);
  const Json env_json = j.contains("env") ? j.at("env") : j;
  const EnvSpec spec = env_from_json(env_json);
  const std::uint64_t seed = c.seed ? *c.seed : seed_from_json(env_json, j.value("seed", std::uint64_t(0)));
  const EnvironmentSample env = sample_env(spec, seed);
  const TorusGrid grid = TorusGrid::make(spec.dimension, n, box);
  GridField field(grid);
  for (std::size_t k = 0; k < grid.size(); ++k) field[k] = eval_potential(env, grid.coord(k));
  if (!c.out.empty()) write_phf1(field, c.out);
  print({{"env", env_to_json(spec, seed)},
         {"box", box},
         {"nodes_per_axis", n},
         {"min", field.min()},
         {"max", field.max()},
         {"out", c.out}});
  return kOk;
}

int cmd_reference(const Common& c, const std::string& kind) {
  const StudyConfig cfg = single_shot(c, kind, false);
  const double v = compute_reference(cfg, cfg.seeds[0], cfg.p_list[0]);
  print({{"value", v}, {"p", cfg.p_list[0]}, {"seed", cfg.seeds[0]}});
  return kOk;
}

int cmd_periodized(const Common& c, const std::string& kind) {
  const StudyConfig cfg = single_shot(c, kind, true);
  const double L = cfg.L_list[0];
  const ErgodicEstimate e = compute_constant_L(cfg, cfg.seeds[0], L, cfg.p_list[0]);
  if (!c.out.empty()) write_phf1(e.corrector, c.out);
  print({{"value", e.value},
         {"p", cfg.p_list[0]},
         {"L", L},
         {"eta", study_eta(cfg, L)},
         {"seed", cfg.seeds[0]},
         {"residual", e.residual},
         {"iterations", e.iterations},
         {"lipschitz_estimate", e.lipschitz_estimate},
         {"oscillation", e.corrector.oscillation()},
         {"converged", e.converged}});
  return e.converged ? kOk : kNonConvergence;
}

Json rate_summary(const StudyResult& r) {
  Json out;
  Json med = Json::array();
  std::vector<std::pair<double, double>> pairs;
  for (const auto& [L, m] : median_abs_err_by_L(r)) {
    med.push_back({{"L", L}, {"median_abs_err", m}});
    pairs.emplace_back(L, m);
  }
  out["median_abs_err"] = med;
  try {
    const RateFit f = fit_rate(pairs);
    out["fit"] = {{"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared}, {"dropped", f.dropped}};
    if (f.dropped) std::cerr << "warning: " << f.dropped << " non-positive errors dropped from the fit\n";
  } catch (const InvalidArgument& e) {
    out["fit"] = nullptr;
    out["fit_error"] = e.what();
  }
  return out;
}

int cmd_study(const Common& c) {
  Json j = read_json_file(c.config);
  if (c.seed) j["seeds"] = Json::array({*c.seed});
  if (c.tol) j["solver"]["tol"] = *c.tol;
  StudyConfig cfg = study_config_from_json(j);
  if (!c.out.empty()) cfg.csv_path = c.out;
  cfg.threads = std::max(cfg.threads, c.threads);
  const StudyResult r = run_convergence_study(cfg);
  std::size_t flagged = 0;
  for (const StudyRow& row : r.rows) flagged += !row.converged;
  Json summary = rate_summary(r);
  summary["rows"] = r.rows.size();
  summary["flagged_rows"] = flagged;
  summary["csv"] = cfg.csv_path;
  summary["json"] = cfg.json_path;
  print(summary);
  return kOk;
}

int cmd_rate_fit(const Common& c, const std::string& csv) {
  StudyResult r;
  r.rows = read_csv(csv);
  const Json summary = rate_summary(r);
  if (!c.out.empty()) write_text_file(c.out, summary.dump(2) + "\n");
  print(summary);
  return summary.at("fit").is_null() ? kUsage : kOk;
}

int cmd_validate(const Common& c) {
  const std::filesystem::path dir =
      c.out.empty() ? std::filesystem::temp_directory_path() / "perhom-validate" : std::filesystem::path(c.out);
  const auto checks = run_validation(dir, c.threads);
  bool all = true;
  for (const auto& k : checks) {
    std::printf("%-40s %s  %s\n", k.name.c_str(), k.pass ? "PASS" : "FAIL", k.detail.c_str());
    all = all && k.pass;
  }
  std::printf("validate: %s\n", all ? "all checks passed" : "FAILED");
  return all ? kOk : kNonConvergence;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perhom: periodized approximation of effective operators in random media"};
  app.require_subcommand(1);

  Common c;
  double box = 16.0;
  int n = 256;
  std::string csv;

  auto* gen = app.add_subcommand("gen-env", "write a sampled potential snapshot (PHF1)");
  add_common(gen, c, true);
  gen->add_option("--box", box, "window side length")->check(CLI::PositiveNumber);
  gen->add_option("--nodes", n, "nodes per axis")->check(CLI::Range(8, 1 << 20));
  auto* hbar = app.add_subcommand("hbar", "reference effective Hamiltonian");
  add_common(hbar, c, true);
  auto* hbar_l = app.add_subcommand("hbar-l", "periodized effective Hamiltonian");
  add_common(hbar_l, c, true);
  auto* fbar = app.add_subcommand("fbar", "reference effective elliptic operator");
  add_common(fbar, c, true);
  auto* fbar_l = app.add_subcommand("fbar-l", "periodized effective elliptic operator");
  add_common(fbar_l, c, true);
  auto* study = app.add_subcommand("study", "full convergence sweep from a JSON config");
  add_common(study, c, true);
  auto* rate = app.add_subcommand("rate-fit", "log-log rate fit of median errors in a study CSV");
  add_common(rate, c, false);
  rate->add_option("csv", csv, "study CSV")->required();
  auto* val = app.add_subcommand("validate", "built-in structural invariant suite");
  add_common(val, c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_env(c, box, n);
    if (*hbar) return cmd_reference(c, "hjb");
    if (*hbar_l) return cmd_periodized(c, "hjb");
    if (*fbar) return cmd_reference(c, "elliptic");
    if (*fbar_l) return cmd_periodized(c, "elliptic");
    if (*study) return cmd_study(c);
    if (*rate) return cmd_rate_fit(c, csv);
    if (*val) return cmd_validate(c);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const NonConvergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
