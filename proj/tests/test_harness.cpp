#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "perhom/harness.hpp"

using namespace perhom;

namespace {

std::vector<std::pair<double, double>> planted(double scale, double slope) {
  std::vector<std::pair<double, double>> out;
  for (double L : {8.0, 16.0, 32.0, 64.0}) out.emplace_back(L, scale * std::pow(L, slope));
  return out;
}

StudyConfig constant_study() {
  StudyConfig c;
  c.env.v_min = c.env.v_max = 2.0;
  c.p_list = {{0.0}};
  // The blend band needs enough nodes for the discrete flat value to hit -v0.
  c.L_list = {16.0, 32.0};
  c.seeds = {1, 2};
  c.nodes_per_unit = 64;
  c.ref_box = 64.0;
  return c;
}

StudyRow sample_row() {
  StudyRow r;
  r.seed = 18446744073709551615ULL;
  r.L = 16.0;
  r.eta_used = 0.1;
  r.p = {0.1, -2.5e-7};
  r.constant_L = -1.0000000000000002;
  r.constant_ref = std::nan("");
  r.abs_err = std::nan("");
  r.residual = 3.2e-11;
  r.iterations = 12;
  r.lipschitz_estimate = 1.5;
  r.converged = false;
  return r;
}

bool same_row(const StudyRow& a, const StudyRow& b) {
  auto eq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  return a.seed == b.seed && eq(a.L, b.L) && eq(a.eta_used, b.eta_used) && a.p == b.p &&
         eq(a.constant_L, b.constant_L) && eq(a.constant_ref, b.constant_ref) && eq(a.abs_err, b.abs_err) &&
         eq(a.residual, b.residual) && a.iterations == b.iterations &&
         eq(a.lipschitz_estimate, b.lipschitz_estimate) && eq(a.wall_time, b.wall_time) &&
         a.converged == b.converged;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("rate fit on planted data") {
    auto f = fit_rate(planted(1.0, -0.5));
    CHECK(f.slope == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(f.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    f = fit_rate(planted(3.0, -1.0 / 12.0));
    CHECK(f.slope == doctest::Approx(-1.0 / 12.0).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    f = fit_rate(planted(0.2, 0.0));
    CHECK(std::abs(f.slope) <= 1e-12);
  }

  TEST_CASE("rate fit drops non-positive errors") {
    auto pairs = planted(1.0, -0.5);
    pairs.emplace_back(128.0, 0.0);
    const auto f = fit_rate(pairs);
    CHECK(f.dropped == 1);
    CHECK(f.slope == doctest::Approx(-0.5));
    CHECK_THROWS_AS(fit_rate({{8.0, 1.0}, {16.0, 0.0}, {32.0, -1.0}, {64.0, 0.5}}), InvalidArgument);
  }

  TEST_CASE("CSV shapes and round trips") {
    StudyResult empty;
    const std::string header_only = csv_text(empty);
    CHECK(std::count(header_only.begin(), header_only.end(), '\n') == 1);
    CHECK(header_only.rfind("seed,", 0) == 0);
    CHECK(parse_csv(header_only).empty());

    StudyResult one;
    one.rows = {sample_row()};
    const std::string text = csv_text(one);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(text.find("\r\n") != std::string::npos);
    const auto back = parse_csv(text);
    REQUIRE(back.size() == 1);
    CHECK(same_row(back[0], one.rows[0]));

    const auto via_json = rows_from_json(result_json(StudyResult{back, Json::object()}));
    REQUIRE(via_json.size() == 1);
    CHECK(same_row(via_json[0], one.rows[0]));
    CHECK_THROWS(parse_csv("not,a,header\r\n"));
  }

  TEST_CASE("constant medium study is exact and deterministic") {
    const auto dir = std::filesystem::temp_directory_path() / "perhom-harness-test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    StudyConfig c = constant_study();
    c.csv_path = (dir / "a.csv").string();
    const auto r = run_convergence_study(c);
    REQUIRE(r.rows.size() == 4);
    for (const auto& row : r.rows) {
      CHECK(row.converged);
      CHECK(row.abs_err <= 2.0 * c.solver.tol);
      CHECK(row.eta_used == 0.1);
    }
    const auto rep = check_sandwich(r, study_hamiltonian(c, 1).constants, 1e-7);
    CHECK(rep.C_report == 0.0);
    for (const auto& lvl : rep.levels) {
      CHECK(lvl.upper_rate() == 1.0);
      CHECK(lvl.lower_rate() == 1.0);
    }
    c.csv_path = (dir / "b.csv").string();
    c.threads = 3;
    run_convergence_study(c);
    CHECK(csv_text(StudyResult{read_csv(dir / "a.csv"), {}}) == csv_text(StudyResult{read_csv(dir / "b.csv"), {}}));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("medians pool over seeds and gradients") {
    StudyResult r;
    for (double L : {4.0, 8.0}) {
      for (double e : {1.0, 3.0, 2.0, std::nan("")}) {
        StudyRow row;
        row.L = L;
        row.abs_err = e / L;
        r.rows.push_back(row);
      }
    }
    const auto m = median_abs_err_by_L(r);
    REQUIRE(m.size() == 2);
    CHECK(m[0].second == doctest::Approx(0.5));
    CHECK(m[1].second == doctest::Approx(0.25));
  }

  TEST_CASE("config validation") {
    StudyConfig c = constant_study();
    c.L_list = {32.0, 16.0};
    CHECK_THROWS_AS(validate(c), InvalidArgument);
    c = constant_study();
    c.seeds = {1, 1};
    CHECK_THROWS_AS(validate(c), InvalidArgument);
    c = constant_study();
    c.p_list.clear();
    CHECK_THROWS_AS(validate(c), InvalidArgument);
    const Json j = Json::parse(R"({"kind":"hjb","env":{"kind":"constant","value_range":[1,1]},
      "p_list":[0.5],"L_list":[4,8],"seeds":[3],"eta":{"mode":"hjb","a_bar":0.5}})");
    const auto parsed = study_config_from_json(j);
    CHECK(parsed.eta_mode == EtaMode::hjb_schedule);
    CHECK(study_eta(parsed, 4096.0) == 0.25);
  }
}

TEST_SUITE("io") {
  TEST_CASE("number formatting round trips") {
    for (double v : {0.1, -2.5e-300, 1.0 / 3.0, 6.02e23, 0.0}) CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_vector({0.5, -1.0}) == "[0.5,-1]");
    CHECK(parse_vector("[0.5,-1]") == std::vector<double>{0.5, -1.0});
  }

  TEST_CASE("environment JSON round trip") {
    EnvSpec s;
    s.kind = EnvKind::poisson_bump;
    s.dimension = 2;
    s.v_min = -1.0;
    s.v_max = 2.0;
    s.bump.radius = 0.3;
    s.sigma.scale = 0.1;
    const Json j = env_to_json(s, 77);
    const EnvSpec back = env_from_json(j);
    CHECK(back.kind == s.kind);
    CHECK(back.dimension == 2);
    CHECK(back.v_min == -1.0);
    CHECK(back.bump.radius == 0.3);
    CHECK(back.sigma.scale == 0.1);
    CHECK(std::isinf(back.sigma.lipschitz_cap));
    CHECK(seed_from_json(j, 0) == 77);
  }

  TEST_CASE("file errors") {
    CHECK_THROWS_AS(read_json_file("/nonexistent/perhom.json"), IoError);
    const auto path = std::filesystem::temp_directory_path() / "perhom-bad.json";
    write_text_file(path.string(), "{ not json");
    CHECK_THROWS_AS(read_json_file(path.string()), InvalidArgument);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(write_text_file("/nonexistent/dir/x.txt", "x"), IoError);
  }
}
