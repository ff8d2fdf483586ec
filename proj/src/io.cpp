#include "perhom/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "perhom/grid.hpp"

namespace perhom {

namespace {

double get_or(const Json& j, const char* key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<double>();
}

}  // namespace

Json env_to_json(const EnvSpec& s, std::uint64_t seed) {
  Json sigma = {{"scale", s.sigma.scale}, {"offset", s.sigma.offset}};
  sigma["lipschitz_cap"] = std::isfinite(s.sigma.lipschitz_cap) ? Json(s.sigma.lipschitz_cap) : Json(nullptr);
  return Json{{"kind", to_string(s.kind)},
              {"dimension", s.dimension},
              {"value_range", {s.v_min, s.v_max}},
              {"cell_size", s.cell_size},
              {"mollify_radius", s.mollify_radius},
              {"bump",
               {{"amplitude", s.bump.amplitude},
                {"radius", s.bump.radius},
                {"intensity", s.bump.intensity},
                {"max_points", s.bump.max_points}}},
              {"sigma", sigma},
              {"seed", seed}};
}

EnvSpec env_from_json(const Json& j) {
  EnvSpec s;
  s.kind = env_kind_from_string(j.at("kind").get<std::string>());
  s.dimension = j.value("dimension", 1);
  if (j.contains("value_range")) {
    const auto r = j.at("value_range").get<std::vector<double>>();
    require(r.size() == 2, "value_range must have two entries");
    s.v_min = r[0];
    s.v_max = r[1];
  }
  s.cell_size = get_or(j, "cell_size", 1.0);
  s.mollify_radius = get_or(j, "mollify_radius", 0.0);
  if (j.contains("bump")) {
    const Json& b = j.at("bump");
    s.bump.amplitude = get_or(b, "amplitude", s.bump.amplitude);
    s.bump.radius = get_or(b, "radius", s.bump.radius);
    s.bump.intensity = get_or(b, "intensity", s.bump.intensity);
    s.bump.max_points = b.value("max_points", s.bump.max_points);
  }
  if (j.contains("sigma")) {
    const Json& g = j.at("sigma");
    s.sigma.scale = get_or(g, "scale", 0.0);
    s.sigma.offset = get_or(g, "offset", 0.0);
    s.sigma.lipschitz_cap = get_or(g, "lipschitz_cap", std::numeric_limits<double>::infinity());
  }
  validate(s);
  return s;
}

std::uint64_t seed_from_json(const Json& j, std::uint64_t fallback) {
  return j.contains("seed") ? j.at("seed").get<std::uint64_t>() : fallback;
}

Json constants_to_json(const StructuralConstants& c) {
  return Json{{"C_struct", c.C_struct}, {"gamma", c.gamma},          {"C_corr", c.C_corr},
              {"lambda_bar", c.lambda_bar}, {"Lambda_bar", c.Lambda_bar}, {"C_bar", c.C_bar},
              {"rho_slope", c.rho_slope}};
}

StructuralConstants constants_from_json(const Json& j, StructuralConstants c) {
  c.C_struct = get_or(j, "C_struct", c.C_struct);
  c.gamma = get_or(j, "gamma", c.gamma);
  c.C_corr = get_or(j, "C_corr", c.C_corr);
  c.lambda_bar = get_or(j, "lambda_bar", c.lambda_bar);
  c.Lambda_bar = get_or(j, "Lambda_bar", c.Lambda_bar);
  c.C_bar = get_or(j, "C_bar", c.C_bar);
  c.rho_slope = get_or(j, "rho_slope", c.rho_slope);
  return c;
}

Json coef_to_json(const CoefMap& m) {
  return Json{{"form", m.form == CoefMap::Form::affine ? "affine" : "reciprocal"}, {"c0", m.c0}, {"c1", m.c1}};
}

CoefMap coef_from_json(const Json& j) {
  if (j.is_number()) return CoefMap{CoefMap::Form::affine, j.get<double>(), 0.0};
  CoefMap m;
  const std::string form = j.value("form", std::string("affine"));
  if (form == "affine") {
    m.form = CoefMap::Form::affine;
  } else if (form == "reciprocal") {
    m.form = CoefMap::Form::reciprocal;
  } else {
    throw InvalidArgument("unknown coefficient form '" + form + "'");
  }
  m.c0 = get_or(j, "c0", 1.0);
  m.c1 = get_or(j, "c1", 0.0);
  return m;
}

Json control_to_json(const BellmanControl& c, int dim) {
  return Json{{"matrix", sym_to_array(c.matrix, dim)}, {"a", coef_to_json(c.a)}, {"f", coef_to_json(c.f)}};
}

BellmanControl control_from_json(const Json& j, int dim) {
  BellmanControl c;
  if (j.contains("matrix")) {
    const Json& m = j.at("matrix");
    c.matrix = m.is_number() ? Sym2{m.get<double>(), 0.0, 0.0} : sym_from_array(m.get<std::vector<double>>(), dim);
  } else {
    c.matrix = Sym2::identity(dim);
  }
  if (j.contains("a")) c.a = coef_from_json(j.at("a"));
  if (j.contains("f")) c.f = coef_from_json(j.at("f"));
  return c;
}

Json solver_to_json(const SolverParams& p) {
  return Json{{"delta", p.delta},
              {"lf_theta", {p.lf_theta[0], p.lf_theta[1]}},
              {"theta_mode", p.theta_mode == ThetaMode::local ? "local" : "global"},
              {"cfl_safety", p.cfl_safety},
              {"tol", p.tol},
              {"max_iter", p.max_iter},
              {"method", to_string(p.method)}};
}

SolverParams solver_from_json(const Json& j, SolverParams p) {
  p.delta = get_or(j, "delta", p.delta);
  if (j.contains("lf_theta")) {
    const Json& t = j.at("lf_theta");
    if (t.is_number()) {
      p.lf_theta = {t.get<double>(), t.get<double>()};
    } else {
      const auto v = t.get<std::vector<double>>();
      require(!v.empty() && v.size() <= 2, "lf_theta must have one or two entries");
      p.lf_theta = {v[0], v.size() == 2 ? v[1] : v[0]};
    }
  }
  if (j.contains("theta_mode")) {
    const std::string m = j.at("theta_mode").get<std::string>();
    require(m == "local" || m == "global", "theta_mode must be 'local' or 'global'");
    p.theta_mode = m == "local" ? ThetaMode::local : ThetaMode::global;
  }
  p.cfl_safety = get_or(j, "cfl_safety", p.cfl_safety);
  p.tol = get_or(j, "tol", p.tol);
  if (j.contains("max_iter")) p.max_iter = j.at("max_iter").get<std::int64_t>();
  if (j.contains("method")) p.method = solve_method_from_string(j.at("method").get<std::string>());
  validate(p);
  return p;
}

Sym2 sym_from_array(const std::vector<double>& v, int dim) {
  if (dim == 1) {
    require(v.size() == 1, "a 1D matrix has one entry");
    return {v[0], 0.0, 0.0};
  }
  require(v.size() == 4, "a 2D matrix has four row-major entries");
  require(v[1] == v[2], "matrix must be symmetric");
  return {v[0], v[1], v[3]};
}

std::vector<double> sym_to_array(const Sym2& m, int dim) {
  if (dim == 1) return {m.xx};
  return {m.xx, m.xy, m.xy, m.yy};
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_vector(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s + "]";
}

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> out;
  std::size_t a = text.find('['), b = text.rfind(']');
  if (a == std::string::npos || b == std::string::npos || b < a) {
    throw InvalidArgument("expected a bracketed list, got '" + text + "'");
  }
  std::stringstream ss(text.substr(a + 1, b - a - 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(std::strtod(item.c_str(), nullptr));
  }
  return out;
}

Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  try {
    return Json::parse(is);
  } catch (const Json::exception& e) {
    throw InvalidArgument("malformed JSON in " + path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace perhom
