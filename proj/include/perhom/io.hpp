#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "perhom/discrete.hpp"
#include "perhom/model.hpp"

namespace perhom {

using Json = nlohmann::json;

Json env_to_json(const EnvSpec& spec, std::uint64_t seed);
EnvSpec env_from_json(const Json& j);
std::uint64_t seed_from_json(const Json& j, std::uint64_t fallback);

Json constants_to_json(const StructuralConstants& c);
StructuralConstants constants_from_json(const Json& j, StructuralConstants base);

Json coef_to_json(const CoefMap& m);
CoefMap coef_from_json(const Json& j);

Json control_to_json(const BellmanControl& c, int dim);
BellmanControl control_from_json(const Json& j, int dim);

Json solver_to_json(const SolverParams& p);
SolverParams solver_from_json(const Json& j, SolverParams base);

/// Row-major d x d array <-> symmetric matrix; 1D accepts a bare number.
Sym2 sym_from_array(const std::vector<double>& v, int dim);
std::vector<double> sym_to_array(const Sym2& m, int dim);

/// Shortest round-trip decimal.
std::string format_double(double v);
/// JSON array text of a vector with shortest round-trip entries.
std::string format_vector(const std::vector<double>& v);
std::vector<double> parse_vector(const std::string& text);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace perhom
