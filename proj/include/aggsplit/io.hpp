#ifndef AGGSPLIT_IO_HPP
#define AGGSPLIT_IO_HPP

#include <string>

#include "aggsplit/linalg.hpp"
#include "aggsplit/problem.hpp"
#include "json.hpp"

namespace aggsplit {

using Json = nlohmann::json;

/// Throws ParseError with "source:line:column" context.
Json parse_json(const std::string& text, const std::string& source);
/// Throws IoError when the file cannot be read or written.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Field readers; `where` names the field in error messages. Vectors allow
/// null entries, read as `null_value`.
Mat json_matrix(const Json& j, const std::string& where);
Vec json_vector(const Json& j, const std::string& where, double null_value = 0.0);
double json_number(const Json& j, const std::string& where);
int json_int(const Json& j, const std::string& where);
const Json& json_field(const Json& obj, const char* key, const std::string& where);

Json to_json(const Mat& m);
/// Infinite entries are written as null.
Json to_json(const Vec& v);

/// Instance schema:
///   {"agents": [{"H", "g", "A", "const"?, "box": {"lower", "upper"}?, "G"?, "h"?}],
///    "c": [...], "graph": {"edges": [[tail, head], ...], "weights"?: [...]}}
/// Null box entries mean ±∞. Semantic checks are those of build_problem.
ProblemInstance parse_instance(const Json& j, const std::string& source);
ProblemInstance load_instance(const std::string& path);
Json instance_to_json(const ProblemInstance& instance);

}  // namespace aggsplit

#endif  // AGGSPLIT_IO_HPP
