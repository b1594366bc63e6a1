#include "aggsplit/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "aggsplit/error.hpp"

namespace aggsplit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ParseError, where + ": " + what);
}

}  // namespace

Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ParseError, source + ":" + line_col(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

const Json& json_field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) bad(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) bad(where, std::string("missing field '") + key + "'");
  return *it;
}

double json_number(const Json& j, const std::string& where) {
  if (!j.is_number()) bad(where, "expected a number");
  return j.get<double>();
}

int json_int(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) bad(where, "expected an integer");
  return j.get<int>();
}

Vec json_vector(const Json& j, const std::string& where, double null_value) {
  if (!j.is_array()) bad(where, "expected an array");
  Vec v(static_cast<int>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (j[k].is_null())
      v[static_cast<int>(k)] = null_value;
    else
      v[static_cast<int>(k)] = json_number(j[k], where + "[" + std::to_string(k) + "]");
  }
  return v;
}

Mat json_matrix(const Json& j, const std::string& where) {
  if (!j.is_array()) bad(where, "expected an array of rows");
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Mat(0, 0);
  if (!j[0].is_array()) bad(where + "[0]", "expected a row array");
  const int cols = static_cast<int>(j[0].size());
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const std::string w = where + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols) bad(w, "rows must have equal length");
    for (int c = 0; c < cols; ++c) m(r, c) = json_number(j[r][c], w + "[" + std::to_string(c) + "]");
  }
  return m;
}

Json to_json(const Mat& m) {
  Json out = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

Json to_json(const Vec& v) {
  Json out = Json::array();
  for (int k = 0; k < v.size(); ++k) {
    if (std::isinf(v[k]))
      out.push_back(nullptr);
    else
      out.push_back(v[k]);
  }
  return out;
}

ProblemInstance parse_instance(const Json& j, const std::string& source) {
  const Json& agents_j = json_field(j, "agents", source);
  if (!agents_j.is_array()) bad(source + ".agents", "expected an array");
  const Vec c = json_vector(json_field(j, "c", source), source + ".c");
  const int l = static_cast<int>(c.size());

  std::vector<AgentSpec> agents;
  for (std::size_t k = 0; k < agents_j.size(); ++k) {
    const std::string w = source + ".agents[" + std::to_string(k) + "]";
    const Json& a = agents_j[k];
    AgentSpec spec;
    spec.A = json_matrix(json_field(a, "A", w), w + ".A");
    if (spec.A.rows() == 0) spec.A = Mat(l, 0);
    const int n = static_cast<int>(spec.A.cols());
    spec.objective.H = json_matrix(json_field(a, "H", w), w + ".H");
    spec.objective.g = json_vector(json_field(a, "g", w), w + ".g");
    if (a.contains("const")) spec.objective.const_term = json_number(a["const"], w + ".const");
    spec.feasible_set = LocalFeasibleSet::unconstrained(n);
    if (a.contains("box") && !a["box"].is_null()) {
      const Json& box = a["box"];
      spec.feasible_set.lower = json_vector(json_field(box, "lower", w + ".box"), w + ".box.lower", -kInf);
      spec.feasible_set.upper = json_vector(json_field(box, "upper", w + ".box"), w + ".box.upper", kInf);
    }
    if (a.contains("G")) {
      spec.feasible_set.G = json_matrix(a["G"], w + ".G");
      if (spec.feasible_set.G.rows() == 0) spec.feasible_set.G = Mat(0, n);
      spec.feasible_set.h = json_vector(json_field(a, "h", w), w + ".h");
    }
    agents.push_back(std::move(spec));
  }

  const std::string gw = source + ".graph";
  const Json& graph_j = json_field(j, "graph", source);
  const Json& edges_j = json_field(graph_j, "edges", gw);
  if (!edges_j.is_array()) bad(gw + ".edges", "expected an array");
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < edges_j.size(); ++k) {
    const std::string w = gw + ".edges[" + std::to_string(k) + "]";
    if (!edges_j[k].is_array() || edges_j[k].size() != 2) bad(w, "expected [tail, head]");
    edges.push_back({json_int(edges_j[k][0], w), json_int(edges_j[k][1], w)});
  }
  WeightRule rule = UniformWeight{};
  if (graph_j.contains("weights")) {
    const Vec wv = json_vector(graph_j["weights"], gw + ".weights");
    rule = GivenWeights{std::vector<double>(wv.data(), wv.data() + wv.size())};
  }
  CommGraph graph(static_cast<int>(agents.size()), std::move(edges), rule);
  return build_problem(std::move(agents), c, std::move(graph));
}

ProblemInstance load_instance(const std::string& path) { return parse_instance(parse_json(read_file(path), path), path); }

Json instance_to_json(const ProblemInstance& instance) {
  Json j;
  Json agents = Json::array();
  for (const AgentSpec& a : instance.agents()) {
    Json aj;
    aj["H"] = to_json(a.objective.H);
    aj["g"] = to_json(a.objective.g);
    aj["const"] = a.objective.const_term;
    aj["A"] = to_json(a.A);
    aj["box"] = {{"lower", to_json(a.feasible_set.lower)}, {"upper", to_json(a.feasible_set.upper)}};
    if (a.feasible_set.G.rows() > 0) {
      aj["G"] = to_json(a.feasible_set.G);
      aj["h"] = to_json(a.feasible_set.h);
    }
    agents.push_back(aj);
  }
  j["agents"] = agents;
  j["c"] = to_json(instance.capacity());
  Json edges = Json::array();
  for (const Edge& e : instance.graph().edges()) edges.push_back({e.tail, e.head});
  j["graph"] = {{"edges", edges}, {"weights", instance.graph().edge_weights()}};
  return j;
}

}  // namespace aggsplit
