#include <filesystem>
#include <random>
#include <sstream>

#include "aggsplit/cli.hpp"
#include "aggsplit/error.hpp"
#include "aggsplit/io.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace aggsplit;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::main(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("aggsplit_test_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

const std::string kTwoAgent = AGGSPLIT_DATA_DIR "/two_agent.json";
const std::string kGrid = AGGSPLIT_DATA_DIR "/bench_grid3x3.json";

int csv_rows(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n - 1;
}

}  // namespace

TEST_CASE("instance json round trip") {
  std::mt19937 rng(2);
  for (int t = 0; t < 10; ++t) {
    const ProblemInstance inst = t == 0 ? fixtures::two_agent(1.0) : fixtures::random_instance(rng);
    const Json j = instance_to_json(inst);
    const ProblemInstance back = parse_instance(parse_json(j.dump(), "<mem>"), "<mem>");
    CHECK(instance_to_json(back) == j);
    CHECK(back.num_agents() == inst.num_agents());
    CHECK(back.graph().num_edges() == inst.graph().num_edges());
  }
}

TEST_CASE("io errors") {
  try {
    read_file("/nonexistent/file.json");
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
  try {
    parse_json("{\"agents\": [", "<mem>");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
  }
  try {
    json_matrix(Json::parse("[[1, 2], [3]]"), "m");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
  }
}

TEST_CASE("validate") {
  TempDir tmp;
  const Result ok = call({"validate", kTwoAgent});
  CHECK(ok.code == cli::kOk);
  CHECK(ok.out.find("valid") != std::string::npos);

  Json j = parse_json(read_file(kTwoAgent), kTwoAgent);
  j["graph"]["edges"] = Json::array();
  write_file(tmp.file("disconnected.json"), j.dump());
  const Result disc = call({"validate", tmp.file("disconnected.json")});
  CHECK(disc.code == cli::kFailure);
  CHECK(disc.out.find("DisconnectedGraph") != std::string::npos);

  Json nc = parse_json(read_file(kTwoAgent), kTwoAgent);
  nc["agents"][0]["H"] = Json::parse("[[-2, 0], [0, 0]]");
  write_file(tmp.file("nonconvex.json"), nc.dump());
  const Result ncr = call({"validate", tmp.file("nonconvex.json")});
  CHECK(ncr.code == cli::kFailure);
  CHECK(ncr.out.find("convexity: FAILED") != std::string::npos);

  write_file(tmp.file("broken.json"), "{\"agents\": ");
  CHECK(call({"validate", tmp.file("broken.json")}).code == cli::kInputError);
  CHECK(call({"validate", tmp.file("missing.json")}).code == cli::kInputError);
  CHECK(call({"frobnicate"}).code == cli::kInputError);
  CHECK(call({"run", kTwoAgent, "--gamma", "2"}).code == cli::kInputError);
}

TEST_CASE("run") {
  TempDir tmp;
  const Result r = call({"run", kTwoAgent, "--oracle-compare", "--trace", tmp.file("t.csv")});
  REQUIRE(r.code == cli::kOk);
  const Json s = Json::parse(r.out);
  CHECK(s["converged"] == true);
  CHECK(s["rel_dist_to_oracle"].get<double>() <= 1e-4);
  const std::string trace = read_file(tmp.file("t.csv"));
  CHECK(trace.rfind("k,metric_a,metric_b,metric_c,metric_d,metric_e,metric_f,residual,wall_ms\n", 0) == 0);
  CHECK(csv_rows(trace) == s["iterations"].get<int>());

  // Last trace row's metric (c) is the summary's constraint violation.
  const std::string last = trace.substr(trace.rfind('\n', trace.size() - 2) + 1);
  std::vector<std::string> cols;
  std::stringstream ls(last);
  for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
  REQUIRE(cols.size() == 9);
  CHECK(std::stod(cols[3]) == s["constraint_violation"].get<double>());
  CHECK(std::stod(cols[8]) == 0.0);

  SUBCASE("iteration limit") {
    const Result z = call({"run", kTwoAgent, "--max-iter", "0"});
    CHECK(z.code == cli::kFailure);
    const Json zs = Json::parse(z.out);
    CHECK(zs["converged"] == false);
    CHECK(zs["iterations"] == 0);
    CHECK(z.err.find("MaxIterExceeded") != std::string::npos);
  }
  SUBCASE("summary file and seeded start") {
    const Result a = call({"run", kTwoAgent, "--seed", "3", "--summary", tmp.file("s.json")});
    CHECK(a.code == cli::kOk);
    CHECK(a.out.empty());
    CHECK(Json::parse(read_file(tmp.file("s.json")))["converged"] == true);
  }
  SUBCASE("message log needs simulated mode") {
    CHECK(call({"run", kTwoAgent, "--log-messages", tmp.file("m.jsonl")}).code == cli::kFailure);
  }
}

TEST_CASE("simulated mode") {
  TempDir tmp;
  const Result r = call({"run", kTwoAgent, "--mode", "simulated", "--check-equivalence", "--log-messages",
                         tmp.file("m.jsonl"), "--trace", tmp.file("t1.csv")});
  REQUIRE(r.code == cli::kOk);
  const Json s = Json::parse(r.out);
  CHECK(s["monolith_equivalent"] == true);
  const std::string log = read_file(tmp.file("m.jsonl"));
  std::istringstream ls(log);
  std::string line;
  REQUIRE(std::getline(ls, line));
  const Json first = Json::parse(line);
  for (const char* key : {"round", "phase", "from", "to", "edge", "len"}) CHECK(first.contains(key));
  int lines = 1;
  while (std::getline(ls, line)) ++lines;
  CHECK(lines == 26 * s["iterations"].get<int>());

  const Result again = call({"run", kTwoAgent, "--mode", "simulated", "--trace", tmp.file("t2.csv")});
  CHECK(again.out == call({"run", kTwoAgent, "--mode", "simulated"}).out);
  CHECK(read_file(tmp.file("t1.csv")) == read_file(tmp.file("t2.csv")));
}

TEST_CASE("oracle") {
  const Result r = call({"oracle", kTwoAgent});
  REQUIRE(r.code == cli::kOk);
  const Json j = Json::parse(r.out);
  CHECK(j["x"][0].get<double>() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(j["lambda"][0].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  // Jᵢ = (xᵢ − 1)² at xᵢ = ½, two agents.
  CHECK(j["objective"].get<double>() == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("bench") {
  TempDir tmp;
  const Result r = call({"bench", kGrid, "--max-iter", "5", "--allocation", tmp.file("a.json"), "--write-instance",
                         tmp.file("i.json")});
  CHECK(r.code == cli::kFailure);
  const Json a = Json::parse(read_file(tmp.file("a.json")));
  CHECK(a["branches"].size() == 3);
  CHECK(a["roads"].size() == 24);
  CHECK(a["market_totals"].size() == 9);
  CHECK(a["branches"][0]["flows"].size() == 24);
  CHECK(call({"validate", tmp.file("i.json")}).code == cli::kOk);

  write_file(tmp.file("bad.json"), R"({"network": {"grid": {"rows": 3, "cols": 3}}, "branches": [[0]], "params": {"x": 1}})");
  CHECK(call({"bench", tmp.file("bad.json")}).code == cli::kInputError);
}
