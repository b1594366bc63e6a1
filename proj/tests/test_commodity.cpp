#include <cmath>
#include <random>

#include "aggsplit/commodity.hpp"
#include "aggsplit/error.hpp"
#include "aggsplit/oracle.hpp"
#include "aggsplit/splitting.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace aggsplit;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no exception");
  return ErrorCode::IoError;
}

// Jᵢ written out term by term.
double branch_cost(const CommodityInstance& ci, int i, const Vec& x, const Vec& sigma) {
  const Mat& A = ci.problem.agent(i).A;
  const Vec ax = A * x;
  const double a = ci.params.alpha;
  const Vec price = Vec::Constant(ax.size(), ci.params.w) - ci.Sigma * (ax + sigma);
  return 0.5 * x.dot(ci.Q[i] * x) + a * (ax + sigma).squaredNorm() - price.dot(ax);
}

}  // namespace

TEST_CASE("grid network") {
  const TransportNetwork net = grid_network(3, 3);
  CHECK(net.nodes == 9);
  CHECK(net.num_roads() == 24);
  for (double eta : net.normalized_lengths()) CHECK(eta == 1.0);
  const Mat S = price_matrix(net, CommodityParams{});
  CHECK((S - 0.23 * Mat::Identity(9, 9)).cwiseAbs().maxCoeff() == 0.0);

  const Mat B = net.incidence();
  CHECK(B.colwise().sum().cwiseAbs().maxCoeff() == 0.0);

  LengthRule rule;
  rule.random = true;
  rule.seed = 3;
  const TransportNetwork r = grid_network(3, 3, rule);
  double max_eta = 0.0;
  for (double eta : r.normalized_lengths()) {
    CHECK(eta > 0.0);
    CHECK(eta <= 1.0);
    max_eta = std::max(max_eta, eta);
  }
  CHECK(max_eta == 1.0);
  CHECK(r == grid_network(3, 3, rule));
  for (int e = 0; e < r.num_roads(); e += 2) CHECK(r.roads[e].length == r.roads[e + 1].length);
}

TEST_CASE("random planar network") {
  const TransportNetwork net = random_planar_network(29, 34, 7);
  CHECK(net.nodes == 29);
  CHECK(net.num_roads() == 68);
  CHECK_NOTHROW(net.validate());
  CHECK(net == random_planar_network(29, 34, 7));
}

TEST_CASE("network parsing") {
  const TransportNetwork net = grid_network(2, 3);
  CHECK(parse_network(network_to_json(net)) == net);
  CHECK(code_of([] { parse_network(R"({"nodes": 2, "roads": [)"); }) == ErrorCode::ParseError);
  CHECK(code_of([] {
          parse_network(R"({"nodes": 2, "roads": [{"from": 0, "to": 1, "length": -1}, {"from": 1, "to": 0, "length": 1}]})");
        }) == ErrorCode::ValidationError);
  CHECK(code_of([] { parse_network(R"({"nodes": 3, "roads": [{"from": 0, "to": 1, "length": 1}, {"from": 1, "to": 0, "length": 1}]})"); }) ==
        ErrorCode::ValidationError);
  CHECK(code_of([] { load_network("/nonexistent/net.json"); }) == ErrorCode::IoError);
}

TEST_CASE("branch capacities") {
  CommodityParams p;
  const auto b = make_branches({{0, 1}, {2}}, p);
  REQUIRE(b.size() == 2);
  CHECK(b[0].capacities.size() == 2);
  for (const BranchSpec& s : b)
    for (double c : s.capacities) {
      CHECK(c >= p.capacity_lo);
      CHECK(c <= p.capacity_hi);
    }
  p.seed = 99;
  CHECK(make_branches({{0, 1}, {2}}, p)[0].capacities != b[0].capacities);
}

TEST_CASE("generated objective matches the cost definition") {
  LengthRule rule;
  rule.random = true;
  const TransportNetwork net = grid_network(3, 3, rule);
  CommodityParams p;
  const CommodityInstance ci = generate_instance(net, make_branches({{0}, {4}, {8}}, p), p);
  std::mt19937 rng(1);
  for (int i = 0; i < ci.problem.num_agents(); ++i) {
    const AgentSpec& a = ci.problem.agent(i);
    CHECK((a.objective.H - a.objective.H.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (int t = 0; t < 1000; ++t) {
      const Vec x = oracle_test::random_vector(rng, a.n(), 3.0);
      const Vec s = oracle_test::random_vector(rng, a.l(), 3.0);
      Vec z(a.n() + a.l());
      z << x, s;
      const double expected = branch_cost(ci, i, x, s);
      CHECK(a.objective.value(z) == doctest::Approx(expected).epsilon(1e-12).scale(1.0));
    }
  }
  CHECK(ci.problem.slater_slack() < 0.0);
}

TEST_CASE("hessian blocks by hand") {
  const TransportNetwork net = grid_network(2, 2);
  CommodityParams p;
  const CommodityInstance ci = generate_instance(net, make_branches({{1}, {2}}, p), p);
  const AgentSpec& a = ci.problem.agent(0);
  const int n = a.n(), l = a.l();
  const Mat& H = a.objective.H;
  const Mat& A = a.A;
  const Mat I = Mat::Identity(l, l);
  const Mat S = ci.Sigma;
  CHECK((H.bottomRightCorner(l, l) - 2 * p.alpha * I).cwiseAbs().maxCoeff() <= 1e-12);
  const Mat xx = ci.Q[0] + 2 * p.alpha * A.transpose() * A + A.transpose() * (S + S.transpose()) * A;
  CHECK((H.topLeftCorner(n, n) - xx).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((H.topRightCorner(n, l) - A.transpose() * (2 * p.alpha * I + S)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.objective.g.head(n) + A.transpose() * Vec::Constant(l, p.w)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single branch") {
  const TransportNetwork net = grid_network(2, 2);
  CommodityParams p;
  p.sigma_diag = 0.0;
  p.sigma_offdiag_scale = 0.0;
  p.alpha = 0.0;
  std::vector<BranchSpec> one = make_branches({{0}}, p);
  // One agent still needs a communication partner; give it a twin.
  one.push_back(one[0]);
  const CommodityInstance ci = generate_instance(net, one, p);
  const AgentSpec& a = ci.problem.agent(0);
  const int n = a.n();
  CHECK((a.objective.H.topLeftCorner(n, n) - ci.Q[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.objective.H.rightCols(a.l()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("net inflow and market totals") {
  const TransportNetwork net = grid_network(3, 3);
  CommodityParams p;
  const CommodityInstance ci = generate_instance(net, make_branches({{0}, {4}, {8}}, p), p);
  const CentralizedSolution s = solve_centralized(ci.problem);
  const int ET = net.num_roads();
  for (int i = 0; i < ci.problem.num_agents(); ++i) {
    const Vec xi = ci.problem.x_block(s.x, i);
    const Vec inflow = ci.problem.agent(i).A * xi;
    CHECK(inflow.sum() == doctest::Approx(xi.tail(xi.size() - ET).sum()).epsilon(1e-9));
    CHECK(inflow.minCoeff() >= -1e-9);
    CHECK(xi.minCoeff() >= -1e-9);
  }
}

TEST_CASE("non-convex parameters are rejected") {
  const TransportNetwork net = grid_network(2, 2);
  CommodityParams p;
  p.alpha = -1.0;
  CHECK(code_of([&] { generate_instance(net, make_branches({{0}, {3}}, p), p); }) == ErrorCode::NonConvexBenchmark);
}

TEST_CASE("communication graph") {
  for (int n : {2, 3, 5, 8}) {
    const CommGraph g = benchmark_comm_graph(n, 4);
    CHECK(g.n_agents() == n);
    CHECK(g.num_edges() >= n);
    CHECK(g.num_edges() == benchmark_comm_graph(n, 4).num_edges());
  }
}

TEST_CASE("bench config") {
  const CommodityInstance ci = load_bench_config(AGGSPLIT_DATA_DIR "/bench_grid3x3.json");
  CHECK(ci.network.nodes == 9);
  CHECK(ci.problem.num_agents() == 3);
  CHECK(ci.problem.coupling_dim() == 9);
  CHECK(ci.branches[1].factory_nodes == std::vector<int>{4});
  double offdiag = 0.0;
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c)
      if (r != c) offdiag = std::max(offdiag, ci.Sigma(r, c));
  CHECK(offdiag > 0.0);

  const CommodityInstance explicit_caps = parse_bench_config(
      R"({"network": {"grid": {"rows": 2, "cols": 2}}, "branches": [{"factories": [0], "capacities": [11]}, [3]]})",
      "<inline>", ".");
  CHECK(explicit_caps.branches[0].capacities[0] == 11.0);

  CHECK(code_of([] { parse_bench_config(R"({"network": {"grid": {"rows": 2, "cols": 2}}, "branches": [[0]], "params": {"beta": 1}})", "<inline>", "."); }) ==
        ErrorCode::ParseError);
  CHECK(code_of([] { parse_bench_config(R"({"branches": [[0]]})", "<inline>", "."); }) == ErrorCode::ParseError);
  CHECK(code_of([] { load_bench_config("/nonexistent/cfg.json"); }) == ErrorCode::IoError);
}

TEST_CASE("distributed solution of a small benchmark") {
  const TransportNetwork net = grid_network(2, 2);
  CommodityParams p;
  const CommodityInstance ci = generate_instance(net, make_branches({{0}, {3}}, p), p);
  const CentralizedSolution s = solve_centralized(ci.problem);
  const RunResult r = run(ci.problem);
  REQUIRE(r.solution.converged);
  CHECK((r.solution.x - s.x).norm() / s.x.norm() <= 1e-4);
}
