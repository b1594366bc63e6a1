// Shared instance builders for the test binaries.
#ifndef AGGSPLIT_TESTS_FIXTURES_HPP
#define AGGSPLIT_TESTS_FIXTURES_HPP

#include <algorithm>
#include <limits>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "aggsplit/problem.hpp"
#include "oracles.hpp"

namespace fixtures {

using aggsplit::AgentSpec;
using aggsplit::CommGraph;
using aggsplit::Edge;
using aggsplit::LocalFeasibleSet;
using aggsplit::Mat;
using aggsplit::ProblemInstance;
using aggsplit::QuadraticObjective;
using aggsplit::Vec;

/// Jᵢ = (xᵢ − 1)², Aᵢ = [1], 𝒳ᵢ = [0, 5], bidirectional pair.
inline ProblemInstance two_agent(double c = 10.0) {
  std::vector<AgentSpec> agents;
  for (int i = 0; i < 2; ++i) {
    AgentSpec a;
    a.objective.H = Mat::Zero(2, 2);
    a.objective.H(0, 0) = 2.0;
    a.objective.g = Vec::Zero(2);
    a.objective.g[0] = -2.0;
    a.objective.const_term = 1.0;
    a.feasible_set = LocalFeasibleSet::box(Vec::Zero(1), Vec::Constant(1, 5.0));
    a.A = Mat::Ones(1, 1);
    agents.push_back(a);
  }
  CommGraph graph(2, {{0, 1}, {1, 0}});
  return aggsplit::build_problem(std::move(agents), Vec::Constant(1, c), std::move(graph));
}

/// Directed cycle plus `extra` random non-duplicate edges.
inline std::vector<Edge> random_digraph(std::mt19937& rng, int n, int extra) {
  std::vector<Edge> edges;
  std::set<std::pair<int, int>> seen;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int k = 0; k < n; ++k) {
    Edge e{perm[k], perm[(k + 1) % n]};
    if (n == 2 && k == 1) e = {perm[1], perm[0]};
    if (seen.insert({e.tail, e.head}).second) edges.push_back(e);
  }
  for (int tries = 0; tries < 20 * extra && extra > 0; ++tries) {
    const int t = static_cast<int>(rng() % n), h = static_cast<int>(rng() % n);
    if (t == h || !seen.insert({t, h}).second) continue;
    edges.push_back({t, h});
    if (--extra == 0) break;
  }
  return edges;
}

struct RandomShape {
  int max_agents = 4;
  int max_n = 3;
  int max_l = 2;
};

/// Small random instance: PSD objective (sometimes singular), box and an
/// optional extra inequality, c > 0 so x = 0 is strictly feasible.
inline ProblemInstance random_instance(std::mt19937& rng, RandomShape shape = {}) {
  const int N = 2 + static_cast<int>(rng() % (shape.max_agents - 1));
  const int l = 1 + static_cast<int>(rng() % shape.max_l);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<AgentSpec> agents;
  for (int i = 0; i < N; ++i) {
    const int n = 1 + static_cast<int>(rng() % shape.max_n);
    AgentSpec a;
    const int rank = (rng() % 3 == 0) ? std::max(1, n + l - 1) : n + l;
    a.objective.H = oracle_test::random_psd(rng, n + l, rank, 0.0) * 0.5;
    a.objective.g = oracle_test::random_vector(rng, n + l);
    a.A = oracle_test::random_matrix(rng, l, n);
    a.feasible_set = LocalFeasibleSet::box(Vec::Constant(n, -1.0 - unit(rng)), Vec::Constant(n, 1.0 + unit(rng)));
    if (rng() % 2 == 0) {
      a.feasible_set.G = oracle_test::random_matrix(rng, 1, n);
      a.feasible_set.h = Vec::Constant(1, -0.5);
    }
    agents.push_back(a);
  }
  Vec c(l);
  for (int r = 0; r < l; ++r) c[r] = 0.2 + unit(rng);
  CommGraph graph(N, random_digraph(rng, N, static_cast<int>(rng() % (N + 1))));
  return aggsplit::build_problem(std::move(agents), std::move(c), std::move(graph));
}

}  // namespace fixtures

#endif  // AGGSPLIT_TESTS_FIXTURES_HPP
