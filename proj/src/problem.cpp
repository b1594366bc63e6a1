#include "aggsplit/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include "aggsplit/error.hpp"
#include "aggsplit/qp.hpp"

namespace aggsplit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string agent_tag(int i) { return "agent " + std::to_string(i); }

bool undirected_connected(int n, const std::vector<Edge>& edges) {
  if (n == 0) return false;
  std::vector<std::vector<int>> adj(n);
  for (const Edge& e : edges) {
    adj[e.tail].push_back(e.head);
    adj[e.head].push_back(e.tail);
  }
  std::vector<char> seen(n, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int count = 1;
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int w : adj[v])
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        frontier.push(w);
      }
  }
  return count == n;
}

void check_objective(const QuadraticObjective& obj, int i) {
  const Mat& H = obj.H;
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw Error(ErrorCode::ValidationError, agent_tag(i) + ": objective Hessian is not symmetric");
  if (H.rows() == 0) return;
  const Vec eig = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly)
                      .eigenvalues();
  const double norm = std::max(std::abs(eig.minCoeff()), std::abs(eig.maxCoeff()));
  if (eig.minCoeff() < -1e-9 * norm) {
    std::ostringstream msg;
    msg << agent_tag(i) << ": objective Hessian has eigenvalue " << eig.minCoeff();
    throw Error(ErrorCode::NonConvexObjective, msg.str());
  }
}

void check_local_set(const LocalFeasibleSet& set, int i) {
  const int n = set.dim();
  if ((set.lower.array() > set.upper.array()).any())
    throw Error(ErrorCode::InfeasibleLocalSet, agent_tag(i) + ": lower bound exceeds upper bound");
  QpProblem qp;
  qp.H = Mat::Identity(n, n);
  qp.g = Vec::Zero(n);
  if (set.G.rows() > 0) {
    qp.A_in = -set.G;
    qp.b_in = -set.h;
  }
  qp.lower = set.lower;
  qp.upper = set.upper;
  const QpSolution sol = solve_qp(qp);
  if (sol.status == QpStatus::Infeasible)
    throw Error(ErrorCode::InfeasibleLocalSet, agent_tag(i) + ": local feasible set is empty");
}

}  // namespace

LocalFeasibleSet LocalFeasibleSet::box(Vec lower, Vec upper) {
  LocalFeasibleSet s;
  s.G = Mat(0, lower.size());
  s.h = Vec(0);
  s.lower = std::move(lower);
  s.upper = std::move(upper);
  return s;
}

LocalFeasibleSet LocalFeasibleSet::unconstrained(int n) {
  return box(Vec::Constant(n, -kInf), Vec::Constant(n, kInf));
}

Mat build_weight_matrix(int n_agents, const std::vector<Edge>& edges, const WeightRule& rule) {
  std::vector<double> values(edges.size());
  if (const auto* u = std::get_if<UniformWeight>(&rule)) {
    std::fill(values.begin(), values.end(), -u->w);
  } else {
    const auto& given = std::get<GivenWeights>(rule).values;
    if (given.size() != edges.size())
      throw Error(ErrorCode::DimensionMismatch, "one weight per edge is required");
    values = given;
  }
  for (std::size_t e = 0; e < values.size(); ++e)
    if (!(values[e] < 0.0)) {
      std::ostringstream msg;
      msg << "edge (" << edges[e].tail << "," << edges[e].head << ") has weight " << values[e];
      throw Error(ErrorCode::NonNegativeWeight, msg.str());
    }
  if (!undirected_connected(n_agents, edges))
    throw Error(ErrorCode::DisconnectedGraph, "communication graph is not connected");

  Mat W = Mat::Zero(n_agents, n_agents);
  for (std::size_t e = 0; e < edges.size(); ++e) W(edges[e].tail, edges[e].head) = values[e];
  for (int i = 0; i < n_agents; ++i) {
    double row = 0.0;
    for (int j = 0; j < n_agents; ++j)
      if (j != i) row += W(i, j);
    W(i, i) = -row;
  }
  for (int i = 0; i < n_agents; ++i)
    if (!(W(i, i) > 0.0))
      throw Error(ErrorCode::DisconnectedGraph,
                  "agent " + std::to_string(i) + " has no out-neighbor");

  if (n_agents > 1) {
    const Vec sv = Eigen::JacobiSVD<Mat>(W).singularValues();
    if (sv[n_agents - 2] <= 1e-10 * sv[0])
      throw Error(ErrorCode::DisconnectedGraph, "zero eigenvalue of W is not simple");
  }
  return W;
}

CommGraph::CommGraph(int n_agents, std::vector<Edge> edges, WeightRule rule) : n_agents_(n_agents) {
  for (const Edge& e : edges) {
    if (e.tail < 0 || e.tail >= n_agents || e.head < 0 || e.head >= n_agents)
      throw Error(ErrorCode::DimensionMismatch, "edge endpoint out of range");
    if (e.tail == e.head)
      throw Error(ErrorCode::ValidationError, "self-loop at agent " + std::to_string(e.tail));
  }
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::pair(edges[a].tail, edges[a].head) < std::pair(edges[b].tail, edges[b].head);
  });
  for (std::size_t k = 0; k < order.size(); ++k) {
    edges_.push_back(edges[order[k]]);
    if (k > 0 && edges_[k] == edges_[k - 1])
      throw Error(ErrorCode::ValidationError, "duplicate edge");
  }
  if (auto* given = std::get_if<GivenWeights>(&rule)) {
    if (given->values.size() != edges.size())
      throw Error(ErrorCode::DimensionMismatch, "one weight per edge is required");
    std::vector<double> sorted;
    for (std::size_t k : order) sorted.push_back(given->values[k]);
    given->values = std::move(sorted);
  }
  W_ = build_weight_matrix(n_agents_, edges_, rule);

  const int E = num_edges();
  B_ = Mat::Zero(n_agents_, E);
  in_edges_.assign(n_agents_, {});
  out_edges_.assign(n_agents_, {});
  for (int e = 0; e < E; ++e) {
    B_(edges_[e].head, e) = 1.0;
    B_(edges_[e].tail, e) = -1.0;
    out_edges_[edges_[e].tail].push_back(e);
    in_edges_[edges_[e].head].push_back(e);
    edge_weights_.push_back(W_(edges_[e].tail, edges_[e].head));
  }
  // in_edges are filled in (tail, head) order, so tails ascend per head.
}

int CommGraph::find_edge(int tail, int head) const {
  for (int e : out_edges_[tail])
    if (edges_[e].head == head) return e;
  return -1;
}

ProblemInstance build_problem(std::vector<AgentSpec> agents, Vec c, CommGraph graph) {
  const int N = static_cast<int>(agents.size());
  const int l = static_cast<int>(c.size());
  if (N == 0) throw Error(ErrorCode::DimensionMismatch, "no agents");
  if (graph.n_agents() != N)
    throw Error(ErrorCode::DimensionMismatch, "graph size differs from agent count");

  for (int i = 0; i < N; ++i) {
    const AgentSpec& a = agents[i];
    const int n = a.n();
    if (a.l() != l) throw Error(ErrorCode::DimensionMismatch, agent_tag(i) + ": A has wrong row count");
    if (a.objective.H.rows() != n + l || a.objective.H.cols() != n + l || a.objective.g.size() != n + l)
      throw Error(ErrorCode::DimensionMismatch, agent_tag(i) + ": objective dimension must be n + l");
    const LocalFeasibleSet& s = a.feasible_set;
    if (s.lower.size() != n || s.upper.size() != n || s.G.cols() != n || s.G.rows() != s.h.size())
      throw Error(ErrorCode::DimensionMismatch, agent_tag(i) + ": local set dimension mismatch");
  }
  for (int i = 0; i < N; ++i) {
    check_objective(agents[i].objective, i);
    check_local_set(agents[i].feasible_set, i);
  }

  ProblemInstance inst;
  inst.agents_ = std::move(agents);
  inst.c_ = std::move(c);
  inst.graph_ = std::move(graph);
  inst.x_offsets_.assign(N + 1, 0);
  for (int i = 0; i < N; ++i) inst.x_offsets_[i + 1] = inst.x_offsets_[i] + inst.agents_[i].n();

  // Slater: minimize ½(s+1)² + ½ε‖x‖² over x ∈ 𝒳, Σ Aᵢxᵢ − s·1 ≤ c.
  const int nx = inst.total_x();
  const double ridge = 1e-8;
  QpProblem qp;
  qp.H = Mat::Zero(nx + 1, nx + 1);
  qp.H.diagonal().head(nx).setConstant(ridge);
  qp.H(nx, nx) = 1.0;
  qp.g = Vec::Zero(nx + 1);
  qp.g[nx] = 1.0;
  int rows = l;
  for (const AgentSpec& a : inst.agents_) rows += static_cast<int>(a.feasible_set.G.rows());
  qp.A_in = Mat::Zero(rows, nx + 1);
  qp.b_in = Vec::Zero(rows);
  qp.lower = Vec::Constant(nx + 1, -kInf);
  qp.upper = Vec::Constant(nx + 1, kInf);
  int r = l;
  for (int i = 0; i < N; ++i) {
    const AgentSpec& a = inst.agents_[i];
    const int off = inst.x_offset(i);
    qp.A_in.block(0, off, l, a.n()) = a.A;
    const auto gr = a.feasible_set.G.rows();
    qp.A_in.block(r, off, gr, a.n()) = -a.feasible_set.G;
    qp.b_in.segment(r, gr) = -a.feasible_set.h;
    r += static_cast<int>(gr);
    qp.lower.segment(off, a.n()) = a.feasible_set.lower;
    qp.upper.segment(off, a.n()) = a.feasible_set.upper;
  }
  qp.A_in.block(0, nx, l, 1).setConstant(-1.0);
  qp.b_in.head(l) = inst.c_;
  const QpSolution sol = solve_qp(qp);
  if (sol.status == QpStatus::Infeasible)
    throw Error(ErrorCode::SlaterViolation, "coupled feasible set is empty");
  inst.slater_slack_ = sol.z[nx];
  if (!(inst.slater_slack_ < -1e-9)) {
    std::ostringstream msg;
    msg << "no strictly feasible point (best max-violation " << inst.slater_slack_ << ")";
    throw Error(ErrorCode::SlaterViolation, msg.str());
  }
  return inst;
}

Vec aggregate(const ProblemInstance& instance, const Vec& x_all, int i) {
  Vec s = Vec::Zero(instance.coupling_dim());
  for (int j = 0; j < instance.num_agents(); ++j)
    if (j != i) s += instance.agent(j).A * instance.x_block(x_all, j);
  return s;
}

Vec total_aggregate(const ProblemInstance& instance, const Vec& x_all) {
  Vec s = Vec::Zero(instance.coupling_dim());
  for (int j = 0; j < instance.num_agents(); ++j) s += instance.agent(j).A * instance.x_block(x_all, j);
  return s;
}

double eval_objective(const ProblemInstance& instance, const Vec& x_all) {
  const int l = instance.coupling_dim();
  double total = 0.0;
  for (int i = 0; i < instance.num_agents(); ++i) {
    const int n = instance.n(i);
    Vec z(n + l);
    z.head(n) = instance.x_block(x_all, i);
    z.tail(l) = aggregate(instance, x_all, i);
    total += instance.agent(i).objective.value(z);
  }
  return total;
}

}  // namespace aggsplit
