#ifndef AGGSPLIT_PROBLEM_HPP
#define AGGSPLIT_PROBLEM_HPP

#include <variant>
#include <vector>

#include "aggsplit/linalg.hpp"

namespace aggsplit {

/// J(z) = ½ zᵀHz + gᵀz + const_term over the joint variable z = [xᵢ; σᵢ].
struct QuadraticObjective {
  Mat H;
  Vec g;
  double const_term = 0.0;

  int dim() const { return static_cast<int>(H.rows()); }
  double value(const Vec& z) const { return 0.5 * z.dot(H * z) + g.dot(z) + const_term; }
  Vec gradient(const Vec& z) const { return H * z + g; }
};

/// {x : lower ≤ x ≤ upper, G x ≥ h}; bounds may be infinite.
struct LocalFeasibleSet {
  Vec lower;
  Vec upper;
  Mat G;
  Vec h;

  int dim() const { return static_cast<int>(lower.size()); }
  static LocalFeasibleSet box(Vec lower, Vec upper);
  static LocalFeasibleSet unconstrained(int n);
};

struct AgentSpec {
  QuadraticObjective objective;  // over nᵢ + l variables
  LocalFeasibleSet feasible_set;
  Mat A;  // l × nᵢ

  int n() const { return static_cast<int>(A.cols()); }
  int l() const { return static_cast<int>(A.rows()); }
};

struct Edge {
  int tail = 0;
  int head = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct UniformWeight {
  double w = 1.0;
};
/// One W value per edge, in the order the edges were supplied; must be < 0.
struct GivenWeights {
  std::vector<double> values;
};
using WeightRule = std::variant<UniformWeight, GivenWeights>;

/// W_ji < 0 for (j,i) ∈ edges, W_ii = −Σ_{j≠i} W_ij. Throws NonNegativeWeight
/// or DisconnectedGraph when the null space of W is not span{1}.
Mat build_weight_matrix(int n_agents, const std::vector<Edge>& edges, const WeightRule& rule);

/// Directed communication graph. Edges are kept sorted by (tail, head), which
/// fixes every per-agent ordering used downstream.
class CommGraph {
 public:
  CommGraph() = default;
  CommGraph(int n_agents, std::vector<Edge> edges, WeightRule rule = UniformWeight{});

  int n_agents() const { return n_agents_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(int e) const { return edges_[e]; }
  const Mat& W() const { return W_; }
  /// N × E incidence: +1 at the head, −1 at the tail.
  const Mat& B() const { return B_; }
  /// The W value of each edge, aligned with edges().
  const std::vector<double>& edge_weights() const { return edge_weights_; }

  /// Edges (j,i) entering i, ascending tail.
  const std::vector<int>& in_edges(int i) const { return in_edges_[i]; }
  /// Edges (i,j) leaving i, ascending head.
  const std::vector<int>& out_edges(int i) const { return out_edges_[i]; }
  int in_degree(int i) const { return static_cast<int>(in_edges_[i].size()); }
  int out_degree(int i) const { return static_cast<int>(out_edges_[i].size()); }
  int degree(int i) const { return in_degree(i) + out_degree(i); }
  int find_edge(int tail, int head) const;

 private:
  int n_agents_ = 0;
  std::vector<Edge> edges_;
  std::vector<double> edge_weights_;
  Mat W_;
  Mat B_;
  std::vector<std::vector<int>> in_edges_;
  std::vector<std::vector<int>> out_edges_;
};

/// Validated multi-agent problem: minimize Σᵢ Jᵢ(xᵢ, Σ_{j≠i} Aⱼxⱼ) over
/// xᵢ ∈ 𝒳ᵢ subject to Σᵢ Aᵢxᵢ ≤ c. Immutable once built.
class ProblemInstance {
 public:
  int num_agents() const { return static_cast<int>(agents_.size()); }
  int coupling_dim() const { return static_cast<int>(c_.size()); }
  const std::vector<AgentSpec>& agents() const { return agents_; }
  const AgentSpec& agent(int i) const { return agents_[i]; }
  const Vec& capacity() const { return c_; }
  const CommGraph& graph() const { return graph_; }

  int n(int i) const { return agents_[i].n(); }
  int x_offset(int i) const { return x_offsets_[i]; }
  int total_x() const { return x_offsets_.back(); }
  auto x_block(const Vec& x, int i) const { return x.segment(x_offsets_[i], n(i)); }
  auto x_block(Vec& x, int i) const { return x.segment(x_offsets_[i], n(i)); }

  /// Slack reached by the Slater check (negative means strictly feasible).
  double slater_slack() const { return slater_slack_; }

  friend ProblemInstance build_problem(std::vector<AgentSpec> agents, Vec c, CommGraph graph);

 private:
  std::vector<AgentSpec> agents_;
  Vec c_;
  CommGraph graph_;
  std::vector<int> x_offsets_;
  double slater_slack_ = 0.0;
};

/// Checks dimensions, convexity, local feasibility, connectivity and Slater.
ProblemInstance build_problem(std::vector<AgentSpec> agents, Vec c, CommGraph graph);

/// Σ_{j≠i} Aⱼxⱼ accumulated in ascending j.
Vec aggregate(const ProblemInstance& instance, const Vec& x_all, int i);
/// Σⱼ Aⱼxⱼ accumulated in ascending j.
Vec total_aggregate(const ProblemInstance& instance, const Vec& x_all);
double eval_objective(const ProblemInstance& instance, const Vec& x_all);

}  // namespace aggsplit

#endif  // AGGSPLIT_PROBLEM_HPP
