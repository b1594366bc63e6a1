#include "aggsplit/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aggsplit/error.hpp"
#include "aggsplit/resolvents.hpp"
#include "aggsplit/splitting.hpp"

namespace aggsplit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Maps stacked x to agent i's joint variable [xᵢ; Σ_{j≠i} Aⱼxⱼ].
Mat joint_map(const ProblemInstance& instance, int i) {
  const int n = instance.n(i);
  const int l = instance.coupling_dim();
  Mat P = Mat::Zero(n + l, instance.total_x());
  P.block(0, instance.x_offset(i), n, n) = Mat::Identity(n, n);
  for (int j = 0; j < instance.num_agents(); ++j)
    if (j != i) P.block(n, instance.x_offset(j), l, instance.n(j)) = instance.agent(j).A;
  return P;
}

Mat stacked_coupling(const ProblemInstance& instance) {
  Mat A = Mat::Zero(instance.coupling_dim(), instance.total_x());
  for (int i = 0; i < instance.num_agents(); ++i)
    A.block(0, instance.x_offset(i), instance.coupling_dim(), instance.n(i)) = instance.agent(i).A;
  return A;
}

double inf_norm_or_zero(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Violations of 0 ≤ λ ⊥ slack ≥ 0, ∞-norm.
double complementarity(const Vec& lambda, const Vec& slack) {
  double r = 0.0;
  for (int k = 0; k < lambda.size(); ++k) {
    r = std::max(r, std::max(0.0, -lambda[k]));
    r = std::max(r, std::max(0.0, -slack[k]));
    r = std::max(r, std::abs(lambda[k] * slack[k]));
  }
  return r;
}

}  // namespace

CentralizedQp centralized_qp(const ProblemInstance& instance) {
  const int nx = instance.total_x();
  const int l = instance.coupling_dim();
  CentralizedQp out;
  QpProblem& qp = out.qp;
  qp.H = Mat::Zero(nx, nx);
  qp.g = Vec::Zero(nx);
  for (int i = 0; i < instance.num_agents(); ++i) {
    const Mat P = joint_map(instance, i);
    const QuadraticObjective& obj = instance.agent(i).objective;
    qp.H += P.transpose() * obj.H * P;
    qp.g += P.transpose() * obj.g;
    out.const_term += obj.const_term;
  }
  qp.H = 0.5 * (qp.H + qp.H.transpose());

  int rows = l;
  for (const AgentSpec& a : instance.agents()) rows += static_cast<int>(a.feasible_set.G.rows());
  qp.A_in = Mat::Zero(rows, nx);
  qp.b_in = Vec(rows);
  qp.A_in.topRows(l) = stacked_coupling(instance);
  qp.b_in.head(l) = instance.capacity();
  qp.lower = Vec(nx);
  qp.upper = Vec(nx);
  int r = l;
  for (int i = 0; i < instance.num_agents(); ++i) {
    const LocalFeasibleSet& s = instance.agent(i).feasible_set;
    const int off = instance.x_offset(i);
    const int gr = static_cast<int>(s.G.rows());
    qp.A_in.block(r, off, gr, instance.n(i)) = -s.G;
    qp.b_in.segment(r, gr) = -s.h;
    r += gr;
    qp.lower.segment(off, instance.n(i)) = s.lower;
    qp.upper.segment(off, instance.n(i)) = s.upper;
  }
  return out;
}

CentralizedSolution solve_centralized(const ProblemInstance& instance, double tol) {
  const CentralizedQp c = centralized_qp(instance);
  CentralizedSolution out;
  out.raw = solve_qp(c.qp, tol);
  if (out.raw.status == QpStatus::Infeasible)
    throw Error(ErrorCode::SlaterViolation, "centralized problem is infeasible");
  if (out.raw.status != QpStatus::Optimal)
    throw Error(ErrorCode::QpFailure, std::string("centralized QP returned ") + to_string(out.raw.status));
  out.x = out.raw.z;
  out.lambda = out.raw.in_duals.head(instance.coupling_dim());
  return out;
}

Vec objective_gradient(const ProblemInstance& instance, const Vec& x) {
  Vec grad = Vec::Zero(instance.total_x());
  for (int i = 0; i < instance.num_agents(); ++i) {
    const Mat P = joint_map(instance, i);
    grad += P.transpose() * instance.agent(i).objective.gradient(P * x);
  }
  return grad;
}

Vec project_local(const LocalFeasibleSet& set, const Vec& x) {
  if (set.G.rows() == 0) return x.cwiseMax(set.lower).cwiseMin(set.upper);
  QpProblem qp;
  const int n = set.dim();
  qp.H = Mat::Identity(n, n);
  qp.g = -x;
  qp.A_in = -set.G;
  qp.b_in = -set.h;
  qp.lower = set.lower;
  qp.upper = set.upper;
  const QpSolution sol = solve_qp(qp, 1e-12);
  if (sol.status != QpStatus::Optimal) throw Error(ErrorCode::QpFailure, "projection onto a local set failed");
  return sol.z;
}

double kkt_check(const ProblemInstance& instance, const Vec& x, const Vec& lambda) {
  const Mat A = stacked_coupling(instance);
  const Vec grad = objective_gradient(instance, x) + A.transpose() * lambda;
  double r = 0.0;
  for (int i = 0; i < instance.num_agents(); ++i) {
    const LocalFeasibleSet& s = instance.agent(i).feasible_set;
    const Vec xi = instance.x_block(x, i);
    const Vec gi = grad.segment(instance.x_offset(i), instance.n(i));
    r = std::max(r, inf_norm_or_zero(xi - project_local(s, xi - gi)));
    r = std::max(r, inf_norm_or_zero(xi - project_local(s, xi)));
  }
  r = std::max(r, complementarity(lambda, instance.capacity() - A * x));
  return r;
}

std::vector<AgentTuple> decompose(const ProblemInstance& instance, const Vec& x, const Vec& lambda) {
  const int N = instance.num_agents();
  const int l = instance.coupling_dim();
  std::vector<AgentTuple> out(N);
  for (int i = 0; i < N; ++i) {
    const int n = instance.n(i);
    AgentTuple& t = out[i];
    t.x = instance.x_block(x, i);
    t.sigma = aggregate(instance, x, i);
    t.lambda = lambda / static_cast<double>(N);
    Vec z(n + l);
    z << t.x, t.sigma;
    t.d = -instance.agent(i).objective.gradient(z).tail(l) - t.lambda;
  }
  return out;
}

double decomposed_kkt_check(const ProblemInstance& instance, const std::vector<AgentTuple>& tuples) {
  const int N = instance.num_agents();
  const int l = instance.coupling_dim();
  if (static_cast<int>(tuples.size()) != N) throw Error(ErrorCode::DimensionMismatch, "one tuple per agent");
  double r = 0.0;
  for (int i = 0; i < N; ++i) {
    const AgentSpec& a = instance.agent(i);
    const AgentTuple& t = tuples[i];
    const int n = a.n();
    Vec z(n + l);
    z << t.x, t.sigma;
    const Vec grad = a.objective.gradient(z);
    Vec gx = grad.head(n) + a.A.transpose() * t.lambda;
    for (int j = 0; j < N; ++j)
      if (j != i) gx -= a.A.transpose() * tuples[j].d;
    r = std::max(r, inf_norm_or_zero(t.x - project_local(a.feasible_set, t.x - gx)));
    r = std::max(r, inf_norm_or_zero(t.x - project_local(a.feasible_set, t.x)));
    r = std::max(r, inf_norm_or_zero(grad.tail(l) + t.lambda + t.d));
    r = std::max(r, complementarity(t.lambda, instance.capacity() - (a.A * t.x + t.sigma)));
    Vec others = Vec::Zero(l);
    for (int j = 0; j < N; ++j)
      if (j != i) others += instance.agent(j).A * tuples[j].x;
    r = std::max(r, inf_norm_or_zero(t.sigma - others));
  }
  return r;
}

double operator_zero_residual(const ProblemInstance& instance, const Iterate& psi) {
  const CommGraph& g = instance.graph();
  const int N = instance.num_agents();
  const int l = instance.coupling_dim();
  double total = 0.0;

  std::vector<Vec> v(N);
  for (int i = 0; i < N; ++i) v[i] = instance.agent(i).A * psi.x[i] + psi.sigma[i];

  for (int i = 0; i < N; ++i) {
    const AgentSpec& a = instance.agent(i);
    const int n = a.n();
    const int in = g.in_degree(i);
    const int nz = n + l * (2 + in);

    Vec lambda_iB = Vec::Zero(l);
    for (int e : g.in_edges(i)) lambda_iB += psi.lambda[e];
    for (int e : g.out_edges(i)) lambda_iB -= psi.lambda[e];

    Vec z(nz), u(nz);
    Vec joint(n + l);
    joint << psi.x[i], psi.sigma[i];
    const Vec grad = a.objective.gradient(joint);
    z.head(n) = psi.x[i];
    z.segment(n, l) = psi.sigma[i];
    z.segment(n + l, l) = psi.y[i];
    u.head(n) = grad.head(n) + a.A.transpose() * lambda_iB;
    u.segment(n, l) = grad.tail(l) + lambda_iB;
    Vec mu_out = Vec::Zero(l);
    for (int e : g.out_edges(i)) mu_out += psi.mu[e];
    u.segment(n + l, l) = -mu_out;
    for (int k = 0; k < in; ++k) {
      const int e = g.in_edges(i)[k];
      z.segment(n + l * (2 + k), l) = psi.yest[e];
      u.segment(n + l * (2 + k), l) = psi.mu[e];
    }

    // proj_S(z − u) with S = 𝒳ᵢ ∩ 𝒬ᵢ ∩ 𝓕ᵢ.
    QpProblem qp;
    qp.H = Mat::Identity(nz, nz);
    qp.g = -(z - u);
    qp.A_eq = local_equality_matrix(instance, i);
    qp.b_eq = Vec::Zero(l);
    const int gr = static_cast<int>(a.feasible_set.G.rows());
    qp.A_in = Mat::Zero(l + gr, nz);
    qp.A_in.block(0, 0, l, n) = a.A;
    qp.A_in.block(0, n, l, l) = Mat::Identity(l, l);
    qp.b_in = Vec(l + gr);
    qp.b_in.head(l) = instance.capacity();
    if (gr > 0) {
      qp.A_in.block(l, 0, gr, n) = -a.feasible_set.G;
      qp.b_in.tail(gr) = -a.feasible_set.h;
    }
    qp.lower = Vec::Constant(nz, -kInf);
    qp.upper = Vec::Constant(nz, kInf);
    qp.lower.head(n) = a.feasible_set.lower;
    qp.upper.head(n) = a.feasible_set.upper;
    const QpSolution sol = solve_qp(qp, 1e-12);
    if (sol.status != QpStatus::Optimal) throw Error(ErrorCode::QpFailure, "projection for the zero residual failed");
    total += (z - sol.z).squaredNorm();
  }
  for (int e = 0; e < g.num_edges(); ++e) {
    const Edge& ed = g.edge(e);
    total += (v[ed.head] - v[ed.tail]).squaredNorm();
    total += (psi.y[ed.tail] - psi.yest[e]).squaredNorm();
  }
  return std::sqrt(total);
}

}  // namespace aggsplit
