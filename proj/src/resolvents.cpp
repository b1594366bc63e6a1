#include "aggsplit/resolvents.hpp"

#include <limits>
#include <sstream>

#include "aggsplit/error.hpp"

namespace aggsplit {

Vec signed_sum(int l, const std::vector<SignedTerm>& terms) {
  Vec s = Vec::Zero(l);
  for (const SignedTerm& t : terms) {
    if (t.sign > 0)
      s += *t.value;
    else
      s -= *t.value;
  }
  return s;
}

PrimalProx::PrimalProx(const AgentSpec& agent, double tau1, double tau2)
    : n_(agent.n()), l_(agent.l()), inv_tau1_(1.0 / tau1), inv_tau2_(1.0 / tau2), A_(agent.A),
      g_(agent.objective.g) {
  Mat K = agent.objective.H;
  K.diagonal().head(n_).array() += inv_tau1_;
  K.diagonal().tail(l_).array() += inv_tau2_;
  factor_.compute(K);
  if (factor_.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "prox matrix is not positive definite");
}

void PrimalProx::apply(const Vec& x_tilde, const Vec& sigma_tilde, const Vec& lambda_iB, Vec& x, Vec& sigma) const {
  Vec rhs(n_ + l_);
  rhs.head(n_) = inv_tau1_ * x_tilde - 0.5 * (A_.transpose() * lambda_iB);
  rhs.tail(l_) = inv_tau2_ * sigma_tilde - 0.5 * lambda_iB;
  rhs -= g_;
  const Vec z = factor_.solve(rhs);
  x = z.head(n_);
  sigma = z.tail(l_);
}

Vec edge_lambda_update(const Vec& lambda_tilde, double tau3, const Vec& v_hat_tail, const Vec& v_hat_head) {
  const Vec diff = v_hat_head - v_hat_tail;
  return lambda_tilde + (0.5 * tau3) * diff;
}

Vec edge_lambda_bar_update(const Vec& lambda_hat, double tau3, const Vec& v_bar_tail, const Vec& v_bar_head,
                           const Vec& v_hat_tail, const Vec& v_hat_head) {
  const Vec bar = v_bar_head - v_bar_tail;
  const Vec hat = v_hat_head - v_hat_tail;
  const Vec bracket = bar - 0.5 * hat;
  return lambda_hat + tau3 * bracket;
}

Vec acu_own(double tau, const Vec& y_tilde, const std::vector<std::pair<const Vec*, const Vec*>>& out_pairs) {
  const double t2 = tau * tau;
  const double outer = (1.0 + t2) / (1.0 + t2 * (1.0 + static_cast<double>(out_pairs.size())));
  const double inner = tau / (1.0 + t2);
  Vec s = Vec::Zero(y_tilde.size());
  for (const auto& [mu_tilde, yest_tilde] : out_pairs) {
    const Vec term = *mu_tilde + tau * *yest_tilde;
    s += term;
  }
  const Vec bracket = y_tilde + inner * s;
  return outer * bracket;
}

Vec acu_mu(double tau_tail, const Vec& mu_tilde, const Vec& yest_tilde, const Vec& y_tail) {
  const double t2 = tau_tail * tau_tail;
  const Vec gap = yest_tilde - y_tail;
  const Vec a = (1.0 / (1.0 + t2)) * mu_tilde;
  const Vec b = (tau_tail / (1.0 + t2)) * gap;
  return a + b;
}

Vec acu_estimate(double tau_tail, const Vec& yest_tilde, const Vec& mu) {
  const Vec step = tau_tail * mu;
  return yest_tilde - step;
}

AcuBlocks acu(const CommGraph& graph, const std::vector<double>& tau4, const AcuBlocks& tilde) {
  const int N = graph.n_agents();
  const int E = graph.num_edges();
  AcuBlocks out;
  out.y.resize(N);
  out.mu.resize(E);
  out.yest.resize(E);
  for (int i = 0; i < N; ++i) {
    std::vector<std::pair<const Vec*, const Vec*>> pairs;
    for (int e : graph.out_edges(i)) pairs.emplace_back(&tilde.mu[e], &tilde.yest[e]);
    out.y[i] = acu_own(tau4[i], tilde.y[i], pairs);
  }
  for (int e = 0; e < E; ++e) {
    const int j = graph.edge(e).tail;
    out.mu[e] = acu_mu(tau4[j], tilde.mu[e], tilde.yest[e], out.y[j]);
  }
  for (int e = 0; e < E; ++e) {
    const int j = graph.edge(e).tail;
    out.yest[e] = acu_estimate(tau4[j], tilde.yest[e], out.mu[e]);
  }
  return out;
}

Mat local_equality_matrix(const ProblemInstance& instance, int agent) {
  const CommGraph& g = instance.graph();
  const int n = instance.n(agent);
  const int l = instance.coupling_dim();
  const int in = g.in_degree(agent);
  const int N = instance.num_agents();
  Mat M = Mat::Zero(l, n + l * (2 + in));
  M.leftCols(n) = static_cast<double>(N - 1) * instance.agent(agent).A;
  M.block(0, n, l, l) = -Mat::Identity(l, l);
  M.block(0, n + l, l, l) = -g.W()(agent, agent) * Mat::Identity(l, l);
  for (int k = 0; k < in; ++k) {
    const int e = g.in_edges(agent)[k];
    M.block(0, n + l * (2 + k), l, l) = -g.edge_weights()[e] * Mat::Identity(l, l);
  }
  return M;
}

namespace {

QpProblem projection_structure(const ProblemInstance& instance, int agent, const Vec& weights) {
  const AgentSpec& a = instance.agent(agent);
  const int n = a.n();
  const int l = instance.coupling_dim();
  const int nz = static_cast<int>(weights.size());
  const double inf = std::numeric_limits<double>::infinity();
  QpProblem qp;
  qp.H = weights.asDiagonal();
  qp.g = Vec::Zero(nz);
  qp.A_eq = local_equality_matrix(instance, agent);
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
  qp.lower = Vec::Constant(nz, -inf);
  qp.upper = Vec::Constant(nz, inf);
  qp.lower.head(n) = a.feasible_set.lower;
  qp.upper.head(n) = a.feasible_set.upper;
  return qp;
}

Vec projection_weights(int n, int l, int in, double tau1, double tau2, double tau4_own,
                       const std::vector<double>& tau4_in) {
  Vec w(n + l * (2 + in));
  w.head(n).setConstant(1.0 / tau1);
  w.segment(n, l).setConstant(1.0 / tau2);
  w.segment(n + l, l).setConstant(1.0 / tau4_own);
  for (int k = 0; k < in; ++k) w.segment(n + l * (2 + k), l).setConstant(1.0 / tau4_in[k]);
  return w;
}

}  // namespace

LocalProjection::LocalProjection(const ProblemInstance& instance, int agent, double tau1, double tau2,
                                 double tau4_own, const std::vector<double>& tau4_in)
    : agent_(agent), n_(instance.n(agent)), l_(instance.coupling_dim()),
      in_count_(instance.graph().in_degree(agent)), tau1_(tau1), tau2_(tau2), A_(instance.agent(agent).A),
      weights_(projection_weights(n_, l_, in_count_, tau1, tau2, tau4_own, tau4_in)),
      solver_(projection_structure(instance, agent, weights_)) {
  if (static_cast<int>(tau4_in.size()) != in_count_)
    throw Error(ErrorCode::DimensionMismatch, "one tail step size per in-edge is required");
}

ProjectionResult LocalProjection::apply(const Vec& x_hat, const Vec& sigma_hat, const Vec& lambda_hat_iB,
                                        const Vec& y_hat, const std::vector<Vec>& yest_hat) {
  return apply(x_hat, sigma_hat, lambda_hat_iB, y_hat, yest_hat, nullptr);
}

ProjectionResult LocalProjection::apply(const Vec& x_hat, const Vec& sigma_hat, const Vec& lambda_hat_iB,
                                        const Vec& y_hat, const std::vector<Vec>& yest_hat, QpSolution* raw) {
  const int nz = num_vars();
  Vec target(nz);
  target.head(n_) = x_hat - (0.5 * tau1_) * (A_.transpose() * lambda_hat_iB);
  target.segment(n_, l_) = sigma_hat - (0.5 * tau2_) * lambda_hat_iB;
  target.segment(n_ + l_, l_) = y_hat;
  for (int k = 0; k < in_count_; ++k) target.segment(n_ + l_ * (2 + k), l_) = yest_hat[k];
  const Vec g = -(weights_.array() * target.array()).matrix();

  QpSolution sol = solver_.solve(g, warm_);
  if (sol.status != QpStatus::Optimal) {
    std::ostringstream msg;
    msg << "agent " << agent_ << ": projection QP returned " << to_string(sol.status) << " (kkt "
        << sol.kkt_residual << ")";
    throw Error(sol.status == QpStatus::Infeasible ? ErrorCode::InfeasibleLocalProjection : ErrorCode::QpFailure,
                msg.str());
  }
  warm_ = sol.active_set;

  ProjectionResult r;
  r.x = sol.z.head(n_);
  r.sigma = sol.z.segment(n_, l_);
  r.y = sol.z.segment(n_ + l_, l_);
  r.yest.resize(in_count_);
  for (int k = 0; k < in_count_; ++k) r.yest[k] = sol.z.segment(n_ + l_ * (2 + k), l_);
  r.d2 = sol.in_duals.head(l_);
  if (raw) *raw = std::move(sol);
  return r;
}

}  // namespace aggsplit
