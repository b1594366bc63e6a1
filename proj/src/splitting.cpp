#include "aggsplit/splitting.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "aggsplit/error.hpp"
#include "aggsplit/oracle.hpp"

namespace aggsplit {

namespace {

std::vector<Vec> zero_blocks(int count, int size) { return std::vector<Vec>(count, Vec::Zero(size)); }

bool blocks_equal(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].size() != b[k].size()) return false;
    if (!(a[k].array() == b[k].array()).all()) return false;
  }
  return true;
}

double safe_norm(double v) { return std::max(v, 1e-12); }

}  // namespace

Iterate Iterate::zeros(const ProblemInstance& instance) {
  const int N = instance.num_agents();
  const int E = instance.graph().num_edges();
  const int l = instance.coupling_dim();
  Iterate it;
  for (int i = 0; i < N; ++i) it.x.push_back(Vec::Zero(instance.n(i)));
  it.sigma = zero_blocks(N, l);
  it.lambda = zero_blocks(E, l);
  it.y = zero_blocks(N, l);
  it.mu = zero_blocks(E, l);
  it.yest = zero_blocks(E, l);
  return it;
}

bool operator==(const Iterate& a, const Iterate& b) {
  return blocks_equal(a.x, b.x) && blocks_equal(a.sigma, b.sigma) && blocks_equal(a.lambda, b.lambda) &&
         blocks_equal(a.y, b.y) && blocks_equal(a.mu, b.mu) && blocks_equal(a.yest, b.yest);
}

Layout::Layout(const ProblemInstance& instance) {
  const CommGraph& g = instance.graph();
  const int N = instance.num_agents();
  const int E = g.num_edges();
  const int l = instance.coupling_dim();
  int pos = 0;
  for (int i = 0; i < N; ++i) {
    x.push_back(pos);
    pos += instance.n(i);
  }
  x_end = pos;
  for (int i = 0; i < N; ++i, pos += l) sigma.push_back(pos);
  sigma_end = pos;
  for (int e = 0; e < E; ++e, pos += l) lambda.push_back(pos);
  lambda_end = pos;
  y.assign(N, 0);
  mu.assign(E, 0);
  yest.assign(E, 0);
  for (int i = 0; i < N; ++i) {
    y[i] = pos;
    pos += l;
    for (int e : g.out_edges(i)) {
      mu[e] = pos;
      yest[e] = pos + l;
      pos += 2 * l;
    }
  }
  dim = pos;
}

Vec pack(const ProblemInstance& instance, const Iterate& it) {
  const Layout L(instance);
  const int l = instance.coupling_dim();
  Vec psi(L.dim);
  for (int i = 0; i < instance.num_agents(); ++i) {
    psi.segment(L.x[i], instance.n(i)) = it.x[i];
    psi.segment(L.sigma[i], l) = it.sigma[i];
    psi.segment(L.y[i], l) = it.y[i];
  }
  for (int e = 0; e < instance.graph().num_edges(); ++e) {
    psi.segment(L.lambda[e], l) = it.lambda[e];
    psi.segment(L.mu[e], l) = it.mu[e];
    psi.segment(L.yest[e], l) = it.yest[e];
  }
  return psi;
}

Iterate unpack(const ProblemInstance& instance, const Vec& psi) {
  const Layout L(instance);
  const int l = instance.coupling_dim();
  if (psi.size() != L.dim) throw Error(ErrorCode::DimensionMismatch, "stacked vector has the wrong length");
  Iterate it = Iterate::zeros(instance);
  for (int i = 0; i < instance.num_agents(); ++i) {
    it.x[i] = psi.segment(L.x[i], instance.n(i));
    it.sigma[i] = psi.segment(L.sigma[i], l);
    it.y[i] = psi.segment(L.y[i], l);
  }
  for (int e = 0; e < instance.graph().num_edges(); ++e) {
    it.lambda[e] = psi.segment(L.lambda[e], l);
    it.mu[e] = psi.segment(L.mu[e], l);
    it.yest[e] = psi.segment(L.yest[e], l);
  }
  return it;
}

Vec stacked_x(const ProblemInstance& instance, const Iterate& it) {
  Vec x(instance.total_x());
  for (int i = 0; i < instance.num_agents(); ++i) x.segment(instance.x_offset(i), instance.n(i)) = it.x[i];
  return x;
}

double StepSizes::gamma_at(int k) const {
  if (k >= 0 && k < static_cast<int>(gamma_sequence.size())) return gamma_sequence[k];
  return gamma;
}

StepSizes choose_step_sizes(const ProblemInstance& instance, const StepSizeRule& rule) {
  const CommGraph& g = instance.graph();
  const int N = instance.num_agents();
  const int E = g.num_edges();
  auto pick = [&](double offsum) {
    const double tau = offsum > 0.0 ? rule.safety / offsum : rule.free_value;
    return std::clamp(tau, rule.floor, rule.cap);
  };
  StepSizes s;
  for (int i = 0; i < N; ++i) {
    const Mat& A = instance.agent(i).A;
    const double half_deg = 0.5 * g.degree(i);
    const double col = A.cols() > 0 ? A.cwiseAbs().colwise().sum().maxCoeff() : 0.0;
    s.tau1.push_back(pick(half_deg * col));
    s.tau2.push_back(pick(half_deg));
    s.tau4.push_back(pick(0.0));
  }
  for (int e = 0; e < E; ++e) {
    const Mat& At = instance.agent(g.edge(e).tail).A;
    const Mat& Ah = instance.agent(g.edge(e).head).A;
    const Vec rows = 0.5 * (At.cwiseAbs().rowwise().sum() + Ah.cwiseAbs().rowwise().sum()).array() + 1.0;
    s.tau3.push_back(pick(rows.maxCoeff()));
  }
  return s;
}

Vec design_diagonal(const ProblemInstance& instance, const StepSizes& steps) {
  const Layout L(instance);
  const int l = instance.coupling_dim();
  Vec d(L.dim);
  for (int i = 0; i < instance.num_agents(); ++i) {
    d.segment(L.x[i], instance.n(i)).setConstant(1.0 / steps.tau1[i]);
    d.segment(L.sigma[i], l).setConstant(1.0 / steps.tau2[i]);
    d.segment(L.y[i], l).setConstant(1.0 / steps.tau4[i]);
  }
  for (int e = 0; e < instance.graph().num_edges(); ++e) {
    const int tail = instance.graph().edge(e).tail;
    d.segment(L.lambda[e], l).setConstant(1.0 / steps.tau3[e]);
    d.segment(L.mu[e], l).setConstant(1.0 / steps.tau4[tail]);
    d.segment(L.yest[e], l).setConstant(1.0 / steps.tau4[tail]);
  }
  return d;
}

namespace {

/// Upper-right coupling block [½AᵀB_l; ½B_l] placed at (x/σ rows, λ columns).
Mat coupling_block(const ProblemInstance& instance, const Layout& L) {
  const CommGraph& g = instance.graph();
  const int l = instance.coupling_dim();
  Mat C = Mat::Zero(L.dim, L.dim);
  for (int e = 0; e < g.num_edges(); ++e) {
    for (int end = 0; end < 2; ++end) {
      const int i = end == 0 ? g.edge(e).tail : g.edge(e).head;
      const double b = end == 0 ? -1.0 : 1.0;
      const Mat& A = instance.agent(i).A;
      C.block(L.x[i], L.lambda[e], instance.n(i), l) += 0.5 * b * A.transpose();
      C.block(L.sigma[i], L.lambda[e], l, l) += 0.5 * b * Mat::Identity(l, l);
    }
  }
  return C;
}

}  // namespace

Mat build_design_matrix(const ProblemInstance& instance, const StepSizes& steps) {
  const Layout L(instance);
  const Mat C = coupling_block(instance, L);
  Mat Phi = Mat(design_diagonal(instance, steps).asDiagonal()) - C - C.transpose();
  Eigen::LLT<Mat> llt(Phi);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "design matrix is not positive definite");
  return Phi;
}

Mat consensus_matrix(const ProblemInstance& instance) {
  const Layout L(instance);
  const CommGraph& g = instance.graph();
  const int l = instance.coupling_dim();
  const int base = L.lambda_end;
  Mat M = Mat::Zero(L.dim - base, L.dim - base);
  const Mat I = Mat::Identity(l, l);
  for (int i = 0; i < instance.num_agents(); ++i) {
    const int yi = L.y[i] - base;
    for (int e : g.out_edges(i)) {
      const int mu = L.mu[e] - base;
      const int ye = L.yest[e] - base;
      M.block(yi, mu, l, l) = -I;
      M.block(mu, yi, l, l) = I;
      M.block(mu, ye, l, l) = -I;
      M.block(ye, mu, l, l) = I;
    }
  }
  return M;
}

Mat linear_part_B(const ProblemInstance& instance) {
  const Layout L(instance);
  const Mat C = coupling_block(instance, L);
  return C - C.transpose();
}

Mat linear_part_A(const ProblemInstance& instance) {
  const Layout L(instance);
  Mat S = linear_part_B(instance);
  const int base = L.lambda_end;
  S.block(base, base, L.dim - base, L.dim - base) = consensus_matrix(instance);
  return S;
}

DrState DrState::from(const ProblemInstance& instance, Iterate tilde) {
  DrState s;
  s.tilde = std::move(tilde);
  s.psi = s.tilde;
  s.hat = s.tilde;
  s.bar = s.tilde;
  s.d2 = zero_blocks(instance.num_agents(), instance.coupling_dim());
  s.v_hat = s.d2;
  s.v_bar = s.d2;
  return s;
}

namespace kernels {

Vec reflect(const Vec& value, const Vec& tilde) {
  const Vec twice = 2.0 * value;
  return twice - tilde;
}

Vec relax(const Vec& tilde, double gamma, const Vec& bar, const Vec& psi) {
  const Vec diff = bar - psi;
  return tilde + (2.0 * gamma) * diff;
}

Vec coupling_sum(const Mat& A, const Vec& x, const Vec& sigma) {
  const Vec ax = A * x;
  return ax + sigma;
}

}  // namespace kernels

DrEngine::DrEngine(const ProblemInstance& instance, StepSizes steps, int threads)
    : instance_(instance), steps_(std::move(steps)), pool_(std::make_unique<WorkerPool>(threads)) {
  const CommGraph& g = instance.graph();
  const int N = instance.num_agents();
  if (static_cast<int>(steps_.tau1.size()) != N || static_cast<int>(steps_.tau2.size()) != N ||
      static_cast<int>(steps_.tau4.size()) != N || static_cast<int>(steps_.tau3.size()) != g.num_edges())
    throw Error(ErrorCode::DimensionMismatch, "step sizes do not match the instance");
  for (int i = 0; i < N; ++i) {
    prox_.emplace_back(instance.agent(i), steps_.tau1[i], steps_.tau2[i]);
    std::vector<double> tau4_in;
    for (int e : g.in_edges(i)) tau4_in.push_back(steps_.tau4[g.edge(e).tail]);
    projection_.emplace_back(instance, i, steps_.tau1[i], steps_.tau2[i], steps_.tau4[i], tau4_in);
  }
}

std::vector<SignedTerm> DrEngine::incident_terms(int i, const std::vector<Vec>& lambda) const {
  // Incident edges in ascending id; in-edges count +, out-edges −.
  const CommGraph& g = instance_.graph();
  std::vector<SignedTerm> terms;
  const auto& in = g.in_edges(i);
  const auto& out = g.out_edges(i);
  std::size_t a = 0, b = 0;
  while (a < in.size() || b < out.size()) {
    if (b == out.size() || (a < in.size() && in[a] < out[b]))
      terms.push_back({1.0, &lambda[in[a++]]});
    else
      terms.push_back({-1.0, &lambda[out[b++]]});
  }
  return terms;
}

void DrEngine::apply_A(const Iterate& tilde, Iterate& psi) const {
  const CommGraph& g = instance_.graph();
  const int l = instance_.coupling_dim();
  const AcuBlocks omega = acu(g, steps_.tau4, AcuBlocks{tilde.y, tilde.mu, tilde.yest});
  psi.y = omega.y;
  psi.mu = omega.mu;
  psi.yest = omega.yest;
  pool_->parallel_for(instance_.num_agents(), [&](int i) {
    const Vec lambda_iB = signed_sum(l, incident_terms(i, tilde.lambda));
    prox_[i].apply(tilde.x[i], tilde.sigma[i], lambda_iB, psi.x[i], psi.sigma[i]);
  });
}

void DrEngine::apply_B(const Iterate& hat, Iterate& bar, std::vector<Vec>& d2, std::vector<Vec>& v_hat,
                       std::vector<Vec>& v_bar) {
  const CommGraph& g = instance_.graph();
  const int l = instance_.coupling_dim();
  pool_->parallel_for(instance_.num_agents(), [&](int i) {
    v_hat[i] = kernels::coupling_sum(instance_.agent(i).A, hat.x[i], hat.sigma[i]);
    const Vec lambda_iB = signed_sum(l, incident_terms(i, hat.lambda));
    std::vector<Vec> yest_hat;
    for (int e : g.in_edges(i)) yest_hat.push_back(hat.yest[e]);
    ProjectionResult r = projection_[i].apply(hat.x[i], hat.sigma[i], lambda_iB, hat.y[i], yest_hat);
    bar.x[i] = std::move(r.x);
    bar.sigma[i] = std::move(r.sigma);
    bar.y[i] = std::move(r.y);
    for (int k = 0; k < g.in_degree(i); ++k) bar.yest[g.in_edges(i)[k]] = std::move(r.yest[k]);
    d2[i] = std::move(r.d2);
    v_bar[i] = kernels::coupling_sum(instance_.agent(i).A, bar.x[i], bar.sigma[i]);
  });
  for (int e = 0; e < g.num_edges(); ++e) {
    const int t = g.edge(e).tail, h = g.edge(e).head;
    bar.lambda[e] = edge_lambda_bar_update(hat.lambda[e], steps_.tau3[e], v_bar[t], v_bar[h], v_hat[t], v_hat[h]);
    bar.mu[e] = hat.mu[e];
  }
}

Iterate DrEngine::resolvent_A(const Iterate& tilde) const {
  // ψ = J_{Φ⁻¹𝒜}(ψ̃): the λ update needs the reflected x̂, σ̂.
  const CommGraph& g = instance_.graph();
  Iterate psi = tilde;
  apply_A(tilde, psi);
  std::vector<Vec> v_hat(instance_.num_agents());
  for (int i = 0; i < instance_.num_agents(); ++i)
    v_hat[i] = kernels::coupling_sum(instance_.agent(i).A, kernels::reflect(psi.x[i], tilde.x[i]),
                                     kernels::reflect(psi.sigma[i], tilde.sigma[i]));
  for (int e = 0; e < g.num_edges(); ++e)
    psi.lambda[e] = edge_lambda_update(tilde.lambda[e], steps_.tau3[e], v_hat[g.edge(e).tail], v_hat[g.edge(e).head]);
  return psi;
}

Iterate DrEngine::resolvent_B(const Iterate& hat, std::vector<Vec>* d2) {
  Iterate bar = hat;
  std::vector<Vec> duals(instance_.num_agents()), v_hat(instance_.num_agents()), v_bar(instance_.num_agents());
  apply_B(hat, bar, duals, v_hat, v_bar);
  if (d2) *d2 = std::move(duals);
  return bar;
}

void DrEngine::step(DrState& s, int k) {
  const CommGraph& g = instance_.graph();
  const int N = instance_.num_agents();
  const int E = g.num_edges();

  apply_A(s.tilde, s.psi);
  for (int i = 0; i < N; ++i) {
    s.hat.x[i] = kernels::reflect(s.psi.x[i], s.tilde.x[i]);
    s.hat.sigma[i] = kernels::reflect(s.psi.sigma[i], s.tilde.sigma[i]);
    s.hat.y[i] = kernels::reflect(s.psi.y[i], s.tilde.y[i]);
    s.v_hat[i] = kernels::coupling_sum(instance_.agent(i).A, s.hat.x[i], s.hat.sigma[i]);
  }
  for (int e = 0; e < E; ++e) {
    const int t = g.edge(e).tail, h = g.edge(e).head;
    s.psi.lambda[e] = edge_lambda_update(s.tilde.lambda[e], steps_.tau3[e], s.v_hat[t], s.v_hat[h]);
    s.hat.lambda[e] = kernels::reflect(s.psi.lambda[e], s.tilde.lambda[e]);
    s.hat.mu[e] = kernels::reflect(s.psi.mu[e], s.tilde.mu[e]);
    s.hat.yest[e] = kernels::reflect(s.psi.yest[e], s.tilde.yest[e]);
  }

  apply_B(s.hat, s.bar, s.d2, s.v_hat, s.v_bar);

  const double gamma = steps_.gamma_at(k);
  for (int i = 0; i < N; ++i) {
    s.tilde.x[i] = kernels::relax(s.tilde.x[i], gamma, s.bar.x[i], s.psi.x[i]);
    s.tilde.sigma[i] = kernels::relax(s.tilde.sigma[i], gamma, s.bar.sigma[i], s.psi.sigma[i]);
    s.tilde.y[i] = kernels::relax(s.tilde.y[i], gamma, s.bar.y[i], s.psi.y[i]);
  }
  for (int e = 0; e < E; ++e) {
    s.tilde.lambda[e] = kernels::relax(s.tilde.lambda[e], gamma, s.bar.lambda[e], s.psi.lambda[e]);
    s.tilde.mu[e] = kernels::relax(s.tilde.mu[e], gamma, s.bar.mu[e], s.psi.mu[e]);
    s.tilde.yest[e] = kernels::relax(s.tilde.yest[e], gamma, s.bar.yest[e], s.psi.yest[e]);
  }
}

TraceRecord compute_metrics(const ProblemInstance& instance, const Iterate& prev, const Iterate& cur,
                            const Vec* x_star) {
  const CommGraph& g = instance.graph();
  const int N = instance.num_agents();
  const int E = g.num_edges();
  TraceRecord r;
  for (int i = 0; i < N; ++i) {
    r.metric_a += (cur.x[i] - prev.x[i]).norm() / safe_norm(prev.x[i].norm());
    r.metric_b += (cur.y[i] - prev.y[i]).norm() / safe_norm(prev.y[i].norm());
  }
  r.metric_a /= N;
  r.metric_b /= N;

  std::vector<Vec> ax(N);
  Vec total = Vec::Zero(instance.coupling_dim());
  for (int i = 0; i < N; ++i) {
    ax[i] = instance.agent(i).A * cur.x[i];
    total += ax[i];
  }
  r.metric_c = (total - instance.capacity()).cwiseMax(0.0).norm();

  for (int e = 0; e < E; ++e) r.metric_d += (cur.yest[e] - cur.y[g.edge(e).tail]).norm();
  r.metric_d /= E;

  for (int i = 0; i < N; ++i) {
    Vec others = Vec::Zero(instance.coupling_dim());
    for (int j = 0; j < N; ++j)
      if (j != i) others += ax[j];
    r.metric_e += (cur.sigma[i] - others).norm();
  }
  r.metric_e /= N;

  if (x_star) {
    for (int i = 0; i < N; ++i) {
      const auto xs = instance.x_block(*x_star, i);
      r.metric_f += (cur.x[i] - xs).norm() / safe_norm(xs.norm());
    }
    r.metric_f /= N;
  }
  return r;
}

double fixed_point_residual(const Iterate& psi, const Iterate& bar) {
  double diff = 0.0, size = 0.0;
  auto acc = [&](const std::vector<Vec>& a, const std::vector<Vec>& b) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      diff += (b[k] - a[k]).squaredNorm();
      size += a[k].squaredNorm();
    }
  };
  acc(psi.x, bar.x);
  acc(psi.sigma, bar.sigma);
  acc(psi.lambda, bar.lambda);
  acc(psi.y, bar.y);
  acc(psi.mu, bar.mu);
  acc(psi.yest, bar.yest);
  return std::sqrt(diff) / std::max(1.0, std::sqrt(size));
}

RunResult drive(const ProblemInstance& instance, const RunOptions& options, StepSizes steps,
                const std::function<void(DrState&, int)>& advance) {
  using Clock = std::chrono::steady_clock;
  RunResult out;
  DrState state = DrState::from(instance, options.init ? *options.init : Iterate::zeros(instance));
  const Vec* x_star = options.x_star ? &*options.x_star : nullptr;
  if (options.keep_tilde_history) out.tilde_history.push_back(state.tilde);

  Iterate prev = state.tilde;
  Solution& sol = out.solution;
  for (int k = 0; k < options.max_iter; ++k) {
    const auto start = Clock::now();
    advance(state, k);
    TraceRecord rec = compute_metrics(instance, prev, state.psi, x_star);
    rec.k = k + 1;
    rec.residual = fixed_point_residual(state.psi, state.bar);
    if (options.timing) rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    out.trace.push_back(rec);
    if (options.keep_tilde_history) out.tilde_history.push_back(state.tilde);
    prev = state.psi;
    sol.iterations = k + 1;
    sol.residual = rec.residual;
    if (rec.residual <= options.tol) {
      sol.converged = true;
      break;
    }
  }

  sol.psi = state.psi;
  sol.bar = state.bar;
  sol.tilde = state.tilde;
  sol.d2 = state.d2;
  sol.x = stacked_x(instance, state.psi);
  sol.multiplier = Vec::Zero(instance.coupling_dim());
  for (const Vec& d : state.d2) sol.multiplier += d;
  sol.kkt_residual = kkt_check(instance, sol.x, sol.multiplier);
  sol.steps = std::move(steps);
  return out;
}

RunResult run(const ProblemInstance& instance, const RunOptions& options) {
  StepSizes steps = options.steps ? *options.steps : choose_step_sizes(instance, options.rule);
  DrEngine engine(instance, steps, options.threads);
  return drive(instance, options, std::move(steps), [&](DrState& s, int k) { engine.step(s, k); });
}

void require_converged(const RunResult& result) {
  if (!result.solution.converged)
    throw Error(ErrorCode::MaxIterExceeded, "no convergence after " + std::to_string(result.solution.iterations) +
                                                " iterations (residual " +
                                                std::to_string(result.solution.residual) + ")");
}

}  // namespace aggsplit
