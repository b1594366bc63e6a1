#include "aggsplit/network_sim.hpp"

#include <algorithm>
#include <ostream>

#include "aggsplit/error.hpp"
#include "aggsplit/io.hpp"
#include "aggsplit/parallel.hpp"
#include "aggsplit/resolvents.hpp"

namespace aggsplit::sim {

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::AcuEstimatePush: return "AcuEstimatePush";
    case Phase::AcuYPush: return "AcuYPush";
    case Phase::AcuMuPush: return "AcuMuPush";
    case Phase::LambdaTildePush: return "LambdaTildePush";
    case Phase::HatSumPush: return "HatSumPush";
    case Phase::LambdaHatPush: return "LambdaHatPush";
    case Phase::BarSumPush: return "BarSumPush";
  }
  return "?";
}

namespace {

using Inbox = std::vector<Message>;

const Vec& received(const Inbox& inbox, int from, int edge) {
  for (const Message& m : inbox)
    if (m.from == from && m.edge == edge) return m.payload;
  throw Error(ErrorCode::ProtocolViolation,
              "no message from entity " + std::to_string(from) + " about edge " + std::to_string(edge));
}

struct Owned {
  Vec x, sigma, y;
  std::vector<Vec> yest;  // in-edge order
};

struct AgentNode {
  AgentNode(const ProblemInstance& instance, const StepSizes& steps, int i)
      : id(i),
        A(instance.agent(i).A),
        tau4(steps.tau4[i]),
        in_edges(instance.graph().in_edges(i)),
        out_edges(instance.graph().out_edges(i)),
        prox(instance.agent(i), steps.tau1[i], steps.tau2[i]),
        tau4_in(tail_taus(instance, steps, i)),
        proj(instance, i, steps.tau1[i], steps.tau2[i], steps.tau4[i], tau4_in) {
    const CommGraph& g = instance.graph();
    for (int e : in_edges) tails.push_back(g.edge(e).tail);
    for (int e : out_edges) heads.push_back(g.edge(e).head);
    std::size_t a = 0, b = 0;
    while (a < in_edges.size() || b < out_edges.size()) {
      if (b == out_edges.size() || (a < in_edges.size() && in_edges[a] < out_edges[b]))
        incident.push_back({in_edges[a++], 1.0});
      else
        incident.push_back({out_edges[b++], -1.0});
    }
  }

  static std::vector<double> tail_taus(const ProblemInstance& instance, const StepSizes& steps, int i) {
    std::vector<double> out;
    for (int e : instance.graph().in_edges(i)) out.push_back(steps.tau4[instance.graph().edge(e).tail]);
    return out;
  }

  int id;
  Mat A;
  double tau4;
  std::vector<int> in_edges, out_edges, tails, heads;
  std::vector<std::pair<int, double>> incident;  // ascending edge id, sign
  PrimalProx prox;
  std::vector<double> tau4_in;  // tails' τ₄, in-edge order
  LocalProjection proj;
  Owned tilde, psi, hat, bar;
  Vec d2, v_hat, v_bar;
  Inbox inbox;
};

struct EdgeNode {
  int e = 0, tail = 0, head = 0;
  double tau3 = 0.0, tau4_tail = 0.0;
  Vec lambda_tilde, mu_tilde, lambda, mu, lambda_hat, mu_hat, lambda_bar, mu_bar;
  Vec yest_tilde_rx, v_hat_tail, v_hat_head;
  Inbox inbox;
};

}  // namespace

struct SimWorld::Impl {
  const ProblemInstance* instance = nullptr;
  StepSizes steps;
  int N = 0, E = 0, l = 0;
  std::vector<std::unique_ptr<AgentNode>> agents;
  std::vector<EdgeNode> edges;
  std::vector<std::vector<int>> neighbor_lists;
  std::vector<std::vector<Message>> outbox;  // per entity
  std::unique_ptr<WorkerPool> pool;
  bool strict = true;
  std::ostream* log = nullptr;
  AuditReport traffic;
  int round = 0;
  Phase phase = Phase::AcuEstimatePush;

  int edge_id(int e) const { return N + e; }

  bool incident(int from, int to, int e) const {
    const int total = N + E;
    if (from < 0 || from >= total || to < 0 || to >= total || e < 0 || e >= E) return false;
    const EdgeNode& ed = edges[e];
    const bool from_agent = from < N, to_agent = to < N;
    if (from_agent && !to_agent) return to == edge_id(e) && (from == ed.tail || from == ed.head);
    if (!from_agent && to_agent) return from == edge_id(e) && (to == ed.tail || to == ed.head);
    if (from_agent && to_agent) return (from == ed.tail && to == ed.head) || (from == ed.head && to == ed.tail);
    return false;
  }

  void post(int from, int to, int e, Vec payload) {
    outbox[from].push_back(Message{round, phase, from, to, e, std::move(payload)});
  }

  void record(const Message& m) {
    auto& t = traffic;
    if (static_cast<int>(t.messages_per_round.size()) <= m.round) {
      t.messages_per_round.resize(m.round + 1, 0);
      t.bytes_per_round.resize(m.round + 1, 0);
    }
    ++t.messages_per_round[m.round];
    t.bytes_per_round[m.round] += static_cast<std::size_t>(m.payload.size()) * sizeof(double);
    t.pairs.insert({m.from, m.to});
    if (m.from >= 0 && m.from < N) t.agent_payload[m.from] += static_cast<std::size_t>(m.payload.size());
    if (log) {
      const Json j = {{"round", m.round}, {"phase", to_string(m.phase)}, {"from", m.from},
                      {"to", m.to},       {"edge", m.edge},             {"len", m.payload.size()}};
      *log << j.dump() << '\n';
    }
  }

  /// Checks and records one message; false when it must be dropped.
  bool admit(const Message& m) {
    if (!incident(m.from, m.to, m.edge)) {
      if (strict)
        throw Error(ErrorCode::ProtocolViolation, "entity " + std::to_string(m.from) + " is not incident to entity " +
                                                      std::to_string(m.to) + " in phase " + to_string(m.phase));
      traffic.violations.push_back({m.round, m.phase, m.from, m.to, m.edge});
      return false;
    }
    record(m);
    return true;
  }

  Inbox& inbox_of(int id) { return id < N ? agents[id]->inbox : edges[id - N].inbox; }

  /// Ends the phase: every posted message is delivered in (from, to) order.
  void deliver() {
    for (auto& a : agents) a->inbox.clear();
    for (auto& e : edges) e.inbox.clear();
    std::vector<Message> all;
    for (auto& box : outbox) {
      for (Message& m : box)
        if (admit(m)) all.push_back(std::move(m));
      box.clear();
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const Message& a, const Message& b) { return std::tie(a.from, a.to) < std::tie(b.from, b.to); });
    for (Message& m : all) inbox_of(m.to).push_back(std::move(m));
  }

  void agents_do(const std::function<void(AgentNode&)>& fn) {
    pool->parallel_for(N, [&](int i) { fn(*agents[i]); });
  }
  void edges_do(const std::function<void(EdgeNode&)>& fn) {
    pool->parallel_for(E, [&](int e) { fn(edges[e]); });
  }

  void run_round(int k);
};

void SimWorld::Impl::run_round(int k) {
  round = k;
  const double gamma = steps.gamma_at(k);

  phase = Phase::AcuEstimatePush;
  agents_do([&](AgentNode& a) {
    for (std::size_t q = 0; q < a.in_edges.size(); ++q) {
      post(a.id, a.tails[q], a.in_edges[q], a.tilde.yest[q]);
      post(a.id, edge_id(a.in_edges[q]), a.in_edges[q], a.tilde.yest[q]);
    }
  });
  edges_do([&](EdgeNode& ed) { post(edge_id(ed.e), ed.tail, ed.e, ed.mu_tilde); });
  deliver();

  agents_do([&](AgentNode& a) {
    std::vector<std::pair<const Vec*, const Vec*>> pairs;
    for (std::size_t q = 0; q < a.out_edges.size(); ++q) {
      const int e = a.out_edges[q];
      pairs.emplace_back(&received(a.inbox, edge_id(e), e), &received(a.inbox, a.heads[q], e));
    }
    a.psi.y = acu_own(a.tau4, a.tilde.y, pairs);
  });
  edges_do([&](EdgeNode& ed) { ed.yest_tilde_rx = received(ed.inbox, ed.head, ed.e); });

  phase = Phase::AcuYPush;
  agents_do([&](AgentNode& a) {
    for (int e : a.out_edges) post(a.id, edge_id(e), e, a.psi.y);
  });
  deliver();

  edges_do([&](EdgeNode& ed) {
    ed.mu = acu_mu(ed.tau4_tail, ed.mu_tilde, ed.yest_tilde_rx, received(ed.inbox, ed.tail, ed.e));
  });

  phase = Phase::AcuMuPush;
  edges_do([&](EdgeNode& ed) { post(edge_id(ed.e), ed.head, ed.e, ed.mu); });
  deliver();

  agents_do([&](AgentNode& a) {
    a.psi.yest.resize(a.in_edges.size());
    for (std::size_t q = 0; q < a.in_edges.size(); ++q) {
      const int e = a.in_edges[q];
      a.psi.yest[q] = acu_estimate(a.tau4_in[q], a.tilde.yest[q], received(a.inbox, edge_id(e), e));
    }
  });

  phase = Phase::LambdaTildePush;
  edges_do([&](EdgeNode& ed) {
    post(edge_id(ed.e), ed.tail, ed.e, ed.lambda_tilde);
    post(edge_id(ed.e), ed.head, ed.e, ed.lambda_tilde);
  });
  deliver();

  agents_do([&](AgentNode& a) {
    std::vector<SignedTerm> terms;
    for (const auto& [e, sign] : a.incident) terms.push_back({sign, &received(a.inbox, edge_id(e), e)});
    const Vec lambda_iB = signed_sum(l, terms);
    a.prox.apply(a.tilde.x, a.tilde.sigma, lambda_iB, a.psi.x, a.psi.sigma);
    a.hat.x = kernels::reflect(a.psi.x, a.tilde.x);
    a.hat.sigma = kernels::reflect(a.psi.sigma, a.tilde.sigma);
    a.hat.y = kernels::reflect(a.psi.y, a.tilde.y);
    a.hat.yest.resize(a.in_edges.size());
    for (std::size_t q = 0; q < a.in_edges.size(); ++q) a.hat.yest[q] = kernels::reflect(a.psi.yest[q], a.tilde.yest[q]);
    a.v_hat = kernels::coupling_sum(a.A, a.hat.x, a.hat.sigma);
  });

  phase = Phase::HatSumPush;
  agents_do([&](AgentNode& a) {
    for (const auto& inc : a.incident) post(a.id, edge_id(inc.first), inc.first, a.v_hat);
  });
  deliver();

  edges_do([&](EdgeNode& ed) {
    ed.v_hat_tail = received(ed.inbox, ed.tail, ed.e);
    ed.v_hat_head = received(ed.inbox, ed.head, ed.e);
    ed.lambda = edge_lambda_update(ed.lambda_tilde, ed.tau3, ed.v_hat_tail, ed.v_hat_head);
    ed.lambda_hat = kernels::reflect(ed.lambda, ed.lambda_tilde);
    ed.mu_hat = kernels::reflect(ed.mu, ed.mu_tilde);
  });

  phase = Phase::LambdaHatPush;
  edges_do([&](EdgeNode& ed) {
    post(edge_id(ed.e), ed.tail, ed.e, ed.lambda_hat);
    post(edge_id(ed.e), ed.head, ed.e, ed.lambda_hat);
  });
  deliver();

  agents_do([&](AgentNode& a) {
    std::vector<SignedTerm> terms;
    for (const auto& [e, sign] : a.incident) terms.push_back({sign, &received(a.inbox, edge_id(e), e)});
    const Vec lambda_iB = signed_sum(l, terms);
    ProjectionResult r = a.proj.apply(a.hat.x, a.hat.sigma, lambda_iB, a.hat.y, a.hat.yest);
    a.bar.x = std::move(r.x);
    a.bar.sigma = std::move(r.sigma);
    a.bar.y = std::move(r.y);
    a.bar.yest = std::move(r.yest);
    a.d2 = std::move(r.d2);
    a.v_bar = kernels::coupling_sum(a.A, a.bar.x, a.bar.sigma);
  });

  phase = Phase::BarSumPush;
  agents_do([&](AgentNode& a) {
    for (const auto& inc : a.incident) post(a.id, edge_id(inc.first), inc.first, a.v_bar);
  });
  deliver();

  edges_do([&](EdgeNode& ed) {
    ed.lambda_bar = edge_lambda_bar_update(ed.lambda_hat, ed.tau3, received(ed.inbox, ed.tail, ed.e),
                                           received(ed.inbox, ed.head, ed.e), ed.v_hat_tail, ed.v_hat_head);
    ed.mu_bar = ed.mu_hat;
    ed.lambda_tilde = kernels::relax(ed.lambda_tilde, gamma, ed.lambda_bar, ed.lambda);
    ed.mu_tilde = kernels::relax(ed.mu_tilde, gamma, ed.mu_bar, ed.mu);
  });
  agents_do([&](AgentNode& a) {
    a.tilde.x = kernels::relax(a.tilde.x, gamma, a.bar.x, a.psi.x);
    a.tilde.sigma = kernels::relax(a.tilde.sigma, gamma, a.bar.sigma, a.psi.sigma);
    a.tilde.y = kernels::relax(a.tilde.y, gamma, a.bar.y, a.psi.y);
    for (std::size_t q = 0; q < a.in_edges.size(); ++q)
      a.tilde.yest[q] = kernels::relax(a.tilde.yest[q], gamma, a.bar.yest[q], a.psi.yest[q]);
  });
  ++traffic.rounds;
}

SimWorld::SimWorld(const ProblemInstance& instance, const StepSizes& steps, const Iterate& init, int threads)
    : impl_(std::make_unique<Impl>()) {
  Impl& w = *impl_;
  const CommGraph& g = instance.graph();
  w.instance = &instance;
  w.steps = steps;
  w.N = instance.num_agents();
  w.E = g.num_edges();
  w.l = instance.coupling_dim();
  if (static_cast<int>(steps.tau1.size()) != w.N || static_cast<int>(steps.tau3.size()) != w.E)
    throw Error(ErrorCode::DimensionMismatch, "step sizes do not match the instance");
  if (static_cast<int>(init.x.size()) != w.N || static_cast<int>(init.lambda.size()) != w.E)
    throw Error(ErrorCode::DimensionMismatch, "initial iterate does not match the instance");
  w.pool = std::make_unique<WorkerPool>(threads);
  w.outbox.resize(w.N + w.E);
  w.neighbor_lists.resize(w.N + w.E);
  w.traffic.agent_payload.assign(w.N, 0);

  for (int i = 0; i < w.N; ++i) {
    auto a = std::make_unique<AgentNode>(instance, steps, i);
    a->tilde.x = init.x[i];
    a->tilde.sigma = init.sigma[i];
    a->tilde.y = init.y[i];
    for (int e : a->in_edges) a->tilde.yest.push_back(init.yest[e]);
    a->psi = a->tilde;
    a->hat = a->tilde;
    a->bar = a->tilde;
    a->d2 = Vec::Zero(w.l);
    a->v_hat = Vec::Zero(w.l);
    a->v_bar = Vec::Zero(w.l);
    w.agents.push_back(std::move(a));
  }
  for (int e = 0; e < w.E; ++e) {
    EdgeNode ed;
    ed.e = e;
    ed.tail = g.edge(e).tail;
    ed.head = g.edge(e).head;
    ed.tau3 = steps.tau3[e];
    ed.tau4_tail = steps.tau4[ed.tail];
    ed.lambda_tilde = init.lambda[e];
    ed.mu_tilde = init.mu[e];
    ed.lambda = ed.lambda_hat = ed.lambda_bar = ed.lambda_tilde;
    ed.mu = ed.mu_hat = ed.mu_bar = ed.mu_tilde;
    auto& tl = w.neighbor_lists[ed.tail];
    auto& hd = w.neighbor_lists[ed.head];
    tl.push_back(w.N + e);
    tl.push_back(ed.head);
    hd.push_back(w.N + e);
    hd.push_back(ed.tail);
    w.neighbor_lists[w.N + e] = {std::min(ed.tail, ed.head), std::max(ed.tail, ed.head)};
    w.edges.push_back(std::move(ed));
  }
  for (auto& list : w.neighbor_lists) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
}

SimWorld::~SimWorld() = default;
SimWorld::SimWorld(SimWorld&&) noexcept = default;
SimWorld& SimWorld::operator=(SimWorld&&) noexcept = default;

int SimWorld::num_agents() const { return impl_->N; }
int SimWorld::num_edges() const { return impl_->E; }
int SimWorld::num_entities() const { return impl_->N + impl_->E; }

EntityKind SimWorld::kind(int id) const {
  if (id < 0 || id >= num_entities()) throw Error(ErrorCode::DimensionMismatch, "no entity " + std::to_string(id));
  return id < impl_->N ? EntityKind::Agent : EntityKind::EdgeArbitrator;
}

const std::vector<int>& SimWorld::neighbors(int id) const {
  kind(id);
  return impl_->neighbor_lists[id];
}

void SimWorld::run_round(int k) { impl_->run_round(k); }

void SimWorld::snapshot(DrState& s) const {
  const Impl& w = *impl_;
  auto resize = [&](Iterate& it) {
    it.x.resize(w.N);
    it.sigma.resize(w.N);
    it.y.resize(w.N);
    it.lambda.resize(w.E);
    it.mu.resize(w.E);
    it.yest.resize(w.E);
  };
  resize(s.tilde);
  resize(s.psi);
  resize(s.hat);
  resize(s.bar);
  s.d2.resize(w.N);
  s.v_hat.resize(w.N);
  s.v_bar.resize(w.N);
  for (const auto& a : w.agents) {
    const int i = a->id;
    const std::pair<Iterate*, const Owned*> parts[] = {
        {&s.tilde, &a->tilde}, {&s.psi, &a->psi}, {&s.hat, &a->hat}, {&s.bar, &a->bar}};
    for (const auto& [it, own] : parts) {
      it->x[i] = own->x;
      it->sigma[i] = own->sigma;
      it->y[i] = own->y;
      for (std::size_t q = 0; q < a->in_edges.size(); ++q) it->yest[a->in_edges[q]] = own->yest[q];
    }
    s.d2[i] = a->d2;
    s.v_hat[i] = a->v_hat;
    s.v_bar[i] = a->v_bar;
  }
  for (const EdgeNode& ed : w.edges) {
    s.tilde.lambda[ed.e] = ed.lambda_tilde;
    s.tilde.mu[ed.e] = ed.mu_tilde;
    s.psi.lambda[ed.e] = ed.lambda;
    s.psi.mu[ed.e] = ed.mu;
    s.hat.lambda[ed.e] = ed.lambda_hat;
    s.hat.mu[ed.e] = ed.mu_hat;
    s.bar.lambda[ed.e] = ed.lambda_bar;
    s.bar.mu[ed.e] = ed.mu_bar;
  }
}

Iterate SimWorld::tilde() const {
  DrState s;
  snapshot(s);
  return s.tilde;
}

std::size_t SimWorld::agent_state_size(int i) const {
  if (i < 0 || i >= impl_->N) throw Error(ErrorCode::DimensionMismatch, "no agent " + std::to_string(i));
  const Owned& o = impl_->agents[i]->tilde;
  std::size_t size = static_cast<std::size_t>(o.x.size() + o.sigma.size() + o.y.size());
  for (const Vec& v : o.yest) size += static_cast<std::size_t>(v.size());
  return size;
}

void SimWorld::set_strict(bool strict) { impl_->strict = strict; }
void SimWorld::set_message_log(std::ostream* log) { impl_->log = log; }

void SimWorld::inject(const Message& message) {
  Message m = message;
  if (impl_->admit(m)) impl_->inbox_of(m.to).push_back(std::move(m));
}

const AuditReport& SimWorld::traffic() const { return impl_->traffic; }

SimWorld spawn_topology(const ProblemInstance& instance, const StepSizes& steps, const Iterate& init, int threads) {
  return SimWorld(instance, steps, init, threads);
}

AuditReport locality_audit(SimWorld& world, const ProblemInstance& instance, int rounds) {
  const int start = world.traffic().rounds;
  for (int k = 0; k < rounds; ++k) world.run_round(start + k);
  AuditReport report = world.traffic();

  // Independent incidence check from the graph itself.
  const CommGraph& g = instance.graph();
  const int N = g.n_agents();
  auto allowed = [&](int a, int b) {
    if (a < N && b < N) return g.find_edge(a, b) >= 0 || g.find_edge(b, a) >= 0;
    if (a >= N && b >= N) return false;
    const int agent = std::min(a, b);
    const int e = std::max(a, b) - N;
    if (e >= g.num_edges()) return false;
    return g.edge(e).tail == agent || g.edge(e).head == agent;
  };
  for (const auto& [a, b] : report.pairs)
    if (!allowed(a, b)) report.violations.push_back({-1, Phase::AcuEstimatePush, a, b, -1});
  return report;
}

std::size_t messages_per_round(const CommGraph& graph) { return 13 * static_cast<std::size_t>(graph.num_edges()); }

RunResult run_simulated(const ProblemInstance& instance, const RunOptions& options, std::ostream* message_log) {
  StepSizes steps = options.steps ? *options.steps : choose_step_sizes(instance, options.rule);
  SimWorld world(instance, steps, options.init ? *options.init : Iterate::zeros(instance), options.threads);
  world.set_message_log(message_log);
  return drive(instance, options, std::move(steps), [&](DrState& s, int k) {
    world.run_round(k);
    world.snapshot(s);
  });
}

}  // namespace aggsplit::sim
