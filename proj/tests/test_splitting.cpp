#include <cmath>
#include <random>

#include "aggsplit/error.hpp"
#include "aggsplit/oracle.hpp"
#include "aggsplit/splitting.hpp"
#include "dense.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace aggsplit;

namespace {

double lambda_min(const Mat& M) { return Eigen::SelfAdjointEigenSolver<Mat>(M).eigenvalues().minCoeff(); }

ProblemInstance zero_coupling_instance() {
  std::vector<AgentSpec> agents;
  for (int i = 0; i < 3; ++i) {
    AgentSpec a;
    a.objective.H = Mat::Identity(3, 3);
    a.objective.g = Vec::Zero(3);
    a.A = Mat::Zero(1, 2);
    a.feasible_set = LocalFeasibleSet::box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
    agents.push_back(a);
  }
  return build_problem(agents, Vec::Constant(1, 1.0), CommGraph(3, {{0, 1}, {1, 2}, {2, 0}}));
}

}  // namespace

TEST_CASE("Gershgorin step sizes") {
  SUBCASE("zero coupling matrices give the free value for x") {
    const ProblemInstance inst = zero_coupling_instance();
    const StepSizes s = choose_step_sizes(inst);
    for (double t : s.tau1) CHECK(t == 1.0);
    for (double t : s.tau4) CHECK(t == 1.0);
  }
  SUBCASE("each row dominates its off-diagonal sum by the safety factor") {
    std::mt19937 rng(4);
    for (int t = 0; t < 30; ++t) {
      const ProblemInstance inst = fixtures::random_instance(rng, {6, 3, 2});
      StepSizeRule rule;
      rule.safety = 0.3 + 0.6 * (rng() % 100) / 100.0;
      const StepSizes s = choose_step_sizes(inst, rule);
      const Mat Phi = build_design_matrix(inst, s);
      for (int r = 0; r < Phi.rows(); ++r) {
        const double off = Phi.row(r).cwiseAbs().sum() - std::abs(Phi(r, r));
        if (off == 0.0) continue;
        const double tau = 1.0 / Phi(r, r);
        if (tau > rule.floor * (1 + 1e-12) && tau < rule.cap * (1 - 1e-12))
          CHECK(Phi(r, r) >= off / rule.safety * (1 - 1e-12));
      }
    }
  }
}

TEST_CASE("design matrix") {
  const ProblemInstance inst = fixtures::two_agent();
  const StepSizes s = choose_step_sizes(inst);
  const Mat Phi = build_design_matrix(inst, s);
  CHECK((Phi - Phi.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(lambda_min(Phi) > 0.0);
  CHECK((Phi - dense::assemble(inst, s).Phi).cwiseAbs().maxCoeff() <= 1e-15);

  SUBCASE("2-agent entries by hand") {
    // ψ = [x0, x1, σ0, σ1, λ01, λ10, y0, μ01, y01, y1, μ10, y10]
    CHECK(Phi.rows() == 12);
    CHECK(Phi(0, 0) == 1.0 / s.tau1[0]);
    CHECK(Phi(0, 4) == 0.5);   // tail of edge 0→1: −½·(−1)·A
    CHECK(Phi(0, 5) == -0.5);  // head of edge 1→0
    CHECK(Phi(3, 4) == -0.5);
    CHECK(Phi(3, 5) == 0.5);
    CHECK(Phi(6, 7) == 0.0);
    CHECK(Phi(7, 7) == 1.0 / s.tau4[0]);
  }

  SUBCASE("bad step sizes are rejected") {
    StepSizes bad = s;
    bad.tau1 = {1e3, 1e3};
    bad.tau3 = {1e3, 1e3};
    CHECK_THROWS_AS(build_design_matrix(inst, bad), Error);
  }

  SUBCASE("random instances agree with the hand assembly") {
    std::mt19937 rng(9);
    for (int t = 0; t < 20; ++t) {
      const ProblemInstance r = fixtures::random_instance(rng);
      const StepSizes rs = choose_step_sizes(r);
      CHECK((build_design_matrix(r, rs) - dense::assemble(r, rs).Phi).cwiseAbs().maxCoeff() <= 1e-15);
    }
  }
}

TEST_CASE("linear parts are skew-symmetric") {
  std::mt19937 rng(12);
  for (int t = 0; t < 20; ++t) {
    const ProblemInstance inst = fixtures::random_instance(rng, {5, 3, 2});
    const StepSizes s = choose_step_sizes(inst);
    const Mat SA = linear_part_A(inst), SB = linear_part_B(inst);
    CHECK((SA + SA.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((SB + SB.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const dense::Ops ops = dense::assemble(inst, s);
    CHECK((SA - ops.S_A).cwiseAbs().maxCoeff() == 0.0);
    CHECK((SB - ops.S_B).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("layout dimension") {
  std::mt19937 rng(1);
  for (int t = 0; t < 10; ++t) {
    const ProblemInstance inst = fixtures::random_instance(rng, {6, 3, 3});
    const int N = inst.num_agents(), E = inst.graph().num_edges(), l = inst.coupling_dim();
    CHECK(Layout(inst).dim == inst.total_x() + N * l + E * l + (2 * E + N) * l);
    const Vec v = dense::random_point(inst, rng);
    CHECK(pack(inst, unpack(inst, v)) == v);
  }
}

TEST_CASE("one pass matches the dense DR operator") {
  std::mt19937 rng(31);
  for (int t = 0; t < 15; ++t) {
    const ProblemInstance inst = t == 0 ? fixtures::two_agent(1.0) : fixtures::random_instance(rng);
    const StepSizes s = choose_step_sizes(inst);
    const dense::Ops ops = dense::assemble(inst, s);
    DrEngine engine(inst, s);
    const Vec tilde = t == 0 ? Vec(Vec::Zero(Layout(inst).dim)) : dense::random_point(inst, rng, 2.0);
    DrState st = DrState::from(inst, unpack(inst, tilde));
    engine.step(st, 0);

    const Vec psi = dense::resolvent_A(ops, tilde);
    CHECK((pack(inst, st.psi) - psi).cwiseAbs().maxCoeff() <= 1e-8);
    const Vec hat = 2.0 * psi - tilde;
    CHECK((pack(inst, st.hat) - hat).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(dense::inclusion_residual_B(inst, ops, pack(inst, st.hat), pack(inst, st.bar)) <= 1e-8);
    // ½(I + R_B R_A) ψ̃ with R = 2J − I.
    const Vec rb = 2.0 * pack(inst, st.bar) - hat;
    const Vec classical = 0.5 * (tilde + rb);
    CHECK((pack(inst, st.tilde) - classical).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("gamma zero leaves the iterate unchanged") {
  std::mt19937 rng(6);
  const ProblemInstance inst = fixtures::random_instance(rng);
  StepSizes s = choose_step_sizes(inst);
  s.gamma = 0.0;
  DrEngine engine(inst, s);
  const Iterate start = unpack(inst, dense::random_point(inst, rng));
  DrState st = DrState::from(inst, start);
  engine.step(st, 0);
  CHECK(st.tilde == start);
}

TEST_CASE("gamma sequence overrides the constant") {
  StepSizes s;
  s.gamma = 0.5;
  s.gamma_sequence = {0.1, 0.9};
  CHECK(s.gamma_at(0) == 0.1);
  CHECK(s.gamma_at(1) == 0.9);
  CHECK(s.gamma_at(2) == 0.5);
}

TEST_CASE("two-agent runs") {
  SUBCASE("inactive constraint") {
    const RunResult r = run(fixtures::two_agent(10.0));
    REQUIRE(r.solution.converged);
    CHECK(std::abs(r.solution.x[0] - 1.0) <= 1e-4);
    CHECK(std::abs(r.solution.x[1] - 1.0) <= 1e-4);
  }
  SUBCASE("active constraint") {
    const RunResult r = run(fixtures::two_agent(1.0));
    REQUIRE(r.solution.converged);
    CHECK(std::abs(r.solution.x[0] - 0.5) <= 0.5e-4);
    CHECK(std::abs(r.solution.x[1] - 0.5) <= 0.5e-4);
    CHECK(r.solution.multiplier[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(static_cast<int>(r.trace.size()) == r.solution.iterations);
  }
}

TEST_CASE("converged runs meet the tolerance contracts") {
  std::mt19937 rng(41);
  for (int t = 0; t < 8; ++t) {
    const ProblemInstance inst = t == 0 ? fixtures::two_agent(1.0) : fixtures::random_instance(rng);
    RunOptions o;
    const RunResult r = run(inst, o);
    REQUIRE(r.solution.converged);
    const TraceRecord& last = r.trace.back();
    CHECK(last.residual <= o.tol);
    CHECK(last.metric_c <= 10 * o.tol);
    CHECK(last.metric_d <= 10 * o.tol);
    CHECK(last.metric_e <= 10 * o.tol);
    CHECK(r.solution.kkt_residual <= 100 * o.tol);
    CHECK(operator_zero_residual(inst, r.solution.psi) <= 100 * o.tol);
    const CentralizedSolution c = solve_centralized(inst);
    CHECK((r.solution.x - c.x).norm() / std::max(c.x.norm(), 1e-12) <= 1e-4);
  }
}

TEST_CASE("a converged point is a fixed point of the pass") {
  std::mt19937 rng(2);
  const ProblemInstance inst = fixtures::random_instance(rng);
  RunOptions o;
  o.tol = 1e-11;
  o.max_iter = 50000;
  const RunResult r = run(inst, o);
  REQUIRE(r.solution.converged);
  DrEngine engine(inst, r.solution.steps);
  DrState st = DrState::from(inst, r.solution.tilde);
  engine.step(st, 0);
  CHECK((pack(inst, st.tilde) - pack(inst, r.solution.tilde)).norm() <= 1e-7);
}

TEST_CASE("Fejer monotonicity in the design norm") {
  std::mt19937 rng(77);
  for (int t = 0; t < 4; ++t) {
    const ProblemInstance inst = t == 0 ? fixtures::two_agent(1.0) : fixtures::random_instance(rng);
    RunOptions o;
    o.tol = 1e-12;
    o.max_iter = 30000;
    o.keep_tilde_history = true;
    o.init = unpack(inst, dense::random_point(inst, rng));
    const RunResult r = run(inst, o);
    const Mat Phi = build_design_matrix(inst, r.solution.steps);
    const Vec limit = pack(inst, r.solution.tilde);
    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (const Iterate& it : r.tilde_history) {
      const Vec d = pack(inst, it) - limit;
      const double dist = std::sqrt(d.dot(Phi * d));
      if (dist > prev + 1e-9) monotone = false;
      prev = dist;
    }
    CHECK(monotone);
  }
}

TEST_CASE("metrics") {
  const ProblemInstance inst = fixtures::two_agent(1.0);
  Iterate a = Iterate::zeros(inst), b = Iterate::zeros(inst);
  b.x = {Vec::Constant(1, 0.25), Vec::Constant(1, 0.25)};
  b.sigma = {Vec::Constant(1, 0.25), Vec::Constant(1, 0.25)};
  b.y = {Vec::Constant(1, 2.0), Vec::Constant(1, 3.0)};
  b.yest = {Vec::Constant(1, 2.0), Vec::Constant(1, 3.0)};  // edge 0→1 copies y0, 1→0 copies y1
  const TraceRecord r = compute_metrics(inst, a, b, nullptr);
  CHECK(r.metric_c == 0.0);
  CHECK(r.metric_d == 0.0);
  CHECK(r.metric_e == 0.0);
  CHECK(r.metric_f == 0.0);

  SUBCASE("random state against the definitions") {
    std::mt19937 rng(15);
    for (int t = 0; t < 10; ++t) {
      const ProblemInstance in = fixtures::random_instance(rng);
      const Iterate p = unpack(in, dense::random_point(in, rng)), c = unpack(in, dense::random_point(in, rng));
      const Vec xs = oracle_test::random_vector(rng, in.total_x());
      const TraceRecord m = compute_metrics(in, p, c, &xs);
      const int N = in.num_agents(), E = in.graph().num_edges();
      double ma = 0, mb = 0, md = 0, me = 0, mf = 0;
      Vec total = Vec::Zero(in.coupling_dim());
      for (int i = 0; i < N; ++i) {
        ma += (c.x[i] - p.x[i]).norm() / p.x[i].norm() / N;
        mb += (c.y[i] - p.y[i]).norm() / p.y[i].norm() / N;
        total += in.agent(i).A * c.x[i];
        mf += (c.x[i] - xs.segment(in.x_offset(i), in.n(i))).norm() / xs.segment(in.x_offset(i), in.n(i)).norm() / N;
      }
      for (int i = 0; i < N; ++i) me += (c.sigma[i] - (total - in.agent(i).A * c.x[i])).norm() / N;
      for (int e = 0; e < E; ++e) md += (c.yest[e] - c.y[in.graph().edge(e).tail]).norm() / E;
      const double mc = (total - in.capacity()).cwiseMax(0.0).norm();
      CHECK(m.metric_a == doctest::Approx(ma).epsilon(1e-12));
      CHECK(m.metric_b == doctest::Approx(mb).epsilon(1e-12));
      CHECK(m.metric_c == doctest::Approx(mc).epsilon(1e-12));
      CHECK(m.metric_d == doctest::Approx(md).epsilon(1e-12));
      CHECK(m.metric_e == doctest::Approx(me).epsilon(1e-12));
      CHECK(m.metric_f == doctest::Approx(mf).epsilon(1e-12));
    }
  }
}

TEST_CASE("thread count does not change results") {
  std::mt19937 rng(3);
  const ProblemInstance inst = fixtures::random_instance(rng, {4, 3, 2});
  RunOptions o;
  o.max_iter = 200;
  const RunResult seq = run(inst, o);
  o.threads = 3;
  const RunResult par = run(inst, o);
  CHECK(seq.solution.psi == par.solution.psi);
  CHECK(seq.solution.tilde == par.solution.tilde);
}

TEST_CASE("non-convergence") {
  RunOptions o;
  o.max_iter = 3;
  const RunResult r = run(fixtures::two_agent(1.0), o);
  CHECK_FALSE(r.solution.converged);
  CHECK(r.solution.iterations == 3);
  try {
    require_converged(r);
    FAIL("expected MaxIterExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MaxIterExceeded);
  }
}
