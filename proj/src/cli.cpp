#include "aggsplit/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "aggsplit/commodity.hpp"
#include "aggsplit/error.hpp"
#include "aggsplit/io.hpp"
#include "aggsplit/network_sim.hpp"
#include "aggsplit/oracle.hpp"
#include "aggsplit/parallel.hpp"

namespace aggsplit::cli {

namespace {

struct SolveFlags {
  std::string mode = "monolithic";
  int max_iter = 20000;
  double tol = 1e-8;
  double gamma = 0.5;
  double safety = 0.5;
  std::string trace_path;
  std::string summary_path;
  std::string log_path;
  bool oracle_compare = false;
  bool check_equivalence = false;
  bool timing = false;
  std::optional<std::uint64_t> seed;
};

void add_solve_flags(CLI::App* cmd, SolveFlags& f) {
  cmd->add_option("--mode", f.mode, "monolithic or simulated")->check(CLI::IsMember({"monolithic", "simulated"}));
  cmd->add_option("--max-iter", f.max_iter, "iteration limit")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol", f.tol, "stopping tolerance on the relative fixed-point residual")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--gamma", f.gamma, "relaxation parameter in [0, 1]")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--safety", f.safety, "Gershgorin safety factor")->check(CLI::PositiveNumber);
  cmd->add_option("--trace", f.trace_path, "per-iteration CSV");
  cmd->add_option("--summary", f.summary_path, "summary JSON (stdout when omitted)");
  cmd->add_option("--log-messages", f.log_path, "JSON lines message log (simulated mode)");
  cmd->add_flag("--oracle-compare", f.oracle_compare, "report the distance to the centralized solution");
  cmd->add_flag("--check-equivalence", f.check_equivalence, "simulated mode: also run monolithic and compare");
  cmd->add_flag("--timing", f.timing, "fill the wall_ms column");
  cmd->add_option("--seed", f.seed, "random initial point instead of zero");
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

struct Outcome {
  RunResult result;
  Json summary;
  bool equivalent = true;
};

Outcome solve(const ProblemInstance& instance, const SolveFlags& f) {
  RunOptions opt;
  opt.max_iter = f.max_iter;
  opt.tol = f.tol;
  opt.rule.safety = f.safety;
  opt.timing = f.timing;
  opt.threads = threads_from_env();
  StepSizes steps = choose_step_sizes(instance, opt.rule);
  steps.gamma = f.gamma;
  opt.steps = steps;
  if (f.seed) opt.init = random_init(instance, *f.seed);

  std::optional<CentralizedSolution> oracle;
  if (f.oracle_compare) {
    oracle = solve_centralized(instance);
    opt.x_star = oracle->x;
  }

  Outcome out;
  if (f.mode == "simulated") {
    std::ofstream log;
    if (!f.log_path.empty()) {
      log.open(f.log_path);
      if (!log) throw Error(ErrorCode::IoError, "cannot write " + f.log_path);
    }
    out.result = sim::run_simulated(instance, opt, f.log_path.empty() ? nullptr : &log);
    if (f.check_equivalence) {
      RunOptions mono = opt;
      mono.timing = false;
      const RunResult ref = run(instance, mono);
      const Solution& a = out.result.solution;
      const Solution& b = ref.solution;
      out.equivalent = a.iterations == b.iterations && a.psi == b.psi && a.bar == b.bar && a.tilde == b.tilde;
    }
  } else {
    if (!f.log_path.empty()) throw Error(ErrorCode::ValidationError, "--log-messages needs --mode simulated");
    out.result = run(instance, opt);
  }

  const Solution& s = out.result.solution;
  Json& j = out.summary;
  j["converged"] = s.converged;
  j["iterations"] = s.iterations;
  j["final_residual"] = s.residual;
  j["kkt_residual"] = s.kkt_residual;
  const TraceRecord last = out.result.trace.empty() ? TraceRecord{} : out.result.trace.back();
  j["constraint_violation"] = last.metric_c;
  j["consensus_gap"] = last.metric_d;
  if (oracle)
    j["rel_dist_to_oracle"] = (s.x - oracle->x).norm() / std::max(oracle->x.norm(), 1e-12);
  if (f.mode == "simulated" && f.check_equivalence) j["monolith_equivalent"] = out.equivalent;
  return out;
}

int finish(const Outcome& o, const SolveFlags& f, std::ostream& out, std::ostream& err) {
  if (!f.trace_path.empty()) write_file(f.trace_path, trace_csv(o.result.trace));
  const std::string summary = o.summary.dump(2) + "\n";
  if (f.summary_path.empty())
    out << summary;
  else
    write_file(f.summary_path, summary);
  if (!o.equivalent) {
    err << "simulated run differs from the monolithic run\n";
    return kFailure;
  }
  if (!o.result.solution.converged) {
    err << "MaxIterExceeded: no convergence after " << o.result.solution.iterations << " iterations\n";
    return kFailure;
  }
  return kOk;
}

const char* check_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonConvexObjective: return "convexity";
    case ErrorCode::InfeasibleLocalSet: return "local feasibility";
    case ErrorCode::SlaterViolation: return "slater";
    case ErrorCode::DisconnectedGraph:
    case ErrorCode::NonNegativeWeight: return "connectivity";
    default: return "structure";
  }
}

int cmd_validate(const std::string& path, std::ostream& out) {
  const Json j = parse_json(read_file(path), path);
  try {
    const ProblemInstance instance = parse_instance(j, path);
    out << "agents " << instance.num_agents() << ", edges " << instance.graph().num_edges() << ", coupling rows "
        << instance.coupling_dim() << "\n";
    for (const char* check : {"structure", "convexity", "local feasibility", "slater", "connectivity"})
      out << check << ": ok\n";
    out << "valid\n";
    return kOk;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError || e.code() == ErrorCode::IoError) throw;
    out << check_name(e.code()) << ": FAILED\n" << e.what() << "\n";
    return kFailure;
  }
}

int cmd_oracle(const std::string& path, const std::string& out_path, std::ostream& out) {
  const ProblemInstance instance = load_instance(path);
  const CentralizedSolution c = solve_centralized(instance);
  Json j;
  j["x"] = to_json(c.x);
  j["lambda"] = to_json(c.lambda);
  j["objective"] = eval_objective(instance, c.x);
  j["kkt_residual"] = kkt_check(instance, c.x, c.lambda);
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty())
    out << text;
  else
    write_file(out_path, text);
  return kOk;
}

Json allocation_json(const CommodityInstance& ci, const Vec& x) {
  const ProblemInstance& p = ci.problem;
  const int ET = ci.network.num_roads();
  Json j;
  Json roads = Json::array();
  for (const Road& r : ci.network.roads) roads.push_back({{"from", r.from}, {"to", r.to}, {"length", r.length}});
  j["roads"] = roads;
  Json branches = Json::array();
  Vec totals = Vec::Zero(ci.network.nodes);
  for (int i = 0; i < p.num_agents(); ++i) {
    const Vec xi = p.x_block(x, i);
    Json b;
    b["factories"] = ci.branches[i].factory_nodes;
    b["capacities"] = to_json(ci.branches[i].capacities);
    b["flows"] = to_json(Vec(xi.head(ET)));
    b["production"] = to_json(Vec(xi.tail(xi.size() - ET)));
    const Vec net = p.agent(i).A * xi;
    b["net_inflow"] = to_json(net);
    totals += net;
    branches.push_back(b);
  }
  j["branches"] = branches;
  j["market_totals"] = to_json(totals);
  return j;
}

}  // namespace

std::string trace_csv(const std::vector<TraceRecord>& trace) {
  std::ostringstream ss;
  ss << "k,metric_a,metric_b,metric_c,metric_d,metric_e,metric_f,residual,wall_ms\n";
  for (const TraceRecord& r : trace)
    ss << r.k << ',' << fmt(r.metric_a) << ',' << fmt(r.metric_b) << ',' << fmt(r.metric_c) << ',' << fmt(r.metric_d)
       << ',' << fmt(r.metric_e) << ',' << fmt(r.metric_f) << ',' << fmt(r.residual) << ',' << fmt(r.wall_ms) << '\n';
  return ss.str();
}

Iterate random_init(const ProblemInstance& instance, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Iterate it = Iterate::zeros(instance);
  for (auto* block : {&it.x, &it.sigma, &it.lambda, &it.y, &it.mu, &it.yest})
    for (Vec& v : *block)
      for (int k = 0; k < v.size(); ++k) v[k] = normal(rng);
  return it;
}

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distributed solver for cooperative optimization with aggregative coupling", "aggsplit"};
  app.require_subcommand(1);

  std::string instance_path, config_path, oracle_out, allocation_path;
  auto* validate = app.add_subcommand("validate", "check an instance against the solver assumptions");
  validate->add_option("instance", instance_path, "instance JSON")->required();

  SolveFlags run_flags;
  auto* runcmd = app.add_subcommand("run", "solve an instance");
  runcmd->add_option("instance", instance_path, "instance JSON")->required();
  add_solve_flags(runcmd, run_flags);

  auto* oracle = app.add_subcommand("oracle", "solve the centralized problem");
  oracle->add_option("instance", instance_path, "instance JSON")->required();
  oracle->add_option("--out", oracle_out, "output JSON (stdout when omitted)");

  SolveFlags bench_flags;
  std::string instance_out;
  auto* bench = app.add_subcommand("bench", "generate and solve a commodity distribution benchmark");
  bench->add_option("config", config_path, "benchmark config JSON")->required();
  bench->add_option("--allocation", allocation_path, "solved flows and production as JSON");
  bench->add_option("--write-instance", instance_out, "also write the generated instance JSON");
  add_solve_flags(bench, bench_flags);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, d;
    const int code = app.exit(e, o, d);
    out << o.str();
    err << d.str();
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (validate->parsed()) return cmd_validate(instance_path, out);
    if (oracle->parsed()) return cmd_oracle(instance_path, oracle_out, out);
    if (runcmd->parsed()) {
      const ProblemInstance instance = load_instance(instance_path);
      return finish(solve(instance, run_flags), run_flags, out, err);
    }
    if (bench->parsed()) {
      const CommodityInstance ci = load_bench_config(config_path);
      if (!instance_out.empty()) write_file(instance_out, instance_to_json(ci.problem).dump(2) + "\n");
      const Outcome o = solve(ci.problem, bench_flags);
      if (!allocation_path.empty())
        write_file(allocation_path, allocation_json(ci, o.result.solution.x).dump(2) + "\n");
      return finish(o, bench_flags, out, err);
    }
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.code() == ErrorCode::ParseError || e.code() == ErrorCode::IoError ? kInputError : kFailure;
  }
  return kInputError;
}

}  // namespace aggsplit::cli
