#include "aggsplit/commodity.hpp"

#include <algorithm>
#include <filesystem>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "aggsplit/error.hpp"
#include "aggsplit/io.hpp"

namespace aggsplit {

Mat TransportNetwork::incidence() const {
  Mat B = Mat::Zero(nodes, num_roads());
  for (int e = 0; e < num_roads(); ++e) {
    B(roads[e].to, e) = 1.0;
    B(roads[e].from, e) = -1.0;
  }
  return B;
}

std::vector<double> TransportNetwork::normalized_lengths() const {
  double max_len = 0.0;
  for (const Road& r : roads) max_len = std::max(max_len, r.length);
  std::vector<double> eta;
  for (const Road& r : roads) eta.push_back(r.length / max_len);
  return eta;
}

void TransportNetwork::validate() const {
  if (nodes < 1) throw Error(ErrorCode::ValidationError, "network needs at least one market");
  std::set<std::pair<int, int>> seen;
  for (std::size_t k = 0; k < roads.size(); ++k) {
    const Road& r = roads[k];
    const std::string where = "road " + std::to_string(k);
    if (r.from < 0 || r.from >= nodes || r.to < 0 || r.to >= nodes)
      throw Error(ErrorCode::ValidationError, where + ": market index out of range");
    if (r.from == r.to) throw Error(ErrorCode::ValidationError, where + ": self-loop");
    if (!(r.length > 0.0) || !std::isfinite(r.length))
      throw Error(ErrorCode::ValidationError, where + ": length must be positive");
    if (!seen.insert({r.from, r.to}).second) throw Error(ErrorCode::ValidationError, where + ": duplicate road");
  }
  for (const Road& r : roads)
    if (!seen.count({r.to, r.from}))
      throw Error(ErrorCode::ValidationError,
                  "road " + std::to_string(r.from) + "->" + std::to_string(r.to) + " has no reverse direction");
  std::vector<std::vector<int>> adj(nodes);
  for (const Road& r : roads) adj[r.from].push_back(r.to);
  std::vector<char> reached(nodes, 0);
  std::queue<int> q;
  q.push(0);
  reached[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int w : adj[v])
      if (!reached[w]) {
        reached[w] = 1;
        ++count;
        q.push(w);
      }
  }
  if (count != nodes) throw Error(ErrorCode::ValidationError, "transport network is not connected");
}

TransportNetwork grid_network(int rows, int cols, const LengthRule& rule) {
  if (rows < 2 || cols < 2) throw Error(ErrorCode::ValidationError, "grid needs at least 2 rows and 2 columns");
  std::mt19937_64 rng(rule.seed);
  std::uniform_real_distribution<double> dist(rule.lo, rule.hi);
  TransportNetwork net;
  net.nodes = rows * cols;
  auto add = [&](int a, int b) {
    const double len = rule.random ? dist(rng) : rule.constant;
    net.roads.push_back({a, b, len});
    net.roads.push_back({b, a, len});
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int v = r * cols + c;
      if (c + 1 < cols) add(v, v + 1);
      if (r + 1 < rows) add(v, v + cols);
    }
  return net;
}

namespace {

struct Point {
  double x, y;
};

double orient(const Point& a, const Point& b, const Point& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

/// Proper crossing of segments ab and cd (shared endpoints do not count).
bool crosses(const Point& a, const Point& b, const Point& c, const Point& d) {
  const double d1 = orient(a, b, c), d2 = orient(a, b, d), d3 = orient(c, d, a), d4 = orient(c, d, b);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0;
}

}  // namespace

TransportNetwork random_planar_network(int nodes, int physical_roads, std::uint64_t seed) {
  if (nodes < 2) throw Error(ErrorCode::ValidationError, "network needs at least two markets");
  if (physical_roads < nodes - 1) throw Error(ErrorCode::ValidationError, "too few roads to connect the markets");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Point> p(nodes);
  for (auto& pt : p) pt = {unit(rng), unit(rng)};

  struct Candidate {
    double len;
    int a, b;
  };
  std::vector<Candidate> cand;
  for (int a = 0; a < nodes; ++a)
    for (int b = a + 1; b < nodes; ++b) cand.push_back({std::hypot(p[a].x - p[b].x, p[a].y - p[b].y), a, b});
  std::sort(cand.begin(), cand.end(), [](const Candidate& u, const Candidate& v) {
    return std::tie(u.len, u.a, u.b) < std::tie(v.len, v.a, v.b);
  });

  // Kruskal for the spanning tree, then shortest non-crossing extras.
  std::vector<int> parent(nodes);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  std::vector<Candidate> chosen;
  std::vector<char> used(cand.size(), 0);
  for (std::size_t k = 0; k < cand.size(); ++k) {
    const int ra = find(cand[k].a), rb = find(cand[k].b);
    if (ra == rb) continue;
    parent[ra] = rb;
    chosen.push_back(cand[k]);
    used[k] = 1;
  }
  for (std::size_t k = 0; k < cand.size() && static_cast<int>(chosen.size()) < physical_roads; ++k) {
    if (used[k]) continue;
    bool ok = true;
    for (const Candidate& c : chosen)
      if (crosses(p[cand[k].a], p[cand[k].b], p[c.a], p[c.b])) {
        ok = false;
        break;
      }
    if (ok) chosen.push_back(cand[k]);
  }
  if (static_cast<int>(chosen.size()) < physical_roads)
    throw Error(ErrorCode::ValidationError, "cannot place that many non-crossing roads");
  std::sort(chosen.begin(), chosen.end(),
            [](const Candidate& u, const Candidate& v) { return std::tie(u.a, u.b) < std::tie(v.a, v.b); });
  TransportNetwork net;
  net.nodes = nodes;
  for (const Candidate& c : chosen) {
    net.roads.push_back({c.a, c.b, c.len});
    net.roads.push_back({c.b, c.a, c.len});
  }
  return net;
}

TransportNetwork parse_network(const std::string& text, const std::string& source) {
  const Json j = parse_json(text, source);
  TransportNetwork net;
  net.nodes = json_int(json_field(j, "nodes", source), source + ".nodes");
  const Json& roads = json_field(j, "roads", source);
  if (!roads.is_array()) throw Error(ErrorCode::ParseError, source + ".roads: expected an array");
  for (std::size_t k = 0; k < roads.size(); ++k) {
    const std::string w = source + ".roads[" + std::to_string(k) + "]";
    Road r;
    r.from = json_int(json_field(roads[k], "from", w), w + ".from");
    r.to = json_int(json_field(roads[k], "to", w), w + ".to");
    r.length = json_number(json_field(roads[k], "length", w), w + ".length");
    net.roads.push_back(r);
  }
  net.validate();
  return net;
}

TransportNetwork load_network(const std::string& path) { return parse_network(read_file(path), path); }

std::string network_to_json(const TransportNetwork& net) {
  Json j;
  j["nodes"] = net.nodes;
  Json roads = Json::array();
  for (const Road& r : net.roads) roads.push_back({{"from", r.from}, {"to", r.to}, {"length", r.length}});
  j["roads"] = roads;
  return j.dump(2) + "\n";
}

std::vector<BranchSpec> make_branches(const std::vector<std::vector<int>>& factories, const CommodityParams& params) {
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> cap(params.capacity_lo, params.capacity_hi);
  std::vector<BranchSpec> out;
  for (const auto& f : factories) {
    BranchSpec b;
    b.factory_nodes = f;
    b.capacities = Vec(static_cast<int>(f.size()));
    for (int k = 0; k < b.capacities.size(); ++k) b.capacities[k] = cap(rng);
    out.push_back(std::move(b));
  }
  return out;
}

Mat price_matrix(const TransportNetwork& net, const CommodityParams& params) {
  Mat S = params.sigma_diag * Mat::Identity(net.nodes, net.nodes);
  const auto eta = net.normalized_lengths();
  for (int e = 0; e < net.num_roads(); ++e)
    S(net.roads[e].from, net.roads[e].to) = params.sigma_offdiag_scale * (1.0 - eta[e]);
  return S;
}

CommGraph benchmark_comm_graph(int n_agents, std::uint64_t seed) {
  std::vector<Edge> edges;
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < n_agents; ++i) {
    const int j = (i + 1) % n_agents;
    if (seen.insert({i, j}).second) edges.push_back({i, j});
  }
  std::vector<std::pair<int, int>> free;
  for (int t = 0; t < n_agents; ++t)
    for (int h = 0; h < n_agents; ++h)
      if (t != h && !seen.count({t, h})) free.push_back({t, h});
  std::mt19937_64 rng(seed);
  const int extra = std::min<int>(n_agents / 2, static_cast<int>(free.size()));
  for (int k = 0; k < extra; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
    const std::size_t idx = pick(rng);
    edges.push_back({free[idx].first, free[idx].second});
    free.erase(free.begin() + static_cast<std::ptrdiff_t>(idx));
  }
  return CommGraph(n_agents, std::move(edges));
}

CommodityInstance generate_instance(const TransportNetwork& net, const std::vector<BranchSpec>& branches,
                                    const CommodityParams& params) {
  return generate_instance(net, branches, params,
                           benchmark_comm_graph(static_cast<int>(branches.size()), params.seed + 1));
}

CommodityInstance generate_instance(const TransportNetwork& net, const std::vector<BranchSpec>& branches,
                                    const CommodityParams& params, CommGraph graph) {
  net.validate();
  if (branches.empty()) throw Error(ErrorCode::ValidationError, "at least one branch is required");
  const int NT = net.nodes;
  const int ET = net.num_roads();

  CommodityInstance out;
  out.network = net;
  out.branches = branches;
  out.params = params;
  out.Sigma = price_matrix(net, params);
  const Mat BT = net.incidence();
  const auto eta = net.normalized_lengths();
  const Mat I = Mat::Identity(NT, NT);
  const Mat M = 2.0 * params.alpha * I + out.Sigma + out.Sigma.transpose();
  const Mat K = 2.0 * params.alpha * I + out.Sigma;

  std::vector<AgentSpec> agents;
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const BranchSpec& br = branches[b];
    const int F = static_cast<int>(br.factory_nodes.size());
    if (br.capacities.size() != F)
      throw Error(ErrorCode::ValidationError, "branch " + std::to_string(b) + ": one capacity per factory");
    if (F == 0) throw Error(ErrorCode::ValidationError, "branch " + std::to_string(b) + ": no factories");
    const int n = ET + F;
    Mat A = Mat::Zero(NT, n);
    A.leftCols(ET) = BT;
    for (int f = 0; f < F; ++f) {
      const int node = br.factory_nodes[f];
      if (node < 0 || node >= NT)
        throw Error(ErrorCode::ValidationError, "branch " + std::to_string(b) + ": factory market out of range");
      if (!(br.capacities[f] > 0.0))
        throw Error(ErrorCode::ValidationError, "branch " + std::to_string(b) + ": capacity must be positive");
      A(node, ET + f) = 1.0;
    }
    Mat Q = Mat::Zero(n, n);
    for (int e = 0; e < ET; ++e) Q(e, e) = params.q_road_scale * eta[e];
    for (int f = 0; f < F; ++f) Q(ET + f, ET + f) = params.q_prod;

    AgentSpec spec;
    spec.A = A;
    Mat H(n + NT, n + NT);
    H.topLeftCorner(n, n) = Q + A.transpose() * M * A;
    H.topRightCorner(n, NT) = A.transpose() * K;
    H.bottomLeftCorner(NT, n) = K.transpose() * A;
    H.bottomRightCorner(NT, NT) = 2.0 * params.alpha * I;
    H = 0.5 * (H + H.transpose());
    spec.objective.H = H;
    spec.objective.g = Vec::Zero(n + NT);
    spec.objective.g.head(n) = -(A.transpose() * Vec::Constant(NT, params.w));

    const double lmin = Eigen::SelfAdjointEigenSolver<Mat>(H, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (lmin < -1e-9) {
      std::ostringstream msg;
      msg << "branch " << b << ": joint Hessian has eigenvalue " << lmin;
      throw Error(ErrorCode::NonConvexBenchmark, msg.str());
    }

    Vec lower = Vec::Zero(n), upper(n);
    upper.head(ET).setConstant(br.capacities.sum());
    upper.tail(F) = br.capacities;
    spec.feasible_set = LocalFeasibleSet::box(lower, upper);
    spec.feasible_set.G = A;
    spec.feasible_set.h = Vec::Zero(NT);
    out.Q.push_back(Q);
    agents.push_back(std::move(spec));
  }
  out.problem = build_problem(std::move(agents), Vec::Constant(NT, params.c_cap), std::move(graph));
  return out;
}

namespace {

TransportNetwork network_from_config(const Json& j, const std::string& where, const std::string& base_dir) {
  if (j.is_string()) {
    std::filesystem::path p = j.get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    return load_network(p.string());
  }
  if (j.is_object() && j.contains("grid")) {
    const Json& gj = j["grid"];
    const std::string w = where + ".grid";
    LengthRule rule;
    if (gj.contains("lengths")) {
      const Json& kind = gj["lengths"];
      if (kind == "random")
        rule.random = true;
      else if (kind != "constant")
        throw Error(ErrorCode::ParseError, w + ".lengths: expected \"constant\" or \"random\"");
    }
    if (gj.contains("length_seed")) rule.seed = static_cast<std::uint64_t>(json_int(gj["length_seed"], w + ".length_seed"));
    return grid_network(json_int(json_field(gj, "rows", w), w + ".rows"), json_int(json_field(gj, "cols", w), w + ".cols"),
                        rule);
  }
  if (j.is_object() && j.contains("random")) {
    const Json& rj = j["random"];
    const std::string w = where + ".random";
    const int n = json_int(json_field(rj, "n", w), w + ".n");
    const int roads = rj.contains("roads") ? json_int(rj["roads"], w + ".roads") : n + n / 6;
    const auto seed = rj.contains("seed") ? static_cast<std::uint64_t>(json_int(rj["seed"], w + ".seed")) : 1;
    return random_planar_network(n, roads, seed);
  }
  throw Error(ErrorCode::ParseError, where + ": expected a path, {\"grid\": ...} or {\"random\": ...}");
}

}  // namespace

CommodityInstance parse_bench_config(const std::string& text, const std::string& source, const std::string& base_dir) {
  const Json j = parse_json(text, source);
  CommodityParams params;
  if (j.contains("seed")) params.seed = static_cast<std::uint64_t>(json_int(j["seed"], source + ".seed"));
  if (j.contains("params")) {
    const Json& pj = j["params"];
    const std::string w = source + ".params";
    if (!pj.is_object()) throw Error(ErrorCode::ParseError, w + ": expected an object");
    const std::pair<const char*, double*> fields[] = {
        {"w", &params.w},
        {"sigma_diag", &params.sigma_diag},
        {"sigma_offdiag_scale", &params.sigma_offdiag_scale},
        {"alpha", &params.alpha},
        {"c_cap", &params.c_cap},
        {"q_road_scale", &params.q_road_scale},
        {"q_prod", &params.q_prod},
        {"capacity_lo", &params.capacity_lo},
        {"capacity_hi", &params.capacity_hi},
    };
    for (auto it = pj.begin(); it != pj.end(); ++it) {
      bool known = false;
      for (const auto& [key, slot] : fields)
        if (it.key() == key) {
          *slot = json_number(it.value(), w + "." + key);
          known = true;
        }
      if (!known) throw Error(ErrorCode::ParseError, w + ": unknown parameter '" + it.key() + "'");
    }
  }
  const TransportNetwork net = network_from_config(json_field(j, "network", source), source + ".network", base_dir);

  const Json& bj = json_field(j, "branches", source);
  if (!bj.is_array()) throw Error(ErrorCode::ParseError, source + ".branches: expected an array");
  std::vector<std::vector<int>> factories;
  std::vector<std::optional<Vec>> given;
  for (std::size_t k = 0; k < bj.size(); ++k) {
    const std::string w = source + ".branches[" + std::to_string(k) + "]";
    const Json& list = bj[k].is_object() ? json_field(bj[k], "factories", w) : bj[k];
    if (!list.is_array()) throw Error(ErrorCode::ParseError, w + ": expected a list of factory markets");
    std::vector<int> f;
    for (std::size_t q = 0; q < list.size(); ++q) f.push_back(json_int(list[q], w + "[" + std::to_string(q) + "]"));
    factories.push_back(f);
    if (bj[k].is_object() && bj[k].contains("capacities"))
      given.push_back(json_vector(bj[k]["capacities"], w + ".capacities"));
    else
      given.push_back(std::nullopt);
  }
  std::vector<BranchSpec> branches = make_branches(factories, params);
  for (std::size_t k = 0; k < branches.size(); ++k)
    if (given[k]) branches[k].capacities = *given[k];
  return generate_instance(net, branches, params);
}

CommodityInstance load_bench_config(const std::string& path) {
  return parse_bench_config(read_file(path), path, std::filesystem::path(path).parent_path().string());
}

}  // namespace aggsplit
