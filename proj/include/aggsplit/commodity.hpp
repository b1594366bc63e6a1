#ifndef AGGSPLIT_COMMODITY_HPP
#define AGGSPLIT_COMMODITY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "aggsplit/linalg.hpp"
#include "aggsplit/problem.hpp"

namespace aggsplit {

struct Road {
  int from = 0;
  int to = 0;
  double length = 1.0;
  friend bool operator==(const Road&, const Road&) = default;
};

/// Markets and directed roads. Every physical road is listed in both
/// directions.
struct TransportNetwork {
  int nodes = 0;
  std::vector<Road> roads;

  int num_roads() const { return static_cast<int>(roads.size()); }
  /// nodes × roads: +1 at the destination, −1 at the origin.
  Mat incidence() const;
  /// length / max length, in (0, 1].
  std::vector<double> normalized_lengths() const;
  /// Throws ValidationError on bad indices, non-positive lengths, missing
  /// reverse roads, duplicates or a disconnected network.
  void validate() const;

  friend bool operator==(const TransportNetwork&, const TransportNetwork&) = default;
};

struct LengthRule {
  bool random = false;
  double constant = 1.0;
  double lo = 0.2;
  double hi = 1.0;
  std::uint64_t seed = 1;
};

/// 4-neighbour grid, markets numbered row-major, both directions per road.
TransportNetwork grid_network(int rows, int cols, const LengthRule& rule = {});

/// Seeded planar-like network: random points in the unit square, Euclidean
/// minimum spanning tree plus the shortest non-crossing extra segments until
/// `physical_roads` roads exist. Lengths are Euclidean distances.
TransportNetwork random_planar_network(int nodes, int physical_roads, std::uint64_t seed);

TransportNetwork parse_network(const std::string& text, const std::string& source = "<string>");
TransportNetwork load_network(const std::string& path);
std::string network_to_json(const TransportNetwork& net);

struct BranchSpec {
  std::vector<int> factory_nodes;
  Vec capacities;
};

struct CommodityParams {
  double w = 36.0;
  double sigma_diag = 0.23;
  double sigma_offdiag_scale = 0.069;
  double alpha = 0.21;
  double c_cap = 2.0;
  double q_road_scale = 7.0;
  double q_prod = 2.8;
  double capacity_lo = 10.0;
  double capacity_hi = 14.0;
  std::uint64_t seed = 1;
};

/// Branches with the given factory markets and capacities drawn from
/// U[capacity_lo, capacity_hi] with params.seed.
std::vector<BranchSpec> make_branches(const std::vector<std::vector<int>>& factories, const CommodityParams& params);

/// Price slope matrix: sigma_diag on the diagonal and
/// sigma_offdiag_scale·(1 − η) at (from, to) of every road.
Mat price_matrix(const TransportNetwork& net, const CommodityParams& params);

/// Directed cycle 0→1→…→N−1→0 plus ⌊N/2⌋ seeded extra edges.
CommGraph benchmark_comm_graph(int n_agents, std::uint64_t seed);

struct CommodityInstance {
  TransportNetwork network;
  std::vector<BranchSpec> branches;
  CommodityParams params;
  Mat Sigma;
  std::vector<Mat> Q;  // per-branch diagonal weights
  ProblemInstance problem;
};

/// Aᵢ = [B_T, Eᵢ], 𝒳ᵢ = {0 ≤ ν ≤ b, 0 ≤ u ≤ ‖b‖₁, Aᵢxᵢ ≥ 0} and
///   Jᵢ = ½xᵀQx + α‖Aᵢx + σ‖² − (w − Σ(Aᵢx + σ))ᵀAᵢx
/// in canonical quadratic form. Throws NonConvexBenchmark when a joint
/// Hessian has an eigenvalue below −1e-9.
CommodityInstance generate_instance(const TransportNetwork& net, const std::vector<BranchSpec>& branches,
                                    const CommodityParams& params);

/// Same, with an explicit communication graph.
CommodityInstance generate_instance(const TransportNetwork& net, const std::vector<BranchSpec>& branches,
                                    const CommodityParams& params, CommGraph graph);

/// Benchmark config:
///   {"network": "net.json" | {"grid": {"rows", "cols", "lengths"?: "constant"|"random", "length_seed"?}}
///                          | {"random": {"n", "roads"?, "seed"?}},
///    "branches": [[factory markets...], ...] | [{"factories": [...], "capacities"?: [...]}, ...],
///    "params"?: {w, sigma_diag, sigma_offdiag_scale, alpha, c_cap, q_road_scale, q_prod,
///                capacity_lo, capacity_hi},
///    "seed"?: int}
/// A relative network path is resolved against `base_dir`. The seed drives
/// capacities and the communication graph.
CommodityInstance parse_bench_config(const std::string& text, const std::string& source, const std::string& base_dir);
CommodityInstance load_bench_config(const std::string& path);

}  // namespace aggsplit

#endif  // AGGSPLIT_COMMODITY_HPP
