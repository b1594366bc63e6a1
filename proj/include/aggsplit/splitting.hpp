#ifndef AGGSPLIT_SPLITTING_HPP
#define AGGSPLIT_SPLITTING_HPP

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "aggsplit/linalg.hpp"
#include "aggsplit/parallel.hpp"
#include "aggsplit/problem.hpp"
#include "aggsplit/resolvents.hpp"

namespace aggsplit {

/// One point ψ = [x; σ; λ; ω] kept as per-entity blocks. ω is split into
/// yᵢ (per agent), μⱼᵢ and yⱼᵢ (per edge; yⱼᵢ is held by the head i).
struct Iterate {
  std::vector<Vec> x;
  std::vector<Vec> sigma;
  std::vector<Vec> lambda;
  std::vector<Vec> y;
  std::vector<Vec> mu;
  std::vector<Vec> yest;

  static Iterate zeros(const ProblemInstance& instance);
  friend bool operator==(const Iterate& a, const Iterate& b);
};

/// Offsets of the stacked ψ vector. ωᵢ = [yᵢ; (μᵢⱼ; yᵢⱼ) per out-edge].
struct Layout {
  std::vector<int> x;
  std::vector<int> sigma;
  std::vector<int> lambda;
  std::vector<int> y;
  std::vector<int> mu;
  std::vector<int> yest;
  int x_end = 0;
  int sigma_end = 0;
  int lambda_end = 0;
  int dim = 0;

  explicit Layout(const ProblemInstance& instance);
};

Vec pack(const ProblemInstance& instance, const Iterate& it);
Iterate unpack(const ProblemInstance& instance, const Vec& psi);
/// Stacked x of an iterate.
Vec stacked_x(const ProblemInstance& instance, const Iterate& it);

struct StepSizes {
  std::vector<double> tau1;  // per agent
  std::vector<double> tau2;  // per agent
  std::vector<double> tau3;  // per edge
  std::vector<double> tau4;  // per agent
  double gamma = 0.5;
  /// Overrides gamma for k < size when non-empty.
  std::vector<double> gamma_sequence;

  double gamma_at(int k) const;
};

struct StepSizeRule {
  double safety = 0.5;
  double floor = 1e-6;
  double cap = 1e3;
  /// Used for rows of Φ without off-diagonal entries.
  double free_value = 1.0;
};

/// Gershgorin rule: τ = safety / (absolute off-diagonal row sum of Φ),
/// clamped to [floor, cap].
StepSizes choose_step_sizes(const ProblemInstance& instance, const StepSizeRule& rule = {});

/// Dense Φ in ψ order. Throws NotPositiveDefinite when Φ has no Cholesky factor.
Mat build_design_matrix(const ProblemInstance& instance, const StepSizes& steps);
/// Diagonal of Φ (the τ⁻¹ values) in ψ order.
Vec design_diagonal(const ProblemInstance& instance, const StepSizes& steps);

/// Dense skew linear parts of 𝒜 and ℬ in ψ order.
Mat linear_part_A(const ProblemInstance& instance);
Mat linear_part_B(const ProblemInstance& instance);
/// M_y′ over ω, in ω order.
Mat consensus_matrix(const ProblemInstance& instance);

/// Companion points of one DR pass.
struct DrState {
  Iterate tilde;  // ψ̃
  Iterate psi;    // J_{Φ⁻¹𝒜}(ψ̃)
  Iterate hat;    // 2ψ − ψ̃
  Iterate bar;    // J_{Φ⁻¹ℬ}(ψ̂)
  std::vector<Vec> d2;       // per-agent duals of Aᵢxᵢ + σᵢ ≤ c
  std::vector<Vec> v_hat;    // Aᵢx̂ᵢ + σ̂ᵢ
  std::vector<Vec> v_bar;    // Aᵢx̄ᵢ + σ̄ᵢ

  static DrState from(const ProblemInstance& instance, Iterate tilde);
};

/// Local kernels shared by the monolithic engine and the network simulator.
namespace kernels {
Vec reflect(const Vec& value, const Vec& tilde);
Vec relax(const Vec& tilde, double gamma, const Vec& bar, const Vec& psi);
Vec coupling_sum(const Mat& A, const Vec& x, const Vec& sigma);
}  // namespace kernels

/// Monolithic Algorithm-2 iteration with prefactored local solvers.
class DrEngine {
 public:
  DrEngine(const ProblemInstance& instance, StepSizes steps, int threads = 0);

  /// One full pass: ACU and 𝒜-resolvent, reflection, edge λ, ℬ-resolvent,
  /// edge λ̄, K-M update of ψ̃.
  void step(DrState& state, int k);

  /// The two resolvents on their own (used for dense checks).
  Iterate resolvent_A(const Iterate& tilde) const;
  Iterate resolvent_B(const Iterate& hat, std::vector<Vec>* d2 = nullptr);

  const StepSizes& steps() const { return steps_; }
  const ProblemInstance& instance() const { return instance_; }

 private:
  void apply_A(const Iterate& tilde, Iterate& psi) const;
  void apply_B(const Iterate& hat, Iterate& bar, std::vector<Vec>& d2, std::vector<Vec>& v_hat,
               std::vector<Vec>& v_bar);
  std::vector<SignedTerm> incident_terms(int i, const std::vector<Vec>& lambda) const;

  const ProblemInstance& instance_;
  StepSizes steps_;
  std::vector<PrimalProx> prox_;
  std::vector<LocalProjection> projection_;
  std::unique_ptr<WorkerPool> pool_;
};

struct TraceRecord {
  int k = 0;
  double metric_a = 0.0;
  double metric_b = 0.0;
  double metric_c = 0.0;
  double metric_d = 0.0;
  double metric_e = 0.0;
  double metric_f = 0.0;
  double residual = 0.0;
  double wall_ms = 0.0;
};

/// Metrics (a) to (f) between consecutive 𝒜-resolvent outputs. (d) and (e) use
/// the newer iterate only; (f) is 0 when x_star is null.
TraceRecord compute_metrics(const ProblemInstance& instance, const Iterate& prev, const Iterate& cur,
                            const Vec* x_star);

/// ‖ψ̄ − ψ‖ / max(1, ‖ψ‖) over all blocks.
double fixed_point_residual(const Iterate& psi, const Iterate& bar);

struct RunOptions {
  int max_iter = 20000;
  double tol = 1e-8;
  StepSizeRule rule;
  std::optional<StepSizes> steps;
  std::optional<Iterate> init;  // ψ̃⁰, zero when absent
  std::optional<Vec> x_star;    // enables metric (f)
  bool timing = false;
  int threads = 0;
  bool keep_tilde_history = false;
};

struct Solution {
  Iterate psi;    // last 𝒜-resolvent output
  Iterate bar;    // last ℬ-resolvent output
  Iterate tilde;  // ψ̃ after the last K-M update
  Vec x;
  Vec multiplier;  // Σ d₂ᵢ
  std::vector<Vec> d2;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  double kkt_residual = 0.0;
  StepSizes steps;
};

struct RunResult {
  Solution solution;
  std::vector<TraceRecord> trace;
  std::vector<Iterate> tilde_history;  // ψ̃⁰, ψ̃¹, … when requested
};

RunResult run(const ProblemInstance& instance, const RunOptions& options = {});

/// The iteration loop of run() around an arbitrary pass `advance(state, k)`.
/// `steps` is only recorded in the solution.
RunResult drive(const ProblemInstance& instance, const RunOptions& options, StepSizes steps,
                const std::function<void(DrState&, int)>& advance);

/// Throws MaxIterExceeded when the run did not converge.
void require_converged(const RunResult& result);

}  // namespace aggsplit

#endif  // AGGSPLIT_SPLITTING_HPP
