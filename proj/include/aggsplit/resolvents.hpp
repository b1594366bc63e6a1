#ifndef AGGSPLIT_RESOLVENTS_HPP
#define AGGSPLIT_RESOLVENTS_HPP

#include <utility>
#include <vector>

#include "aggsplit/linalg.hpp"
#include "aggsplit/problem.hpp"
#include "aggsplit/qp.hpp"

namespace aggsplit {

/// One signed contribution to λ_iB: +λ for an in-edge, −λ for an out-edge.
struct SignedTerm {
  double sign;
  const Vec* value;
};

/// Σ sign·value accumulated left to right. Callers pass the incident edges in
/// ascending edge id so every implementation reduces in the same order.
Vec signed_sum(int l, const std::vector<SignedTerm>& terms);

/// Per-agent proximal step of the 𝒜-resolvent:
///   argmin Jᵢ(x,σ) + ½λ̃_iBᵀ(Aᵢx + σ) + ‖x − x̃‖²/2τ₁ + ‖σ − σ̃‖²/2τ₂.
/// The matrix H + diag(1/τ) is factored once.
class PrimalProx {
 public:
  PrimalProx(const AgentSpec& agent, double tau1, double tau2);

  void apply(const Vec& x_tilde, const Vec& sigma_tilde, const Vec& lambda_iB, Vec& x, Vec& sigma) const;

 private:
  int n_ = 0;
  int l_ = 0;
  double inv_tau1_ = 0.0;
  double inv_tau2_ = 0.0;
  Mat A_;
  Vec g_;
  Eigen::LLT<Mat> factor_;
};

/// λ = λ̃ + ½τ₃ (v̂_head − v̂_tail), with v = Ax + σ.
Vec edge_lambda_update(const Vec& lambda_tilde, double tau3, const Vec& v_hat_tail, const Vec& v_hat_head);

/// λ̄ = λ̂ + τ₃ [(v̄_head − v̄_tail) − ½(v̂_head − v̂_tail)].
Vec edge_lambda_bar_update(const Vec& lambda_hat, double tau3, const Vec& v_bar_tail, const Vec& v_bar_head,
                           const Vec& v_hat_tail, const Vec& v_hat_head);

// ACU kernels. τ is always the tail agent's τ₄ for edge quantities.

/// Agent i's new yᵢ from ỹᵢ and, for each out-edge in ascending head order,
/// the pair (μ̃ᵢⱼ, ỹᵢⱼ).
Vec acu_own(double tau, const Vec& y_tilde, const std::vector<std::pair<const Vec*, const Vec*>>& out_pairs);
/// Edge (j,i): μⱼᵢ from μ̃ⱼᵢ, the head's ỹⱼᵢ and the tail's new yⱼ.
Vec acu_mu(double tau_tail, const Vec& mu_tilde, const Vec& yest_tilde, const Vec& y_tail);
/// Head i: yⱼᵢ = ỹⱼᵢ − τ₄ⱼ μⱼᵢ.
Vec acu_estimate(double tau_tail, const Vec& yest_tilde, const Vec& mu);

struct AcuBlocks {
  std::vector<Vec> y;     // per agent
  std::vector<Vec> mu;    // per edge
  std::vector<Vec> yest;  // per edge, held by the head
};

/// Whole-graph ACU: the solution of (τ₄⁻¹ + M_y′)ω = τ₄⁻¹ω̃.
AcuBlocks acu(const CommGraph& graph, const std::vector<double>& tau4, const AcuBlocks& tilde);

struct ProjectionResult {
  Vec x;
  Vec sigma;
  Vec y;
  std::vector<Vec> yest;  // in-edge order
  Vec d2;                 // duals of Aᵢx + σ ≤ c
};

/// Per-agent ℬ-resolvent: weighted projection of (x̌, σ̌, ŷ) onto
/// {x ∈ 𝒳ᵢ, M_Fᵢ[x; σ; yᵢ; yⱼᵢ…] = 0, Aᵢx + σ ≤ c}.
///
/// Variable order z = [x; σ; yᵢ; yⱼᵢ for in-edges, ascending tail]. The
/// estimate yⱼᵢ is weighted by the tail's τ₄ⱼ, which is the ω-block it
/// belongs to. The previous active set is reused as a warm start.
class LocalProjection {
 public:
  LocalProjection(const ProblemInstance& instance, int agent, double tau1, double tau2, double tau4_own,
                  const std::vector<double>& tau4_in);

  ProjectionResult apply(const Vec& x_hat, const Vec& sigma_hat, const Vec& lambda_hat_iB, const Vec& y_hat,
                         const std::vector<Vec>& yest_hat);

  /// Same as apply but also returns the raw QP solution.
  ProjectionResult apply(const Vec& x_hat, const Vec& sigma_hat, const Vec& lambda_hat_iB, const Vec& y_hat,
                         const std::vector<Vec>& yest_hat, QpSolution* raw);

  const QpProblem& qp() const { return solver_.problem(); }
  const Vec& weights() const { return weights_; }
  int num_vars() const { return static_cast<int>(weights_.size()); }

 private:
  int agent_;
  int n_;
  int l_;
  int in_count_;
  double tau1_;
  double tau2_;
  Mat A_;
  Vec weights_;
  QpSolver solver_;
  std::vector<int> warm_;
};

/// M_Fᵢ = [(N−1)Aᵢ, −I, −Wᵢᵢ·I, −Wⱼᵢ·I per in-edge].
Mat local_equality_matrix(const ProblemInstance& instance, int agent);

}  // namespace aggsplit

#endif  // AGGSPLIT_RESOLVENTS_HPP
