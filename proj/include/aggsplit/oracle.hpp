#ifndef AGGSPLIT_ORACLE_HPP
#define AGGSPLIT_ORACLE_HPP

#include <vector>

#include "aggsplit/linalg.hpp"
#include "aggsplit/problem.hpp"
#include "aggsplit/qp.hpp"

namespace aggsplit {

struct Iterate;

/// The coupled problem as one QP in the stacked x: each σᵢ is replaced by
/// Σ_{j≠i} Aⱼxⱼ. The first l inequality rows are Σ Aᵢxᵢ ≤ c, followed by
/// every agent's G rows.
struct CentralizedQp {
  QpProblem qp;
  double const_term = 0.0;
};
CentralizedQp centralized_qp(const ProblemInstance& instance);

struct CentralizedSolution {
  Vec x;
  Vec lambda;
  QpSolution raw;
};

/// Throws QpFailure (or SlaterViolation when infeasible) unless Optimal.
CentralizedSolution solve_centralized(const ProblemInstance& instance, double tol = 1e-11);

/// ∇J(x) with respect to the stacked x, including the aggregate cross terms.
Vec objective_gradient(const ProblemInstance& instance, const Vec& x);

/// ∞-norm of: per-agent natural residual xᵢ − proj_𝒳ᵢ(xᵢ − ∇ᵢJ − Aᵢᵀλ),
/// local infeasibility, dual sign, coupled feasibility and complementarity.
double kkt_check(const ProblemInstance& instance, const Vec& x, const Vec& lambda);

struct AgentTuple {
  Vec x;
  Vec sigma;
  Vec lambda;
  Vec d;
};

/// ∞-norm residual of the per-agent decomposed KKT inclusions together with
/// the tracking equations σᵢ = Σ_{j≠i} Aⱼxⱼ.
double decomposed_kkt_check(const ProblemInstance& instance, const std::vector<AgentTuple>& tuples);

/// Tuples built from a centralized solution: σᵢ the true aggregate,
/// λᵢ = λ/N and dᵢ = −∇_σJᵢ − λᵢ.
std::vector<AgentTuple> decompose(const ProblemInstance& instance, const Vec& x, const Vec& lambda);

/// Distance from 0 to 𝒯ψ. Per agent, the rows over (xᵢ, σᵢ, yᵢ, yⱼᵢ) use
/// the natural residual z − proj_S(z − u) with S = 𝒳ᵢ ∩ 𝒬ᵢ ∩ 𝓕ᵢ and u the
/// single-valued part; λ and μ rows are evaluated directly.
double operator_zero_residual(const ProblemInstance& instance, const Iterate& psi);

/// Euclidean projection onto 𝒳ᵢ (clamping when there are no G rows).
Vec project_local(const LocalFeasibleSet& set, const Vec& x);

}  // namespace aggsplit

#endif  // AGGSPLIT_ORACLE_HPP
