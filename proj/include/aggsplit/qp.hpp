#ifndef AGGSPLIT_QP_HPP
#define AGGSPLIT_QP_HPP

#include <span>
#include <vector>

#include "aggsplit/linalg.hpp"

namespace aggsplit {

/// Dense convex QP
///
///   minimize    ½ zᵀHz + gᵀz
///   subject to  A_eq z = b_eq,  A_in z ≤ b_in,  lower ≤ z ≤ upper.
///
/// Empty `lower`/`upper` mean the variable is free on that side; individual
/// entries may also be ±infinity.
struct QpProblem {
  Mat H;
  Vec g;
  Mat A_eq;
  Vec b_eq;
  Mat A_in;
  Vec b_in;
  Vec lower;
  Vec upper;

  int num_vars() const { return static_cast<int>(H.rows()); }
};

enum class QpStatus { Optimal, Infeasible, Unbounded, MaxIter };

const char* to_string(QpStatus status);

/// Multipliers follow the sign convention
///   Hz + g + A_eqᵀ·eq_duals + A_inᵀ·in_duals + box_duals = 0,
/// with in_duals ≥ 0 and box_duals negative on an active lower bound and
/// positive on an active upper bound.
struct QpSolution {
  Vec z;
  Vec eq_duals;
  Vec in_duals;
  Vec box_duals;
  QpStatus status = QpStatus::MaxIter;
  double kkt_residual = 0.0;
  int iterations = 0;
  /// Active inequality ids in the solver's internal numbering; feed back as a
  /// warm start for a problem with the same constraint structure.
  std::vector<int> active_set;
};

/// Max of stationarity, primal feasibility, dual sign and complementarity
/// violations, all in the ∞-norm.
double kkt_residual(const QpProblem& qp, const Vec& z, const Vec& eq_duals, const Vec& in_duals,
                    const Vec& box_duals);

/// Goldfarb-Idnani dual active-set solver with the Cholesky factor of H kept
/// across calls. Only the linear term may change between solves.
class QpSolver {
 public:
  static constexpr double kRidge = 1e-10;

  explicit QpSolver(QpProblem structure, double tol = 1e-9, int max_iter = 0);

  QpSolution solve() const { return solve(problem_.g); }
  QpSolution solve(const Vec& g, std::span<const int> warm_active = {}) const;

  const QpProblem& problem() const { return problem_; }
  bool ridged() const { return ridged_; }

 private:
  struct Constraint {
    int source;  // index into A_in rows, or variable index for bounds
    enum Kind { General, Lower, Upper } kind;
    double rhs;
  };

  double dot_normal(int k, const Vec& v) const;
  void add_normal(int k, double scale, Vec& out) const;
  double normal_norm(int k) const;

  QpProblem problem_;
  double tol_;
  int max_iter_;
  bool ridged_ = false;
  Mat J0_;  // L⁻ᵀ where H (+ ridge) = LLᵀ
  std::vector<Constraint> ineq_;
  std::vector<double> ineq_norm_;
};

QpSolution solve_qp(const QpProblem& qp, double tol = 1e-9, int max_iter = 0,
                    std::span<const int> warm_active = {});

}  // namespace aggsplit

#endif  // AGGSPLIT_QP_HPP
