#include "aggsplit/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace aggsplit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double max_abs(const Vec& v) { return inf_norm(v); }

double data_scale(const QpProblem& qp, const Vec& g, const Vec& z) {
  double s = 1.0;
  if (qp.H.size() > 0) s = std::max(s, qp.H.lpNorm<Eigen::Infinity>() * max_abs(z));
  s = std::max(s, max_abs(g));
  s = std::max(s, max_abs(qp.b_eq));
  s = std::max(s, max_abs(qp.b_in));
  for (Eigen::Index k = 0; k < qp.lower.size(); ++k)
    if (std::isfinite(qp.lower[k])) s = std::max(s, std::abs(qp.lower[k]));
  for (Eigen::Index k = 0; k < qp.upper.size(); ++k)
    if (std::isfinite(qp.upper[k])) s = std::max(s, std::abs(qp.upper[k]));
  return s;
}

// Rotation in the (a, b) plane that maps (a, b) to (h, 0).
struct Givens {
  double c = 1.0, s = 0.0, h = 0.0;
  static Givens make(double a, double b) {
    Givens g;
    g.h = std::hypot(a, b);
    if (g.h > 0.0) {
      g.c = a / g.h;
      g.s = b / g.h;
    }
    return g;
  }
};

void rotate_columns(Mat& M, Eigen::Index j0, Eigen::Index j1, const Givens& g) {
  for (Eigen::Index k = 0; k < M.rows(); ++k) {
    const double a = M(k, j0);
    const double b = M(k, j1);
    M(k, j0) = g.c * a + g.s * b;
    M(k, j1) = -g.s * a + g.c * b;
  }
}

double kkt_residual_with(const QpProblem& qp, const Vec& g, const Vec& z, const Vec& eq_duals,
                         const Vec& in_duals, const Vec& box_duals) {
  const auto n = z.size();
  Vec stat = qp.H * z + g;
  if (qp.A_eq.rows() > 0) stat += qp.A_eq.transpose() * eq_duals;
  if (qp.A_in.rows() > 0) stat += qp.A_in.transpose() * in_duals;
  if (box_duals.size() == n) stat += box_duals;
  double res = max_abs(stat);

  if (qp.A_eq.rows() > 0) res = std::max(res, max_abs(qp.A_eq * z - qp.b_eq));
  if (qp.A_in.rows() > 0) {
    const Vec slack = qp.b_in - qp.A_in * z;
    for (Eigen::Index r = 0; r < slack.size(); ++r) {
      res = std::max(res, -slack[r]);
      res = std::max(res, -in_duals[r]);
      res = std::max(res, std::abs(in_duals[r] * slack[r]));
    }
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lo = qp.lower.size() == n ? qp.lower[k] : -kInf;
    const double up = qp.upper.size() == n ? qp.upper[k] : kInf;
    res = std::max(res, lo - z[k]);
    res = std::max(res, z[k] - up);
    const double bd = box_duals.size() == n ? box_duals[k] : 0.0;
    if (bd < 0.0) {
      res = std::max(res, std::isfinite(lo) ? std::abs(bd * (z[k] - lo)) : -bd);
    } else if (bd > 0.0) {
      res = std::max(res, std::isfinite(up) ? std::abs(bd * (up - z[k])) : bd);
    }
  }
  return res;
}

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::Infeasible: return "Infeasible";
    case QpStatus::Unbounded: return "Unbounded";
    case QpStatus::MaxIter: return "MaxIter";
  }
  return "?";
}

double kkt_residual(const QpProblem& qp, const Vec& z, const Vec& eq_duals, const Vec& in_duals,
                    const Vec& box_duals) {
  return kkt_residual_with(qp, qp.g, z, eq_duals, in_duals, box_duals);
}

QpSolver::QpSolver(QpProblem structure, double tol, int max_iter)
    : problem_(std::move(structure)), tol_(tol), max_iter_(max_iter) {
  const int n = problem_.num_vars();
  if (problem_.g.size() != n) problem_.g = Vec::Zero(n);

  for (Eigen::Index r = 0; r < problem_.A_in.rows(); ++r)
    ineq_.push_back({static_cast<int>(r), Constraint::General, -problem_.b_in[r]});
  for (Eigen::Index k = 0; k < problem_.lower.size(); ++k)
    if (std::isfinite(problem_.lower[k]))
      ineq_.push_back({static_cast<int>(k), Constraint::Lower, problem_.lower[k]});
  for (Eigen::Index k = 0; k < problem_.upper.size(); ++k)
    if (std::isfinite(problem_.upper[k]))
      ineq_.push_back({static_cast<int>(k), Constraint::Upper, -problem_.upper[k]});
  for (int k = 0; k < static_cast<int>(ineq_.size()); ++k) ineq_norm_.push_back(normal_norm(k));

  if (max_iter_ <= 0)
    max_iter_ = 10 * (n + static_cast<int>(problem_.A_eq.rows()) + static_cast<int>(ineq_.size()));

  // Near-singular pivots get the ridge so that J stays well defined.
  Mat H = problem_.H;
  const double diag_max = n > 0 ? std::max(1.0, H.diagonal().cwiseAbs().maxCoeff()) : 1.0;
  Eigen::LLT<Mat> llt(H);
  bool ok = llt.info() == Eigen::Success;
  if (ok && n > 0) {
    const double min_pivot = llt.matrixL().toDenseMatrix().diagonal().minCoeff();
    ok = min_pivot * min_pivot > 1e-14 * diag_max;
  }
  if (!ok) {
    ridged_ = true;
    H.diagonal().array() += kRidge * diag_max;
    llt.compute(H);
  }
  J0_ = llt.matrixU().solve(Mat::Identity(n, n));
}

double QpSolver::dot_normal(int k, const Vec& v) const {
  const Constraint& c = ineq_[k];
  switch (c.kind) {
    case Constraint::General: return -problem_.A_in.row(c.source).dot(v);
    case Constraint::Lower: return v[c.source];
    case Constraint::Upper: return -v[c.source];
  }
  return 0.0;
}

void QpSolver::add_normal(int k, double scale, Vec& out) const {
  const Constraint& c = ineq_[k];
  switch (c.kind) {
    case Constraint::General: out -= scale * problem_.A_in.row(c.source).transpose(); break;
    case Constraint::Lower: out[c.source] += scale; break;
    case Constraint::Upper: out[c.source] -= scale; break;
  }
}

double QpSolver::normal_norm(int k) const {
  const Constraint& c = ineq_[k];
  if (c.kind == Constraint::General) return problem_.A_in.row(c.source).norm();
  return 1.0;
}

QpSolution QpSolver::solve(const Vec& g, std::span<const int> warm_active) const {
  const int n = problem_.num_vars();
  const int meq = static_cast<int>(problem_.A_eq.rows());
  const int mi = static_cast<int>(ineq_.size());

  QpSolution sol;
  sol.eq_duals = Vec::Zero(meq);
  sol.in_duals = Vec::Zero(problem_.A_in.rows());
  sol.box_duals = Vec::Zero(n);

  Mat J = J0_;
  Mat R = Mat::Zero(n, n);
  double R_norm = 1.0;
  int q = 0;
  std::vector<int> active;  // equality e stored as -(e+1)
  active.reserve(n);
  Vec u = Vec::Zero(n + 1);
  std::vector<char> is_active(mi, 0);

  Vec z = -(J * (J.transpose() * g));
  Vec d(n), zs(n), r(n);

  auto compute_step = [&](const Vec& normal) {
    d.noalias() = J.transpose() * normal;
    zs.noalias() = J.rightCols(n - q) * d.tail(n - q);
    if (q > 0)
      r.head(q) = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));
  };

  auto add_constraint = [&]() -> bool {
    for (int j = n - 1; j >= q + 1; --j) {
      const Givens rot = Givens::make(d[j - 1], d[j]);
      if (rot.h == 0.0) continue;
      rotate_columns(J, j - 1, j, rot);
      d[j - 1] = rot.h;
      d[j] = 0.0;
    }
    R.col(q).head(q + 1) = d.head(q + 1);
    ++q;
    if (std::abs(d[q - 1]) <= std::numeric_limits<double>::epsilon() * R_norm) return false;
    R_norm = std::max(R_norm, std::abs(d[q - 1]));
    return true;
  };

  auto drop_constraint = [&](int pos) {
    const int k = active[pos];
    if (k >= 0) is_active[k] = 0;
    for (int i = pos; i < q - 1; ++i) {
      active[i] = active[i + 1];
      u[i] = u[i + 1];
      R.col(i) = R.col(i + 1);
    }
    active.pop_back();
    u[q - 1] = 0.0;
    R.col(q - 1).setZero();
    --q;
    for (int j = pos; j < q; ++j) {
      const Givens rot = Givens::make(R(j, j), R(j + 1, j));
      if (rot.h == 0.0) continue;
      for (int c = j; c < q; ++c) {
        const double a = R(j, c);
        const double b = R(j + 1, c);
        R(j, c) = rot.c * a + rot.s * b;
        R(j + 1, c) = -rot.s * a + rot.c * b;
      }
      R(j + 1, j) = 0.0;
      rotate_columns(J, j, j + 1, rot);
    }
  };

  // Multipliers in the public sign convention from GI duals on `active`.
  auto export_duals = [&](const std::vector<int>& act, const Vec& w, QpSolution& out) {
    out.eq_duals.setZero();
    out.in_duals.setZero();
    out.box_duals.setZero();
    for (std::size_t pos = 0; pos < act.size(); ++pos) {
      const int k = act[pos];
      if (k < 0) {
        out.eq_duals[-k - 1] = -w[pos];
        continue;
      }
      const Constraint& c = ineq_[k];
      switch (c.kind) {
        case Constraint::General: out.in_duals[c.source] += w[pos]; break;
        case Constraint::Lower: out.box_duals[c.source] -= w[pos]; break;
        case Constraint::Upper: out.box_duals[c.source] += w[pos]; break;
      }
    }
  };

  auto residual_of = [&](const QpSolution& s) {
    return kkt_residual_with(problem_, g, s.z, s.eq_duals, s.in_duals, s.box_duals);
  };

  // Re-solve the equality-constrained KKT system of the final working set
  // with pivoted LU; the product-form factor J loses digits when H is
  // ill-conditioned or ridged.
  auto polish = [&](QpSolution& s) {
    const int m = q;
    Mat K = Mat::Zero(n + m, n + m);
    Vec rhs = Vec::Zero(n + m);
    K.topLeftCorner(n, n) = problem_.H;
    if (ridged_) K.topLeftCorner(n, n).diagonal().array() += kRidge;
    rhs.head(n) = -g;
    Vec normal(n);
    for (int pos = 0; pos < m; ++pos) {
      const int k = active[pos];
      double beta;
      if (k < 0) {
        normal = problem_.A_eq.row(-k - 1).transpose();
        beta = problem_.b_eq[-k - 1];
      } else {
        normal.setZero();
        add_normal(k, 1.0, normal);
        beta = ineq_[k].rhs;
      }
      K.block(0, n + pos, n, 1) = -normal;
      K.block(n + pos, 0, 1, n) = normal.transpose();
      rhs[n + pos] = beta;
    }
    const Vec sol_vec = Eigen::PartialPivLU<Mat>(K).solve(rhs);
    if (!sol_vec.allFinite()) return;
    QpSolution cand = s;
    cand.z = sol_vec.head(n);
    export_duals(active, sol_vec.tail(m), cand);
    cand.kkt_residual = residual_of(cand);
    if (cand.kkt_residual < s.kkt_residual) s = std::move(cand);
  };

  auto finish = [&](QpStatus status) {
    sol.status = status;
    sol.z = z;
    export_duals(active, u, sol);
    for (int k : active)
      if (k >= 0) sol.active_set.push_back(k);
    sol.kkt_residual = residual_of(sol);
    if (status == QpStatus::Optimal) {
      if (sol.kkt_residual > tol_ * data_scale(problem_, g, sol.z)) polish(sol);
      // A ridged problem whose solution runs off to ~1/ridge has a recession
      // direction along the null space of H.
      if (ridged_ && max_abs(sol.z) > 1e7 * data_scale(problem_, g, Vec::Zero(n))) {
        sol.status = QpStatus::Unbounded;
      } else if (sol.kkt_residual > tol_ * data_scale(problem_, g, sol.z)) {
        sol.status = QpStatus::MaxIter;
      }
    }
    return sol;
  };

  // Equalities first; they are never dropped.
  for (int e = 0; e < meq; ++e) {
    const Vec normal = problem_.A_eq.row(e).transpose();
    compute_step(normal);
    const double gap = problem_.b_eq[e] - normal.dot(z);
    if (d.tail(n - q).norm() <= 1e-12 * std::max(1.0, d.norm())) {
      // Dependent row: consistent ones are redundant, others make the set empty.
      if (std::abs(gap) <= tol_ * std::max(1.0, std::abs(problem_.b_eq[e]))) continue;
      return finish(QpStatus::Infeasible);
    }
    const double t = gap / zs.dot(normal);
    z += t * zs;
    if (q > 0) u.head(q) -= t * r.head(q);
    u[q] = t;
    active.push_back(-(e + 1));
    add_constraint();
  }

  Vec normal(n);
  for (int iter = 0;; ++iter) {
    if (iter >= max_iter_) return finish(QpStatus::MaxIter);
    sol.iterations = iter;

    // Pick a violated inequality: warm-start hints first, then the most
    // violated one relative to its normal's length.
    const double zmax = max_abs(z);
    auto violation = [&](int k) {
      const double slack = dot_normal(k, z) - ineq_[k].rhs;
      const double guard = 1e-13 * (1.0 + std::abs(ineq_[k].rhs) + ineq_norm_[k] * zmax);
      return slack < -guard ? -slack / ineq_norm_[k] : 0.0;
    };
    int p = -1;
    for (int k : warm_active) {
      if (k >= 0 && k < mi && !is_active[k] && violation(k) > 0.0) {
        p = k;
        break;
      }
    }
    if (p < 0) {
      double worst = 0.0;
      for (int k = 0; k < mi; ++k) {
        if (is_active[k]) continue;
        const double v = violation(k);
        if (v > worst) {
          worst = v;
          p = k;
        }
      }
    }
    if (p < 0) return finish(QpStatus::Optimal);

    normal.setZero();
    add_normal(p, 1.0, normal);
    double u_plus = 0.0;
    for (int inner = 0;; ++inner) {
      if (inner > max_iter_) return finish(QpStatus::MaxIter);
      compute_step(normal);

      double t1 = kInf;
      int drop = -1;
      for (int pos = 0; pos < q; ++pos) {
        if (active[pos] < 0 || r[pos] <= 0.0) continue;
        const double ratio = u[pos] / r[pos];
        if (ratio < t1) {
          t1 = ratio;
          drop = pos;
        }
      }
      const bool primal_step = d.tail(n - q).norm() > 1e-12 * std::max(1.0, d.norm());
      double t2 = kInf;
      if (primal_step) t2 = -(dot_normal(p, z) - ineq_[p].rhs) / zs.dot(normal);
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) return finish(QpStatus::Infeasible);

      if (!primal_step) {
        if (q > 0) u.head(q) -= t * r.head(q);
        u_plus += t;
        drop_constraint(drop);
        continue;
      }
      z += t * zs;
      if (q > 0) u.head(q) -= t * r.head(q);
      u_plus += t;
      if (t2 <= t1) {
        u[q] = u_plus;
        active.push_back(p);
        is_active[p] = 1;
        if (!add_constraint()) {
          drop_constraint(q - 1);
          return finish(QpStatus::Infeasible);
        }
        break;
      }
      drop_constraint(drop);
    }
  }
}

QpSolution solve_qp(const QpProblem& qp, double tol, int max_iter,
                    std::span<const int> warm_active) {
  QpSolver solver(qp, tol, max_iter);
  return solver.solve(qp.g, warm_active);
}

}  // namespace aggsplit
