// Dense convex QP solver for   min 1/2 x'Px   s.t.  Ax = b,  l <= Cx <= u.
//
// Operator-splitting (ADMM) iteration with per-row penalties, adaptive rho
// and an active-set polish step that solves the reduced KKT system once the
// splitting has identified the active constraints. Deterministic: fixed
// iteration order, no randomized pivoting.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vecquad/geometry.hpp"

namespace vecquad {

struct QpProblem {
  MatX P;  // n x n, symmetric PSD
  MatX A;  // m_e x n
  VecX b;  // m_e
  MatX C;  // m_i x n
  VecX l;  // m_i, entries may be -inf
  VecX u;  // m_i, entries may be +inf

  int num_vars() const { return static_cast<int>(P.rows()); }

  void validate() const {
    const int n = num_vars();
    if (P.cols() != n) throw std::invalid_argument("qp: P not square");
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw std::invalid_argument("qp: P not symmetric");
    }
    if (A.rows() != b.size() || (A.rows() > 0 && A.cols() != n)) {
      throw std::invalid_argument("qp: equality dimensions inconsistent");
    }
    if (C.rows() != l.size() || C.rows() != u.size() || (C.rows() > 0 && C.cols() != n)) {
      throw std::invalid_argument("qp: inequality dimensions inconsistent");
    }
    for (int i = 0; i < l.size(); ++i) {
      if (l[i] > u[i]) throw std::invalid_argument("qp: l > u at row " + std::to_string(i));
    }
  }
};

enum class QpStatus { optimal, infeasible, max_iter };

struct QpSolution {
  VecX x;
  VecX y;  // multipliers for the stacked [A; C] rows
  QpStatus status = QpStatus::max_iter;
  double primal_residual = kInf;
  double dual_residual = kInf;
  int iterations = 0;
  double solve_time = 0.0;  // seconds
  bool polished = false;
};

struct QpSettings {
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  int max_iter = 4000;
  double rho = 0.1;
  double rho_eq_scale = 1e3;  // stiffer penalty on equality rows
  double sigma = 1e-6;
  double alpha = 1.6;  // over-relaxation
  bool adaptive_rho = true;
  int check_interval = 10;
  double eps_infeasible = 1e-10;
  bool polish = true;
  double regularization = 1e-9;  // added to P when ill-conditioned
};

// Direct KKT solve for equality-constrained problems; used as the
// independent oracle for the iterative solver.
inline VecX kkt_oracle(const QpProblem& p) {
  p.validate();
  for (int i = 0; i < p.l.size(); ++i) {
    if (p.l[i] > -kInf || p.u[i] < kInf) {
      throw std::invalid_argument("kkt_oracle: finite inequality bounds not supported");
    }
  }
  const int n = p.num_vars();
  const int me = static_cast<int>(p.A.rows());
  MatX kkt = MatX::Zero(n + me, n + me);
  kkt.topLeftCorner(n, n) = p.P;
  kkt.topRightCorner(n, me) = p.A.transpose();
  kkt.bottomLeftCorner(me, n) = p.A;
  VecX rhs = VecX::Zero(n + me);
  rhs.tail(me) = p.b;
  Eigen::FullPivLU<MatX> lu(kkt);
  if (!lu.isInvertible()) throw std::runtime_error("kkt_oracle: singular KKT system");
  const VecX sol = lu.solve(rhs);
  return sol.head(n);
}

class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  const QpSettings& settings() const { return settings_; }
  QpSettings& settings() { return settings_; }

  QpSolution solve(const QpProblem& p) { return solve(p, VecX(), VecX()); }

  // Warm start with a previous primal/dual pair (either may be empty).
  QpSolution solve(const QpProblem& p, const VecX& x_warm, const VecX& y_warm) {
    const auto t0 = std::chrono::steady_clock::now();
    p.validate();

    const int n = p.num_vars();
    const int me = static_cast<int>(p.A.rows());
    const int mi = static_cast<int>(p.C.rows());
    const int m = me + mi;

    M_.resize(m, n);
    if (me > 0) M_.topRows(me) = p.A;
    if (mi > 0) M_.bottomRows(mi) = p.C;
    lb_.resize(m);
    ub_.resize(m);
    lb_.head(me) = p.b;
    ub_.head(me) = p.b;
    lb_.tail(mi) = p.l;
    ub_.tail(mi) = p.u;

    QpSolution sol;
    sol.x = (x_warm.size() == n) ? x_warm : VecX::Zero(n);
    y_ = (y_warm.size() == m) ? y_warm : VecX::Zero(m);
    z_ = M_ * sol.x;
    for (int i = 0; i < m; ++i) z_[i] = std::clamp(z_[i], lb_[i], ub_[i]);

    if (m == 0) {  // unconstrained with P PSD: minimum of the quadratic
      sol.x = VecX::Zero(n);
      sol.status = QpStatus::optimal;
      sol.primal_residual = 0.0;
      sol.dual_residual = 0.0;
      sol.solve_time = elapsed(t0);
      return sol;
    }

    rho_bar_ = settings_.rho;
    build_rho(me, m);
    factorize(p);

    VecX mx = M_ * sol.x;
    VecX y_prev = y_;
    const int infeas_window = 25;

    for (int iter = 1; iter <= settings_.max_iter; ++iter) {
      // x-update: (P + sigma I + M' diag(rho) M) xt = sigma x + M'(rho.*z - y)
      rhs_ = settings_.sigma * sol.x + M_.transpose() * (rho_.cwiseProduct(z_) - y_);
      xt_ = llt_.solve(rhs_);
      mxt_ = M_ * xt_;

      const double a = settings_.alpha;
      sol.x = a * xt_ + (1.0 - a) * sol.x;
      zt_ = a * mxt_ + (1.0 - a) * z_;
      VecX z_new = zt_ + y_.cwiseQuotient(rho_);
      for (int i = 0; i < m; ++i) z_new[i] = std::clamp(z_new[i], lb_[i], ub_[i]);
      y_ += rho_.cwiseProduct(zt_ - z_new);
      z_ = z_new;
      sol.iterations = iter;

      if (iter % settings_.check_interval == 0 || iter == settings_.max_iter) {
        mx.noalias() = M_ * sol.x;
        px_.noalias() = p.P * sol.x;
        mty_.noalias() = M_.transpose() * y_;
        const double rp = (mx - z_).cwiseAbs().maxCoeff();
        const double rd = (px_ + mty_).cwiseAbs().maxCoeff();
        const double eps_p = settings_.eps_abs +
                             settings_.eps_rel * std::max(mx.cwiseAbs().maxCoeff(),
                                                          z_.cwiseAbs().maxCoeff());
        const double eps_d = settings_.eps_abs +
                             settings_.eps_rel * std::max(px_.cwiseAbs().maxCoeff(),
                                                          mty_.cwiseAbs().maxCoeff());
        sol.primal_residual = rp;
        sol.dual_residual = rd;
        if (rp <= eps_p && rd <= eps_d) {
          sol.status = QpStatus::optimal;
          break;
        }
        if (primal_infeasible(y_ - y_prev)) {
          sol.status = QpStatus::infeasible;
          sol.y = y_ - y_prev;  // certificate direction
          sol.solve_time = elapsed(t0);
          return sol;
        }
        if (iter % infeas_window == 0) y_prev = y_;

        if (settings_.adaptive_rho && rp > 0 && rd > 0) {
          const double ratio = std::sqrt((rp / std::max(eps_p, 1e-300)) /
                                         (rd / std::max(eps_d, 1e-300)));
          if (ratio > 5.0 || ratio < 0.2) {
            rho_bar_ = std::clamp(rho_bar_ * ratio, 1e-6, 1e6);
            build_rho(me, m);
            factorize(p);
          }
        }
      }
    }

    sol.y = y_;
    if (settings_.polish && sol.status == QpStatus::optimal) {
      polish(p, sol);
    }
    sol.solve_time = elapsed(t0);
    return sol;
  }

 private:
  static double elapsed(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  void build_rho(int me, int m) {
    rho_.resize(m);
    for (int i = 0; i < m; ++i) {
      const bool eq = (i < me) || (lb_[i] == ub_[i]);
      const bool loose = !eq && lb_[i] == -kInf && ub_[i] == kInf;
      rho_[i] = eq ? rho_bar_ * settings_.rho_eq_scale : (loose ? rho_bar_ * 1e-3 : rho_bar_);
    }
  }

  void factorize(const QpProblem& p) {
    kmat_ = p.P;
    kmat_.diagonal().array() += settings_.sigma;
    kmat_.noalias() += M_.transpose() * rho_.asDiagonal() * M_;
    llt_.compute(kmat_);
    if (llt_.info() != Eigen::Success) {
      kmat_.diagonal().array() += settings_.regularization;
      llt_.compute(kmat_);
      if (llt_.info() != Eigen::Success) {
        throw std::runtime_error("qp: failed to factorize the ADMM system");
      }
    }
  }

  // OSQP-style certificate: dy with M'dy ~ 0 and support cost < 0 proves
  // that no x satisfies all constraints.
  bool primal_infeasible(const VecX& dy) const {
    const double norm = dy.cwiseAbs().maxCoeff();
    if (norm < 1e-14) return false;
    const VecX d = dy / norm;
    if ((M_.transpose() * d).cwiseAbs().maxCoeff() > 1e-6) return false;
    double support = 0.0;
    for (int i = 0; i < d.size(); ++i) {
      if (d[i] > 1e-10) {
        if (ub_[i] == kInf) return false;
        support += ub_[i] * d[i];
      } else if (d[i] < -1e-10) {
        if (lb_[i] == -kInf) return false;
        support += lb_[i] * d[i];
      }
    }
    return support < -settings_.eps_infeasible;
  }

  // Solve the equality-constrained problem restricted to the active rows.
  void polish(const QpProblem& p, QpSolution& sol) {
    const int n = p.num_vars();
    const int m = static_cast<int>(M_.rows());

    std::vector<int> active;
    std::vector<double> target;
    for (int i = 0; i < m; ++i) {
      const double act_tol = 1e-6 * (1.0 + std::abs(z_[i]));
      if (lb_[i] == ub_[i]) {
        active.push_back(i);
        target.push_back(lb_[i]);
      } else if (lb_[i] > -kInf && z_[i] - lb_[i] < act_tol && y_[i] < 0.0) {
        active.push_back(i);
        target.push_back(lb_[i]);
      } else if (ub_[i] < kInf && ub_[i] - z_[i] < act_tol && y_[i] > 0.0) {
        active.push_back(i);
        target.push_back(ub_[i]);
      }
    }

    const int k = static_cast<int>(active.size());
    MatX kkt = MatX::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = p.P;
    kkt.topLeftCorner(n, n).diagonal().array() += settings_.regularization;
    VecX rhs = VecX::Zero(n + k);
    for (int a = 0; a < k; ++a) {
      kkt.block(0, n + a, n, 1) = M_.row(active[a]).transpose();
      kkt.block(n + a, 0, 1, n) = M_.row(active[a]);
      kkt(n + a, n + a) = -settings_.regularization;
      rhs[n + a] = target[a];
    }
    Eigen::PartialPivLU<MatX> lu(kkt);
    VecX sol_kkt = lu.solve(rhs);
    // one step of iterative refinement
    sol_kkt += lu.solve(rhs - kkt * sol_kkt);
    const VecX x_pol = sol_kkt.head(n);

    // Accept only if the polished point is feasible and reduces residuals.
    const VecX mx = M_ * x_pol;
    double rp = 0.0;
    for (int i = 0; i < m; ++i) {
      rp = std::max(rp, std::max(lb_[i] - mx[i], mx[i] - ub_[i]));
    }
    VecX y_pol = VecX::Zero(m);
    for (int a = 0; a < k; ++a) y_pol[active[a]] = sol_kkt[n + a];
    const double rd = (p.P * x_pol + M_.transpose() * y_pol).cwiseAbs().maxCoeff();
    if (rp <= std::max(sol.primal_residual, 1e-9) && rd <= std::max(sol.dual_residual, 1e-9)) {
      sol.x = x_pol;
      sol.y = y_pol;
      sol.primal_residual = std::max(rp, 0.0);
      sol.dual_residual = rd;
      sol.polished = true;
    }
  }

  QpSettings settings_;
  double rho_bar_ = 0.1;
  MatX M_, kmat_;
  VecX lb_, ub_, rho_, y_, z_, zt_, xt_, mxt_, rhs_, px_, mty_;
  Eigen::LLT<MatX> llt_;
};

}  // namespace vecquad
