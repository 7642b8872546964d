// Control allocation: map a desired centroidal wrench (flight) or a leg /
// whole-body lifting task (crawl) to per-rotor 3-D forces and joint
// torques through a convex QP, then convert forces to thrust magnitude and
// vectoring angles.
//
// Decision vector x = [f_1 ... f_N, tau_q]: rotor forces stay explicit in
// body axes so the wrench map, the quasi-static joint equilibrium and the
// vectoring-range rows are all linear; tau_q stays explicit so its limit is
// a plain box.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vecquad/geometry.hpp"
#include "vecquad/interference.hpp"
#include "vecquad/model.hpp"
#include "vecquad/qp.hpp"

namespace vecquad {

struct AllocationError : std::runtime_error {
  AllocationError(const std::string& mode, const std::string& what,
                  std::vector<std::string> rows = {})
      : std::runtime_error(mode + " allocation: " + what), violated_rows(std::move(rows)) {}
  std::vector<std::string> violated_rows;
};

struct RotorCommand {
  double lambda = 0.0;  // N
  double phi = 0.0;     // rad, roll about the rod
  double theta = 0.0;   // rad, tilt about the rotated y axis
  Vec3 force = Vec3::Zero();  // body axes
};

struct AllocationWeights {
  double thrust = 1.0;
  // Small relative to the thrust weight so that hover thrusts stay uniform;
  // the torque box still caps the joint load.
  double joint_torque = 0.01;

  void validate() const {
    if (!(thrust > 0.0) || !(joint_torque > 0.0)) {
      throw std::invalid_argument("allocation weights must be positive");
    }
  }
};

// Bounds on the wrench the ground may exert on the torso (or on the feet in
// stance). The normal force is unbounded above, which is what lets the
// lifting QP spend far less thrust than hovering.
struct ContactWrenchBounds {
  double f_xy = 11.76;   // N      (friction: mu * m_torso * g)
  double tau_xy = 6.35;  // N*m    (torso weight x support half-width)
  double tau_z = 3.18;   // N*m    (friction torque)

  Vec6 lower() const {
    Vec6 w;
    w << -f_xy, -f_xy, 0.0, -tau_xy, -tau_xy, -tau_z;
    return w;
  }
  Vec6 upper() const {
    Vec6 w;
    w << f_xy, f_xy, kInf, tau_xy, tau_xy, tau_z;
    return w;
  }
  void validate() const {
    if (!(f_xy > 0.0) || !(tau_xy > 0.0) || !(tau_z > 0.0)) {
      throw std::invalid_argument("contact wrench bounds must be positive");
    }
  }
};

// lambda = |f|, then invert u(phi, theta) for the vectoring angles.
// f is expressed in the rotor's link frame. A zero force keeps the previous
// angles so the gimbal does not snap around.
inline RotorCommand force_to_command(const Vec3& f_link, const RotorCommand& previous) {
  RotorCommand cmd = previous;
  cmd.lambda = f_link.norm();
  if (cmd.lambda < 1e-9) {
    cmd.lambda = 0.0;
    return cmd;
  }
  cmd.phi = std::atan2(-f_link.y(), f_link.z());
  cmd.theta = std::atan2(f_link.x(),
                         -f_link.y() * std::sin(cmd.phi) + f_link.z() * std::cos(cmd.phi));
  return cmd;
}

struct AllocationResult {
  std::array<RotorCommand, kNumRotors> commands;
  JointVec joint_torque = JointVec::Zero();
  double wrench_residual = 0.0;     // flight mode only
  bool norm_bound_exceeded = false;  // some |f_i| passed the QP box but not the norm bound
  int iterations = 0;
  double solve_time = 0.0;
  bool polished = false;
};

class Allocator {
 public:
  explicit Allocator(RobotModel model, AllocationWeights weights = {}, QpSettings qp = {})
      : model_(std::move(model)), weights_(weights), solver_(qp) {
    model_.validate();
    weights_.validate();
  }

  const RobotModel& model() const { return model_; }
  AllocationWeights& weights() { return weights_; }

  void reset_warm_start() {
    flight_x_.resize(0);
    flight_y_.resize(0);
    lift_x_.resize(0);
    lift_y_.resize(0);
  }

  // Flight: track the desired wrench exactly, subject to the joint
  // equilibrium, actuator boxes and the vectoring-range rows of every
  // restricted rotor.
  AllocationResult allocate_flight(const KinematicsResult& kin, const Vec3& g_body,
                                   const Vec6& desired_wrench,
                                   const std::vector<ForceConstraint>& constraints) {
    const int n = 3 * kNumRotors + kNumJoints;
    QpProblem p;
    p.P = cost_matrix(n, kNumJoints);
    p.A = MatX::Zero(6 + kNumJoints, n);
    p.b = VecX::Zero(6 + kNumJoints);
    for (int i = 0; i < kNumRotors; ++i) {
      p.A.block<3, 3>(0, 3 * i).setIdentity();
      p.A.block<3, 3>(3, 3 * i) = skew(kin.rotor_pos_cog(i));
    }
    p.b.head<6>() = desired_wrench;
    fill_joint_equilibrium(p, 6, kin, g_body);

    const int extra = static_cast<int>(constraints.size()) * 3;
    p.C = MatX::Zero(n + extra, n);
    p.l = VecX::Zero(n + extra);
    p.u = VecX::Zero(n + extra);
    fill_boxes(p, n);
    int row = n;
    for (const auto& fc : constraints) {
      p.C.block<1, 3>(row, 3 * fc.rotor) = fc.y_axis.transpose();
      p.l[row] = 0.0;
      p.u[row] = 0.0;
      p.C.block<1, 3>(row + 1, 3 * fc.rotor) = fc.inf_axis.transpose();
      p.l[row + 1] = 0.0;
      p.u[row + 1] = kInf;
      p.C.block<1, 3>(row + 2, 3 * fc.rotor) = fc.sup_axis.transpose();
      p.l[row + 2] = -kInf;
      p.u[row + 2] = 0.0;
      row += 3;
    }

    const QpSolution sol = run(p, "flight", flight_x_, flight_y_, [&](int r) {
      return flight_row_label(r, static_cast<int>(constraints.size()));
    });
    AllocationResult out = extract(sol, kin);
    out.wrench_residual = (p.A.topRows<6>() * sol.x - desired_wrench).norm();
    return out;
  }

  // Single or multiple lifted legs, torso grounded: only the lifted chains'
  // joint equilibrium enters; there is no centroidal wrench row.
  AllocationResult allocate_leg_lift(const KinematicsResult& kin, const Vec3& g_body,
                                     const std::vector<int>& legs) {
    if (legs.empty()) throw AllocationError("leg-lift", "empty leg set");
    std::vector<int> rotors, joints;
    for (int l : legs) {
      if (l < 0 || l >= kNumLegs) throw AllocationError("leg-lift", "leg index out of range");
      rotors.push_back(2 * l);
      rotors.push_back(2 * l + 1);
      for (int j = 0; j < 4; ++j) joints.push_back(4 * l + j);
    }
    const int nf = 3 * static_cast<int>(rotors.size());
    const int nj = static_cast<int>(joints.size());
    const int n = nf + nj;

    QpProblem p;
    p.P = cost_matrix(n, nj);
    p.A = MatX::Zero(nj, n);
    p.b = VecX::Zero(nj);
    VecX gravity_load = VecX::Zero(nj);
    for (int s = 0; s < kNumSegments; ++s) {
      for (int r = 0; r < nj; ++r) {
        gravity_load[r] +=
            model_.segment_masses[s] * kin.segment_jac[s].col(joints[r]).dot(g_body);
      }
    }
    for (int r = 0; r < nj; ++r) {
      for (int k = 0; k < static_cast<int>(rotors.size()); ++k) {
        p.A.block<1, 3>(r, 3 * k) = kin.rotor_jac[rotors[k]].col(joints[r]).transpose();
      }
      p.A(r, nf + r) = 1.0;
      p.b[r] = -gravity_load[r];
    }
    p.C = MatX::Zero(n, n);
    p.l = VecX::Zero(n);
    p.u = VecX::Zero(n);
    fill_boxes_generic(p, nf, nj);

    const QpSolution sol = run(p, "leg-lift", lift_x_, lift_y_, [&](int r) {
      return std::string("row ") + std::to_string(r);
    });

    AllocationResult out;
    for (int k = 0; k < static_cast<int>(rotors.size()); ++k) {
      const int i = rotors[k];
      const Vec3 f = sol.x.segment<3>(3 * k);
      out.commands[i] = command_from_body_force(kin, i, f);
      if (out.commands[i].lambda > model_.thrust_limit + 1e-6) out.norm_bound_exceeded = true;
      prev_commands_[i] = out.commands[i];
    }
    for (int r = 0; r < nj; ++r) out.joint_torque[joints[r]] = sol.x[nf + r];
    out.iterations = sol.iterations;
    out.solve_time = sol.solve_time;
    out.polished = sol.polished;
    return out;
  }

  // All legs lifted (or stance assistance): every rotor and joint is free,
  // and the wrench the support must supply stays inside the given bounds.
  // Moments are taken about the baselink origin, where the contacts act.
  AllocationResult allocate_all_legs_lift(const KinematicsResult& kin, const Vec3& g_body,
                                          const ContactWrenchBounds& bounds) {
    bounds.validate();
    const int n = 3 * kNumRotors + kNumJoints;
    QpProblem p;
    p.P = cost_matrix(n, kNumJoints);
    p.A = MatX::Zero(kNumJoints, n);
    p.b = VecX::Zero(kNumJoints);
    fill_joint_equilibrium(p, 0, kin, g_body);

    p.C = MatX::Zero(n + 6, n);
    p.l = VecX::Zero(n + 6);
    p.u = VecX::Zero(n + 6);
    fill_boxes(p, n);

    // w_lo <= -sum_i What_i f_i - G <= w_hi  with  What_i = [I; [p_i x]]
    Vec6 gravity_wrench = Vec6::Zero();
    for (int s = 0; s < kNumSegments; ++s) {
      const Vec3 fg = model_.segment_masses[s] * g_body;
      gravity_wrench.head<3>() += fg;
      gravity_wrench.tail<3>() += kin.segment_cog[s].cross(fg);
    }
    for (int i = 0; i < kNumRotors; ++i) {
      p.C.block<3, 3>(n, 3 * i).setIdentity();
      p.C.block<3, 3>(n + 3, 3 * i) = skew(kin.rotor_pos[i]);
    }
    p.l.tail<6>() = -bounds.upper() - gravity_wrench;
    p.u.tail<6>() = -bounds.lower() - gravity_wrench;

    const QpSolution sol = run(p, "all-legs-lift", flight_x_, flight_y_, [&](int r) {
      if (r >= n) {
        static const char* names[6] = {"contact f_x", "contact f_y", "contact f_z",
                                       "contact tau_x", "contact tau_y", "contact tau_z"};
        return std::string(names[r - n]);
      }
      return (r < 3 * kNumRotors) ? "force box " + std::to_string(r)
                                  : "torque box " + std::to_string(r - 3 * kNumRotors);
    });
    return extract(sol, kin);
  }

  // Implied support wrench about the baselink for a set of commands.
  Vec6 contact_wrench(const KinematicsResult& kin, const Vec3& g_body,
                      const std::array<RotorCommand, kNumRotors>& commands) const {
    Vec6 w = Vec6::Zero();
    for (int i = 0; i < kNumRotors; ++i) {
      w.head<3>() += commands[i].force;
      w.tail<3>() += kin.rotor_pos[i].cross(commands[i].force);
    }
    for (int s = 0; s < kNumSegments; ++s) {
      const Vec3 fg = model_.segment_masses[s] * g_body;
      w.head<3>() += fg;
      w.tail<3>() += kin.segment_cog[s].cross(fg);
    }
    return -w;
  }

  const std::array<RotorCommand, kNumRotors>& previous_commands() const {
    return prev_commands_;
  }
  void set_previous_commands(const std::array<RotorCommand, kNumRotors>& cmds) {
    prev_commands_ = cmds;
  }

 private:
  MatX cost_matrix(int n, int n_tau) const {
    VecX d = VecX::Constant(n, 2.0 * weights_.thrust);
    d.tail(n_tau).setConstant(2.0 * weights_.joint_torque);
    return MatX(d.asDiagonal());
  }

  void fill_joint_equilibrium(QpProblem& p, int row0, const KinematicsResult& kin,
                              const Vec3& g_body) const {
    for (int i = 0; i < kNumRotors; ++i) {
      p.A.block(row0, 3 * i, kNumJoints, 3) = kin.rotor_jac[i].transpose();
    }
    p.A.block(row0, 3 * kNumRotors, kNumJoints, kNumJoints).setIdentity();
    VecX gravity_load = VecX::Zero(kNumJoints);
    for (int s = 0; s < kNumSegments; ++s) {
      gravity_load += model_.segment_masses[s] * (kin.segment_jac[s].transpose() * g_body);
    }
    p.b.segment(row0, kNumJoints) = -gravity_load;
  }

  void fill_boxes(QpProblem& p, int n) const { fill_boxes_generic(p, n - kNumJoints, kNumJoints); }

  void fill_boxes_generic(QpProblem& p, int nf, int nj) const {
    p.C.topLeftCorner(nf + nj, nf + nj).setIdentity();
    p.l.head(nf).setConstant(-model_.thrust_limit);
    p.u.head(nf).setConstant(model_.thrust_limit);
    p.l.segment(nf, nj).setConstant(-model_.joint_torque_limit);
    p.u.segment(nf, nj).setConstant(model_.joint_torque_limit);
  }

  template <typename RowLabel>
  QpSolution run(const QpProblem& p, const char* mode, VecX& warm_x, VecX& warm_y,
                 RowLabel&& label) {
    QpSolution sol = solver_.solve(p, warm_x, warm_y);
    if (sol.status == QpStatus::infeasible) {
      std::vector<std::string> rows;
      const int me = static_cast<int>(p.A.rows());
      if (sol.y.size() > 0) {
        const double top = sol.y.cwiseAbs().maxCoeff();
        for (int r = 0; r < sol.y.size(); ++r) {
          if (std::abs(sol.y[r]) > 0.1 * top) {
            rows.push_back(r < me ? "equality " + std::to_string(r) : label(r - me));
          }
        }
      }
      warm_x.resize(0);
      warm_y.resize(0);
      throw AllocationError(mode, "infeasible", rows);
    }
    if (sol.status == QpStatus::max_iter && sol.primal_residual > 1e-5) {
      warm_x.resize(0);
      warm_y.resize(0);
      throw AllocationError(mode, "solver did not converge");
    }
    warm_x = sol.x;
    warm_y = sol.y;
    return sol;
  }

  RotorCommand command_from_body_force(const KinematicsResult& kin, int i, const Vec3& f_body) {
    RotorCommand cmd = force_to_command(kin.link_rot[i].transpose() * f_body, prev_commands_[i]);
    cmd.force = f_body;
    return cmd;
  }

  AllocationResult extract(const QpSolution& sol, const KinematicsResult& kin) {
    AllocationResult out;
    for (int i = 0; i < kNumRotors; ++i) {
      const Vec3 f = sol.x.segment<3>(3 * i);
      out.commands[i] = command_from_body_force(kin, i, f);
      if (out.commands[i].lambda > model_.thrust_limit + 1e-6) out.norm_bound_exceeded = true;
      prev_commands_[i] = out.commands[i];
    }
    out.joint_torque = sol.x.tail(kNumJoints);
    out.iterations = sol.iterations;
    out.solve_time = sol.solve_time;
    out.polished = sol.polished;
    return out;
  }

  std::string flight_row_label(int r, int num_constraints) const {
    const int n = 3 * kNumRotors + kNumJoints;
    if (r < 3 * kNumRotors) return "force box " + std::to_string(r);
    if (r < n) return "torque box " + std::to_string(r - 3 * kNumRotors);
    const int c = (r - n) / 3;
    const int kind = (r - n) % 3;
    static const char* kinds[3] = {"f_y", "inf", "sup"};
    return "interference " + std::string(kinds[kind]) + " of constraint " + std::to_string(c) +
           "/" + std::to_string(num_constraints);
  }

  RobotModel model_;
  AllocationWeights weights_;
  QpSolver solver_;
  VecX flight_x_, flight_y_, lift_x_, lift_y_;
  std::array<RotorCommand, kNumRotors> prev_commands_{};
};

// Rows for every restricted rotor, ready to hand to the flight allocation.
inline std::vector<ForceConstraint> restricted_force_constraints(
    const std::array<VectoringRange, kNumRotors>& ranges, const KinematicsResult& kin) {
  std::vector<ForceConstraint> out;
  for (const auto& r : ranges) {
    if (r.restricted) out.push_back(force_constraints(r, kin.link_rot[r.rotor]));
  }
  return out;
}

}  // namespace vecquad
