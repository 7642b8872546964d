// Centroidal position PID with gravity feed-forward, geometric attitude
// control on SO(3), and decoupled joint PD.
#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "vecquad/geometry.hpp"
#include "vecquad/model.hpp"

namespace vecquad {

struct ControllerGains {
  double kf_p = 4.0, kf_i = 0.4, kf_d = 2.8;   // position PID, 1/s^2, 1/s^3, 1/s
  double kt_p = 20.0, kt_i = 1.0, kt_d = 8.0;  // attitude
  double kj_p = 20.0;                          // N*m/rad
  double kj_d = 1.0;                           // N*m*s/rad
  double pos_integral_clamp = 1.0;             // m*s, per axis
  double att_integral_clamp = 0.5;             // rad*s, per axis
  // Keep the requested wrench inside what the rotors can realize so that the
  // allocation equality stays feasible under large transient errors.
  double wrench_force_xy_clamp = 80.0;   // N
  double wrench_force_z_min = 30.0;      // N
  double wrench_force_z_max = 280.0;     // N
  double wrench_torque_clamp = 20.0;     // N*m

  void validate() const {
    for (double g : {kf_p, kf_i, kf_d, kt_p, kt_i, kt_d, kj_p, kj_d}) {
      if (g < 0.0) throw std::invalid_argument("controller gains must be >= 0");
    }
    if (!(pos_integral_clamp > 0.0) || !(att_integral_clamp > 0.0)) {
      throw std::invalid_argument("integrator clamps must be positive");
    }
  }
};

struct Setpoint {
  Vec3 r = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 omega = Vec3::Zero();
  JointVec q = JointVec::Zero();
};

inline Vec3 clamp_per_axis(const Vec3& v, double limit) {
  return v.cwiseMax(-limit).cwiseMin(limit);
}

// Attitude error 0.5 * vee(R'Rd - Rd'R); positive toward the setpoint.
inline Vec3 attitude_error(const Mat3& R, const Mat3& R_d) {
  return 0.5 * vee(Mat3(R.transpose() * R_d - R_d.transpose() * R));
}

class PositionController {
 public:
  // Desired body-frame thrust force per the centroidal PID with gravity
  // feed-forward. The setpoint velocity comes from finite-differencing r_d.
  Vec3 update(const RobotModel& model, const RobotState& state, const Setpoint& sp,
              const ControllerGains& gains, double dt) {
    const Vec3 e = sp.r - state.r;
    Vec3 r_d_dot = Vec3::Zero();
    if (has_prev_) r_d_dot = (sp.r - prev_setpoint_) / dt;
    prev_setpoint_ = sp.r;
    const Vec3 e_dot = r_d_dot - state.v;

    if (has_prev_) {
      integral_ += 0.5 * (e + prev_error_) * dt;
      integral_ = clamp_per_axis(integral_, gains.pos_integral_clamp);
    }
    prev_error_ = e;
    has_prev_ = true;

    const Vec3 accel = gains.kf_p * e + gains.kf_i * integral_ + gains.kf_d * e_dot +
                       Vec3(0, 0, model.gravity);
    Vec3 f = model.total_mass() * (state.R.transpose() * accel);
    f.x() = std::clamp(f.x(), -gains.wrench_force_xy_clamp, gains.wrench_force_xy_clamp);
    f.y() = std::clamp(f.y(), -gains.wrench_force_xy_clamp, gains.wrench_force_xy_clamp);
    f.z() = std::clamp(f.z(), gains.wrench_force_z_min, gains.wrench_force_z_max);
    return f;
  }

  void reset() {
    integral_.setZero();
    has_prev_ = false;
  }
  const Vec3& integral() const { return integral_; }

 private:
  Vec3 integral_ = Vec3::Zero();
  Vec3 prev_error_ = Vec3::Zero();
  Vec3 prev_setpoint_ = Vec3::Zero();
  bool has_prev_ = false;
};

class AttitudeController {
 public:
  Vec3 update(const RobotState& state, const Setpoint& sp, const ControllerGains& gains,
              const Mat3& inertia, double dt) {
    const Vec3 e_r = attitude_error(state.R, sp.R);
    const Vec3 e_w = state.R.transpose() * sp.R * sp.omega - state.omega;

    if (has_prev_) {
      integral_ += 0.5 * (e_r + prev_error_) * dt;
      integral_ = clamp_per_axis(integral_, gains.att_integral_clamp);
    }
    prev_error_ = e_r;
    has_prev_ = true;

    Vec3 tau = inertia * (gains.kt_p * e_r + gains.kt_i * integral_ + gains.kt_d * e_w) +
               state.omega.cross(inertia * state.omega);
    return clamp_per_axis(tau, gains.wrench_torque_clamp);
  }

  void reset() {
    integral_.setZero();
    has_prev_ = false;
  }
  const Vec3& integral() const { return integral_; }

 private:
  Vec3 integral_ = Vec3::Zero();
  Vec3 prev_error_ = Vec3::Zero();
  bool has_prev_ = false;
};

// Per-joint decoupled PD, clamped to the servo torque limit.
inline JointVec joint_pd(const JointVec& q, const JointVec& qd, const JointVec& q_target,
                         const ControllerGains& gains, double torque_limit) {
  JointVec tau = gains.kj_p * (q_target - q) - gains.kj_d * qd;
  return tau.cwiseMax(-torque_limit).cwiseMin(torque_limit);
}

}  // namespace vecquad
