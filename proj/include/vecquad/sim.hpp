// Quasi-static closed-loop simulation. Flight integrates the approximate
// centroidal dynamics under the allocated thrust wrench; crawling is
// kinematic (pinned contacts) with a static balance check of the implied
// support wrench every tick. Joints follow their targets through a
// rate-limited first-order servo model.
#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vecquad/allocation.hpp"
#include "vecquad/control.hpp"
#include "vecquad/gait.hpp"
#include "vecquad/geometry.hpp"
#include "vecquad/interference.hpp"
#include "vecquad/model.hpp"

namespace vecquad {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SimMode { flight, crawl };

struct SimConfig {
  double dt = 0.025;  // 40 Hz control loop
  double duration = 40.0;
  SimMode mode = SimMode::flight;
  double disturbance = 0.0;  // N / N*m noise amplitude on the applied wrench
  unsigned long long seed = 0;

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("sim: dt must be positive");
    if (!(duration >= dt)) throw std::invalid_argument("sim: duration must cover one tick");
  }
};

struct FormKeyframe {
  double t = 0.0;
  JointVec q = JointVec::Zero();
};

struct FlightPlan {
  Vec3 hover_position = Vec3(0, 0, 1);
  std::vector<FormKeyframe> forms;
  // while t is inside one of these windows the vectoring-range rows are
  // dropped from the allocation (constraint-toggle experiments)
  std::vector<std::pair<double, double>> no_interference_windows;

  JointVec target_at(double t) const {
    JointVec q = JointVec::Zero();
    for (const auto& kf : forms) {
      if (kf.t <= t) q = kf.q;
    }
    return q;
  }
  bool interference_suppressed(double t) const {
    for (const auto& w : no_interference_windows) {
      if (t >= w.first && t <= w.second) return true;
    }
    return false;
  }
};

// Joint vector for the symmetric flight forms: every leg gets
// (0, hip_pitch, 0, knee_pitch).
inline JointVec symmetric_form(double hip_pitch, double knee_pitch) {
  JointVec q = JointVec::Zero();
  for (int l = 0; l < kNumLegs; ++l) {
    q[4 * l + 1] = hip_pitch;
    q[4 * l + 3] = knee_pitch;
  }
  return q;
}

struct TickLog {
  double t = 0.0;
  Vec3 r = Vec3::Zero();
  Vec3 euler = Vec3::Zero();
  JointVec q = JointVec::Zero();
  JointVec tau_q = JointVec::Zero();
  std::array<double, kNumRotors> lambda{};
  std::array<double, kNumRotors> phi{};
  std::array<double, kNumRotors> theta{};
  Vec3 e_r = Vec3::Zero();
  Vec3 e_R = Vec3::Zero();
  int solve_iters = 0;
  int violations = 0;
};

struct TrajectorySummary {
  std::string mode;
  int ticks = 0;
  double duration = 0.0;
  double rmse_position = 0.0;
  Vec3 rmse_position_xyz = Vec3::Zero();
  double rmse_orientation = 0.0;
  double max_wrench_residual = 0.0;
  double thrust_integral = 0.0;        // integral of sum |f_i| dt, N*s
  double hover_thrust_integral = 0.0;  // m g * duration, for comparisons
  int violations = 0;
  double solve_ms_median = 0.0;
  double solve_ms_max = 0.0;
  // crawl only
  Vec3 displacement = Vec3::Zero();
  std::vector<double> cycle_displacement;
  double cycle_joint_repeatability = 0.0;  // max |q - q(cycle start)| across cycles
};

struct Trajectory {
  std::vector<TickLog> ticks;
  TrajectorySummary summary;

  void write_csv(std::ostream& os) const {
    os << "t,r_x,r_y,r_z,roll,pitch,yaw";
    for (int i = 0; i < kNumJoints; ++i) os << ",q" << i;
    for (int i = 0; i < kNumJoints; ++i) os << ",tau_q" << i;
    for (int i = 0; i < kNumRotors; ++i) os << ",lambda" << i;
    for (int i = 0; i < kNumRotors; ++i) os << ",phi" << i;
    for (int i = 0; i < kNumRotors; ++i) os << ",theta" << i;
    os << ",e_r_x,e_r_y,e_r_z,e_R_x,e_R_y,e_R_z,solve_iters,violations\n";
    char buf[32];
    auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      os << ',' << buf;
    };
    for (const auto& k : ticks) {
      std::snprintf(buf, sizeof(buf), "%.9g", k.t);
      os << buf;
      for (int i = 0; i < 3; ++i) put(k.r[i]);
      for (int i = 0; i < 3; ++i) put(k.euler[i]);
      for (int i = 0; i < kNumJoints; ++i) put(k.q[i]);
      for (int i = 0; i < kNumJoints; ++i) put(k.tau_q[i]);
      for (int i = 0; i < kNumRotors; ++i) put(k.lambda[i]);
      for (int i = 0; i < kNumRotors; ++i) put(k.phi[i]);
      for (int i = 0; i < kNumRotors; ++i) put(k.theta[i]);
      for (int i = 0; i < 3; ++i) put(k.e_r[i]);
      for (int i = 0; i < 3; ++i) put(k.e_R[i]);
      os << ',' << k.solve_iters << ',' << k.violations << '\n';
    }
  }
};

// One semi-implicit Euler step of the approximate rigid-body dynamics under
// a thrust wrench given in body axes about the CoG.
inline void step_flight_wrench(const RobotModel& model, RobotState& state,
                               const KinematicsResult& kin, const Vec6& wrench_body,
                               const JointVec& q_target, double dt) {
  const Vec3 accel =
      state.R * wrench_body.head<3>() / kin.total_mass + Vec3(0, 0, -model.gravity);
  state.v += accel * dt;
  state.r += state.v * dt;

  const Mat3 inertia = kin.inertia;
  const Vec3 omega_dot =
      inertia.ldlt().solve(wrench_body.tail<3>() - state.omega.cross(inertia * state.omega));
  state.omega += omega_dot * dt;
  state.R = orthonormalize(state.R * exp_so3(state.omega * dt));

  for (int j = 0; j < kNumJoints; ++j) {
    const double rate = std::clamp((q_target[j] - state.q[j]) / 0.1, -model.joint_speed_limit,
                                   model.joint_speed_limit);
    state.q[j] += rate * dt;
    state.qd[j] = rate;
  }

  if (!state.r.allFinite() || !state.R.allFinite() || !state.omega.allFinite()) {
    throw SimError("flight step produced a non-finite state");
  }
}

inline void step_flight(const RobotModel& model, RobotState& state,
                        const std::array<RotorCommand, kNumRotors>& commands,
                        const JointVec& q_target, double dt) {
  const KinematicsResult kin = forward_kinematics(model, state.q);
  std::array<Vec3, kNumRotors> forces;
  for (int i = 0; i < kNumRotors; ++i) forces[i] = commands[i].force;
  step_flight_wrench(model, state, kin, total_wrench(kin, forces), q_target, dt);
}

struct ContactReport {
  Vec6 wrench = Vec6::Zero();  // support wrench about the baselink
  bool violated = false;
  std::string binding;  // component that left its bound
};

// Static balance check of the implied support wrench against the active
// contact bounds. The pose itself is advanced kinematically by the caller;
// on violation the caller freezes the pose and records the event.
inline ContactReport check_contact_wrench(const Vec6& support_wrench,
                                          const ContactWrenchBounds& bounds, double tol = 1e-6) {
  static const char* names[6] = {"f_x", "f_y", "f_z", "tau_x", "tau_y", "tau_z"};
  ContactReport report;
  report.wrench = support_wrench;
  const Vec6 lo = bounds.lower();
  const Vec6 hi = bounds.upper();
  for (int k = 0; k < 6; ++k) {
    if (support_wrench[k] < lo[k] - tol || support_wrench[k] > hi[k] + tol) {
      report.violated = true;
      if (!report.binding.empty()) report.binding += ",";
      report.binding += names[k];
    }
  }
  return report;
}

// Kinematic crawl step: joints servo toward their targets and the torso
// moves toward its planned pose. Contact is handled by pinning, not by
// impulse dynamics.
inline void step_crawl(const RobotModel& model, RobotState& state, Vec3& base,
                       const Vec3& base_target, const JointVec& q_target, double dt) {
  for (int j = 0; j < kNumJoints; ++j) {
    const double rate = std::clamp((q_target[j] - state.q[j]) / 0.1, -model.joint_speed_limit,
                                   model.joint_speed_limit);
    state.q[j] += rate * dt;
    state.qd[j] = rate;
  }
  const Vec3 delta = base_target - base;
  const double max_step = 0.5 * dt;  // generous cap; the planner already rate-limits
  base += (delta.norm() > max_step) ? Vec3(delta.normalized() * max_step) : delta;
  const KinematicsResult kin = forward_kinematics(model, state.q);
  state.r = base + state.R * kin.cog;
  state.omega.setZero();
  state.v.setZero();
}

struct FlightScenario {
  SimConfig sim;
  FlightPlan plan;
  ControllerGains gains;
  AllocationWeights weights;
  InterferenceParams interference;
  bool interference_enabled = true;
};

struct CrawlScenario {
  SimConfig sim;
  GaitParams gait;
  AllocationWeights weights;
  ContactWrenchBounds torso_bounds;   // legs swinging, torso on the ground
  ContactWrenchBounds stance_bounds;  // torso moving on planted feet
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace detail

inline Trajectory run_flight_scenario(const RobotModel& model, const FlightScenario& scenario) {
  scenario.sim.validate();
  scenario.gains.validate();
  if (scenario.sim.duration > 0 && scenario.plan.forms.empty()) {
    throw SimError("flight scenario has no form schedule");
  }

  RobotState state;
  state.q = scenario.plan.forms.front().q;
  state.r = scenario.plan.hover_position;

  Setpoint sp;
  sp.r = scenario.plan.hover_position;

  Allocator allocator(model, scenario.weights);
  PositionController pos_ctl;
  AttitudeController att_ctl;
  std::mt19937_64 rng(scenario.sim.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::array<double, kNumRotors> prev_phi{};
  std::array<RotorCommand, kNumRotors> commands{};
  bool have_commands = false;

  Trajectory traj;
  TrajectorySummary& sum = traj.summary;
  sum.mode = "flight";
  std::vector<double> solve_ms;
  double se_pos = 0.0, se_att = 0.0;
  Vec3 se_pos_xyz = Vec3::Zero();

  const int n_ticks = static_cast<int>(std::round(scenario.sim.duration / scenario.sim.dt));
  for (int k = 0; k < n_ticks; ++k) {
    const double t = k * scenario.sim.dt;
    const KinematicsResult kin = forward_kinematics(model, state.q);
    const Vec3 g_body = gravity_body(model, state.R);
    const JointVec q_target = scenario.plan.target_at(t);

    TickLog log;
    log.t = t;
    log.q = state.q;

    const Vec3 f_d = pos_ctl.update(model, state, sp, scenario.gains, scenario.sim.dt);
    const Vec3 tau_d = att_ctl.update(state, sp, scenario.gains, kin.inertia, scenario.sim.dt);
    Vec6 w_d;
    w_d << f_d, tau_d;

    const bool apply_ranges =
        scenario.interference_enabled && !scenario.plan.interference_suppressed(t);
    std::vector<ForceConstraint> constraints;
    try {
      const auto ranges =
          valid_ranges(model, kin, state.R.transpose() * Vec3(0, 0, 1), scenario.interference,
                       prev_phi);
      for (int i = 0; i < kNumRotors; ++i) {
        if (!ranges[i].singular) prev_phi[i] = ranges[i].phi_hat;
      }
      if (apply_ranges) constraints = restricted_force_constraints(ranges, kin);
    } catch (const RangeError&) {
      ++log.violations;
    }

    try {
      AllocationResult alloc = allocator.allocate_flight(kin, g_body, w_d, constraints);
      commands = alloc.commands;
      have_commands = true;
      log.tau_q = alloc.joint_torque;
      log.solve_iters = alloc.iterations;
      solve_ms.push_back(alloc.solve_time * 1e3);
      sum.max_wrench_residual = std::max(sum.max_wrench_residual, alloc.wrench_residual);
      if (alloc.norm_bound_exceeded) ++log.violations;
    } catch (const AllocationError&) {
      ++log.violations;
      if (!have_commands) throw SimError("allocation failed on the first tick");
    }

    double thrust_sum = 0.0;
    for (int i = 0; i < kNumRotors; ++i) {
      log.lambda[i] = commands[i].lambda;
      log.phi[i] = commands[i].phi;
      log.theta[i] = commands[i].theta;
      thrust_sum += commands[i].lambda;
    }
    sum.thrust_integral += thrust_sum * scenario.sim.dt;

    log.r = state.r;
    log.euler = euler_zyx(state.R);
    log.e_r = sp.r - state.r;
    log.e_R = attitude_error(state.R, sp.R);
    se_pos += log.e_r.squaredNorm();
    se_pos_xyz += log.e_r.cwiseAbs2();
    const double geodesic = std::acos(std::clamp(
        ((state.R.transpose() * sp.R).trace() - 1.0) / 2.0, -1.0, 1.0));
    se_att += geodesic * geodesic;
    sum.violations += log.violations;
    traj.ticks.push_back(log);

    // integrate with the commanded thrust (plus optional disturbance)
    std::array<Vec3, kNumRotors> forces;
    for (int i = 0; i < kNumRotors; ++i) forces[i] = commands[i].force;
    Vec6 wrench = total_wrench(kin, forces);
    if (scenario.sim.disturbance > 0.0) {
      for (int c = 0; c < 6; ++c) wrench[c] += scenario.sim.disturbance * noise(rng);
    }
    try {
      step_flight_wrench(model, state, kin, wrench, q_target, scenario.sim.dt);
    } catch (const SimError& e) {
      throw SimError(std::string(e.what()) + " at tick " + std::to_string(k));
    }
  }

  sum.ticks = n_ticks;
  sum.duration = n_ticks * scenario.sim.dt;
  sum.rmse_position = std::sqrt(se_pos / std::max(1, n_ticks));
  sum.rmse_position_xyz = (se_pos_xyz / std::max(1, n_ticks)).cwiseSqrt();
  sum.rmse_orientation = std::sqrt(se_att / std::max(1, n_ticks));
  sum.hover_thrust_integral = model.total_mass() * model.gravity * sum.duration;
  sum.solve_ms_median = detail::median(solve_ms);
  for (double ms : solve_ms) sum.solve_ms_max = std::max(sum.solve_ms_max, ms);
  return traj;
}

inline Trajectory run_crawl_scenario(const RobotModel& model, const CrawlScenario& scenario) {
  scenario.sim.validate();
  scenario.gait.validate();

  CrawlPlanner planner(model, scenario.gait);
  RobotState state;
  state.q = planner.stance_joints();
  Vec3 base = planner.base();
  {
    const KinematicsResult kin0 = forward_kinematics(model, state.q);
    state.r = base + kin0.cog;
  }
  const Vec3 base_start = base;

  Allocator allocator(model, scenario.weights);

  Trajectory traj;
  TrajectorySummary& sum = traj.summary;
  sum.mode = "crawl";
  std::vector<double> solve_ms;

  JointVec cycle_start_q = state.q;
  int last_cycle = 0;
  Vec3 cycle_start_base = base;

  const int max_ticks = static_cast<int>(std::round(scenario.sim.duration / scenario.sim.dt));
  int k = 0;
  for (; k < max_ticks; ++k) {
    const double t = k * scenario.sim.dt;
    const GaitTick gait = planner.advance(scenario.sim.dt, state.q);
    if (gait.finished) break;

    if (gait.cycle != last_cycle) {
      sum.cycle_displacement.push_back((base - cycle_start_base).norm());
      sum.cycle_joint_repeatability = std::max(
          sum.cycle_joint_repeatability, (state.q - cycle_start_q).cwiseAbs().maxCoeff());
      cycle_start_base = base;
      last_cycle = gait.cycle;
    }

    const KinematicsResult kin = forward_kinematics(model, state.q);
    const Vec3 g_body = gravity_body(model, state.R);
    const ContactWrenchBounds& bounds =
        (gait.contact == ContactMode::torso) ? scenario.torso_bounds : scenario.stance_bounds;

    TickLog log;
    log.t = t;
    log.q = state.q;
    log.r = state.r;
    log.euler = euler_zyx(state.R);

    std::array<RotorCommand, kNumRotors> commands{};
    try {
      AllocationResult alloc = allocator.allocate_all_legs_lift(kin, g_body, bounds);
      commands = alloc.commands;
      log.tau_q = alloc.joint_torque;
      log.solve_iters = alloc.iterations;
      solve_ms.push_back(alloc.solve_time * 1e3);
      if (alloc.norm_bound_exceeded) ++log.violations;
    } catch (const AllocationError&) {
      ++log.violations;
    }

    double thrust_sum = 0.0;
    for (int i = 0; i < kNumRotors; ++i) {
      log.lambda[i] = commands[i].lambda;
      log.phi[i] = commands[i].phi;
      log.theta[i] = commands[i].theta;
      thrust_sum += commands[i].lambda;
    }
    sum.thrust_integral += thrust_sum * scenario.sim.dt;

    const ContactReport report =
        check_contact_wrench(allocator.contact_wrench(kin, g_body, commands), bounds);
    if (report.violated) {
      ++log.violations;
      sum.violations += log.violations;
      traj.ticks.push_back(log);
      continue;  // declared policy: freeze the pose, keep checking
    }

    sum.violations += log.violations;
    traj.ticks.push_back(log);
    step_crawl(model, state, base, gait.base_target, gait.q_target, scenario.sim.dt);
  }

  sum.cycle_displacement.push_back((base - cycle_start_base).norm());
  sum.cycle_joint_repeatability = std::max(sum.cycle_joint_repeatability,
                                           (state.q - cycle_start_q).cwiseAbs().maxCoeff());

  sum.ticks = k;
  sum.duration = k * scenario.sim.dt;
  sum.displacement = base - base_start;
  sum.hover_thrust_integral = model.total_mass() * model.gravity * sum.duration;
  sum.solve_ms_median = detail::median(solve_ms);
  for (double ms : solve_ms) sum.solve_ms_max = std::max(sum.solve_ms_max, ms);
  return traj;
}

}  // namespace vecquad
