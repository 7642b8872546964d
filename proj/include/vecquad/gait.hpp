// Two-step crawl gait: lift, swing and lower all legs together, then raise,
// translate and lower the torso over the pinned feet. Joint targets come
// from an analytic three-joint leg IK (hip yaw, hip pitch, knee pitch; the
// knee yaw stays at zero). Touchdown is declared by a timer, after which
// joint targets reset to the measured angles to clear residual torque.
#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vecquad/geometry.hpp"
#include "vecquad/model.hpp"

namespace vecquad {

struct GaitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GaitParams {
  double stride = 0.2;              // m per cycle
  Vec2 direction = Vec2(1.0, 0.0);  // ground-plane direction
  double torso_lift_height = 0.1;   // m
  double leg_lift_angle = 15.0 * M_PI / 180.0;  // hip pitch offset while swinging
  // Diagonal stance: feet sit 45 degrees off their mount axes, which keeps
  // the leg IK inside the +-90 degree joint range over a full stride.
  double stance_radius = 0.91;      // m, hip to foot
  double stance_yaw = M_PI / 4.0;
  double touchdown_duration = 1.5;  // s of settling before targets reset
  double min_phase_duration = 0.5;  // s
  double speed_margin = 1.2;        // phase time = margin * travel / speed limit
  double torso_speed = 0.1;         // m/s cap on torso keypose motion
  int cycles = 3;

  void validate() const {
    if (!(stride > 0.0)) throw std::invalid_argument("gait: stride must be positive");
    if (!(torso_lift_height > 0.0)) throw std::invalid_argument("gait: lift height must be positive");
    if (!(leg_lift_angle > 0.0)) throw std::invalid_argument("gait: leg lift angle must be positive");
    if (direction.norm() < 1e-9) throw std::invalid_argument("gait: zero direction");
    if (cycles < 1) throw std::invalid_argument("gait: cycles must be >= 1");
  }
};

enum class GaitPhase {
  LiftLegs,
  SwingLegs,
  LowerLegs,
  ResetLegTargets,
  RaiseTorso,
  TranslateTorso,
  LowerTorso,
  ResetTorsoTargets,
  Done,
};

inline const char* to_string(GaitPhase p) {
  switch (p) {
    case GaitPhase::LiftLegs: return "lift_legs";
    case GaitPhase::SwingLegs: return "swing_legs";
    case GaitPhase::LowerLegs: return "lower_legs";
    case GaitPhase::ResetLegTargets: return "reset_leg_targets";
    case GaitPhase::RaiseTorso: return "raise_torso";
    case GaitPhase::TranslateTorso: return "translate_torso";
    case GaitPhase::LowerTorso: return "lower_torso";
    case GaitPhase::ResetTorsoTargets: return "reset_torso_targets";
    case GaitPhase::Done: return "done";
  }
  return "?";
}

struct LegIk {
  double yaw = 0.0;         // q_{4l-3}
  double hip_pitch = 0.0;   // q_{4l-2}
  double knee_pitch = 0.0;  // q_{4l}
  bool near_singular = false;
};

// Analytic IK for one leg in its hip frame (x along the mount axis, z up).
// Positive pitch folds the leg down, so the knee-above branch used here has
// a negative hip pitch and positive knee pitch for targets near the hip
// plane. The knee yaw is held at zero.
inline LegIk leg_ik(const RobotModel& model, const Vec3& target) {
  const double len = model.link_length;
  LegIk ik;
  ik.yaw = std::atan2(target.y(), target.x());
  const double d = std::hypot(target.x(), target.y());
  const double h = target.z();
  const double r = std::hypot(d, h);
  if (r > 2.0 * len) {
    throw GaitError("leg_ik: target out of reach (r = " + std::to_string(r) + ")");
  }
  ik.near_singular = (2.0 * len - r) < 1e-3;
  const double c4 = std::clamp(r * r / (2.0 * len * len) - 1.0, -1.0, 1.0);
  ik.knee_pitch = std::acos(c4);
  // equal link lengths: the hip-to-target bearing splits the knee angle
  ik.hip_pitch = std::atan2(-h, d) - 0.5 * ik.knee_pitch;
  return ik;
}

// Forward map matching leg_ik, for roundtrip checks and foot prediction.
inline Vec3 leg_fk(const RobotModel& model, const LegIk& ik) {
  const double len = model.link_length;
  const double a2 = ik.hip_pitch;
  const double a24 = ik.hip_pitch + ik.knee_pitch;
  const Vec3 planar(len * (std::cos(a2) + std::cos(a24)), 0.0,
                    -len * (std::sin(a2) + std::sin(a24)));
  return rot_z(ik.yaw) * planar;
}

struct LegKeyframe {
  double yaw = 0.0;
  double hip_pitch = 0.0;
  double knee_pitch = 0.0;
  double duration = 0.0;
};

namespace detail {

inline void check_leg_limits(const RobotModel& model, const LegKeyframe& k, int leg,
                             const char* phase) {
  const double lim = model.joint_angle_limit + 1e-9;
  auto check = [&](double angle, const char* joint) {
    if (std::abs(angle) > lim) {
      throw GaitError(std::string("gait: ") + phase + " violates joint limit at leg " +
                      std::to_string(leg) + " joint " + joint + " (" +
                      std::to_string(angle) + " rad)");
    }
  };
  check(k.yaw, "yaw");
  check(k.hip_pitch, "hip_pitch");
  check(k.knee_pitch, "knee_pitch");
}

inline double travel(const LegKeyframe& a, const LegKeyframe& b) {
  return std::max({std::abs(a.yaw - b.yaw), std::abs(a.hip_pitch - b.hip_pitch),
                   std::abs(a.knee_pitch - b.knee_pitch)});
}

}  // namespace detail

// Discrete joint path for one leg step: lift the hip pitch, swing yaw and
// knee to the new target, lower the hip pitch. Durations respect the joint
// speed limit.
inline std::array<LegKeyframe, 3> plan_leg_step(const RobotModel& model, const GaitParams& params,
                                                const Vec3& current_foot, const Vec3& next_foot,
                                                int leg = 0) {
  const LegIk now = leg_ik(model, current_foot);
  const LegIk next = leg_ik(model, next_foot);
  const double lifted = now.hip_pitch - params.leg_lift_angle;

  std::array<LegKeyframe, 3> keys;
  keys[0] = {now.yaw, lifted, now.knee_pitch, 0.0};
  keys[1] = {next.yaw, lifted, next.knee_pitch, 0.0};
  keys[2] = {next.yaw, next.hip_pitch, next.knee_pitch, 0.0};

  LegKeyframe from{now.yaw, now.hip_pitch, now.knee_pitch, 0.0};
  const char* names[3] = {"lift", "swing", "lower"};
  for (int k = 0; k < 3; ++k) {
    detail::check_leg_limits(model, keys[k], leg, names[k]);
    keys[k].duration = std::max(params.min_phase_duration,
                                params.speed_margin * detail::travel(from, keys[k]) /
                                    model.joint_speed_limit);
    from = keys[k];
  }
  return keys;
}

struct TorsoKeypose {
  Vec3 base = Vec3::Zero();
  JointVec joints = JointVec::Zero();
  double duration = 0.0;
};

// IK of all legs for a given torso position with feet pinned at world
// footholds. The torso stays level while crawling.
inline JointVec joints_for_base(const RobotModel& model, const Vec3& base,
                                const std::array<Vec3, kNumLegs>& footholds) {
  JointVec q = JointVec::Zero();
  for (int l = 0; l < kNumLegs; ++l) {
    const Mat3 mount = rot_z(M_PI_2 * l);
    const Vec3 hip = base + mount * Vec3(model.torso_half_width, 0, 0);
    const Vec3 target = mount.transpose() * (footholds[l] - hip);
    LegIk ik;
    try {
      ik = leg_ik(model, target);
    } catch (const GaitError& e) {
      throw GaitError("gait: torso keypose makes leg " + std::to_string(l) +
                      " unreachable: " + e.what());
    }
    q[4 * l] = ik.yaw;
    q[4 * l + 1] = ik.hip_pitch;
    q[4 * l + 2] = 0.0;
    q[4 * l + 3] = ik.knee_pitch;
    detail::check_leg_limits(model, {ik.yaw, ik.hip_pitch, ik.knee_pitch, 0.0}, l, "torso step");
  }
  return q;
}

// Three torso keyposes: up, across, down; joints from IK with pinned feet.
inline std::array<TorsoKeypose, 3> plan_torso_step(const RobotModel& model,
                                                   const GaitParams& params, const Vec3& base,
                                                   const std::array<Vec3, kNumLegs>& footholds) {
  const Vec3 dir3(params.direction.normalized().x(), params.direction.normalized().y(), 0.0);
  std::array<TorsoKeypose, 3> keys;
  keys[0].base = base + Vec3(0, 0, params.torso_lift_height);
  keys[1].base = keys[0].base + params.stride * dir3;
  keys[2].base = base + params.stride * dir3;

  Vec3 prev_base = base;
  JointVec prev_q = joints_for_base(model, base, footholds);
  for (auto& key : keys) {
    key.joints = joints_for_base(model, key.base, footholds);
    const double joint_travel = (key.joints - prev_q).cwiseAbs().maxCoeff();
    key.duration = std::max({params.min_phase_duration,
                             params.speed_margin * joint_travel / model.joint_speed_limit,
                             (key.base - prev_base).norm() / params.torso_speed});
    prev_base = key.base;
    prev_q = key.joints;
  }
  return keys;
}

// Timer-based touchdown: once the lowering phase has run its configured
// duration, contact is declared and targets collapse onto the measured
// angles, clearing any leftover joint torque demand.
inline bool touchdown_and_reset(double elapsed, double duration, const JointVec& q,
                                JointVec& q_target) {
  if (elapsed < duration) return false;
  q_target = q;
  return true;
}

enum class ContactMode { torso, feet };

// Per-tick output of the crawl state machine.
struct GaitTick {
  GaitPhase phase = GaitPhase::LiftLegs;
  int cycle = 0;
  JointVec q_target = JointVec::Zero();
  Vec3 base_target = Vec3::Zero();
  ContactMode contact = ContactMode::torso;
  bool reset_applied = false;
  bool finished = false;
};

class CrawlPlanner {
 public:
  CrawlPlanner(RobotModel model, GaitParams params, const Vec3& base = Vec3::Zero())
      : model_(std::move(model)), params_(params), base_(base), ground_z_(base.z()) {
    params_.validate();
    const Vec2 dir = params_.direction.normalized();
    dir3_ = Vec3(dir.x(), dir.y(), 0.0);
    for (int l = 0; l < kNumLegs; ++l) {
      const Mat3 mount = rot_z(M_PI_2 * l);
      const Vec3 hip = base_ + mount * Vec3(model_.torso_half_width, 0, 0);
      footholds_[l] =
          hip + mount * rot_z(params_.stance_yaw) * Vec3(params_.stance_radius, 0, 0);
      footholds_[l].z() = base_.z();
    }
    stance_q_ = joints_for_base(model_, base_, footholds_);
    q_target_ = stance_q_;
    enter(GaitPhase::LiftLegs);
  }

  const JointVec& stance_joints() const { return stance_q_; }
  const std::array<Vec3, kNumLegs>& footholds() const { return footholds_; }
  const Vec3& base() const { return base_; }

  // Advance the state machine by dt. q is the measured joint vector, used
  // by the touchdown resets.
  GaitTick advance(double dt, const JointVec& q) {
    GaitTick tick;
    if (phase_ == GaitPhase::Done) {
      tick.phase = phase_;
      tick.cycle = cycle_;
      tick.q_target = q_target_;
      tick.base_target = base_;
      tick.contact = ContactMode::torso;
      tick.finished = true;
      return tick;
    }

    elapsed_ += dt;
    const double s = duration_ > 0.0 ? std::clamp(elapsed_ / duration_, 0.0, 1.0) : 1.0;

    switch (phase_) {
      case GaitPhase::LiftLegs:
      case GaitPhase::SwingLegs:
      case GaitPhase::LowerLegs:
        q_target_ = phase_q_end_;
        break;
      case GaitPhase::RaiseTorso:
      case GaitPhase::TranslateTorso:
      case GaitPhase::LowerTorso:
        base_ = phase_base_start_ + s * (phase_base_end_ - phase_base_start_);
        q_target_ = joints_for_base(model_, base_, footholds_);
        break;
      default:
        break;
    }

    // settle + reset at the end of the two lowering phases
    if (phase_ == GaitPhase::LowerLegs || phase_ == GaitPhase::LowerTorso) {
      if (touchdown_and_reset(elapsed_, duration_ + params_.touchdown_duration, q, q_target_)) {
        tick.reset_applied = true;
      }
    }

    tick.phase = phase_;
    tick.cycle = cycle_;
    tick.q_target = q_target_;
    tick.base_target = base_;
    tick.contact = contact_for(phase_);

    if (elapsed_ >= total_duration()) next_phase(q);
    tick.finished = (phase_ == GaitPhase::Done);
    return tick;
  }

 private:
  static ContactMode contact_for(GaitPhase p) {
    switch (p) {
      case GaitPhase::RaiseTorso:
      case GaitPhase::TranslateTorso:
      case GaitPhase::LowerTorso:
        return ContactMode::feet;
      default:
        return ContactMode::torso;
    }
  }

  double total_duration() const {
    if (phase_ == GaitPhase::LowerLegs || phase_ == GaitPhase::LowerTorso) {
      return duration_ + params_.touchdown_duration;
    }
    return duration_;
  }

  void next_phase(const JointVec& q) {
    switch (phase_) {
      case GaitPhase::LiftLegs: enter(GaitPhase::SwingLegs); break;
      case GaitPhase::SwingLegs: enter(GaitPhase::LowerLegs); break;
      case GaitPhase::LowerLegs:
        q_target_ = q;  // torque-clearing reset
        enter(GaitPhase::ResetLegTargets);
        break;
      case GaitPhase::ResetLegTargets: enter(GaitPhase::RaiseTorso); break;
      case GaitPhase::RaiseTorso: enter(GaitPhase::TranslateTorso); break;
      case GaitPhase::TranslateTorso: enter(GaitPhase::LowerTorso); break;
      case GaitPhase::LowerTorso:
        q_target_ = q;
        enter(GaitPhase::ResetTorsoTargets);
        break;
      case GaitPhase::ResetTorsoTargets:
        ++cycle_;
        enter(cycle_ >= params_.cycles ? GaitPhase::Done : GaitPhase::LiftLegs);
        break;
      case GaitPhase::Done: break;
    }
  }

  void enter(GaitPhase p) {
    phase_ = p;
    elapsed_ = 0.0;
    duration_ = params_.min_phase_duration;
    phase_base_start_ = base_;
    phase_base_end_ = base_;

    switch (p) {
      case GaitPhase::LiftLegs:
      case GaitPhase::SwingLegs:
      case GaitPhase::LowerLegs: {
        // plan per-leg keyframes against the nominal footholds
        const int idx = (p == GaitPhase::LiftLegs) ? 0 : (p == GaitPhase::SwingLegs ? 1 : 2);
        double dur = params_.min_phase_duration;
        for (int l = 0; l < kNumLegs; ++l) {
          const Mat3 mount = rot_z(M_PI_2 * l);
          const Vec3 hip = base_ + mount * Vec3(model_.torso_half_width, 0, 0);
          const Vec3 cur = mount.transpose() * (footholds_[l] - hip);
          const Vec3 nxt = mount.transpose() * (footholds_[l] + params_.stride * dir3_ - hip);
          const auto keys = plan_leg_step(model_, params_, cur, nxt, l);
          phase_q_end_[4 * l] = keys[idx].yaw;
          phase_q_end_[4 * l + 1] = keys[idx].hip_pitch;
          phase_q_end_[4 * l + 2] = 0.0;
          phase_q_end_[4 * l + 3] = keys[idx].knee_pitch;
          dur = std::max(dur, keys[idx].duration);
        }
        duration_ = dur;
        break;
      }
      case GaitPhase::ResetLegTargets:
        for (auto& f : footholds_) f += params_.stride * dir3_;
        duration_ = 0.0;  // single tick
        break;
      case GaitPhase::RaiseTorso:
      case GaitPhase::TranslateTorso:
      case GaitPhase::LowerTorso: {
        if (p == GaitPhase::RaiseTorso) {
          phase_base_end_ = base_ + Vec3(0, 0, params_.torso_lift_height);
        } else if (p == GaitPhase::TranslateTorso) {
          phase_base_end_ = base_ + params_.stride * dir3_;
        } else {
          phase_base_end_ = Vec3(base_.x(), base_.y(), ground_z_);
        }
        const JointVec q_from = joints_for_base(model_, base_, footholds_);
        const JointVec q_to = joints_for_base(model_, phase_base_end_, footholds_);
        const double joint_travel = (q_to - q_from).cwiseAbs().maxCoeff();
        duration_ = std::max({params_.min_phase_duration,
                              params_.speed_margin * joint_travel / model_.joint_speed_limit,
                              (phase_base_end_ - base_).norm() / params_.torso_speed});
        break;
      }
      case GaitPhase::ResetTorsoTargets:
        duration_ = 0.0;
        break;
      case GaitPhase::Done:
        break;
    }
  }

  RobotModel model_;
  GaitParams params_;
  Vec3 base_;
  Vec3 dir3_ = Vec3::UnitX();
  std::array<Vec3, kNumLegs> footholds_{};
  JointVec stance_q_ = JointVec::Zero();
  JointVec q_target_ = JointVec::Zero();
  GaitPhase phase_ = GaitPhase::LiftLegs;
  int cycle_ = 0;
  double elapsed_ = 0.0;
  double duration_ = 0.0;
  Vec3 phase_base_start_ = Vec3::Zero();
  Vec3 phase_base_end_ = Vec3::Zero();
  JointVec phase_q_end_ = JointVec::Zero();
  double ground_z_ = 0.0;
};

}  // namespace vecquad
