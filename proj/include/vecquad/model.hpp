// Kinematic and inertial model of a point-symmetric quadruped whose eight
// links each carry a two-axis vectorable rotor. Legs attach to a square
// torso plate at 90 degree intervals; every leg is a yaw-pitch-yaw-pitch
// chain of two equal links with a rotor mounted part way along each link.
//
// Frames: the baselink frame sits at the torso center with the same
// orientation as the CoG frame. Link frames put x along the rod
// (proximal to distal) with z up in the flat pose. Positive pitch folds a
// leg downward.
#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "vecquad/geometry.hpp"

namespace vecquad {

constexpr int kNumLegs = 4;
constexpr int kNumLinks = 8;
constexpr int kNumRotors = 8;
constexpr int kNumJoints = 16;
constexpr int kNumSegments = 9;  // torso + 8 links

using JointVec = Eigen::Matrix<double, kNumJoints, 1>;
using Jac3x16 = Eigen::Matrix<double, 3, kNumJoints>;

struct ModelError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RobotModel {
  double torso_half_width = 0.27;  // m, hip offset from torso center
  double link_length = 0.54;       // m
  double rotor_offset = 0.27;      // m along the rod from the proximal joint
  // segment 0 is the torso, segments 1..8 the links in leg order
  std::array<double, kNumSegments> segment_masses = {2.4, 1.7, 1.7, 1.7, 1.7,
                                                     1.7, 1.7, 1.7, 1.7};
  double thrust_limit = 42.0;        // N, per-rotor lambda bound
  double joint_torque_limit = 7.0;   // N*m
  double joint_angle_limit = M_PI / 2.0;
  double joint_speed_limit = 0.2;    // rad/s
  double gravity = 9.8;              // m/s^2
  bool rod_inertia = true;           // add thin-rod terms to the composite inertia

  double total_mass() const {
    double m = 0.0;
    for (double ms : segment_masses) m += ms;
    return m;
  }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ModelError(std::string("robot model: ") + name + " must be positive");
    };
    positive(torso_half_width, "torso_half_width");
    positive(link_length, "link_length");
    positive(rotor_offset, "rotor_offset");
    positive(thrust_limit, "thrust_limit");
    positive(joint_torque_limit, "joint_torque_limit");
    positive(joint_angle_limit, "joint_angle_limit");
    positive(joint_speed_limit, "joint_speed_limit");
    positive(gravity, "gravity");
    if (rotor_offset > link_length) {
      throw ModelError("robot model: rotor_offset exceeds link_length");
    }
    for (double m : segment_masses) positive(m, "segment mass");
  }
};

// Full configuration at one instant. r is the CoG position in the world
// frame; R is the baselink (= CoG frame) orientation. v and qd are carried
// for simulation and control, both zero in purely static queries.
struct RobotState {
  JointVec q = JointVec::Zero();
  Vec3 r = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  JointVec qd = JointVec::Zero();

  bool rotation_valid(double tol = 1e-9) const {
    return ((R.transpose() * R) - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol;
  }
};

// Thrust direction in the link frame: phi rolls about the rod (x), then
// theta tilts about the rotated y axis. u(0,0) points up.
inline Vec3 rotor_direction(double phi, double theta) {
  return Vec3(std::sin(theta), -std::sin(phi) * std::cos(theta),
              std::cos(phi) * std::cos(theta));
}

// Everything the controllers and allocators need from one configuration.
// Positions are in the baselink frame; Jacobians differentiate
// baselink-relative positions, so columns of joints off the chain are zero.
struct KinematicsResult {
  std::array<Vec3, kNumRotors> rotor_pos;
  std::array<Mat3, kNumLinks> link_rot;
  std::array<Vec3, kNumJoints> joint_pos;
  std::array<Vec3, kNumJoints> joint_axis;
  std::array<Vec3, kNumLegs> foot_pos;
  std::array<Vec3, kNumSegments> segment_cog;
  Vec3 cog = Vec3::Zero();
  std::array<Jac3x16, kNumRotors> rotor_jac;
  std::array<Jac3x16, kNumSegments> segment_jac;
  Mat3 inertia = Mat3::Zero();  // about the CoG, body axes
  double total_mass = 0.0;
  bool joint_limit_exceeded = false;

  Vec3 rotor_pos_cog(int i) const { return rotor_pos[i] - cog; }
  Vec3 foot_pos_cog(int l) const { return foot_pos[l] - cog; }
};

namespace detail {

// Joints j..j+extra on leg l act on a point p: fill the revolute columns.
inline void fill_columns(Jac3x16& jac, const KinematicsResult& kin, const Vec3& p,
                         int first_joint, int num_joints) {
  for (int j = first_joint; j < first_joint + num_joints; ++j) {
    jac.col(j) = kin.joint_axis[j].cross(p - kin.joint_pos[j]);
  }
}

}  // namespace detail

inline KinematicsResult forward_kinematics(const RobotModel& model, const JointVec& q) {
  KinematicsResult kin;
  kin.total_mass = model.total_mass();
  kin.segment_cog[0] = Vec3::Zero();
  kin.segment_jac[0].setZero();
  for (auto& j : kin.rotor_jac) j.setZero();
  for (auto& j : kin.segment_jac) j.setZero();

  const double hw = model.torso_half_width;
  const double len = model.link_length;
  const double off = model.rotor_offset;

  for (int i = 0; i < kNumJoints; ++i) {
    if (std::abs(q[i]) > model.joint_angle_limit + 1e-12) kin.joint_limit_exceeded = true;
  }

  for (int l = 0; l < kNumLegs; ++l) {
    const int jb = 4 * l;
    const Mat3 mount = rot_z(M_PI_2 * l);
    const Vec3 hip = mount * Vec3(hw, 0, 0);

    const Mat3 after_yaw1 = mount * rot_z(q[jb]);
    const Mat3 link1 = after_yaw1 * rot_y(q[jb + 1]);
    const Vec3 knee = hip + link1 * Vec3(len, 0, 0);
    const Mat3 after_yaw2 = link1 * rot_z(q[jb + 2]);
    const Mat3 link2 = after_yaw2 * rot_y(q[jb + 3]);

    kin.joint_pos[jb] = hip;
    kin.joint_axis[jb] = mount.col(2);
    kin.joint_pos[jb + 1] = hip;
    kin.joint_axis[jb + 1] = after_yaw1.col(1);
    kin.joint_pos[jb + 2] = knee;
    kin.joint_axis[jb + 2] = link1.col(2);
    kin.joint_pos[jb + 3] = knee;
    kin.joint_axis[jb + 3] = after_yaw2.col(1);

    kin.link_rot[2 * l] = link1;
    kin.link_rot[2 * l + 1] = link2;
    kin.rotor_pos[2 * l] = hip + link1 * Vec3(off, 0, 0);
    kin.rotor_pos[2 * l + 1] = knee + link2 * Vec3(off, 0, 0);
    kin.foot_pos[l] = knee + link2 * Vec3(len, 0, 0);
    kin.segment_cog[1 + 2 * l] = hip + link1 * Vec3(0.5 * len, 0, 0);
    kin.segment_cog[2 + 2 * l] = knee + link2 * Vec3(0.5 * len, 0, 0);

    detail::fill_columns(kin.rotor_jac[2 * l], kin, kin.rotor_pos[2 * l], jb, 2);
    detail::fill_columns(kin.rotor_jac[2 * l + 1], kin, kin.rotor_pos[2 * l + 1], jb, 4);
    detail::fill_columns(kin.segment_jac[1 + 2 * l], kin, kin.segment_cog[1 + 2 * l], jb, 2);
    detail::fill_columns(kin.segment_jac[2 + 2 * l], kin, kin.segment_cog[2 + 2 * l], jb, 4);
  }

  Vec3 weighted = Vec3::Zero();
  for (int s = 0; s < kNumSegments; ++s) {
    weighted += model.segment_masses[s] * kin.segment_cog[s];
  }
  kin.cog = weighted / kin.total_mass;

  // Composite inertia about the CoG: point masses plus optional thin-rod
  // terms for the links.
  Mat3 inertia = Mat3::Zero();
  for (int s = 0; s < kNumSegments; ++s) {
    const Vec3 c = kin.segment_cog[s] - kin.cog;
    const double m = model.segment_masses[s];
    inertia += m * (c.squaredNorm() * Mat3::Identity() - c * c.transpose());
  }
  if (model.rod_inertia) {
    for (int k = 0; k < kNumLinks; ++k) {
      const double m = model.segment_masses[1 + k];
      const double moment = m * len * len / 12.0;
      const Mat3 rod = Vec3(0.0, moment, moment).asDiagonal();
      inertia += kin.link_rot[k] * rod * kin.link_rot[k].transpose();
    }
  }
  kin.inertia = inertia;
  return kin;
}

inline KinematicsResult forward_kinematics(const RobotModel& model, const RobotState& state) {
  return forward_kinematics(model, state.q);
}

inline Mat3 composite_inertia(const RobotModel& model, const JointVec& q) {
  return forward_kinematics(model, q).inertia;
}

// Stacked thrust wrench about the CoG, body axes (force then torque).
inline Vec6 total_wrench(const KinematicsResult& kin,
                         const std::array<double, kNumRotors>& lambda,
                         const std::array<double, kNumRotors>& phi,
                         const std::array<double, kNumRotors>& theta) {
  Vec6 w = Vec6::Zero();
  for (int i = 0; i < kNumRotors; ++i) {
    const Vec3 f = lambda[i] * (kin.link_rot[i] * rotor_direction(phi[i], theta[i]));
    w.head<3>() += f;
    w.tail<3>() += kin.rotor_pos_cog(i).cross(f);
  }
  return w;
}

inline Vec6 total_wrench(const KinematicsResult& kin, const std::array<Vec3, kNumRotors>& forces) {
  Vec6 w = Vec6::Zero();
  for (int i = 0; i < kNumRotors; ++i) {
    w.head<3>() += forces[i];
    w.tail<3>() += kin.rotor_pos_cog(i).cross(forces[i]);
  }
  return w;
}

// Gravity acceleration vector expressed in body axes.
inline Vec3 gravity_body(const RobotModel& model, const Mat3& R) {
  return R.transpose() * Vec3(0, 0, -model.gravity);
}

// Torso (baselink) world position implied by a state whose r is the CoG.
inline Vec3 baselink_position(const RobotState& state, const KinematicsResult& kin) {
  return state.r - state.R * kin.cog;
}

}  // namespace vecquad
