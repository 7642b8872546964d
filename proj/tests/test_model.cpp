#include "vecquad/model.hpp"

#include <random>

#include <gtest/gtest.h>

namespace vecquad {
namespace {

JointVec random_joints(std::mt19937_64& rng, double limit) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  JointVec q;
  for (int i = 0; i < kNumJoints; ++i) q[i] = dist(rng);
  return q;
}

JointVec symmetric_pose(double hip, double knee) {
  JointVec q = JointVec::Zero();
  for (int l = 0; l < kNumLegs; ++l) {
    q[4 * l + 1] = hip;
    q[4 * l + 3] = knee;
  }
  return q;
}

TEST(RotorDirection, CanonicalCases) {
  EXPECT_LT((rotor_direction(0, 0) - Vec3(0, 0, 1)).norm(), 1e-15);
  EXPECT_LT((rotor_direction(0, M_PI_2) - Vec3(1, 0, 0)).norm(), 1e-15);
  EXPECT_LT((rotor_direction(M_PI_2, 0) - Vec3(0, -1, 0)).norm(), 1e-15);
}

TEST(RotorDirection, UnitNorm) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-M_PI, M_PI);
  for (int k = 0; k < 100; ++k) {
    EXPECT_NEAR(rotor_direction(dist(rng), dist(rng)).norm(), 1.0, 1e-14);
  }
}

TEST(ForwardKinematics, FlatPoseChain) {
  RobotModel model;
  const auto kin = forward_kinematics(model, JointVec::Zero());
  // leg 0 runs along +x: hip 0.27, rotor mid-link, foot at full reach
  EXPECT_LT((kin.rotor_pos[0] - Vec3(0.54, 0, 0)).norm(), 1e-12);
  EXPECT_LT((kin.rotor_pos[1] - Vec3(1.08, 0, 0)).norm(), 1e-12);
  EXPECT_LT((kin.foot_pos[0] - Vec3(1.35, 0, 0)).norm(), 1e-12);
  // CoG at the torso center by point symmetry
  EXPECT_LT(kin.cog.norm(), 1e-12);
}

TEST(ForwardKinematics, PointSymmetry) {
  RobotModel model;
  const auto kin = forward_kinematics(model, JointVec::Zero());
  const Mat3 quarter = rot_z(M_PI_2);
  for (int i = 0; i < kNumRotors; ++i) {
    const int j = (i + 2) % kNumRotors;  // next leg's corresponding rotor
    EXPECT_LT((quarter * kin.rotor_pos[i] - kin.rotor_pos[j]).norm(), 1e-12)
        << "rotor " << i << " -> " << j;
  }
}

TEST(ForwardKinematics, FormThreeOverlapsRotorPairs) {
  RobotModel model;
  const auto kin = forward_kinematics(model, symmetric_pose(M_PI / 4.0, M_PI / 2.0));
  int overlapped = 0;
  for (int l = 0; l < kNumLegs; ++l) {
    const Vec3 upper = kin.rotor_pos[2 * l];
    const Vec3 lower = kin.rotor_pos[2 * l + 1];
    if ((upper.head<2>() - lower.head<2>()).norm() < 1e-9 && upper.z() > lower.z()) {
      ++overlapped;
    }
  }
  EXPECT_EQ(overlapped, 4);  // one vertically overlapped pair per leg
}

TEST(ForwardKinematics, CogIsMassWeightedMean) {
  RobotModel model;
  std::mt19937_64 rng(11);
  const auto kin = forward_kinematics(model, random_joints(rng, model.joint_angle_limit));
  Vec3 moment = Vec3::Zero();
  for (int s = 0; s < kNumSegments; ++s) {
    moment += model.segment_masses[s] * (kin.segment_cog[s] - kin.cog);
  }
  EXPECT_LT(moment.norm(), 1e-12);
}

TEST(ForwardKinematics, JointLimitFlag) {
  RobotModel model;
  JointVec q = JointVec::Zero();
  EXPECT_FALSE(forward_kinematics(model, q).joint_limit_exceeded);
  q[5] = model.joint_angle_limit + 0.1;
  EXPECT_TRUE(forward_kinematics(model, q).joint_limit_exceeded);
}

class JacobianTest : public ::testing::Test {
 protected:
  // central finite differences of the baselink-frame positions
  static Jac3x16 fd_jacobian(const RobotModel& model, const JointVec& q,
                             int which, int index, double eps) {
    Jac3x16 jac;
    for (int j = 0; j < kNumJoints; ++j) {
      JointVec qp = q, qm = q;
      qp[j] += eps;
      qm[j] -= eps;
      const auto kp = forward_kinematics(model, qp);
      const auto km = forward_kinematics(model, qm);
      const Vec3 pp = (which == 0) ? kp.rotor_pos[index] : kp.segment_cog[index];
      const Vec3 pm = (which == 0) ? km.rotor_pos[index] : km.segment_cog[index];
      jac.col(j) = (pp - pm) / (2.0 * eps);
    }
    return jac;
  }

  RobotModel model_;
};

TEST_F(JacobianTest, MatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const JointVec q = random_joints(rng, model_.joint_angle_limit);
    const auto kin = forward_kinematics(model_, q);
    for (int i = 0; i < kNumRotors; ++i) {
      const Jac3x16 fd = fd_jacobian(model_, q, 0, i, 1e-6);
      const double err = (kin.rotor_jac[i] - fd).norm() / std::max(1.0, fd.norm());
      EXPECT_LT(err, 1e-5) << "rotor " << i << " trial " << trial;
    }
    for (int s = 0; s < kNumSegments; ++s) {
      const Jac3x16 fd = fd_jacobian(model_, q, 1, s, 1e-6);
      const double err = (kin.segment_jac[s] - fd).norm() / std::max(1.0, fd.norm());
      EXPECT_LT(err, 1e-5) << "segment " << s << " trial " << trial;
    }
  }
}

TEST_F(JacobianTest, OffChainColumnsAreZero) {
  std::mt19937_64 rng(29);
  const JointVec q = random_joints(rng, model_.joint_angle_limit);
  const auto kin = forward_kinematics(model_, q);
  for (int i = 0; i < kNumRotors; ++i) {
    const int leg = i / 2;
    for (int j = 0; j < kNumJoints; ++j) {
      const bool on_chain = (j >= 4 * leg) && (j < 4 * leg + ((i % 2 == 0) ? 2 : 4));
      if (!on_chain) {
        EXPECT_LT(kin.rotor_jac[i].col(j).norm(), 1e-15) << "rotor " << i << " joint " << j;
      }
    }
  }
  EXPECT_LT(kin.segment_jac[0].norm(), 1e-15);  // torso
}

TEST_F(JacobianTest, HipYawColumnIsRevoluteFormula) {
  const auto kin = forward_kinematics(model_, JointVec::Zero());
  const Vec3 expected = Vec3(0, 0, 1).cross(kin.rotor_pos[0] - kin.joint_pos[0]);
  EXPECT_LT((kin.rotor_jac[0].col(0) - expected).norm(), 1e-12);
}

TEST(CompositeInertia, FlatPoseDiagonal) {
  RobotModel model;
  const Mat3 inertia = composite_inertia(model, JointVec::Zero());
  EXPECT_LT(std::abs(inertia(0, 1)), 1e-12);
  EXPECT_LT(std::abs(inertia(0, 2)), 1e-12);
  EXPECT_LT(std::abs(inertia(1, 2)), 1e-12);
  // positive definite
  Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(CompositeInertia, LinearInMass) {
  RobotModel model;
  RobotModel heavy = model;
  for (auto& m : heavy.segment_masses) m *= 2.0;
  std::mt19937_64 rng(31);
  const JointVec q = random_joints(rng, model.joint_angle_limit);
  const Mat3 a = composite_inertia(model, q);
  const Mat3 b = composite_inertia(heavy, q);
  EXPECT_LT((b - 2.0 * a).norm(), 1e-10);
}

TEST(CompositeInertia, FoldingReducesYawInertia) {
  RobotModel model;
  const Mat3 flat = composite_inertia(model, JointVec::Zero());
  const Mat3 folded = composite_inertia(model, symmetric_pose(M_PI / 4.0, M_PI / 2.0));
  EXPECT_LT(folded(2, 2), flat(2, 2));
}

TEST(TotalWrench, HoverFlatPose) {
  RobotModel model;
  const auto kin = forward_kinematics(model, JointVec::Zero());
  std::array<double, kNumRotors> lambda{}, phi{}, theta{};
  lambda.fill(19.6);
  const Vec6 w = total_wrench(kin, lambda, phi, theta);
  EXPECT_NEAR(w[2], 156.8, 1e-9);
  EXPECT_LT(w.head<2>().norm(), 1e-12);
  EXPECT_LT(w.tail<3>().norm(), 1e-12);
}

TEST(TotalWrench, SingleRotorCrossProduct) {
  RobotModel model;
  auto kin = forward_kinematics(model, JointVec::Zero());
  // place one rotor by hand: unit thrust up at [1,0,0]
  kin.cog.setZero();
  kin.rotor_pos[0] = Vec3(1, 0, 0);
  kin.link_rot[0].setIdentity();
  std::array<double, kNumRotors> lambda{}, phi{}, theta{};
  lambda[0] = 1.0;
  const Vec6 w = total_wrench(kin, lambda, phi, theta);
  EXPECT_LT((w.head<3>() - Vec3(0, 0, 1)).norm(), 1e-15);
  EXPECT_LT((w.tail<3>() - Vec3(0, -1, 0)).norm(), 1e-15);
}

TEST(TotalWrench, ZeroThrust) {
  RobotModel model;
  const auto kin = forward_kinematics(model, JointVec::Zero());
  std::array<double, kNumRotors> lambda{}, phi{}, theta{};
  EXPECT_LT(total_wrench(kin, lambda, phi, theta).norm(), 1e-15);
}

TEST(RobotModelValidation, RejectsNonPositive) {
  RobotModel model;
  model.link_length = 0.0;
  EXPECT_THROW(model.validate(), ModelError);
  model = RobotModel();
  model.segment_masses[3] = -1.0;
  EXPECT_THROW(model.validate(), ModelError);
  model = RobotModel();
  EXPECT_NO_THROW(model.validate());
  EXPECT_NEAR(model.total_mass(), 16.0, 1e-12);
}

TEST(RobotState, RotationCheck) {
  RobotState state;
  EXPECT_TRUE(state.rotation_valid());
  state.R(0, 0) = 1.1;
  EXPECT_FALSE(state.rotation_valid());
}

}  // namespace
}  // namespace vecquad
