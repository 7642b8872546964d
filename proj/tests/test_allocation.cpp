#include "vecquad/allocation.hpp"

#include <random>

#include <gtest/gtest.h>

#include "vecquad/interference.hpp"
#include "vecquad/model.hpp"
#include "vecquad/qp.hpp"

namespace vecquad {
namespace {

JointVec symmetric_pose(double hip, double knee) {
  JointVec q = JointVec::Zero();
  for (int l = 0; l < kNumLegs; ++l) {
    q[4 * l + 1] = hip;
    q[4 * l + 3] = knee;
  }
  return q;
}

Vec6 hover_wrench(const RobotModel& model) {
  Vec6 w = Vec6::Zero();
  w[2] = model.total_mass() * model.gravity;
  return w;
}

TEST(ForceToCommand, HandCases) {
  const RotorCommand none;
  const RotorCommand a = force_to_command(Vec3(0, 0, 19.6), none);
  EXPECT_NEAR(a.lambda, 19.6, 1e-12);
  EXPECT_NEAR(a.phi, 0.0, 1e-12);
  EXPECT_NEAR(a.theta, 0.0, 1e-12);

  const RotorCommand b = force_to_command(Vec3(1, 0, 1), none);
  EXPECT_NEAR(b.lambda, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(b.phi, 0.0, 1e-12);
  EXPECT_NEAR(b.theta, M_PI / 4.0, 1e-12);

  const RotorCommand c = force_to_command(Vec3(0, -1, 1), none);
  EXPECT_NEAR(c.lambda, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(c.phi, M_PI / 4.0, 1e-12);
  EXPECT_NEAR(c.theta, 0.0, 1e-12);
}

TEST(ForceToCommand, ZeroForceHoldsPreviousAngles) {
  RotorCommand prev;
  prev.phi = 0.4;
  prev.theta = -0.2;
  const RotorCommand cmd = force_to_command(Vec3::Zero(), prev);
  EXPECT_EQ(cmd.lambda, 0.0);
  EXPECT_NEAR(cmd.phi, 0.4, 1e-15);
  EXPECT_NEAR(cmd.theta, -0.2, 1e-15);
}

// Inverse map roundtrip (lambda, phi, theta) -> f -> (lambda, phi, theta).
TEST(ForceToCommand, RoundtripTenThousandSamples) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> angle(-M_PI / 2 + 1e-3, M_PI / 2 - 1e-3);
  std::uniform_real_distribution<double> mag(1e-3, 42.0);
  double worst = 0.0;
  const RotorCommand none;
  for (int k = 0; k < 10000; ++k) {
    const double lambda = mag(rng);
    const double phi = angle(rng);
    const double theta = angle(rng);
    const Vec3 f = lambda * rotor_direction(phi, theta);
    const RotorCommand cmd = force_to_command(f, none);
    worst = std::max({worst, std::abs(cmd.lambda - lambda), std::abs(cmd.phi - phi),
                      std::abs(cmd.theta - theta)});
    const Vec3 back = cmd.lambda * rotor_direction(cmd.phi, cmd.theta);
    worst = std::max(worst, (back - f).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-9);
}

class FlightAllocation : public ::testing::Test {
 protected:
  RobotModel model_;
  InterferenceParams params_;
};

TEST_F(FlightAllocation, HoverFlatPose) {
  const auto kin = forward_kinematics(model_, JointVec::Zero());
  Allocator alloc(model_);
  const auto result =
      alloc.allocate_flight(kin, Vec3(0, 0, -model_.gravity), hover_wrench(model_), {});

  EXPECT_LT(result.wrench_residual, 1e-6);
  EXPECT_FALSE(result.norm_bound_exceeded);
  for (int i = 0; i < kNumRotors; ++i) {
    EXPECT_NEAR(result.commands[i].lambda, 19.6, 0.05) << "rotor " << i;
    EXPECT_NEAR(result.commands[i].phi, 0.0, 1e-6);
    EXPECT_NEAR(result.commands[i].theta, 0.0, 1e-6);
  }
  // joint torques balance the link gravity surplus; hand statics per leg:
  // hip pitch ~ +3.18 N*m, knee pitch ~ +0.79 N*m, yaws 0
  for (int l = 0; l < kNumLegs; ++l) {
    EXPECT_NEAR(result.joint_torque[4 * l + 1], 3.18, 0.15);
    EXPECT_NEAR(result.joint_torque[4 * l + 3], 0.79, 0.10);
    EXPECT_NEAR(result.joint_torque[4 * l], 0.0, 1e-6);
    EXPECT_NEAR(result.joint_torque[4 * l + 2], 0.0, 1e-6);
    EXPECT_LE(std::abs(result.joint_torque[4 * l + 1]), model_.joint_torque_limit + 1e-9);
  }
}

TEST_F(FlightAllocation, QuasiStaticEquilibriumResidual) {
  const auto kin = forward_kinematics(model_, symmetric_pose(0.3, 0.5));
  const Vec3 g_body(0, 0, -model_.gravity);
  Allocator alloc(model_);
  const auto result = alloc.allocate_flight(kin, g_body, hover_wrench(model_), {});

  JointVec residual = result.joint_torque;
  for (int i = 0; i < kNumRotors; ++i) {
    residual += kin.rotor_jac[i].transpose() * result.commands[i].force;
  }
  for (int s = 0; s < kNumSegments; ++s) {
    residual += kin.segment_jac[s].transpose() * (model_.segment_masses[s] * g_body);
  }
  EXPECT_LT(residual.cwiseAbs().maxCoeff(), 1e-8);
}

TEST_F(FlightAllocation, WrenchFidelityOnRandomTargets) {
  const auto kin = forward_kinematics(model_, JointVec::Zero());
  const Vec3 g_body(0, 0, -model_.gravity);
  Allocator alloc(model_);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec6 w = hover_wrench(model_);
    for (int c = 0; c < 3; ++c) w[c] += 5.0 * gauss(rng);
    for (int c = 3; c < 6; ++c) w[c] += 2.0 * gauss(rng);
    const auto result = alloc.allocate_flight(kin, g_body, w, {});
    EXPECT_LE(result.wrench_residual, 1e-6 * (1.0 + w.norm()));
  }
}

TEST_F(FlightAllocation, WarmStartsConvergeToTheSameOptimum) {
  const auto kin = forward_kinematics(model_, symmetric_pose(M_PI / 4.0, M_PI / 2.0));
  const Vec3 g_body(0, 0, -model_.gravity);
  const auto ranges = valid_ranges(model_, kin, Vec3(0, 0, 1), params_);
  const auto constraints = restricted_force_constraints(ranges, kin);

  Allocator cold(model_);
  const auto first = cold.allocate_flight(kin, g_body, hover_wrench(model_), constraints);
  // second solve starts from the previous optimum this time
  const auto second = cold.allocate_flight(kin, g_body, hover_wrench(model_), constraints);
  Allocator fresh(model_);
  const auto third = fresh.allocate_flight(kin, g_body, hover_wrench(model_), constraints);

  for (int i = 0; i < kNumRotors; ++i) {
    EXPECT_LT((first.commands[i].force - second.commands[i].force).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((first.commands[i].force - third.commands[i].force).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST_F(FlightAllocation, FormThreeRestrictedRotorsSitAtBoundary) {
  const auto kin = forward_kinematics(model_, symmetric_pose(M_PI / 4.0, M_PI / 2.0));
  const Vec3 g_body(0, 0, -model_.gravity);
  const auto ranges = valid_ranges(model_, kin, Vec3(0, 0, 1), params_);
  const auto constraints = restricted_force_constraints(ranges, kin);
  ASSERT_EQ(constraints.size(), 4u);

  Allocator alloc(model_);
  const auto result = alloc.allocate_flight(kin, g_body, hover_wrench(model_), constraints);
  EXPECT_LT(result.wrench_residual, 1e-6);
  for (int l = 0; l < kNumLegs; ++l) {
    const int i = 2 * l;  // upper rotor
    EXPECT_NEAR(result.commands[i].theta, ranges[i].mu_lo, 1e-4) << "rotor " << i;
    EXPECT_GT(result.commands[i].lambda, 19.6) << "tilted rotors need more thrust";
    // constraint satisfaction in the phi-aligned frame
    const Mat3 phi_frame = kin.link_rot[i] * rot_x(ranges[i].phi_hat);
    const Vec3 f_local = phi_frame.transpose() * result.commands[i].force;
    EXPECT_LT(std::abs(f_local.y()), 1e-6);
  }
}

TEST_F(FlightAllocation, DroppingConstraintsEntersInvalidRange) {
  const auto kin = forward_kinematics(model_, symmetric_pose(M_PI / 4.0, M_PI / 2.0));
  const Vec3 g_body(0, 0, -model_.gravity);
  const auto ranges = valid_ranges(model_, kin, Vec3(0, 0, 1), params_);

  Allocator alloc(model_);
  const auto unconstrained = alloc.allocate_flight(kin, g_body, hover_wrench(model_), {});
  int inside_invalid = 0;
  for (int l = 0; l < kNumLegs; ++l) {
    if (ranges[2 * l].theta_invalid(unconstrained.commands[2 * l].theta)) ++inside_invalid;
  }
  EXPECT_GE(inside_invalid, 1) << "without the rows the optimum points into the downwash zone";

  // re-adding the rows restores feasibility in a single solve
  const auto constrained = alloc.allocate_flight(kin, g_body, hover_wrench(model_),
                                                 restricted_force_constraints(ranges, kin));
  for (int l = 0; l < kNumLegs; ++l) {
    const int i = 2 * l;
    EXPECT_GE(constrained.commands[i].theta, ranges[i].mu_lo - 1e-6);
    EXPECT_LE(constrained.commands[i].theta, ranges[i].mu_hi + 1e-6);
  }
}

TEST_F(FlightAllocation, InfeasibleWrenchRaises) {
  const auto kin = forward_kinematics(model_, JointVec::Zero());
  Vec6 w = Vec6::Zero();
  w[2] = 8.0 * 3.0 * model_.thrust_limit;  // beyond every box
  Allocator alloc(model_);
  EXPECT_THROW(alloc.allocate_flight(kin, Vec3(0, 0, -model_.gravity), w, {}),
               AllocationError);
}

// Two-rotor planar toy with an analytic/brute-force oracle. Rotors at
// x = +-1 with planar forces; wrench rows are sum f_x = 0, sum f_z = 10 and
// torque_y = 1 about the origin, so lambda * cos(theta) must split 4.5/5.5
// and the brute-force grid search finds theta near zero.
TEST(AllocationOracle, TwoRotorToyMatchesBruteForce) {
  QpProblem p;
  p.P = 2.0 * MatX::Identity(4, 4);
  p.A = MatX::Zero(3, 4);
  // vars: f1x, f1z, f2x, f2z
  p.A(0, 0) = 1.0;
  p.A(0, 2) = 1.0;
  p.A(1, 1) = 1.0;
  p.A(1, 3) = 1.0;
  p.A(2, 1) = -1.0;  // torque about y: -x * f_z with x = +1
  p.A(2, 3) = 1.0;   //                            and x = -1
  p.b = VecX(3);
  p.b << 0.0, 10.0, 1.0;
  p.C = MatX::Zero(0, 4);

  QpSolver solver;
  const QpSolution sol = solver.solve(p);
  ASSERT_EQ(sol.status, QpStatus::optimal);

  // brute force over the vectoring angle of rotor 1; the equality rows pin
  // lambda_i cos(theta_i) = 4.5 / 5.5 and theta_2 via the f_x row
  double best_cost = kInf;
  double best_t1 = 0.0, best_t2 = 0.0;
  for (double th1 = -0.6; th1 <= 0.6; th1 += 0.001) {
    const double l1 = 4.5 / std::cos(th1);
    const double th2 = std::atan(-4.5 * std::tan(th1) / 5.5);
    const double l2 = 5.5 / std::cos(th2);
    const double cost = l1 * l1 + l2 * l2;
    if (cost < best_cost) {
      best_cost = cost;
      best_t1 = th1;
      best_t2 = th2;
    }
  }
  const double qp_cost = sol.x.squaredNorm();
  EXPECT_NEAR(qp_cost, best_cost, 1e-3);
  EXPECT_NEAR(std::atan2(sol.x[0], sol.x[1]), best_t1, 1e-3);
  EXPECT_NEAR(std::atan2(sol.x[2], sol.x[3]), best_t2, 1e-3);
}

class LegLift : public ::testing::Test {
 protected:
  RobotModel model_;
  Vec3 g_body_{0, 0, -9.8};
};

TEST_F(LegLift, HorizontalLegStatics) {
  const auto kin = forward_kinematics(model_, JointVec::Zero());
  Allocator alloc(model_);
  const auto result = alloc.allocate_leg_lift(kin, g_body_, {0});

  // only leg 0 is involved
  for (int i = 2; i < kNumRotors; ++i) EXPECT_EQ(result.commands[i].lambda, 0.0);
  for (int j = 4; j < kNumJoints; ++j) EXPECT_EQ(result.joint_torque[j], 0.0);

  // the equilibrium of the lifted chain holds exactly
  JointVec residual = JointVec::Zero();
  for (int j = 0; j < 4; ++j) {
    double r = result.joint_torque[j];
    for (int i : {0, 1}) r += kin.rotor_jac[i].col(j).dot(result.commands[i].force);
    for (int s = 1; s <= 2; ++s) {
      r += model_.segment_masses[s] * kin.segment_jac[s].col(j).dot(g_body_);
    }
    residual[j] = r;
  }
  EXPECT_LT(residual.cwiseAbs().maxCoeff(), 1e-8);
  // torque stays inside the servo budget and thrust points mostly up
  for (int j = 0; j < 4; ++j) {
    EXPECT_LE(std::abs(result.joint_torque[j]), model_.joint_torque_limit + 1e-9);
  }
  EXPECT_GT(result.commands[0].force.z() + result.commands[1].force.z(), 0.0);
}

TEST_F(LegLift, LargeTorqueWeightPushesLoadOntoThrust) {
  const auto kin = forward_kinematics(model_, JointVec::Zero());
  AllocationWeights weights;
  weights.joint_torque = 1e7;  // w2 -> inf: tau_q -> 0
  Allocator alloc(model_, weights);
  const auto result = alloc.allocate_leg_lift(kin, g_body_, {0});

  EXPECT_LT(result.joint_torque.cwiseAbs().maxCoeff(), 1e-2);
  const double leg_weight = (model_.segment_masses[1] + model_.segment_masses[2]) * 9.8;
  const double vertical = result.commands[0].force.z() + result.commands[1].force.z();
  EXPECT_NEAR(vertical, leg_weight, 0.05);
  // each rotor ends up carrying its own link
  EXPECT_NEAR(result.commands[0].force.z(), 16.66, 0.05);
  EXPECT_NEAR(result.commands[1].force.z(), 16.66, 0.05);
}

TEST_F(LegLift, MasslessLegNeedsNothing) {
  RobotModel light = model_;
  for (int s = 1; s < kNumSegments; ++s) light.segment_masses[s] = 1e-9;
  const auto kin = forward_kinematics(light, JointVec::Zero());
  Allocator alloc(light);
  const auto result = alloc.allocate_leg_lift(kin, g_body_, {0});
  for (int i : {0, 1}) EXPECT_LT(result.commands[i].lambda, 1e-6);
  EXPECT_LT(result.joint_torque.cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(LegLift, RejectsBadLegSets) {
  const auto kin = forward_kinematics(model_, JointVec::Zero());
  Allocator alloc(model_);
  EXPECT_THROW(alloc.allocate_leg_lift(kin, g_body_, {}), AllocationError);
  EXPECT_THROW(alloc.allocate_leg_lift(kin, g_body_, {7}), AllocationError);
}

class AllLegsLift : public ::testing::Test {
 protected:
  // symmetric crawl-like stance with all legs slightly lifted
  JointVec lifted_stance() const {
    JointVec q = JointVec::Zero();
    for (int l = 0; l < kNumLegs; ++l) {
      q[4 * l] = M_PI / 4.0;
      q[4 * l + 1] = -0.80;
      q[4 * l + 3] = 1.14;
    }
    return q;
  }
  RobotModel model_;
  Vec3 g_body_{0, 0, -9.8};
};

TEST_F(AllLegsLift, SymmetricStanceBalances) {
  const auto kin = forward_kinematics(model_, lifted_stance());
  Allocator alloc(model_);
  ContactWrenchBounds bounds;
  const auto result = alloc.allocate_all_legs_lift(kin, g_body_, bounds);

  const Vec6 wc = alloc.contact_wrench(kin, g_body_, result.commands);
  // within bounds (that is the constraint), lateral parts cancel by symmetry
  EXPECT_LT(std::abs(wc[0]), 1e-6);
  EXPECT_LT(std::abs(wc[1]), 1e-6);
  EXPECT_GT(wc[2], 0.0);
  EXPECT_LT(std::abs(wc[3]), 1e-6);
  EXPECT_LT(std::abs(wc[4]), 1e-6);
  EXPECT_LT(std::abs(wc[5]), 1e-6);

  // vertical equilibrium: support force + total vertical thrust = weight
  double vertical_thrust = 0.0;
  for (const auto& cmd : result.commands) vertical_thrust += cmd.force.z();
  EXPECT_NEAR(wc[2] + vertical_thrust, model_.total_mass() * model_.gravity, 1e-6);

  // much cheaper than hovering
  double thrust_sum = 0.0;
  for (const auto& cmd : result.commands) thrust_sum += cmd.lambda;
  EXPECT_LT(thrust_sum, model_.total_mass() * model_.gravity);
}

TEST_F(AllLegsLift, JointTorqueLimitForcesThrustUse) {
  const auto kin = forward_kinematics(model_, lifted_stance());
  Allocator alloc(model_);
  ContactWrenchBounds bounds;
  const auto result = alloc.allocate_all_legs_lift(kin, g_body_, bounds);
  // gravity moments on a spread leg exceed the 7 N*m servo budget, so the
  // rotors must carry part of the load
  double thrust_sum = 0.0;
  for (const auto& cmd : result.commands) thrust_sum += cmd.lambda;
  EXPECT_GT(thrust_sum, 10.0);
}

TEST_F(AllLegsLift, InfeasibleBoundsNameTheComponent) {
  const auto kin = forward_kinematics(model_, lifted_stance());
  Allocator alloc(model_);
  ContactWrenchBounds bounds;
  bounds.tau_xy = 1e-6;  // no torque margin at all and no room to balance
  bounds.f_xy = 1e-6;
  RobotModel weak = model_;
  weak.thrust_limit = 0.01;  // rotors cannot help either
  Allocator weak_alloc(weak);
  try {
    weak_alloc.allocate_all_legs_lift(kin, g_body_, bounds);
    FAIL() << "expected infeasibility";
  } catch (const AllocationError& e) {
    EXPECT_FALSE(std::string(e.what()).empty());
  }
}

}  // namespace
}  // namespace vecquad
