#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>

#include "qrock/fixtures.hpp"
#include "qrock/rng.hpp"
#include "qrock/simkin.hpp"

using namespace qrock;
using namespace qrock::sim;

namespace {

using Mat4 = std::array<std::array<double, 4>, 4>;

Mat4 identity4() {
  Mat4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

Mat4 mul(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// Rodrigues: R = I + sin(a) K + (1 - cos(a)) K^2 for unit axis k.
Mat4 rotation(const Vec3& axis, double angle) {
  const double x = axis.x(), y = axis.y(), z = axis.z();
  const double K[3][3] = {{0, -z, y}, {z, 0, -x}, {-y, x, 0}};
  double K2[3][3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) K2[i][j] += K[i][k] * K[k][j];
  Mat4 m = identity4();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] += std::sin(angle) * K[i][j] + (1.0 - std::cos(angle)) * K2[i][j];
  return m;
}

Mat4 translation_x(double length) {
  Mat4 m = identity4();
  m[0][3] = length;
  return m;
}

Mat4 planar_pose(const BasePose& p) {
  Mat4 m = rotation(Vec3::UnitZ(), p.theta);
  m[0][3] = p.x;
  m[1][3] = p.y;
  return m;
}

// Oracle: walk the chain as a product of homogeneous transforms.
Vec3 oracle_fk(const RobotSpec& spec, const std::vector<double>& q, const BasePose& base) {
  Mat4 t = planar_pose(base);
  for (const auto& el : spec.chain())
    t = mul(t, el.is_joint ? rotation(spec.joints()[el.index].axis, q[el.index])
                           : translation_x(spec.links()[el.index].length));
  return {t[0][3], t[1][3], t[2][3]};
}

RobotSpec arm() {
  graph::PropertyGraph g;
  return robot_from_assembly(g, fixtures::build_arm(g));
}

RobotSpec base_robot() {
  graph::PropertyGraph g;
  return robot_from_assembly(g, fixtures::build_base(g));
}

CapabilityFunction constant(std::vector<double> cmd, double dt) {
  return [cmd, dt](const RobotState&, double) {
    Action a;
    a.kinematic.command = cmd;
    a.kinematic.dt = dt;
    return a;
  };
}

}  // namespace

TEST(SimKin, AssembledArmStructure) {
  const auto spec = arm();
  ASSERT_EQ(spec.dof(), 3u);
  EXPECT_EQ(spec.joints()[0].name, "pan_tilt.0");
  EXPECT_EQ(spec.joints()[1].name, "pan_tilt.1");
  EXPECT_EQ(spec.joints()[2].name, "joint_motor");
  EXPECT_NEAR(spec.reach(), 0.4, 1e-12);
  EXPECT_FALSE(spec.base().has_value());
  EXPECT_EQ(robot_spec_from_text(to_text(spec)), spec);
}

TEST(SimKin, AssembledBaseStructure) {
  const auto spec = base_robot();
  ASSERT_EQ(spec.dof(), 4u);
  ASSERT_TRUE(spec.base().has_value());
  EXPECT_EQ(spec.left_wheels().size(), 2u);
  EXPECT_EQ(spec.right_wheels().size(), 2u);
  for (const auto& j : spec.joints()) EXPECT_EQ(j.kind, JointKind::Wheel);
  EXPECT_DOUBLE_EQ(spec.base()->wheel_radius, 0.1);
  EXPECT_DOUBLE_EQ(spec.base()->track_width, 0.4);
}

TEST(SimKin, MissingAnnotationAndLoops) {
  {
    graph::PropertyGraph g;
    auto lib = fixtures::ensure_library(g);
    auto bare = g.create_component_model(graph::Domain::Mechanics, "Bracket");
    g.add_model_interface(bare, lib.mech_link, "a");
    auto assembly = g.create_component_model(graph::Domain::Assembly, "Broken");
    auto m = g.instantiate_component(lib.joint_motor, "m");
    auto b = g.instantiate_component(bare, "bracket");
    g.connect(g.interface_named(m, "b"), g.interface_named(b, "a"));
    g.compose(m, assembly);
    g.compose(b, assembly);
    try {
      robot_from_assembly(g, assembly);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MissingAnnotation);
    }
  }
  {
    graph::PropertyGraph g;
    auto lib = fixtures::ensure_library(g);
    auto assembly = g.create_component_model(graph::Domain::Assembly, "Loop");
    auto m1 = g.instantiate_component(lib.joint_motor, "m1");
    auto p = g.instantiate_component(lib.pole, "p");
    auto m2 = g.instantiate_component(lib.joint_motor, "m2");
    g.connect(g.interface_named(m1, "b"), g.interface_named(p, "a"));
    g.connect(g.interface_named(p, "b"), g.interface_named(m2, "a"));
    g.connect(g.interface_named(m2, "b"), g.interface_named(m1, "a"));
    for (auto c : {m1, p, m2}) g.compose(c, assembly);
    try {
      robot_from_assembly(g, assembly);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NonTreeStructure);
    }
  }
}

TEST(SimKin, ForwardKinematicsMatchesTransformProduct) {
  const auto spec = arm();
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> q(spec.dof());
    for (auto& v : q) v = rng.uniform(-std::numbers::pi, std::numbers::pi);
    BasePose base{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-std::numbers::pi, std::numbers::pi)};
    const Vec3 got = forward_kinematics(spec, q, base);
    const Vec3 want = oracle_fk(spec, q, base);
    EXPECT_LT((got - want).norm(), 1e-9);
  }
  // Zero configuration: everything stretched along x.
  EXPECT_LT((forward_kinematics(spec, {0, 0, 0}) - Vec3(0.4, 0, 0)).norm(), 1e-12);
  // Rotated base: the arm's +x reach becomes +y.
  const Vec3 turned = forward_kinematics(spec, {0, 0, 0}, {1.0, 2.0, std::numbers::pi / 2});
  EXPECT_LT((turned - Vec3(1.0, 2.4, 0.0)).norm(), 1e-12);
  EXPECT_THROW(forward_kinematics(spec, {0, 0}), Error);
}

TEST(SimKin, StateCountsForBothHorizons) {
  const auto a = arm();
  SimConfig arm_cfg{0.02, 4.0};
  auto cap = execute(a, arm_cfg, constant({0, 0, 0}, 0.02), make_state(a, {0, 0, 0}));
  EXPECT_EQ(cap.size(), 201u);
  EXPECT_DOUBLE_EQ(cap.times.back(), 4.0);

  const auto b = base_robot();
  SimConfig base_cfg{0.02, 20.0};
  auto cap_b = execute(b, base_cfg, constant({1, 1, 1, 1}, 0.02), make_state(b, {0, 0, 0, 0}));
  EXPECT_EQ(cap_b.size(), 1001u);
  EXPECT_TRUE(cap_b.feasible());
  // Straight driving: v = r * omega = 0.1 m/s for 20 s.
  EXPECT_NEAR(cap_b.states.back().observation.base.x, 2.0, 1e-9);
  EXPECT_NEAR(cap_b.states.back().observation.base.y, 0.0, 1e-12);

  EXPECT_THROW((SimConfig{0.03, 4.0}.steps()), Error);
}

TEST(SimKin, VelocityLimitIsClampedAndReported) {
  const auto spec = arm();
  SimConfig cfg{0.02, 0.1};
  // Joint motor is limited to 3 rad/s, so each step moves at most 0.06 rad.
  auto cap = execute(spec, cfg, constant({0, 0, 1.0}, 0.02), make_state(spec, {0, 0, 0}));
  EXPECT_FALSE(cap.feasible());
  for (std::size_t k = 1; k < cap.size(); ++k)
    EXPECT_NEAR(cap.states[k].robot.actuator.q[2], 0.06 * static_cast<double>(k), 1e-12);
  for (const auto& v : cap.feasibility.violations) {
    EXPECT_EQ(v.joint, 2u);
    EXPECT_EQ(v.kind, ViolationKind::Velocity);
  }
  EXPECT_EQ(cap.feasibility.violations.size(), 5u);
}

TEST(SimKin, PositionLimitIsReported) {
  const auto spec = arm();
  SimConfig cfg{0.02, 0.04};
  WorldState start = make_state(spec, {0, 3.99, 0});
  auto cap = execute(spec, cfg, constant({0, 4.02, 0}, 0.02), start);
  ASSERT_FALSE(cap.feasible());
  EXPECT_EQ(cap.feasibility.violations.front().kind, ViolationKind::Position);
  EXPECT_LE(cap.states.back().robot.actuator.q[1], 4.0);
}

TEST(SimKin, TurningInPlace) {
  const auto b = base_robot();
  SimConfig cfg{0.02, 1.0};
  // Left wheels backwards, right forwards: omega = r * 2w / track.
  auto cap = execute(b, cfg, constant({-2, -2, 2, 2}, 0.02), make_state(b, {0, 0, 0, 0}));
  const auto& pose = cap.states.back().observation.base;
  EXPECT_NEAR(pose.theta, 0.1 * 4.0 / 0.4, 1e-12);
  EXPECT_NEAR(pose.x, 0.0, 1e-12);
  EXPECT_NEAR(pose.y, 0.0, 1e-12);
}

TEST(SimKin, TableRoundTrip) {
  const auto spec = arm();
  SimConfig cfg{0.02, 0.2};
  auto cap = execute(spec, cfg, constant({0.1, 0.2, 0.3}, 0.02), make_state(spec, {0, 0, 0}));
  const auto doc = export_table(spec, cap, {{"seed", "5"}});
  const auto table = read_table(doc);
  EXPECT_EQ(table.columns, table_columns(spec));
  ASSERT_EQ(table.rows.size(), cap.size());
  const auto ee_x = table.column("ee_x");
  for (std::size_t k = 0; k < cap.size(); ++k)
    EXPECT_EQ(table.rows[k][ee_x], cap.states[k].observation.end_effector.x());
}

TEST(SimKin, ArmOnBaseSuperposition) {
  graph::PropertyGraph g;
  const auto spec = robot_from_assembly(g, fixtures::build_arm_on_base(g));
  ASSERT_EQ(spec.dof(), 7u);
  EXPECT_TRUE(spec.base().has_value());
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> q(spec.dof());
    for (auto& v : q) v = rng.uniform(-1, 1);
    BasePose base{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3)};
    EXPECT_LT((forward_kinematics(spec, q, base) - oracle_fk(spec, q, base)).norm(), 1e-9);
  }
}
