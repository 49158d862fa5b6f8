#pragma once

// Stock component library and the reference assemblies used by the demo,
// the tests and the CLI's `assemble` command.

#include <numbers>
#include <string>

#include "qrock/graphstore.hpp"
#include "qrock/simkin.hpp"

namespace qrock::fixtures {

using graph::Domain;
using graph::PropertyGraph;
using graph::VertexId;

struct Library {
  VertexId mech_link;  // interface model, Mechanics
  VertexId power_bus;  // interface model, Electronics
  VertexId pan_tilt;
  VertexId pole;
  VertexId joint_motor;
  VertexId end_effector;
  VertexId chassis;
  VertexId wheel;
};

/// Component models with kinematic annotations. Idempotent: models that
/// already exist are reused.
inline Library ensure_library(PropertyGraph& g) {
  using namespace sim::keys;
  auto interface_model = [&](Domain d, const char* name) {
    if (auto id = g.find_model(graph::EntityKind::InterfaceModel, d, name)) return *id;
    return g.create_interface_model(d, name);
  };
  Library lib;
  lib.mech_link = interface_model(Domain::Mechanics, "MechLink");
  lib.power_bus = interface_model(Domain::Electronics, "PowerBus");

  auto model = [&](Domain d, const char* name, std::initializer_list<const char*> mech,
                   std::initializer_list<std::pair<std::string_view, std::string>> props, bool powered) {
    if (auto id = g.find_model(graph::EntityKind::ComponentModel, d, name)) return *id;
    VertexId m = g.create_component_model(d, name);
    for (const char* iface : mech) g.add_model_interface(m, lib.mech_link, iface);
    if (powered) g.add_model_interface(m, lib.power_bus, "power");
    for (const auto& [k, v] : props) g.set_property(m, k, v);
    return m;
  };
  const std::string pi = text::format_double(std::numbers::pi);
  lib.pan_tilt = model(Domain::Assembly, "PanTiltUnit", {"a", "b"},
                       {{kAxis, "z;y"}, {kLimitLo, "-" + pi + ";-4"}, {kLimitHi, pi + ";4"}, {kVelLimit, "6;3"}},
                       true);
  lib.pole = model(Domain::Mechanics, "Pole", {"a", "b"}, {{kLength, "0.2"}}, false);
  lib.joint_motor = model(Domain::Assembly, "JointMotor", {"a", "b"},
                          {{kAxis, "y"}, {kLimitLo, "-4"}, {kLimitHi, "4"}, {kVelLimit, "3"}}, true);
  lib.end_effector = model(Domain::Mechanics, "EndEffector", {"a"}, {{kLength, "0.05"}}, false);
  lib.chassis = model(Domain::Mechanics, "Chassis", {"mount", "w1", "w2", "w3", "w4"}, {{kTrackWidth, "0.4"}}, false);
  lib.wheel = model(Domain::Assembly, "Wheel", {"hub"}, {{kWheelRadius, "0.1"}, {kVelLimit, "5"}}, true);
  return lib;
}

namespace detail {

struct ArmParts {
  VertexId pan_tilt, lower_pole, joint_motor, upper_pole, end_effector;
};

inline ArmParts add_arm_parts(PropertyGraph& g, const Library& lib, const VertexId& assembly) {
  ArmParts p;
  p.pan_tilt = g.instantiate_component(lib.pan_tilt, "pan_tilt");
  p.lower_pole = g.instantiate_component(lib.pole, "lower_pole");
  g.set_property(p.lower_pole, sim::keys::kLength, "0.15");
  p.joint_motor = g.instantiate_component(lib.joint_motor, "joint_motor");
  p.upper_pole = g.instantiate_component(lib.pole, "upper_pole");
  p.end_effector = g.instantiate_component(lib.end_effector, "end_effector");
  g.connect(g.interface_named(p.pan_tilt, "b"), g.interface_named(p.lower_pole, "a"));
  g.connect(g.interface_named(p.lower_pole, "b"), g.interface_named(p.joint_motor, "a"));
  g.connect(g.interface_named(p.joint_motor, "b"), g.interface_named(p.upper_pole, "a"));
  g.connect(g.interface_named(p.upper_pole, "b"), g.interface_named(p.end_effector, "a"));
  for (const auto& part : {p.pan_tilt, p.lower_pole, p.joint_motor, p.upper_pole, p.end_effector})
    g.compose(part, assembly);
  return p;
}

inline VertexId add_base_parts(PropertyGraph& g, const Library& lib, const VertexId& assembly) {
  VertexId chassis = g.instantiate_component(lib.chassis, "chassis");
  g.compose(chassis, assembly);
  const char* names[] = {"wheel_fl", "wheel_rl", "wheel_fr", "wheel_rr"};
  const char* sides[] = {"left", "left", "right", "right"};
  const char* ports[] = {"w1", "w2", "w3", "w4"};
  for (int i = 0; i < 4; ++i) {
    VertexId w = g.instantiate_component(lib.wheel, names[i]);
    g.set_property(w, sim::keys::kSide, sides[i]);
    g.connect(g.interface_named(chassis, ports[i]), g.interface_named(w, "hub"));
    g.compose(w, assembly);
  }
  return chassis;
}

}  // namespace detail

/// 3-DOF arm: pan-tilt unit, lower pole, joint motor, upper pole and end
/// effector (reach 0.4 m).
inline VertexId build_arm(PropertyGraph& g, const std::string& name = "NewShoppingCart") {
  const Library lib = ensure_library(g);
  VertexId assembly = g.create_component_model(Domain::Assembly, name);
  detail::add_arm_parts(g, lib, assembly);
  return assembly;
}

/// Skid-steer base with four wheels.
inline VertexId build_base(PropertyGraph& g, const std::string& name = "MobileBase") {
  const Library lib = ensure_library(g);
  VertexId assembly = g.create_component_model(Domain::Assembly, name);
  detail::add_base_parts(g, lib, assembly);
  return assembly;
}

/// The arm mounted on the base's chassis.
inline VertexId build_arm_on_base(PropertyGraph& g, const std::string& name = "ArmOnBase") {
  const Library lib = ensure_library(g);
  VertexId assembly = g.create_component_model(Domain::Assembly, name);
  VertexId chassis = detail::add_base_parts(g, lib, assembly);
  auto arm = detail::add_arm_parts(g, lib, assembly);
  g.connect(g.interface_named(chassis, "mount"), g.interface_named(arm.pan_tilt, "a"));
  return assembly;
}

/// Handles produced by the leg construction example.
struct LegExample {
  VertexId joint_model;  // J
  VertexId limb_model;   // L
  VertexId leg;          // m
  VertexId j1, j2, j3, j4, l1, l2;
};

/// Builds the leg component model from a joint model J (interfaces a, b) and
/// a limb model L (interfaces x, y): four joints and two limbs chained, the
/// first two joints composed into the new Assembly model "Leg".
inline LegExample build_leg(PropertyGraph& g) {
  LegExample ex;
  VertexId mech = g.create_interface_model(Domain::Mechanics, "LegMechLink");
  ex.joint_model = g.create_component_model(Domain::Mechanics, "J");
  g.add_model_interface(ex.joint_model, mech, "a");
  g.add_model_interface(ex.joint_model, mech, "b");
  ex.limb_model = g.create_component_model(Domain::Mechanics, "L");
  g.add_model_interface(ex.limb_model, mech, "x");
  g.add_model_interface(ex.limb_model, mech, "y");

  auto iface = [&](const VertexId& c, const char* n) { return g.interface_named(c, n); };
  ex.j1 = g.instantiate_component(ex.joint_model, "hip1");
  ex.j2 = g.instantiate_component(ex.joint_model, "hip2");
  ex.j3 = g.instantiate_component(ex.joint_model, "hip3");
  ex.j4 = g.instantiate_component(ex.joint_model, "knee");
  g.connect(iface(ex.j1, "b"), iface(ex.j2, "a"));
  g.connect(iface(ex.j2, "b"), iface(ex.j3, "a"));
  ex.l1 = g.instantiate_component(ex.limb_model, "upperLimb");
  ex.l2 = g.instantiate_component(ex.limb_model, "lowerLimb");
  g.connect(iface(ex.j3, "b"), iface(ex.l1, "x"));
  g.connect(iface(ex.l1, "y"), iface(ex.j4, "a"));
  g.connect(iface(ex.j4, "b"), iface(ex.l2, "x"));
  ex.leg = g.create_component_model(Domain::Assembly, "Leg");
  g.compose(ex.j1, ex.leg);
  g.compose(ex.j2, ex.leg);
  return ex;
}

}  // namespace qrock::fixtures
