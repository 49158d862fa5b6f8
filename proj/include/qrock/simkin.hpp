#pragma once

// Deterministic kinematic simulator.
//
// A robot is a tree of frame elements hanging off the base frame: revolute
// joints rotate about their axis, links translate along the local x axis by
// their length. Wheel joints drive an optional skid-steer base. Commands are
// position targets for revolute joints and velocity targets for wheels; the
// simulator tracks them with velocity clamping and records (never raises)
// limit violations.

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qrock/error.hpp"
#include "qrock/graphstore.hpp"
#include "qrock/text.hpp"

namespace qrock::sim {

using Vec3 = Eigen::Vector3d;

enum class JointKind { Revolute, Wheel };
enum class WheelSide { None, Left, Right };

struct Joint {
  std::string name;
  JointKind kind = JointKind::Revolute;
  Vec3 axis = Vec3::UnitZ();
  double limit_lo = -1.0;  // [rad], revolute only
  double limit_hi = 1.0;   // [rad], revolute only
  double velocity_limit = 1.0;  // [rad/s]
  std::string parent;  // frame element this joint is mounted on; empty = base frame
  WheelSide side = WheelSide::None;
};

struct Link {
  std::string name;
  double length = 0.0;  // [m] along the local x axis
  std::string parent;   // empty = base frame
};

struct WheeledBase {
  double wheel_radius = 0.1;  // [m]
  double track_width = 0.4;   // [m]
  int wheel_count = 0;
};

/// One step of the root-to-end-effector chain.
struct ChainElement {
  bool is_joint;
  std::size_t index;
};

class RobotSpec {
 public:
  RobotSpec() = default;

  /// Validates the structure and precomputes the end-effector chain.
  RobotSpec(std::string name, std::vector<Joint> joints, std::vector<Link> links, std::optional<WheeledBase> base,
            std::string end_effector)
      : name_(std::move(name)),
        joints_(std::move(joints)),
        links_(std::move(links)),
        base_(base),
        end_effector_(std::move(end_effector)) {
    validate();
  }

  const std::string& name() const { return name_; }
  const std::vector<Joint>& joints() const { return joints_; }
  const std::vector<Link>& links() const { return links_; }
  const std::optional<WheeledBase>& base() const { return base_; }
  const std::string& end_effector() const { return end_effector_; }
  const std::vector<ChainElement>& chain() const { return chain_; }
  std::size_t dof() const { return joints_.size(); }

  std::optional<std::size_t> joint_index(std::string_view name) const {
    for (std::size_t i = 0; i < joints_.size(); ++i)
      if (joints_[i].name == name) return i;
    return std::nullopt;
  }

  const std::vector<std::size_t>& left_wheels() const { return left_; }
  const std::vector<std::size_t>& right_wheels() const { return right_; }

  /// Sum of link lengths on the end-effector chain.
  double reach() const {
    double r = 0.0;
    for (const auto& el : chain_)
      if (!el.is_joint) r += std::abs(links_[el.index].length);
    return r;
  }

  friend bool operator==(const RobotSpec& a, const RobotSpec& b) { return to_text(a) == to_text(b); }

  friend std::string to_text(const RobotSpec& spec) {
    using text::escape;
    using text::format_double;
    std::string out = "robot\t" + escape(spec.name_) + "\n";
    for (const auto& j : spec.joints_) {
      out += "joint\t" + escape(j.name) + "\t" + (j.kind == JointKind::Wheel ? "wheel" : "revolute") + "\t" +
             format_double(j.axis.x()) + "," + format_double(j.axis.y()) + "," + format_double(j.axis.z()) + "\t" +
             format_double(j.limit_lo) + "\t" + format_double(j.limit_hi) + "\t" + format_double(j.velocity_limit) +
             "\t" + escape(j.parent) + "\t" +
             (j.side == WheelSide::Left ? "left" : j.side == WheelSide::Right ? "right" : "none") + "\n";
    }
    for (const auto& l : spec.links_)
      out += "link\t" + escape(l.name) + "\t" + format_double(l.length) + "\t" + escape(l.parent) + "\n";
    if (spec.base_)
      out += "base\t" + format_double(spec.base_->wheel_radius) + "\t" + format_double(spec.base_->track_width) +
             "\t" + std::to_string(spec.base_->wheel_count) + "\n";
    out += "end_effector\t" + escape(spec.end_effector_) + "\n";
    return out;
  }

 private:
  void validate() {
    auto invalid = [](const std::string& msg) { fail(ErrorCode::InvalidRobotSpec, msg); };
    std::map<std::string, ChainElement> elements;
    for (std::size_t i = 0; i < joints_.size(); ++i) {
      auto& j = joints_[i];
      if (j.name.empty()) invalid("joint without a name");
      if (!elements.emplace(j.name, ChainElement{true, i}).second) invalid("duplicate element name " + j.name);
      if (!(j.velocity_limit > 0.0)) invalid(j.name + ": velocity limit must be positive");
      if (j.kind == JointKind::Revolute) {
        if (!(j.limit_lo < j.limit_hi)) invalid(j.name + ": position limits must satisfy min < max");
        const double n = j.axis.norm();
        if (!(n > 0.0)) invalid(j.name + ": zero axis");
        j.axis /= n;
      } else {
        if (j.side == WheelSide::Left) left_.push_back(i);
        if (j.side == WheelSide::Right) right_.push_back(i);
        if (j.side == WheelSide::None) invalid(j.name + ": wheel without side");
      }
    }
    for (std::size_t i = 0; i < links_.size(); ++i) {
      if (links_[i].name.empty()) invalid("link without a name");
      if (!elements.emplace(links_[i].name, ChainElement{false, i}).second)
        invalid("duplicate element name " + links_[i].name);
    }
    auto parent_of = [&](const ChainElement& el) -> const std::string& {
      return el.is_joint ? joints_[el.index].parent : links_[el.index].parent;
    };
    for (const auto& [name, el] : elements) {
      if (el.is_joint && joints_[el.index].kind == JointKind::Wheel) continue;
      std::set<std::string> seen{name};
      for (std::string p = parent_of(el); !p.empty();) {
        auto it = elements.find(p);
        if (it == elements.end()) invalid(name + ": unknown parent " + p);
        if (it->second.is_joint && joints_[it->second.index].kind == JointKind::Wheel)
          invalid(name + ": cannot mount on a wheel");
        if (!seen.insert(p).second) invalid(name + ": parent chain forms a cycle");
        p = parent_of(it->second);
      }
    }
    const std::size_t wheel_count = left_.size() + right_.size();
    if (base_) {
      if (!(base_->wheel_radius > 0.0) || !(base_->track_width > 0.0)) invalid("base geometry must be positive");
      if (static_cast<std::size_t>(base_->wheel_count) != wheel_count) invalid("wheel count does not match wheel joints");
      if (left_.empty() || right_.empty()) invalid("a skid-steer base needs wheels on both sides");
    } else if (wheel_count != 0) {
      invalid("wheel joints require a wheeled base");
    }
    chain_.clear();
    if (!end_effector_.empty()) {
      auto it = elements.find(end_effector_);
      if (it == elements.end() || it->second.is_joint) invalid("end effector must name a link");
      for (ChainElement el = it->second;;) {
        chain_.push_back(el);
        const std::string& p = parent_of(el);
        if (p.empty()) break;
        el = elements.at(p);
      }
      std::reverse(chain_.begin(), chain_.end());
    }
  }

  std::string name_;
  std::vector<Joint> joints_;
  std::vector<Link> links_;
  std::optional<WheeledBase> base_;
  std::string end_effector_;
  std::vector<ChainElement> chain_;
  std::vector<std::size_t> left_;
  std::vector<std::size_t> right_;
};

inline RobotSpec robot_spec_from_text(std::string_view doc) {
  std::string name, ee;
  std::vector<Joint> joints;
  std::vector<Link> links;
  std::optional<WheeledBase> base;
  for (auto line : text::lines(doc)) {
    std::vector<std::string> f;
    for (auto part : text::split(line, '\t')) f.push_back(text::unescape(part));
    if (f[0] == "robot" && f.size() == 2) {
      name = f[1];
    } else if (f[0] == "joint" && f.size() == 9) {
      Joint j;
      j.name = f[1];
      j.kind = f[2] == "wheel" ? JointKind::Wheel : JointKind::Revolute;
      auto axis = text::parse_vector(f[3]);
      if (axis.size() != 3) fail(ErrorCode::SchemaViolation, "joint axis needs 3 components");
      j.axis = Vec3(axis[0], axis[1], axis[2]);
      j.limit_lo = text::parse_double(f[4]);
      j.limit_hi = text::parse_double(f[5]);
      j.velocity_limit = text::parse_double(f[6]);
      j.parent = f[7];
      j.side = f[8] == "left" ? WheelSide::Left : f[8] == "right" ? WheelSide::Right : WheelSide::None;
      joints.push_back(j);
    } else if (f[0] == "link" && f.size() == 4) {
      links.push_back({f[1], text::parse_double(f[2]), f[3]});
    } else if (f[0] == "base" && f.size() == 4) {
      base = WheeledBase{text::parse_double(f[1]), text::parse_double(f[2]),
                         static_cast<int>(text::parse_u64(f[3]))};
    } else if (f[0] == "end_effector" && f.size() == 2) {
      ee = f[1];
    } else {
      fail(ErrorCode::SchemaViolation, "unrecognised robot spec record: " + std::string(line));
    }
  }
  return RobotSpec(name, joints, links, base, ee);
}

// ---- state and action ----------------------------------------------------

struct ActuatorState {
  std::vector<double> q;   // [rad]
  std::vector<double> qd;  // [rad/s]
  friend bool operator==(const ActuatorState&, const ActuatorState&) = default;
};

struct RobotState {
  ActuatorState actuator;
  std::vector<double> sensor;    // unused at this scale
  std::vector<double> internal;  // unused at this scale
  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct BasePose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  friend bool operator==(const BasePose&, const BasePose&) = default;
};

struct Observation {
  Vec3 end_effector = Vec3::Zero();
  BasePose base;
  friend bool operator==(const Observation& a, const Observation& b) {
    return a.end_effector == b.end_effector && a.base == b.base;
  }
};

struct WorldState {
  RobotState robot;
  Observation observation;
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct KinematicAction {
  std::vector<double> command;  // position target (revolute) or velocity target (wheel), per joint
  double dt = 0.0;
};
struct PerceptiveAction {};
struct InternalAction {};

struct Action {
  KinematicAction kinematic;
  PerceptiveAction perceptive;
  InternalAction internal;
};

using CapabilityFunction = std::function<Action(const RobotState&, double)>;

enum class Integrator { ForwardEuler };

struct SimConfig {
  double dt = 0.02;      // [s]
  double horizon = 4.0;  // [s]
  Integrator integrator = Integrator::ForwardEuler;

  /// Number of steps T/dt; T must be a positive multiple of dt.
  std::size_t steps() const {
    if (!(dt > 0.0) || !(horizon > 0.0)) fail(ErrorCode::InvalidConfig, "dt and horizon must be positive");
    const double ratio = horizon / dt;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
      fail(ErrorCode::InvalidConfig, "horizon must be a positive multiple of dt");
    return static_cast<std::size_t>(rounded);
  }
};

enum class ViolationKind { Position, Velocity };

struct Violation {
  std::size_t step;
  std::size_t joint;
  ViolationKind kind;
  double value;  // offending target position or velocity
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct FeasibilityReport {
  std::vector<Violation> violations;
  bool feasible() const { return violations.empty(); }
  friend bool operator==(const FeasibilityReport&, const FeasibilityReport&) = default;
};

/// Time-stamped world-state sequence produced by executing a capability
/// function; `theta` is the source parameter vector when there is one.
struct Capability {
  std::vector<double> times;
  std::vector<WorldState> states;
  std::vector<double> theta;
  FeasibilityReport feasibility;

  bool feasible() const { return feasibility.feasible(); }
  std::size_t size() const { return states.size(); }
  friend bool operator==(const Capability&, const Capability&) = default;
};

// ---- kinematics ------------------------------------------------------------

/// End-effector position in the base frame.
inline Vec3 arm_position(const RobotSpec& spec, const std::vector<double>& q) {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 position = Vec3::Zero();
  for (const auto& el : spec.chain()) {
    if (el.is_joint) {
      const Joint& j = spec.joints()[el.index];
      rotation = rotation * Eigen::AngleAxisd(q[el.index], j.axis).toRotationMatrix();
    } else {
      position += rotation * Vec3(spec.links()[el.index].length, 0.0, 0.0);
    }
  }
  return position;
}

/// Planar rigid transform of a base-frame point into the world frame.
inline Vec3 apply_base_pose(const BasePose& base, const Vec3& p) {
  const double c = std::cos(base.theta);
  const double s = std::sin(base.theta);
  return Vec3(base.x + (c * p.x() - s * p.y()), base.y + (s * p.x() + c * p.y()), p.z());
}

inline Vec3 forward_kinematics(const RobotSpec& spec, const std::vector<double>& q, const BasePose& base = {}) {
  if (q.size() != spec.dof())
    fail(ErrorCode::DimensionMismatch, "joint vector has " + std::to_string(q.size()) + " entries, robot has " +
                                           std::to_string(spec.dof()));
  return apply_base_pose(base, arm_position(spec, q));
}

/// World state at rest with the given joint positions and base pose.
inline WorldState make_state(const RobotSpec& spec, std::vector<double> q, const BasePose& base = {}) {
  WorldState s;
  s.robot.actuator.qd.assign(spec.dof(), 0.0);
  s.robot.actuator.q = std::move(q);
  s.observation.base = base;
  s.observation.end_effector = forward_kinematics(spec, s.robot.actuator.q, base);
  return s;
}

/// Advances one time step. Limit violations are appended to `report` (when
/// given) with the supplied step index.
inline WorldState step(const RobotSpec& spec, const SimConfig& config, const WorldState& state, const Action& action,
                       FeasibilityReport* report = nullptr, std::size_t step_index = 0) {
  const auto& cmd = action.kinematic.command;
  const std::size_t n = spec.dof();
  if (cmd.size() != n || state.robot.actuator.q.size() != n)
    fail(ErrorCode::DimensionMismatch, "action or state does not match the robot's joint count");
  const double dt = config.dt;
  auto record = [&](std::size_t joint, ViolationKind kind, double value) {
    if (report) report->violations.push_back({step_index, joint, kind, value});
  };

  WorldState next = state;
  auto& q = next.robot.actuator.q;
  auto& qd = next.robot.actuator.qd;
  for (std::size_t i = 0; i < n; ++i) {
    const Joint& j = spec.joints()[i];
    const double max_rate = j.velocity_limit;
    if (j.kind == JointKind::Revolute) {
      const double target = cmd[i];
      if (target < j.limit_lo || target > j.limit_hi) record(i, ViolationKind::Position, target);
      double delta = target - state.robot.actuator.q[i];
      const double max_delta = max_rate * dt;
      if (std::abs(delta) > max_delta) {
        record(i, ViolationKind::Velocity, delta / dt);
        delta = std::clamp(delta, -max_delta, max_delta);
      }
      q[i] = std::clamp(state.robot.actuator.q[i] + delta, j.limit_lo, j.limit_hi);
      qd[i] = (q[i] - state.robot.actuator.q[i]) / dt;
    } else {
      double v = cmd[i];
      if (std::abs(v) > max_rate) {
        record(i, ViolationKind::Velocity, v);
        v = std::clamp(v, -max_rate, max_rate);
      }
      qd[i] = v;
      q[i] = state.robot.actuator.q[i] + v * dt;
    }
  }

  if (const auto& base = spec.base()) {
    auto mean_rate = [&](const std::vector<std::size_t>& wheels) {
      double sum = 0.0;
      for (std::size_t w : wheels) sum += qd[w];
      return sum / static_cast<double>(wheels.size());
    };
    const double left = mean_rate(spec.left_wheels());
    const double right = mean_rate(spec.right_wheels());
    const double v = base->wheel_radius * (right + left) / 2.0;
    const double w = base->wheel_radius * (right - left) / base->track_width;
    BasePose& pose = next.observation.base;
    const BasePose& prev = state.observation.base;
    pose.x = prev.x + v * std::cos(prev.theta) * dt;
    pose.y = prev.y + v * std::sin(prev.theta) * dt;
    pose.theta = prev.theta + w * dt;
  }
  next.observation.end_effector = forward_kinematics(spec, q, next.observation.base);
  return next;
}

/// Runs the execution loop from `initial` for horizon/dt steps.
inline Capability execute(const RobotSpec& spec, const SimConfig& config, const CapabilityFunction& cap_fn,
                          const WorldState& initial) {
  const std::size_t steps = config.steps();
  if (initial.robot.actuator.q.size() != spec.dof() || initial.robot.actuator.qd.size() != spec.dof())
    fail(ErrorCode::DimensionMismatch, "initial state does not match the robot's joint count");
  Capability cap;
  cap.times.reserve(steps + 1);
  cap.states.reserve(steps + 1);
  WorldState state = initial;
  state.observation.end_effector = forward_kinematics(spec, state.robot.actuator.q, state.observation.base);
  for (std::size_t i = 0; i < spec.dof(); ++i) {
    const Joint& j = spec.joints()[i];
    const double qi = state.robot.actuator.q[i];
    if (j.kind == JointKind::Revolute && (qi < j.limit_lo || qi > j.limit_hi))
      cap.feasibility.violations.push_back({0, i, ViolationKind::Position, qi});
  }
  cap.times.push_back(0.0);
  cap.states.push_back(state);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * config.dt;
    Action action = cap_fn(state.robot, t);
    if (action.kinematic.dt != config.dt) fail(ErrorCode::InvalidConfig, "action interval differs from the sim step");
    state = step(spec, config, state, action, &cap.feasibility, k + 1);
    cap.times.push_back(static_cast<double>(k + 1) * config.dt);
    cap.states.push_back(state);
  }
  return cap;
}

// ---- capability tables ---------------------------------------------------

inline std::vector<std::string> table_columns(const RobotSpec& spec) {
  std::vector<std::string> cols{"t"};
  for (const auto& j : spec.joints()) cols.push_back("q." + j.name);
  for (const auto& j : spec.joints()) cols.push_back("qd." + j.name);
  for (const char* c : {"ee_x", "ee_y", "ee_z", "base_x", "base_y", "base_theta"}) cols.emplace_back(c);
  return cols;
}

/// Tab-separated table, one row per time step. Optional `# key<TAB>value`
/// comment lines precede the header row.
inline std::string export_table(const RobotSpec& spec, const Capability& cap,
                                const std::vector<std::pair<std::string, std::string>>& comments = {}) {
  std::string out;
  for (const auto& [k, v] : comments) out += "# " + k + "\t" + v + "\n";
  const auto cols = table_columns(spec);
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "\t" : "") + cols[i];
  out += '\n';
  for (std::size_t k = 0; k < cap.states.size(); ++k) {
    const auto& s = cap.states[k];
    std::vector<double> row{cap.times[k]};
    row.insert(row.end(), s.robot.actuator.q.begin(), s.robot.actuator.q.end());
    row.insert(row.end(), s.robot.actuator.qd.begin(), s.robot.actuator.qd.end());
    const auto& ee = s.observation.end_effector;
    const auto& b = s.observation.base;
    row.insert(row.end(), {ee.x(), ee.y(), ee.z(), b.x, b.y, b.theta});
    out += text::join_numbers(row, '\t') + "\n";
  }
  return out;
}

struct Table {
  std::vector<std::pair<std::string, std::string>> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    fail(ErrorCode::SchemaViolation, "table has no column " + std::string(name));
  }
};

inline Table read_table(std::string_view doc) {
  Table t;
  for (auto line : text::lines(doc)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto body = text::trim(line.substr(1));
      auto tab = body.find('\t');
      t.comments.emplace_back(std::string(body.substr(0, tab)),
                              tab == std::string_view::npos ? "" : std::string(body.substr(tab + 1)));
      continue;
    }
    auto fields = text::split(line, '\t');
    if (t.columns.empty()) {
      for (auto f : fields) t.columns.emplace_back(f);
      continue;
    }
    if (fields.size() != t.columns.size()) fail(ErrorCode::SchemaViolation, "ragged table row");
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(text::parse_double(f));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---- derivation from a component graph ------------------------------------

/// Vertex property names carrying kinematic annotations.
namespace keys {
inline constexpr std::string_view kAxis = "axis";
inline constexpr std::string_view kLength = "length_m";
inline constexpr std::string_view kLimitLo = "limit_lo_rad";
inline constexpr std::string_view kLimitHi = "limit_hi_rad";
inline constexpr std::string_view kVelLimit = "vel_limit_rad_s";
inline constexpr std::string_view kWheelRadius = "wheel_radius_m";
inline constexpr std::string_view kTrackWidth = "track_width_m";
inline constexpr std::string_view kSide = "side";
}  // namespace keys

namespace detail {

inline Vec3 parse_axis(std::string_view s) {
  s = text::trim(s);
  double sign = 1.0;
  if (!s.empty() && (s.front() == '-' || s.front() == '+') && s.size() == 2) {
    sign = s.front() == '-' ? -1.0 : 1.0;
    s.remove_prefix(1);
  }
  if (s == "x") return sign * Vec3::UnitX();
  if (s == "y") return sign * Vec3::UnitY();
  if (s == "z") return sign * Vec3::UnitZ();
  auto v = text::parse_vector(s);
  if (v.size() != 3) fail(ErrorCode::MissingAnnotation, "axis '" + std::string(s) + "' is not x/y/z or a 3-vector");
  return Vec3(v[0], v[1], v[2]);
}

/// Property of a component, falling back to its model and the model's
/// superclasses.
inline std::optional<std::string> lookup(const graph::PropertyGraph& g, const graph::VertexId& component,
                                         std::string_view key) {
  if (auto v = g.vertex(component).property(key)) return v;
  for (auto m = g.model_of(component); m; m = g.superclass_of(*m))
    if (auto v = g.vertex(*m).property(key)) return v;
  return std::nullopt;
}

/// ';'-separated list of numbers, broadcast to `count` entries.
inline std::vector<double> numbers(const std::string& value, std::size_t count, const std::string& what) {
  std::vector<double> out;
  try {
    for (auto part : text::split(value, ';')) out.push_back(text::parse_double(text::trim(part)));
  } catch (const Error&) {
    fail(ErrorCode::MissingAnnotation, what + ": cannot parse '" + value + "'");
  }
  if (out.size() == 1) out.assign(count, out.front());
  if (out.size() != count) fail(ErrorCode::MissingAnnotation, what + ": expected " + std::to_string(count) + " values");
  return out;
}

}  // namespace detail

/// Builds the executable robot for an Assembly component model. Joint order
/// follows a depth-first traversal of part connections from the base
/// outward; the end effector is the last link reached.
inline RobotSpec robot_from_assembly(const graph::PropertyGraph& g, const graph::VertexId& assembly) {
  using graph::RelationKind;
  const graph::Vertex* model = g.find_vertex(assembly);
  if (!model || model->kind != graph::EntityKind::ComponentModel)
    fail(ErrorCode::UnknownModel, assembly + " is not a component model");
  if (model->domain != graph::Domain::Assembly) fail(ErrorCode::DomainMismatch, assembly + " is not an Assembly model");

  std::vector<graph::VertexId> parts;
  for (const auto* e : g.in_edges(assembly, RelationKind::PartOfComposition)) parts.push_back(e->source);
  if (parts.empty()) fail(ErrorCode::MissingAnnotation, assembly + " has no parts");
  std::map<graph::VertexId, std::size_t> part_index;
  std::map<graph::VertexId, std::size_t> iface_owner;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    part_index[parts[i]] = i;
    for (const auto& iface : g.interfaces_of(parts[i])) iface_owner[iface] = i;
  }

  // Part adjacency from connections, deduplicated, in connection order.
  std::vector<std::vector<std::size_t>> adjacent(parts.size());
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> component(parts.size());
  std::iota(component.begin(), component.end(), 0);
  auto find = [&](std::size_t x) {
    while (component[x] != x) x = component[x] = component[component[x]];
    return x;
  };
  for (const auto& [id, e] : g.edges()) {
    if (e.kind != RelationKind::ConnectedTo) continue;
    auto a = iface_owner.find(e.source);
    auto b = iface_owner.find(e.target);
    if (a == iface_owner.end() || b == iface_owner.end() || a->second == b->second) continue;
    if (!pairs.insert(std::minmax(a->second, b->second)).second) continue;
    const std::size_t ra = find(a->second), rb = find(b->second);
    if (ra == rb) fail(ErrorCode::NonTreeStructure, assembly + ": connections form a closed loop at " + id);
    component[ra] = rb;
    adjacent[a->second].push_back(b->second);
    adjacent[b->second].push_back(a->second);
  }
  for (std::size_t i = 1; i < parts.size(); ++i)
    if (find(i) != find(0)) fail(ErrorCode::NonTreeStructure, assembly + ": part " + parts[i] + " is not connected");

  auto prop = [&](std::size_t p, std::string_view key) { return detail::lookup(g, parts[p], key); };
  std::size_t root = 0;
  std::optional<std::size_t> chassis;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (prop(i, keys::kTrackWidth)) {
      if (chassis) fail(ErrorCode::InvalidRobotSpec, assembly + ": more than one wheeled chassis");
      chassis = i;
      root = i;
    }
  }

  std::vector<Joint> joints;
  std::vector<Link> links;
  std::optional<WheeledBase> base;
  std::optional<double> wheel_radius;
  std::string last_link;
  std::set<std::string> names;

  auto number = [&](std::size_t p, std::string_view key, std::size_t count) {
    auto v = prop(p, key);
    const std::string who = g.vertex(parts[p]).label();
    if (!v) fail(ErrorCode::MissingAnnotation, who + " lacks '" + std::string(key) + "'");
    return detail::numbers(*v, count, who + "." + std::string(key));
  };

  // Depth-first traversal; `attach` is the frame element children mount on.
  std::vector<bool> visited(parts.size(), false);
  std::function<void(std::size_t, const std::string&)> visit = [&](std::size_t p, const std::string& attach) {
    visited[p] = true;
    const std::string label = g.vertex(parts[p]).label();
    if (!names.insert(label).second) fail(ErrorCode::InvalidRobotSpec, assembly + ": duplicate part name " + label);
    std::string frame = attach;
    if (chassis && p == *chassis) {
      base = WheeledBase{0.0, number(p, keys::kTrackWidth, 1)[0], 0};
    } else if (prop(p, keys::kWheelRadius)) {
      Joint j;
      j.name = label;
      j.kind = JointKind::Wheel;
      j.axis = Vec3::UnitY();
      j.velocity_limit = number(p, keys::kVelLimit, 1)[0];
      const double r = number(p, keys::kWheelRadius, 1)[0];
      if (wheel_radius && *wheel_radius != r) fail(ErrorCode::InvalidRobotSpec, assembly + ": unequal wheel radii");
      wheel_radius = r;
      auto side = prop(p, keys::kSide);
      if (!side || (*side != "left" && *side != "right"))
        fail(ErrorCode::MissingAnnotation, label + " lacks 'side' (left|right)");
      j.side = *side == "left" ? WheelSide::Left : WheelSide::Right;
      joints.push_back(j);
    } else if (auto axis = prop(p, keys::kAxis)) {
      auto axes = text::split(*axis, ';');
      const std::size_t n = axes.size();
      auto lo = number(p, keys::kLimitLo, n);
      auto hi = number(p, keys::kLimitHi, n);
      auto vel = number(p, keys::kVelLimit, n);
      for (std::size_t a = 0; a < n; ++a) {
        Joint j;
        j.name = n == 1 ? label : label + "." + std::to_string(a);
        j.axis = detail::parse_axis(axes[a]);
        j.limit_lo = lo[a];
        j.limit_hi = hi[a];
        j.velocity_limit = vel[a];
        j.parent = frame;
        frame = j.name;
        joints.push_back(j);
      }
      if (prop(p, keys::kLength)) {
        links.push_back({label + ".link", number(p, keys::kLength, 1)[0], frame});
        frame = links.back().name;
        last_link = frame;
      }
    } else if (prop(p, keys::kLength)) {
      links.push_back({label, number(p, keys::kLength, 1)[0], frame});
      frame = label;
      last_link = frame;
    } else {
      fail(ErrorCode::MissingAnnotation, label + " carries no kinematic annotation");
    }
    for (std::size_t child : adjacent[p])
      if (!visited[child]) visit(child, frame);
  };
  visit(root, "");

  if (base) {
    if (!wheel_radius) fail(ErrorCode::MissingAnnotation, assembly + ": chassis without wheels");
    base->wheel_radius = *wheel_radius;
    base->wheel_count = static_cast<int>(
        std::count_if(joints.begin(), joints.end(), [](const Joint& j) { return j.kind == JointKind::Wheel; }));
  }
  return RobotSpec(model->label(), std::move(joints), std::move(links), base, last_link);
}

}  // namespace qrock::sim
