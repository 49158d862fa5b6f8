#pragma once

// Polynomial capability-function model: a flat parameter vector (joint-major,
// N coefficients per joint) defines one phase polynomial per joint,
//
//   q(phi) = theta_0 (1 - phi) + theta_1 phi + sum_{i>=2} theta_i (phi^(i-1) - 1) phi,
//
// with phi = t / T. theta_0 is the value at the start, theta_1 at the end, and
// higher coefficients only shape the path in between. Revolute joints track
// q as a position; wheel joints take it as a velocity.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qrock/error.hpp"
#include "qrock/simkin.hpp"
#include "qrock/text.hpp"

namespace qrock::cfm {

struct JointParameters {
  std::size_t count = 5;
  double lo = -std::numbers::pi;
  double hi = std::numbers::pi;
  friend bool operator==(const JointParameters&, const JointParameters&) = default;
};

class ParameterSpace {
 public:
  ParameterSpace() = default;

  explicit ParameterSpace(std::vector<JointParameters> joints) : joints_(std::move(joints)) {
    std::size_t offset = 0;
    for (const auto& j : joints_) {
      if (j.count < 2) fail(ErrorCode::InvalidArgument, "each joint needs at least 2 coefficients");
      if (!(j.lo < j.hi)) fail(ErrorCode::InvalidArgument, "coefficient bounds must satisfy lo < hi");
      offsets_.push_back(offset);
      offset += j.count;
    }
    dimension_ = offset;
  }

  /// Default space for a robot: 5 coefficients in [-pi, pi] per revolute
  /// joint, 3 coefficients in [-2pi, 2pi] per wheel.
  static ParameterSpace for_robot(const sim::RobotSpec& spec, std::size_t revolute_count = 5,
                                  std::size_t wheel_count = 3) {
    std::vector<JointParameters> joints;
    for (const auto& j : spec.joints()) {
      if (j.kind == sim::JointKind::Wheel)
        joints.push_back({wheel_count, -2.0 * std::numbers::pi, 2.0 * std::numbers::pi});
      else
        joints.push_back({revolute_count, -std::numbers::pi, std::numbers::pi});
    }
    return ParameterSpace(std::move(joints));
  }

  std::size_t dimension() const { return dimension_; }
  std::size_t joint_count() const { return joints_.size(); }
  const std::vector<JointParameters>& joints() const { return joints_; }
  std::size_t offset(std::size_t joint) const { return offsets_.at(joint); }

  std::span<const double> slice(std::span<const double> theta, std::size_t joint) const {
    return theta.subspan(offsets_.at(joint), joints_.at(joint).count);
  }

  std::vector<double> lower() const { return flat([](const JointParameters& j) { return j.lo; }); }
  std::vector<double> upper() const { return flat([](const JointParameters& j) { return j.hi; }); }

  bool contains(std::span<const double> theta) const {
    if (theta.size() != dimension_) return false;
    for (std::size_t j = 0; j < joints_.size(); ++j)
      for (double v : slice(theta, j))
        if (!(v >= joints_[j].lo && v <= joints_[j].hi)) return false;
    return true;
  }

  void check(std::span<const double> theta) const {
    if (theta.size() != dimension_)
      fail(ErrorCode::DimensionMismatch, "parameter vector has " + std::to_string(theta.size()) +
                                             " entries, space has " + std::to_string(dimension_));
    if (!contains(theta)) fail(ErrorCode::OutOfBounds, "parameter vector leaves the space bounds");
  }

  /// Clamps every coordinate into its bounds.
  std::vector<double> clip(std::span<const double> theta) const {
    std::vector<double> out(theta.begin(), theta.end());
    auto lo = lower();
    auto hi = upper();
    for (std::size_t i = 0; i < out.size() && i < dimension_; ++i) out[i] = std::clamp(out[i], lo[i], hi[i]);
    return out;
  }

  /// Column names, joint-major: <joint>:<coefficient index>.
  std::vector<std::string> column_names(const sim::RobotSpec& spec) const {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < joints_.size(); ++j)
      for (std::size_t i = 0; i < joints_[j].count; ++i)
        out.push_back((j < spec.dof() ? spec.joints()[j].name : std::to_string(j)) + ":" + std::to_string(i));
    return out;
  }

  /// Text form "count,lo,hi;count,lo,hi;..." used in manifests.
  std::string to_text() const {
    std::string out;
    for (std::size_t j = 0; j < joints_.size(); ++j) {
      if (j) out += ';';
      out += std::to_string(joints_[j].count) + "," + text::format_double(joints_[j].lo) + "," +
             text::format_double(joints_[j].hi);
    }
    return out;
  }

  static ParameterSpace from_text(std::string_view s) {
    std::vector<JointParameters> joints;
    if (!s.empty()) {
      for (auto part : text::split(s, ';')) {
        auto f = text::split(part, ',');
        if (f.size() != 3) fail(ErrorCode::SchemaViolation, "malformed parameter space entry");
        joints.push_back({static_cast<std::size_t>(text::parse_u64(f[0])), text::parse_double(f[1]),
                          text::parse_double(f[2])});
      }
    }
    return ParameterSpace(std::move(joints));
  }

  friend bool operator==(const ParameterSpace& a, const ParameterSpace& b) { return a.joints_ == b.joints_; }

 private:
  template <typename F>
  std::vector<double> flat(F&& f) const {
    std::vector<double> out;
    out.reserve(dimension_);
    for (const auto& j : joints_) out.insert(out.end(), j.count, f(j));
    return out;
  }

  std::vector<JointParameters> joints_;
  std::vector<std::size_t> offsets_;
  std::size_t dimension_ = 0;
};

/// Value of one joint's phase polynomial.
inline double eval_poly(std::span<const double> coeffs, double phase) {
  if (!(phase >= 0.0 && phase <= 1.0)) fail(ErrorCode::PhaseOutOfRange, "phase must lie in [0, 1]");
  if (coeffs.size() < 2) fail(ErrorCode::DimensionMismatch, "a joint polynomial needs at least 2 coefficients");
  double value = coeffs[0] * (1.0 - phase) + coeffs[1] * phase;
  double power = 1.0;
  for (std::size_t i = 2; i < coeffs.size(); ++i) {
    power *= phase;
    value += coeffs[i] * (power - 1.0) * phase;
  }
  return value;
}

/// Capability function for theta. The command issued at time t is the
/// polynomial's value at the end of the step, phi = (t + dt) / horizon
/// (held at phi = 1 past the horizon), so the tracked path finishes on
/// theta_1.
inline sim::CapabilityFunction make_capability_function(const ParameterSpace& space, std::vector<double> theta,
                                                         const sim::RobotSpec& spec, double horizon, double dt) {
  if (space.joint_count() != spec.dof())
    fail(ErrorCode::DimensionMismatch, "parameter space covers " + std::to_string(space.joint_count()) +
                                           " joints, robot has " + std::to_string(spec.dof()));
  if (theta.size() != space.dimension())
    fail(ErrorCode::DimensionMismatch, "parameter vector has " + std::to_string(theta.size()) +
                                           " entries, space has " + std::to_string(space.dimension()));
  if (!(horizon > 0.0) || !(dt > 0.0)) fail(ErrorCode::InvalidConfig, "horizon and dt must be positive");
  return [space, theta = std::move(theta), horizon, dt](const sim::RobotState&, double t) {
    sim::Action action;
    action.kinematic.dt = dt;
    const double phase = std::clamp((t + dt) / horizon, 0.0, 1.0);
    action.kinematic.command.reserve(space.joint_count());
    for (std::size_t j = 0; j < space.joint_count(); ++j)
      action.kinematic.command.push_back(eval_poly(space.slice(theta, j), phase));
    return action;
  };
}

inline sim::CapabilityFunction make_capability_function(const ParameterSpace& space, std::vector<double> theta,
                                                         const sim::RobotSpec& spec, const sim::SimConfig& config) {
  return make_capability_function(space, std::move(theta), spec, config.horizon, config.dt);
}

/// Initial world state for theta: revolute joints rest at theta_0 (clamped
/// into their limits), wheels at zero.
inline sim::WorldState initial_state(const ParameterSpace& space, std::span<const double> theta,
                                     const sim::RobotSpec& spec, const sim::BasePose& base = {}) {
  if (space.joint_count() != spec.dof() || theta.size() != space.dimension())
    fail(ErrorCode::DimensionMismatch, "parameter vector does not match the robot");
  std::vector<double> q(spec.dof(), 0.0);
  for (std::size_t j = 0; j < spec.dof(); ++j) {
    const auto& joint = spec.joints()[j];
    if (joint.kind == sim::JointKind::Revolute)
      q[j] = std::clamp(space.slice(theta, j)[0], joint.limit_lo, joint.limit_hi);
  }
  return sim::make_state(spec, std::move(q), base);
}

/// l(theta): the capability produced by executing theta from its start state.
inline sim::Capability simulate(const ParameterSpace& space, const std::vector<double>& theta,
                                const sim::RobotSpec& spec, const sim::SimConfig& config) {
  auto cap = sim::execute(spec, config, make_capability_function(space, theta, spec, config),
                          initial_state(space, theta, spec));
  cap.theta = theta;
  return cap;
}

/// Largest joint-position deviation over all coordinates and time steps when
/// each coefficient is perturbed by epsilon in turn.
inline double smoothness_probe(const ParameterSpace& space, const std::vector<double>& theta, double epsilon,
                               const sim::RobotSpec& spec, const sim::SimConfig& config) {
  const auto reference = simulate(space, theta, spec, config);
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto shifted = theta;
    shifted[i] += epsilon;
    const auto cap = simulate(space, shifted, spec, config);
    for (std::size_t k = 0; k < cap.states.size(); ++k) {
      const auto& a = cap.states[k].robot.actuator.q;
      const auto& b = reference.states[k].robot.actuator.q;
      for (std::size_t j = 0; j < a.size(); ++j) worst = std::max(worst, std::abs(a[j] - b[j]));
    }
  }
  return worst;
}

}  // namespace qrock::cfm
