#pragma once

// Behavior models, semantic annotations and cognitive cores. A core links
// the clusters of one robot that satisfy a behavior model's constraints and
// is sampled by maximizing the joint cluster density with a particle swarm.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qrock/cfm.hpp"
#include "qrock/cluster.hpp"
#include "qrock/error.hpp"
#include "qrock/ontology.hpp"
#include "qrock/parallel.hpp"
#include "qrock/rng.hpp"
#include "qrock/simkin.hpp"
#include "qrock/text.hpp"

namespace qrock::cores {

using Vector = std::vector<double>;

// ---- behavior models and annotations ---------------------------------------

enum class ConstraintKind { MinMax, Variable };

struct Constraint {
  std::string feature;  // feature space id
  ConstraintKind kind = ConstraintKind::MinMax;
  double lo = 0.0;
  double hi = 0.0;
  double weight = 1.0;  // exponent on this constraint's density

  static Constraint min_max(std::string feature, double lo, double hi, double weight = 1.0) {
    return {std::move(feature), ConstraintKind::MinMax, lo, hi, weight};
  }
  static Constraint variable(std::string feature, double weight = 1.0) {
    return {std::move(feature), ConstraintKind::Variable, 0.0, 0.0, weight};
  }

  void check() const {
    cluster::feature_space(feature);
    if (kind == ConstraintKind::MinMax && !(lo < hi))
      fail(ErrorCode::InvalidArgument, "constraint on " + feature + " needs min < max");
    if (!(weight > 0.0) || !std::isfinite(weight))
      fail(ErrorCode::InvalidArgument, "constraint weight on " + feature + " must be positive");
  }

  /// "feature;minmax;lo;hi;weight" or "feature;variable;;;weight".
  std::string to_text() const {
    if (kind == ConstraintKind::Variable) return feature + ";variable;;;" + text::format_double(weight);
    return feature + ";minmax;" + text::format_double(lo) + ";" + text::format_double(hi) + ";" +
           text::format_double(weight);
  }

  static Constraint from_text(std::string_view s) {
    const auto f = text::split(s, ';');
    if (f.size() != 5) fail(ErrorCode::SchemaViolation, "malformed constraint '" + std::string(s) + "'");
    Constraint c;
    c.feature = std::string(f[0]);
    if (f[1] == "variable") {
      c.kind = ConstraintKind::Variable;
    } else if (f[1] == "minmax") {
      c.lo = text::parse_double(f[2]);
      c.hi = text::parse_double(f[3]);
    } else {
      fail(ErrorCode::SchemaViolation, "unknown constraint kind '" + std::string(f[1]) + "'");
    }
    c.weight = text::parse_double(f[4]);
    c.check();
    return c;
  }

  friend bool operator==(const Constraint&, const Constraint&) = default;
};

inline void check_constraints(const std::vector<Constraint>& cs) {
  std::set<std::string> seen;
  for (const auto& c : cs) {
    c.check();
    if (!seen.insert(c.feature).second)
      fail(ErrorCode::InvalidArgument, "more than one constraint on feature space " + c.feature);
  }
}

struct BehaviorModel {
  std::string label;
  std::vector<Constraint> constraints;

  void check() const {
    if (label.empty()) fail(ErrorCode::InvalidArgument, "behavior model needs a label");
    check_constraints(constraints);
  }

  /// Line format: the label, then one "constraint <text>" line each.
  std::string to_text() const {
    std::string out = "label\t" + label + "\n";
    for (const auto& c : constraints) out += "constraint\t" + c.to_text() + "\n";
    return out;
  }

  static BehaviorModel from_text(std::string_view doc) {
    BehaviorModel bm;
    for (auto line : text::lines(doc)) {
      if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
      const auto f = text::split(line, '\t');
      if (f.size() != 2) fail(ErrorCode::SchemaViolation, "malformed behavior model line '" + std::string(line) + "'");
      if (f[0] == "label")
        bm.label = std::string(text::trim(f[1]));
      else if (f[0] == "constraint")
        bm.constraints.push_back(Constraint::from_text(text::trim(f[1])));
      else
        fail(ErrorCode::SchemaViolation, "unknown behavior model field '" + std::string(f[0]) + "'");
    }
    bm.check();
    return bm;
  }

  friend bool operator==(const BehaviorModel&, const BehaviorModel&) = default;
};

/// Moving from a given start state to an end-effector target on a direct
/// path.
inline BehaviorModel reach_model() {
  return {"reach",
          {Constraint::min_max("dir", 0.8, 1.0), Constraint::variable("start"), Constraint::variable("end")}};
}

/// The same motion without the directness requirement.
inline BehaviorModel unconstrained_reach_model() {
  return {"reach-any", {Constraint::variable("start"), Constraint::variable("end")}};
}

inline std::optional<BehaviorModel> builtin_model(std::string_view name) {
  if (name == "reach") return reach_model();
  if (name == "reach-any") return unconstrained_reach_model();
  return std::nullopt;
}

struct SemanticAnnotation {
  std::set<std::string> labels;
  std::vector<Constraint> constraints;

  void check() const {
    if (labels.empty()) fail(ErrorCode::EmptyAnnotation, "a semantic annotation needs at least one label");
    check_constraints(constraints);
  }

  friend bool operator==(const SemanticAnnotation&, const SemanticAnnotation&) = default;
};

// ---- constraint checking ---------------------------------------------------

/// MinMax on a feature vector: every component strictly inside (lo, hi).
inline bool within(const Constraint& c, const Vector& f) {
  return std::all_of(f.begin(), f.end(), [&](double v) { return c.lo < v && v < c.hi; });
}

/// Cluster whose centroid is nearest the target; ties go to the lowest index.
inline std::size_t nearest_centroid(const cluster::ClusterSpace& cs, const Vector& target) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& c : cs.clusters) {
    const double d = cluster::distance(c.centroid, target);
    if (d < best_d) {
      best_d = d;
      best = c.index;
    }
  }
  return best;
}

/// cc(cluster, constraint, target): 1 when the cluster satisfies the
/// constraint. MinMax tests the centroid; Variable asks whether this cluster
/// is the nearest-centroid cluster for the target.
inline bool cc(const cluster::ClusterSpace& cs, std::size_t index, const Constraint& c,
               const std::optional<Vector>& target = std::nullopt) {
  if (cs.feature != c.feature)
    fail(ErrorCode::InvalidArgument, "cluster lives in " + cs.feature + ", constraint is on " + c.feature);
  const auto& cluster = cs.clusters.at(index);
  if (c.kind == ConstraintKind::MinMax) {
    if (target) fail(ErrorCode::InvalidArgument, "a MinMax constraint takes no target");
    return within(c, cluster.centroid);
  }
  if (!target) fail(ErrorCode::MissingTarget, "variable constraint on " + c.feature + " needs a target");
  if (target->size() != cluster.centroid.size())
    fail(ErrorCode::DimensionMismatch, "target for " + c.feature + " has " + std::to_string(target->size()) +
                                           " entries, feature has " + std::to_string(cluster.centroid.size()));
  return nearest_centroid(cs, *target) == index;
}

// ---- cognitive cores --------------------------------------------------------

struct SamplerConfig {
  std::size_t particles = 64;
  std::size_t iterations = 200;
  double inertia = 0.7;
  double cognitive = 1.5;
  double social = 1.5;
  double max_velocity = 0.2;  // fraction of each coordinate's range per iteration
  std::size_t alternates = 8;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  void check() const {
    if (particles == 0 || iterations == 0) fail(ErrorCode::InvalidConfig, "particle and iteration counts must be positive");
    if (!(inertia > 0.0) || !(cognitive > 0.0) || !(social > 0.0) || !(max_velocity > 0.0))
      fail(ErrorCode::InvalidConfig, "swarm weights must be positive");
  }

  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

struct CognitiveCore {
  std::string id;
  std::size_t version = 1;
  std::string robot;
  std::string store_hash;  // set hash of the cluster store the links index into
  BehaviorModel behavior;
  SemanticAnnotation annotation;
  std::map<std::string, std::vector<std::size_t>> links;  // MinMax feature -> linked cluster indices
  SamplerConfig sampler;

  friend bool operator==(const CognitiveCore&, const CognitiveCore&) = default;
};

inline std::string default_core_id(std::string_view robot, std::string_view label) {
  return std::string(robot) + "." + std::string(label);
}

/// Grounds a behavior model on a robot's cluster store. Every cluster that
/// passes a MinMax check is linked; Variable constraints wait for a target.
inline CognitiveCore create_core(const cluster::ClusterStore& store, const BehaviorModel& bm,
                                 const SamplerConfig& sampler = {}, std::string id = {}) {
  bm.check();
  sampler.check();
  CognitiveCore core;
  core.id = id.empty() ? default_core_id(store.robot, bm.label) : std::move(id);
  core.robot = store.robot;
  core.store_hash = store.set_hash;
  core.behavior = bm;
  core.annotation = {{bm.label}, bm.constraints};
  core.sampler = sampler;
  for (const auto& c : bm.constraints) {
    const auto& cs = store.at(c.feature);
    if (c.kind != ConstraintKind::MinMax) continue;
    auto& linked = core.links[c.feature];
    for (const auto& cl : cs.clusters)
      if (cc(cs, cl.index, c)) linked.push_back(cl.index);
    if (linked.empty())
      fail(ErrorCode::UnsatisfiableConstraint, "no " + c.feature + " cluster of " + store.robot + " has a centroid in (" +
                                                   text::format_double(c.lo) + ", " + text::format_double(c.hi) + ")");
  }
  return core;
}

/// Adds reviewer labels and returns the next version of the core. Unknown
/// labels are rejected in strict mode and otherwise registered in the
/// ontology as specializations of the behavior label.
inline CognitiveCore annotate_core(const CognitiveCore& core, const std::vector<std::string>& add,
                                   onto::Ontology& ontology, bool strict,
                                   const std::vector<std::string>& remove = {}) {
  CognitiveCore next = core;
  for (const auto& label : add) {
    if (!ontology.has(label)) {
      if (strict)
        fail(ErrorCode::UnknownOntologyPolicyViolation, "label '" + label + "' is not in the ontology (strict mode)");
      ontology.add(label, ontology.has(core.behavior.label) ? core.behavior.label : ontology.root());
    }
    next.annotation.labels.insert(label);
  }
  for (const auto& label : remove) next.annotation.labels.erase(label);
  next.annotation.check();
  if (next.annotation.labels != core.annotation.labels) ++next.version;
  return next;
}

// ---- particle swarm --------------------------------------------------------

struct SwarmResult {
  Vector best;
  double value = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<Vector, double>> alternates;  // best personal bests after `best`, descending
  std::vector<double> trace;                          // global best after each iteration
};

/// Maximizes `objective` over the box [lo, hi] with a global-best particle
/// swarm. Up to half of the particles start at the `seeds` points (clipped
/// into the box), the rest uniformly. Particle evaluations within an
/// iteration run in parallel; the random streams are indexed by (iteration,
/// particle), so results do not depend on the worker count.
inline SwarmResult particle_swarm(const std::function<double(const Vector&)>& objective, const Vector& lo,
                                  const Vector& hi, const SamplerConfig& cfg, const std::vector<Vector>& seeds = {}) {
  cfg.check();
  const std::size_t d = lo.size();
  if (hi.size() != d || d == 0) fail(ErrorCode::DimensionMismatch, "swarm bounds disagree in size");
  for (std::size_t i = 0; i < d; ++i)
    if (!(lo[i] < hi[i])) fail(ErrorCode::InvalidArgument, "swarm bounds must satisfy lo < hi");
  const std::size_t n = cfg.particles;
  std::vector<Vector> x(n, Vector(d)), v(n, Vector(d));
  {
    Rng rng(derive_seed(cfg.seed, 0));
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t i = 0; i < d; ++i) {
        const double range = hi[i] - lo[i];
        x[p][i] = rng.uniform(lo[i], hi[i]);
        v[p][i] = cfg.max_velocity * range * rng.uniform(-1.0, 1.0);
      }
    for (std::size_t p = 0; p < std::min(seeds.size(), n / 2); ++p) {
      if (seeds[p].size() != d) fail(ErrorCode::DimensionMismatch, "swarm seed point has the wrong size");
      for (std::size_t i = 0; i < d; ++i) x[p][i] = std::clamp(seeds[p][i], lo[i], hi[i]);
    }
  }
  auto evaluate = [&](std::vector<double>& out) {
    parallel_for(n, cfg.workers, [&](std::size_t p) {
      const double f = objective(x[p]);
      out[p] = std::isnan(f) ? -std::numeric_limits<double>::infinity() : f;
    });
  };
  std::vector<double> value(n);
  evaluate(value);
  std::vector<Vector> pbest = x;
  std::vector<double> pvalue = value;
  std::size_t g = static_cast<std::size_t>(std::max_element(pvalue.begin(), pvalue.end()) - pvalue.begin());

  SwarmResult r;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Vector gbest = pbest[g];
    for (std::size_t p = 0; p < n; ++p) {
      Rng rng(derive_seed(derive_seed(cfg.seed, it + 1), p));
      for (std::size_t i = 0; i < d; ++i) {
        const double vmax = cfg.max_velocity * (hi[i] - lo[i]);
        double vi = cfg.inertia * v[p][i] + cfg.cognitive * rng.uniform() * (pbest[p][i] - x[p][i]) +
                    cfg.social * rng.uniform() * (gbest[i] - x[p][i]);
        vi = std::clamp(vi, -vmax, vmax);
        double xi = x[p][i] + vi;
        if (xi < lo[i] || xi > hi[i]) {
          xi = std::clamp(xi, lo[i], hi[i]);
          vi = 0.0;
        }
        x[p][i] = xi;
        v[p][i] = vi;
      }
    }
    evaluate(value);
    for (std::size_t p = 0; p < n; ++p) {
      if (value[p] > pvalue[p]) {
        pvalue[p] = value[p];
        pbest[p] = x[p];
      }
      if (pvalue[p] > pvalue[g]) g = p;
    }
    r.trace.push_back(pvalue[g]);
  }
  r.best = pbest[g];
  r.value = pvalue[g];
  std::vector<std::size_t> order(n);
  for (std::size_t p = 0; p < n; ++p) order[p] = p;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvalue[a] > pvalue[b]; });
  std::set<Vector> seen{r.best};
  for (std::size_t p : order) {
    if (r.alternates.size() >= cfg.alternates) break;
    if (seen.insert(pbest[p]).second) r.alternates.emplace_back(pbest[p], pvalue[p]);
  }
  return r;
}

// ---- core sampling ---------------------------------------------------------

/// One factor of the joint objective: a weighted mixture over the clusters
/// that serve one constraint.
struct Factor {
  std::string feature;
  double weight = 1.0;
  std::vector<const cluster::Cluster*> clusters;
  std::vector<double> log_shares;  // log of each cluster's share of the factor's members
  double threshold = 0.0;          // log-density floor for this factor

  double log_density(const Vector& theta) const {
    std::vector<double> terms;
    terms.reserve(clusters.size());
    for (std::size_t i = 0; i < clusters.size(); ++i)
      terms.push_back(log_shares[i] + clusters[i]->model.log_density(theta));
    return cluster::GaussianMixture::log_sum_exp(terms);
  }
};

/// Builds a factor from clusters weighted by member count. Its floor is the
/// lowest share-adjusted member percentile, which the union density can only
/// exceed at each member the cluster's own floor admits.
inline Factor make_factor(const std::string& feature, double weight, std::vector<const cluster::Cluster*> clusters) {
  Factor f{feature, weight, std::move(clusters), {}, std::numeric_limits<double>::infinity()};
  double total = 0.0;
  for (const auto* c : f.clusters) total += static_cast<double>(std::max<std::size_t>(1, c->members.size()));
  for (const auto* c : f.clusters) {
    const double share = std::log(static_cast<double>(std::max<std::size_t>(1, c->members.size())) / total);
    f.log_shares.push_back(share);
    f.threshold = std::min(f.threshold, share + c->threshold);
  }
  return f;
}

struct ConstraintReport {
  Constraint constraint;
  Vector value;                         // feature of the sampled capability
  std::vector<std::size_t> clusters;    // clusters the constraint drew on
  std::optional<Vector> target;
  double target_distance = 0.0;         // Variable only
  bool satisfied = false;
};

struct SampleResult {
  Vector theta;
  double log_density = 0.0;  // weighted joint log-density at theta
  double threshold = 0.0;    // rejection floor
  sim::Capability capability;
  std::vector<ConstraintReport> report;
  std::vector<std::pair<Vector, double>> alternates;
  std::vector<double> trace;

  bool satisfied() const {
    return std::all_of(report.begin(), report.end(), [](const auto& r) { return r.satisfied; });
  }
};

using Targets = std::map<std::string, Vector>;

/// Factors of the joint objective with Variable constraints resolved.
inline std::vector<Factor> resolve_factors(const CognitiveCore& core, const cluster::ClusterStore& store,
                                           const Targets& targets) {
  if (store.robot != core.robot || store.set_hash != core.store_hash)
    fail(ErrorCode::SchemaViolation, "core " + core.id + " was created from a different cluster store");
  for (const auto& [feature, _] : targets) {
    const bool known = std::any_of(core.behavior.constraints.begin(), core.behavior.constraints.end(), [&](const auto& c) {
      return c.feature == feature && c.kind == ConstraintKind::Variable;
    });
    if (!known) fail(ErrorCode::InvalidArgument, "core " + core.id + " has no variable constraint on " + feature);
  }
  std::vector<Factor> factors;
  for (const auto& c : core.behavior.constraints) {
    const auto& cs = store.at(c.feature);
    std::vector<const cluster::Cluster*> chosen;
    if (c.kind == ConstraintKind::MinMax) {
      for (auto j : core.links.at(c.feature)) chosen.push_back(&cs.clusters.at(j));
    } else {
      auto t = targets.find(c.feature);
      if (t == targets.end()) fail(ErrorCode::MissingTarget, "core " + core.id + " needs a target for " + c.feature);
      for (const auto& cl : cs.clusters)
        if (cc(cs, cl.index, c, t->second)) chosen.push_back(&cl);
    }
    factors.push_back(make_factor(c.feature, c.weight, std::move(chosen)));
  }
  return factors;
}

inline double joint_log_density(const std::vector<Factor>& factors, const Vector& theta) {
  double s = 0.0;
  for (const auto& f : factors) s += f.weight * f.log_density(theta);
  return s;
}

/// Samples the core: maximizes the weighted sum of factor log-densities
/// over the parameter bounds, simulates the winner and reports how the
/// resulting capability meets each constraint. Fails with NoFeasibleSample
/// when the optimum stays below the summed factor floors.
inline SampleResult sample_core(const CognitiveCore& core, const cluster::ClusterStore& store, const Targets& targets,
                                const SamplerConfig& sampler) {
  const auto factors = resolve_factors(core, store, targets);
  SampleResult out;
  out.threshold = 0.0;
  for (const auto& f : factors) out.threshold += f.weight * f.threshold;

  // Component means of the contributing mixtures are natural starting points.
  std::vector<Vector> seeds;
  for (const auto& f : factors)
    for (const auto* c : f.clusters)
      for (const auto& m : c->model.means()) seeds.emplace_back(m.data(), m.data() + m.size());
  auto swarm = particle_swarm([&](const Vector& th) { return joint_log_density(factors, th); }, store.space.lower(),
                              store.space.upper(), sampler, seeds);
  if (swarm.value < out.threshold)
    fail(ErrorCode::NoFeasibleSample, "best joint log-density " + text::format_double(swarm.value) +
                                          " is below the rejection floor " + text::format_double(out.threshold));
  out.theta = std::move(swarm.best);
  out.log_density = swarm.value;
  out.alternates = std::move(swarm.alternates);
  out.trace = std::move(swarm.trace);
  out.capability = cfm::simulate(store.space, out.theta, store.spec, store.sim);

  for (std::size_t i = 0; i < factors.size(); ++i) {
    const auto& c = core.behavior.constraints[i];
    ConstraintReport r;
    r.constraint = c;
    r.value = cluster::feature_space(c.feature).fn(store.spec, out.capability);
    for (const auto* cl : factors[i].clusters) r.clusters.push_back(cl->index);
    if (c.kind == ConstraintKind::MinMax) {
      r.satisfied = within(c, r.value);
    } else {
      r.target = targets.at(c.feature);
      r.target_distance = cluster::distance(r.value, *r.target);
      r.satisfied = store.at(c.feature).nearest_center(r.value) == r.clusters.front();
    }
    out.report.push_back(std::move(r));
  }
  return out;
}

inline SampleResult sample_core(const CognitiveCore& core, const cluster::ClusterStore& store, const Targets& targets) {
  return sample_core(core, store, targets, core.sampler);
}

// ---- parallel execution on a combined system -------------------------------

struct CoreRun {
  const CognitiveCore* core;
  const cluster::ClusterStore* store;
  Targets targets;
};

struct ParallelResult {
  std::vector<SampleResult> parts;
  cfm::ParameterSpace space;  // parameter space of the combined system
  Vector theta;               // merged parameters
  sim::SimConfig sim;
  sim::Capability capability;
};

/// Samples each subsystem core independently, merges the commands by joint
/// name and simulates the combined system once. Each joint follows its own
/// core's phase clock; the run lasts as long as the longest horizon.
inline ParallelResult execute_parallel(const std::vector<CoreRun>& runs, const sim::RobotSpec& combined,
                                       std::uint64_t seed) {
  if (runs.empty()) fail(ErrorCode::InvalidArgument, "parallel execution needs at least one core");
  ParallelResult out;
  out.space = cfm::ParameterSpace::for_robot(combined);
  out.theta.assign(out.space.dimension(), 0.0);
  std::vector<double> horizon(combined.dof(), 0.0);
  std::vector<std::optional<std::size_t>> owner(combined.dof());
  out.sim = runs.front().store->sim;

  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& store = *runs[r].store;
    if (store.sim.dt != out.sim.dt) fail(ErrorCode::InvalidConfig, "subsystem cores use different time steps");
    out.sim.horizon = std::max(out.sim.horizon, store.sim.horizon);
    for (std::size_t j = 0; j < store.spec.dof(); ++j) {
      const auto& name = store.spec.joints()[j].name;
      const auto k = combined.joint_index(name);
      if (!k) fail(ErrorCode::DimensionMismatch, "combined system has no joint named " + name);
      if (owner[*k])
        fail(ErrorCode::OverlappingActuators,
             "joint " + name + " is driven by both " + runs[*owner[*k]].core->id + " and " + runs[r].core->id);
      if (store.space.slice(store.space.lower(), j).size() != out.space.slice(out.space.lower(), *k).size())
        fail(ErrorCode::DimensionMismatch, "joint " + name + " has a different parameter count in the combined system");
      owner[*k] = r;
    }
  }

  for (std::size_t r = 0; r < runs.size(); ++r) {
    auto sampler = runs[r].core->sampler;
    sampler.seed = derive_seed(seed, r);
    out.parts.push_back(sample_core(*runs[r].core, *runs[r].store, runs[r].targets, sampler));
    const auto& store = *runs[r].store;
    for (std::size_t j = 0; j < store.spec.dof(); ++j) {
      const std::size_t k = *combined.joint_index(store.spec.joints()[j].name);
      const auto src = store.space.slice(out.parts.back().theta, j);
      std::copy(src.begin(), src.end(), out.theta.begin() + static_cast<std::ptrdiff_t>(out.space.offset(k)));
      horizon[k] = store.sim.horizon;
    }
  }
  for (auto& h : horizon)
    if (h == 0.0) h = out.sim.horizon;  // undriven joints hold their start position

  const double dt = out.sim.dt;
  sim::CapabilityFunction fn = [space = out.space, theta = out.theta, horizon, dt](const sim::RobotState&, double t) {
    sim::Action action;
    action.kinematic.dt = dt;
    for (std::size_t j = 0; j < space.joint_count(); ++j)
      action.kinematic.command.push_back(cfm::eval_poly(space.slice(theta, j), std::clamp((t + dt) / horizon[j], 0.0, 1.0)));
    return action;
  };
  out.capability = sim::execute(combined, out.sim, fn, cfm::initial_state(out.space, out.theta, combined));
  out.capability.theta = out.theta;
  return out;
}

// ---- persistence -------------------------------------------------------------

inline constexpr std::string_view kCoreFormat = "qrock-core";

inline std::string core_to_text(const CognitiveCore& core) {
  text::Record r;
  std::string labels;
  for (const auto& l : core.annotation.labels) labels += (labels.empty() ? "" : ",") + l;
  r.set("format", std::string(kCoreFormat))
      .set("id", core.id)
      .set("version", std::to_string(core.version))
      .set("robot", core.robot)
      .set("store_hash", core.store_hash)
      .set("behavior", core.behavior.label)
      .set("labels", labels);
  for (std::size_t i = 0; i < core.behavior.constraints.size(); ++i)
    r.set("constraint." + std::to_string(i), core.behavior.constraints[i].to_text());
  for (std::size_t i = 0; i < core.annotation.constraints.size(); ++i)
    r.set("annotation_constraint." + std::to_string(i), core.annotation.constraints[i].to_text());
  for (const auto& [feature, idx] : core.links)
    r.set("links." + feature, text::join_numbers(Vector(idx.begin(), idx.end())));
  const auto& s = core.sampler;
  r.set("sampler.particles", std::to_string(s.particles))
      .set("sampler.iterations", std::to_string(s.iterations))
      .set("sampler.inertia", text::format_double(s.inertia))
      .set("sampler.cognitive", text::format_double(s.cognitive))
      .set("sampler.social", text::format_double(s.social))
      .set("sampler.max_velocity", text::format_double(s.max_velocity))
      .set("sampler.alternates", std::to_string(s.alternates))
      .set("sampler.seed", std::to_string(s.seed));
  return r.to_text();
}

inline CognitiveCore core_from_text(std::string_view doc) {
  const auto r = text::Record::parse(doc);
  if (r.get_or("format", "") != kCoreFormat) fail(ErrorCode::SchemaViolation, "not a cognitive core document");
  CognitiveCore core;
  core.id = r.get("id");
  core.version = r.integer("version");
  core.robot = r.get("robot");
  core.store_hash = r.get("store_hash");
  core.behavior.label = r.get("behavior");
  for (auto l : text::split(r.get("labels"), ','))
    if (!l.empty()) core.annotation.labels.emplace(l);
  for (std::size_t i = 0; r.has("constraint." + std::to_string(i)); ++i)
    core.behavior.constraints.push_back(Constraint::from_text(r.get("constraint." + std::to_string(i))));
  for (std::size_t i = 0; r.has("annotation_constraint." + std::to_string(i)); ++i)
    core.annotation.constraints.push_back(Constraint::from_text(r.get("annotation_constraint." + std::to_string(i))));
  for (const auto& [key, value] : r.entries()) {
    if (!key.starts_with("links.")) continue;
    auto& idx = core.links[key.substr(6)];
    for (double v : text::parse_vector(value)) idx.push_back(static_cast<std::size_t>(v));
  }
  auto& s = core.sampler;
  s.particles = r.integer("sampler.particles");
  s.iterations = r.integer("sampler.iterations");
  s.inertia = r.number("sampler.inertia");
  s.cognitive = r.number("sampler.cognitive");
  s.social = r.number("sampler.social");
  s.max_velocity = r.number("sampler.max_velocity");
  s.alternates = r.integer("sampler.alternates");
  s.seed = r.integer("sampler.seed");
  core.behavior.check();
  core.annotation.check();
  s.check();
  return core;
}

}  // namespace qrock::cores
