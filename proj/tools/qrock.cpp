// qrock: command-line front end over a file-based project.
//
// Exit status: 0 success, 1 domain error, 2 usage error. Failures print one
// JSON error record {"code", "module", "message"} on stderr; results print as
// JSON on stdout.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>

#include "qrock/cluster.hpp"
#include "qrock/cores.hpp"
#include "qrock/explore.hpp"
#include "qrock/fixtures.hpp"
#include "qrock/graphstore.hpp"
#include "qrock/project.hpp"
#include "qrock/reason.hpp"
#include "qrock/rng.hpp"
#include "qrock/simkin.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace qrock;
using project::Project;
using project::RunManifest;
namespace fs = std::filesystem;

[[noreturn]] void usage(const std::string& msg) { fail(ErrorCode::UsageError, msg); }

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

json vec3(const sim::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// "end=0.1,0.3,0.2"
std::pair<std::string, std::vector<double>> parse_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) usage("expected <feature>=<v1,v2,...>, got '" + s + "'");
  try {
    auto v = text::parse_vector(s.substr(eq + 1));
    if (v.empty()) usage("no values in '" + s + "'");
    return {s.substr(0, eq), std::move(v)};
  } catch (const Error&) {
    usage("bad numbers in '" + s + "'");
  }
}

cores::Targets parse_targets(const std::vector<std::string>& items) {
  cores::Targets t;
  for (const auto& item : items) {
    auto [feature, v] = parse_assignment(item);
    if (!t.emplace(feature, std::move(v)).second) usage("target for " + feature + " given twice");
  }
  return t;
}

json target_json(const cores::Targets& t) {
  json j = json::object();
  for (const auto& [f, v] : t) j[f] = v;
  return j;
}

std::string targets_text(const cores::Targets& t) {
  std::string out;
  for (const auto& [f, v] : t) out += (out.empty() ? "" : " ") + f + "=" + text::join_numbers(v);
  return out;
}

// ---- shared loaders ----------------------------------------------------

sim::RobotSpec load_robot(const Project& p, const std::string& id, RunManifest& m) {
  const auto path = p.require(p.robot_path(id), "robot " + id);
  m.input(p, path);
  return sim::robot_spec_from_text(text::read_file(path));
}

/// The cluster store a core was created from: the named one, or the first
/// store under clusters/ whose robot and set hash match the core.
cluster::ClusterStore store_for(const Project& p, const cores::CognitiveCore& core, const std::string& name,
                                RunManifest& m) {
  fs::path dir;
  if (!name.empty()) {
    dir = p.require(p.cluster_dir(name), "cluster store " + name);
  } else if (fs::exists(p.root() / "clusters")) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(p.root() / "clusters"))
      if (fs::exists(e.path() / "store.txt")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      const auto r = text::Record::parse(text::read_file(d / "store.txt"));
      if (r.get_or("robot", "") == core.robot && r.get_or("set_hash", "") == core.store_hash) {
        dir = d;
        break;
      }
    }
  }
  if (dir.empty()) fail(ErrorCode::NotFound, "no cluster store matches core " + core.id);
  m.input(p, dir);
  return cluster::load_store(dir);
}

std::string kind_name(cores::ConstraintKind k) { return k == cores::ConstraintKind::MinMax ? "minmax" : "variable"; }

json sample_json(const cores::SampleResult& r, const std::string& core_id) {
  json report = json::array();
  for (const auto& c : r.report) {
    json j{{"feature", c.constraint.feature}, {"kind", kind_name(c.constraint.kind)}, {"value", c.value},
           {"clusters", c.clusters}, {"satisfied", c.satisfied}};
    if (c.constraint.kind == cores::ConstraintKind::MinMax) j["range"] = {c.constraint.lo, c.constraint.hi};
    if (c.target) {
      j["target"] = *c.target;
      j["target_distance"] = c.target_distance;
    }
    report.push_back(std::move(j));
  }
  return {{"core", core_id},
          {"theta", r.theta},
          {"log_density", r.log_density},
          {"threshold", r.threshold},
          {"satisfied", r.satisfied()},
          {"end_effector", vec3(r.capability.states.back().observation.end_effector)},
          {"report", std::move(report)}};
}

void write_output(const Project& p, RunManifest& m, const fs::path& path, const std::string& content) {
  text::write_file(path, content);
  m.output(p, path);
}

// ---- commands ----------------------------------------------------------

struct Options {
  std::string project;
  // assemble
  std::string fixture, name;
  // explore
  std::string robot, out;
  std::size_t samples = 10000, workers = 1, trajectories = 0;
  std::size_t report_samples = 20;
  std::optional<double> horizon, dt;
  std::uint64_t seed = 0;
  // train-validator
  std::string set;
  double split = 0.8;
  std::size_t epochs = 30;
  // cluster
  std::vector<std::string> features{"start", "end", "dir"};
  std::vector<std::size_t> ks{50, 50, 5};
  bool include_infeasible = false;
  // cores
  std::string bm, clusters, core_id, plot_out, baseline;
  std::vector<std::string> core_ids, targets, add_labels, remove_labels;
  bool strict = false;
  std::size_t particles = 64, iterations = 200;
  // reasoning
  std::vector<std::string> labels, ranges;
  bool exact = false;
  std::string mission_file;
};

cores::SamplerConfig sampler_from(const cores::CognitiveCore& core, const Options& o) {
  cores::SamplerConfig s = core.sampler;
  s.seed = o.seed;
  s.particles = o.particles;
  s.iterations = o.iterations;
  s.workers = o.workers;
  return s;
}

void cmd_init(const Project& p) {
  RunManifest m("init");
  Project::init(p.root());
  m.output(p, p.marker()).output(p, p.ontology_path()).output(p, p.vocabulary_path());
  m.write(p);
  emit({{"project", fs::absolute(p.root()).string()}});
}

void cmd_assemble(const Project& p, const Options& o) {
  RunManifest m("assemble");
  m.config("fixture", o.fixture).input(p, p.graph_path());
  auto g = graph::load(p.graph_path());
  graph::VertexId assembly;
  if (o.fixture == "arm")
    assembly = fixtures::build_arm(g, o.name.empty() ? "NewShoppingCart" : o.name);
  else if (o.fixture == "base")
    assembly = fixtures::build_base(g, o.name.empty() ? "MobileBase" : o.name);
  else
    assembly = fixtures::build_arm_on_base(g, o.name.empty() ? "ArmOnBase" : o.name);
  const auto spec = sim::robot_from_assembly(g, assembly);
  graph::save(g, p.graph_path());
  write_output(p, m, p.robot_path(spec.name()), to_text(spec));
  m.output(p, p.graph_path()).write(p);
  json joints = json::array();
  for (const auto& j : spec.joints()) joints.push_back(j.name);
  emit({{"robot", spec.name()},
        {"joints", joints},
        {"reach", spec.reach()},
        {"parameters", cfm::ParameterSpace::for_robot(spec).dimension()}});
}

void cmd_explore(const Project& p, const Options& o) {
  RunManifest m("explore");
  const auto spec = load_robot(p, o.robot, m);
  explore::ExplorationConfig cfg;
  cfg.samples = o.samples;
  cfg.seed = o.seed;
  cfg.workers = o.workers;
  cfg.space = cfm::ParameterSpace::for_robot(spec);
  // Wheeled systems move slowly; give them a longer horizon by default.
  cfg.sim.horizon = o.horizon.value_or(spec.base() ? 20.0 : 4.0);
  if (o.dt) cfg.sim.dt = *o.dt;
  m.config("samples", std::to_string(cfg.samples))
      .config("seed", std::to_string(cfg.seed))
      .config("horizon", text::format_double(cfg.sim.horizon))
      .config("dt", text::format_double(cfg.sim.dt));
  const auto set = explore::explore(spec, cfg);
  const std::string name = o.out.empty() ? o.robot : o.out;
  const auto dir = p.set_dir(name);
  fs::remove_all(dir);
  explore::save_set(set, dir, o.trajectories);
  m.output(p, dir).write(p);
  emit({{"set", name}, {"robot", set.robot()}, {"samples", set.size()}, {"feasible", set.feasible_count()}});
}

void cmd_train_validator(const Project& p, const Options& o) {
  RunManifest m("train-validator");
  const auto dir = p.require(p.set_dir(o.set), "capability set " + o.set);
  m.input(p, dir);
  const auto set = explore::load_set(dir);
  explore::TrainingConfig cfg;
  cfg.split = o.split;
  cfg.seed = o.seed;
  cfg.epochs = o.epochs;
  m.config("split", text::format_double(cfg.split))
      .config("seed", std::to_string(cfg.seed))
      .config("epochs", std::to_string(cfg.epochs));
  const auto model = explore::train_validator(set, cfg);
  write_output(p, m, p.validator_path(o.set), explore::validator_to_text(model));
  m.write(p);
  emit({{"set", o.set},
        {"heldout", model.heldout.size()},
        {"heldout_accuracy", model.heldout_accuracy()},
        {"parameters", model.net.parameter_count()}});
}

void cmd_cluster(const Project& p, const Options& o) {
  RunManifest m("cluster");
  if (o.features.size() != o.ks.size()) usage("--features and --k need the same number of entries");
  const auto dir = p.require(p.set_dir(o.set), "capability set " + o.set);
  m.input(p, dir);
  const auto set = explore::load_set(dir);
  cluster::ClusterConfig cfg;
  cfg.requests.clear();
  for (std::size_t i = 0; i < o.features.size(); ++i) cfg.requests.push_back({o.features[i], o.ks[i]});
  cfg.seed = o.seed;
  cfg.workers = o.workers;
  cfg.include_infeasible = o.include_infeasible;
  std::string k_text;
  for (const auto& r : cfg.requests) k_text += (k_text.empty() ? "" : ",") + r.feature + ":" + std::to_string(r.k);
  m.config("k", k_text).config("seed", std::to_string(cfg.seed));
  const auto store = cluster::cluster_set(set, cfg);
  const std::string name = o.out.empty() ? o.set : o.out;
  const auto out = p.cluster_dir(name);
  fs::remove_all(out);
  cluster::save_store(store, out);
  m.output(p, out).write(p);

  json spaces = json::array();
  for (const auto& cs : store.spaces) {
    json clusters = json::array();
    for (const auto& c : cs.clusters)
      clusters.push_back({{"index", c.index}, {"members", c.members.size()}, {"centroid", c.centroid}});
    spaces.push_back({{"feature", cs.feature}, {"k", cs.k}, {"clusters", clusters}});
  }
  emit({{"store", name}, {"robot", store.robot}, {"spaces", spaces}});
}

void cmd_core_create(const Project& p, const Options& o) {
  RunManifest m("core create");
  cores::BehaviorModel bm;
  if (auto builtin = cores::builtin_model(o.bm)) {
    bm = *builtin;
  } else if (fs::exists(p.resolve(o.bm))) {
    m.input(p, p.resolve(o.bm));
    bm = cores::BehaviorModel::from_text(text::read_file(p.resolve(o.bm)));
  } else {
    usage("--bm must name a built-in model (reach, reach-any) or a behavior model file");
  }
  const std::string store_name = o.clusters.empty() ? o.robot : o.clusters;
  const auto dir = p.require(p.cluster_dir(store_name), "cluster store " + store_name);
  m.input(p, dir);
  const auto store = cluster::load_store(dir);
  if (store.robot != o.robot) fail(ErrorCode::SchemaViolation, "cluster store " + store_name + " belongs to " + store.robot);
  cores::SamplerConfig sampler;
  sampler.particles = o.particles;
  sampler.iterations = o.iterations;
  const auto core = cores::create_core(store, bm, sampler, o.core_id);

  // A new behavior label becomes a direct child of the ontology root.
  auto onto = p.ontology();
  if (!onto.has(bm.label)) {
    onto.add(bm.label, onto.root());
    write_output(p, m, p.ontology_path(), onto.to_text());
  }
  write_output(p, m, p.core_path(core.id), cores::core_to_text(core));
  m.write(p);
  json links = json::object();
  for (const auto& [f, idx] : core.links) links[f] = idx;
  emit({{"core", core.id}, {"robot", core.robot}, {"behavior", bm.label}, {"links", links}});
}

void cmd_core_sample(const Project& p, const Options& o) {
  RunManifest m("core sample");
  const auto core = p.core(o.core_id);
  m.input(p, p.core_path(o.core_id));
  const auto store = store_for(p, core, o.clusters, m);
  const auto targets = parse_targets(o.targets);
  const auto sampler = sampler_from(core, o);
  m.config("seed", std::to_string(sampler.seed)).config("targets", targets_text(targets));
  const auto r = cores::sample_core(core, store, targets, sampler);
  json out = sample_json(r, core.id);
  if (!o.plot_out.empty()) {
    const auto path = p.resolve(o.plot_out);
    std::vector<std::pair<std::string, std::string>> comments{
        {"core", core.id}, {"seed", std::to_string(sampler.seed)}, {"theta", text::join_numbers(r.theta)}};
    for (const auto& [f, v] : targets) comments.emplace_back("target." + f, text::join_numbers(v));
    write_output(p, m, path, sim::export_table(store.spec, r.capability, comments));
    out["plot"] = path.string();
  }
  m.write(p);
  emit(out);
}

void cmd_core_annotate(const Project& p, const Options& o) {
  RunManifest m("core annotate");
  const auto core = p.core(o.core_id);
  m.input(p, p.core_path(o.core_id)).input(p, p.ontology_path());
  auto onto = p.ontology();
  const auto before = onto;
  const auto next = cores::annotate_core(core, o.add_labels, onto, o.strict, o.remove_labels);
  if (!(onto == before)) write_output(p, m, p.ontology_path(), onto.to_text());
  if (!(next == core)) write_output(p, m, p.core_path(core.id), cores::core_to_text(next));
  m.write(p);
  emit({{"core", next.id}, {"version", next.version}, {"labels", next.annotation.labels}});
}

struct ParallelRun {
  std::vector<cores::CognitiveCore> cores;
  std::vector<cluster::ClusterStore> stores;
  sim::RobotSpec combined;
  cores::ParallelResult result;
};

// Targets are given per core as "<core-id>:<feature>=<values>".
ParallelRun run_parallel(const Project& p, const Options& o, RunManifest& m) {
  if (o.core_ids.empty()) usage("at least one --core is required");
  ParallelRun run;
  run.combined = load_robot(p, o.robot, m);
  for (const auto& id : o.core_ids) {
    run.cores.push_back(p.core(id));
    m.input(p, p.core_path(id));
  }
  for (const auto& c : run.cores) run.stores.push_back(store_for(p, c, "", m));
  std::vector<cores::Targets> targets(run.cores.size());
  for (const auto& t : o.targets) {
    const auto colon = t.find(':');
    if (colon == std::string::npos) usage("parallel targets take the form <core-id>:<feature>=<values>");
    const auto id = t.substr(0, colon);
    const auto it = std::find(o.core_ids.begin(), o.core_ids.end(), id);
    if (it == o.core_ids.end()) usage("target names core " + id + ", which is not among --core");
    auto [feature, v] = parse_assignment(t.substr(colon + 1));
    targets[static_cast<std::size_t>(it - o.core_ids.begin())][feature] = std::move(v);
  }
  std::vector<cores::CoreRun> runs;
  for (std::size_t i = 0; i < run.cores.size(); ++i) runs.push_back({&run.cores[i], &run.stores[i], targets[i]});
  m.config("seed", std::to_string(o.seed));
  run.result = cores::execute_parallel(runs, run.combined, o.seed);
  return run;
}

/// End-effector path expected if each subsystem moved as in isolation: the
/// arm's path carried along by the base's pose. Empty unless exactly one part
/// is a wheeled base and one part carries an end effector.
std::vector<sim::Vec3> superposed_path(const ParallelRun& run) {
  std::optional<std::size_t> base_part, arm_part;
  for (std::size_t i = 0; i < run.stores.size(); ++i) {
    if (run.stores[i].spec.base()) base_part = base_part ? std::optional<std::size_t>{} : i;
    if (!run.stores[i].spec.end_effector().empty()) arm_part = i;
  }
  if (!base_part || !arm_part || base_part == arm_part) return {};
  const auto& base = run.result.parts[*base_part].capability.states;
  const auto& arm = run.result.parts[*arm_part].capability.states;
  std::vector<sim::Vec3> out;
  for (std::size_t k = 0; k < run.result.capability.size(); ++k) {
    const auto& pose = base[std::min(k, base.size() - 1)].observation.base;
    const auto& ee = arm[std::min(k, arm.size() - 1)].observation.end_effector;
    out.push_back(sim::apply_base_pose(pose, ee));
  }
  return out;
}

void cmd_core_parallel(const Project& p, const Options& o) {
  RunManifest m("core parallel");
  const auto run = run_parallel(p, o, m);
  json parts = json::array();
  for (std::size_t i = 0; i < run.cores.size(); ++i)
    parts.push_back(sample_json(run.result.parts[i], run.cores[i].id));
  json out{{"robot", run.combined.name()},
           {"theta", run.result.theta},
           {"end_effector", vec3(run.result.capability.states.back().observation.end_effector)},
           {"parts", parts}};
  if (!o.plot_out.empty()) {
    const auto path = p.resolve(o.plot_out);
    write_output(p, m, path,
                 sim::export_table(run.combined, run.result.capability,
                                   {{"robot", run.combined.name()}, {"theta", text::join_numbers(run.result.theta)}}));
    out["plot"] = path.string();
  }
  m.write(p);
  emit(out);
}

void cmd_solve_task(const Project& p, const Options& o) {
  RunManifest m("solve-task");
  m.input(p, p.ontology_path());
  const auto onto = p.ontology();
  reason::AnnotatedTask task{"query", {}};
  for (const auto& l : o.labels) task.annotation.labels.insert(l);
  for (const auto& r : o.ranges) {
    auto [feature, v] = parse_assignment(r);
    if (v.size() != 2) usage("--range takes <feature>=<lo>,<hi>");
    task.annotation.constraints.push_back(cores::Constraint::min_max(feature, v[0], v[1]));
  }
  task.annotation.check();
  const auto all = p.all_cores();
  const auto matches = reason::match_cores(task, all, onto, o.exact);
  m.config("labels", [&] {
    std::string s;
    for (const auto& l : o.labels) s += (s.empty() ? "" : ",") + l;
    return s;
  }());
  m.write(p);
  if (matches.empty()) {
    std::string labels;
    for (const auto& l : task.annotation.labels) labels += (labels.empty() ? "" : ",") + l;
    fail(ErrorCode::NoCapableRobot, "no cognitive core matches labels " + labels);
  }
  json list = json::array();
  for (const auto* c : matches) list.push_back({{"core", c->id}, {"robot", c->robot}, {"labels", c->annotation.labels}});
  emit({{"matches", list}});
}

void cmd_mission_solve(const Project& p, const Options& o) {
  RunManifest m("mission solve");
  const auto file = p.require(p.resolve(o.mission_file), "mission file");
  m.input(p, file).input(p, p.ontology_path()).input(p, p.vocabulary_path());
  const auto mission = reason::mission_from_text(text::read_file(file));
  m.write(p);
  const auto s = reason::solve_mission(mission, p.vocabulary(), p.all_cores(), p.ontology(), o.exact);
  json tasks = json::array();
  for (std::size_t i = 0; i < s.tasks.size(); ++i) tasks.push_back({{"task", s.tasks[i]}, {"core", s.cores[i]}});
  emit({{"robot", s.robot}, {"decomposition", s.decomposition}, {"tasks", tasks}});
}

// Plot data for sampled reach behaviors: end-effector paths of N seeded
// samples from a core and an optional baseline core, plus the target.
void cmd_report_reach(const Project& p, const Options& o) {
  RunManifest m("report reach");
  std::vector<cores::CognitiveCore> series{p.core(o.core_id)};
  m.input(p, p.core_path(o.core_id));
  if (!o.baseline.empty()) {
    series.push_back(p.core(o.baseline));
    m.input(p, p.core_path(o.baseline));
  }
  const auto targets = parse_targets(o.targets);
  m.config("seed", std::to_string(o.seed)).config("samples", std::to_string(o.report_samples)).config("targets", targets_text(targets));
  const auto out = p.resolve(o.out.empty() ? fs::path("plots") / ("reach-" + o.core_id) : fs::path(o.out));
  fs::remove_all(out);

  std::string paths, summary = "series\tsample\tdistance\tdirectness\tlog_density\tsatisfied\n";
  for (std::size_t s = 0; s < series.size(); ++s) paths += "# series." + std::to_string(s) + "\t" + series[s].id + "\n";
  paths += "series\tsample\tt\tee_x\tee_y\tee_z\n";
  json stats = json::array();
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& core = series[s];
    const auto store = store_for(p, core, "", m);
    std::vector<double> distances, dirs;
    std::size_t rejected = 0;
    for (std::size_t i = 0; i < o.report_samples; ++i) {
      auto sampler = sampler_from(core, o);
      sampler.seed = derive_seed(o.seed, i);
      cores::SampleResult r;
      try {
        r = cores::sample_core(core, store, targets, sampler);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoFeasibleSample) throw;
        ++rejected;
        continue;
      }
      const auto& cap = r.capability;
      for (std::size_t k = 0; k < cap.size(); ++k) {
        const auto& ee = cap.states[k].observation.end_effector;
        paths += text::join_numbers({double(s), double(i), cap.times[k], ee.x(), ee.y(), ee.z()}, '\t') + "\n";
      }
      const double dir = cluster::feature_directness(store.spec, cap)[0];
      const auto it = targets.find("end");
      const double dist = it == targets.end() ? std::nan("")
                                              : cluster::distance(cluster::feature_end(store.spec, cap), it->second);
      distances.push_back(dist);
      dirs.push_back(dir);
      summary += text::join_numbers({double(s), double(i), dist, dir, r.log_density, r.satisfied() ? 1.0 : 0.0}, '\t') +
                 "\n";
    }
    stats.push_back({{"core", core.id},
                     {"accepted", distances.size()},
                     {"rejected", rejected},
                     {"median_distance", median(distances)},
                     {"median_directness", median(dirs)}});
  }
  write_output(p, m, out / "paths.tsv", paths);
  write_output(p, m, out / "summary.tsv", summary);
  std::string target_table = "feature\tx\ty\tz\n";
  for (const auto& [f, v] : targets)
    if (v.size() == 3) target_table += "# " + f + "\n" + text::join_numbers(v, '\t') + "\n";
  write_output(p, m, out / "targets.tsv", target_table);
  m.write(p);
  emit({{"out", out.string()}, {"targets", target_json(targets)}, {"series", stats}});
}

// Plot data for parallel execution: each subsystem in isolation, the
// superposed expectation and the combined run.
void cmd_report_parallel(const Project& p, const Options& o) {
  RunManifest m("report parallel");
  const auto run = run_parallel(p, o, m);
  const auto out = p.resolve(o.out.empty() ? fs::path("plots") / ("parallel-" + o.robot) : fs::path(o.out));
  fs::remove_all(out);
  const auto expected = superposed_path(run);

  std::string paths;
  const std::size_t n = run.cores.size();
  for (std::size_t i = 0; i < n; ++i) paths += "# series." + std::to_string(i) + "\t" + run.cores[i].id + " (isolated)\n";
  if (!expected.empty()) paths += "# series." + std::to_string(n) + "\texpected\n";
  paths += "# series." + std::to_string(n + 1) + "\tcombined\n";
  paths += "series\tt\tee_x\tee_y\tee_z\tbase_x\tbase_y\tbase_theta\n";
  auto row = [&](double series, double t, const sim::Vec3& ee, const sim::BasePose& b) {
    paths += text::join_numbers({series, t, ee.x(), ee.y(), ee.z(), b.x, b.y, b.theta}, '\t') + "\n";
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cap = run.result.parts[i].capability;
    for (std::size_t k = 0; k < cap.size(); ++k)
      row(double(i), cap.times[k], cap.states[k].observation.end_effector, cap.states[k].observation.base);
  }
  const auto& cap = run.result.capability;
  double deviation = 0.0;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    row(double(n), cap.times[k], expected[k], cap.states[k].observation.base);
    deviation = std::max(deviation, (expected[k] - cap.states[k].observation.end_effector).norm());
  }
  for (std::size_t k = 0; k < cap.size(); ++k)
    row(double(n + 1), cap.times[k], cap.states[k].observation.end_effector, cap.states[k].observation.base);
  write_output(p, m, out / "paths.tsv", paths);
  m.write(p);
  json result{{"out", out.string()},
              {"robot", run.combined.name()},
              {"end_effector", vec3(cap.states.back().observation.end_effector)}};
  if (!expected.empty()) result["max_superposition_deviation"] = deviation;
  emit(result);
}

fs::path project_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(project::kProjectEnv); env && *env) return env;
  return fs::current_path();
}

int error_record(std::string_view code, std::string_view module, const std::string& message, int status) {
  std::cerr << json{{"code", code}, {"module", module}, {"message", message}}.dump() << "\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qrock: compose robots, explore and cluster their capabilities, ground cognitive cores and match tasks"};
  app.require_subcommand(1);
  Options o;
  app.add_option("-C,--project", o.project, "Project root (default: $QROCK_PROJECT, then the working directory)");

  auto* init = app.add_subcommand("init", "Create an empty project with the default ontology and vocabulary");

  auto* assemble = app.add_subcommand("assemble", "Build a reference assembly into the graph and derive its robot");
  assemble->add_option("--fixture", o.fixture, "Reference assembly")
      ->required()
      ->check(CLI::IsMember({"arm", "base", "arm-on-base"}));
  assemble->add_option("--name", o.name, "Assembly name (defaults: NewShoppingCart, MobileBase, ArmOnBase)");

  auto* explore = app.add_subcommand("explore", "Sample and simulate capabilities of a robot");
  explore->add_option("--robot", o.robot, "Robot id")->required();
  explore->add_option("--samples", o.samples, "Number of capabilities")->capture_default_str();
  explore->add_option("--seed", o.seed, "Random seed")->required();
  explore->add_option("--out", o.out, "Set name (default: the robot id)");
  explore->add_option("--workers", o.workers, "Worker threads")->capture_default_str();
  explore->add_option("--trajectories", o.trajectories, "Export the first N trajectories as tables");
  explore->add_option("--horizon", o.horizon, "Capability length in seconds (default 4, 20 for wheeled robots)");
  explore->add_option("--dt", o.dt, "Simulation step in seconds (default 0.02)");

  auto* train = app.add_subcommand("train-validator", "Train the feasibility validation network on a set");
  train->add_option("--set", o.set, "Capability set name")->required();
  train->add_option("--split", o.split, "Training fraction")->capture_default_str();
  train->add_option("--seed", o.seed, "Random seed")->required();
  train->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();

  auto* clus = app.add_subcommand("cluster", "Cluster a capability set in feature spaces");
  clus->add_option("--set", o.set, "Capability set name")->required();
  clus->add_option("--features", o.features, "Feature spaces")->delimiter(',')->capture_default_str();
  clus->add_option("--k", o.ks, "Clusters per feature space")->delimiter(',')->capture_default_str();
  clus->add_option("--seed", o.seed, "Random seed")->required();
  clus->add_option("--out", o.out, "Store name (default: the set name)");
  clus->add_option("--workers", o.workers, "Worker threads")->capture_default_str();
  clus->add_flag("--include-infeasible", o.include_infeasible, "Cluster infeasible capabilities too");

  auto* core = app.add_subcommand("core", "Create, sample, annotate and combine cognitive cores");
  core->require_subcommand(1);
  auto* create = core->add_subcommand("create", "Ground a behavior model on a robot's clusters");
  create->add_option("--robot", o.robot, "Robot id")->required();
  create->add_option("--bm", o.bm, "Built-in behavior model (reach, reach-any) or a model file")->required();
  create->add_option("--clusters", o.clusters, "Cluster store name (default: the robot id)");
  create->add_option("--id", o.core_id, "Core id (default: <robot>.<label>)");
  create->add_option("--particles", o.particles, "Swarm size stored with the core")->capture_default_str();
  create->add_option("--iterations", o.iterations, "Swarm iterations stored with the core")->capture_default_str();

  auto* sample = core->add_subcommand("sample", "Sample a capability from a core");
  sample->add_option("--core", o.core_id, "Core id")->required();
  sample->add_option("--target", o.targets, "Target for a variable constraint, <feature>=<values>");
  sample->add_option("--seed", o.seed, "Random seed")->required();
  sample->add_option("--plot-out", o.plot_out, "Write the trajectory table here");
  sample->add_option("--clusters", o.clusters, "Cluster store name (default: the store the core was built from)");
  sample->add_option("--particles", o.particles, "Swarm size")->capture_default_str();
  sample->add_option("--iterations", o.iterations, "Swarm iterations")->capture_default_str();
  sample->add_option("--workers", o.workers, "Worker threads")->capture_default_str();

  auto* annotate = core->add_subcommand("annotate", "Add or remove semantic labels on a core");
  annotate->add_option("--core", o.core_id, "Core id")->required();
  annotate->add_option("--add-label", o.add_labels, "Label to add");
  annotate->add_option("--remove-label", o.remove_labels, "Label to remove");
  annotate->add_flag("--strict", o.strict, "Reject labels that are not in the ontology");

  auto* parallel = core->add_subcommand("parallel", "Run subsystem cores together on a combined robot");
  parallel->add_option("--core", o.core_ids, "Core id, once per subsystem")->required();
  parallel->add_option("--robot", o.robot, "Combined robot id")->required();
  parallel->add_option("--target", o.targets, "Per-core target, <core-id>:<feature>=<values>");
  parallel->add_option("--seed", o.seed, "Random seed")->required();
  parallel->add_option("--plot-out", o.plot_out, "Write the combined trajectory table here");

  auto* solve_task = app.add_subcommand("solve-task", "Find cognitive cores whose annotation matches the labels");
  solve_task->add_option("--labels", o.labels, "Task labels")->delimiter(',')->required();
  solve_task->add_option("--range", o.ranges, "Feature range constraint, <feature>=<lo>,<hi>");
  solve_task->add_flag("--exact", o.exact, "Match labels exactly instead of by subsumption");

  auto* mission = app.add_subcommand("mission", "Mission planning");
  mission->require_subcommand(1);
  auto* solve = mission->add_subcommand("solve", "Find one robot that covers a mission");
  solve->add_option("file", o.mission_file, "Mission document, one task per line")->required();
  solve->add_flag("--exact", o.exact, "Match labels exactly instead of by subsumption");

  auto* report = app.add_subcommand("report", "Export plot-data tables");
  report->require_subcommand(1);
  auto* reach = report->add_subcommand("reach", "End-effector paths of seeded core samples and their targets");
  reach->add_option("--core", o.core_id, "Core id")->required();
  reach->add_option("--baseline", o.baseline, "Core to compare against");
  reach->add_option("--target", o.targets, "Target, <feature>=<values>");
  reach->add_option("--samples", o.report_samples, "Samples per core")->capture_default_str();
  reach->add_option("--seed", o.seed, "Random seed")->required();
  reach->add_option("--out", o.out, "Output directory (default: plots/reach-<core>)");
  reach->add_option("--particles", o.particles, "Swarm size")->capture_default_str();
  reach->add_option("--iterations", o.iterations, "Swarm iterations")->capture_default_str();
  auto* rpar = report->add_subcommand("parallel", "Isolated, superposed and combined paths of a parallel run");
  rpar->add_option("--core", o.core_ids, "Core id, once per subsystem")->required();
  rpar->add_option("--robot", o.robot, "Combined robot id")->required();
  rpar->add_option("--target", o.targets, "Per-core target, <core-id>:<feature>=<values>");
  rpar->add_option("--seed", o.seed, "Random seed")->required();
  rpar->add_option("--out", o.out, "Output directory (default: plots/parallel-<robot>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n";
    return error_record("UsageError", "cli", e.what(), 2);
  }

  try {
    const Project p(project_root(o.project));
    if (init->parsed()) {
      fs::create_directories(p.root());
      project::Lock lock(p.lock_path());
      cmd_init(p);
      return 0;
    }
    Project::open(p.root());
    project::Lock lock(p.lock_path());
    if (assemble->parsed()) cmd_assemble(p, o);
    else if (explore->parsed()) cmd_explore(p, o);
    else if (train->parsed()) cmd_train_validator(p, o);
    else if (clus->parsed()) cmd_cluster(p, o);
    else if (create->parsed()) cmd_core_create(p, o);
    else if (sample->parsed()) cmd_core_sample(p, o);
    else if (annotate->parsed()) cmd_core_annotate(p, o);
    else if (parallel->parsed()) cmd_core_parallel(p, o);
    else if (solve_task->parsed()) cmd_solve_task(p, o);
    else if (solve->parsed()) cmd_mission_solve(p, o);
    else if (reach->parsed()) cmd_report_reach(p, o);
    else if (rpar->parsed()) cmd_report_parallel(p, o);
    return 0;
  } catch (const Error& e) {
    return error_record(to_string(e.code()), e.module(), e.detail(), e.code() == ErrorCode::UsageError ? 2 : 1);
  } catch (const fs::filesystem_error& e) {
    return error_record(to_string(ErrorCode::IoFailure), module_of(ErrorCode::IoFailure), e.what(), 1);
  }
}
