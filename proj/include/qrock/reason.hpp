#pragma once

// Top-down reasoning: a planning vocabulary of semantically annotated
// primitive tasks, decomposition of missions into primitive sequences, and
// matching of tasks against the cognitive cores of known robots.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qrock/cores.hpp"
#include "qrock/error.hpp"
#include "qrock/ontology.hpp"
#include "qrock/text.hpp"

namespace qrock::reason {

struct AnnotatedTask {
  std::string name;
  cores::SemanticAnnotation annotation;
};

class PlanningVocabulary {
 public:
  /// Primitive tasks annotated with their own name as label.
  static PlanningVocabulary defaults() {
    PlanningVocabulary v;
    for (const char* p : {"grasp", "navigate", "perceive", "pick", "reach", "release"}) v.add_primitive(p, {{p}, {}});
    return v;
  }

  PlanningVocabulary& add_primitive(const std::string& name, cores::SemanticAnnotation sa) {
    check_name(name);
    if (methods_.count(name)) fail(ErrorCode::InvalidArgument, name + " is already a compound task");
    sa.check();
    primitives_[name] = std::move(sa);
    return *this;
  }

  /// Adds one decomposition method; steps may be primitive or compound.
  PlanningVocabulary& add_method(const std::string& compound, std::vector<std::string> steps) {
    check_name(compound);
    if (primitives_.count(compound)) fail(ErrorCode::InvalidArgument, compound + " is a primitive task");
    if (steps.empty()) fail(ErrorCode::InvalidArgument, "a method for " + compound + " needs at least one step");
    for (const auto& s : steps) check_name(s);
    methods_[compound].push_back(std::move(steps));
    return *this;
  }

  bool is_primitive(std::string_view name) const { return primitives_.count(std::string(name)) != 0; }
  bool is_compound(std::string_view name) const { return methods_.count(std::string(name)) != 0; }
  bool knows(std::string_view name) const { return is_primitive(name) || is_compound(name); }

  AnnotatedTask task(std::string_view name) const {
    auto it = primitives_.find(std::string(name));
    if (it == primitives_.end()) fail(ErrorCode::UnknownTask, "'" + std::string(name) + "' is not a primitive task");
    return {it->first, it->second};
  }

  const std::vector<std::vector<std::string>>& methods(std::string_view compound) const {
    auto it = methods_.find(std::string(compound));
    if (it == methods_.end()) fail(ErrorCode::NoMethod, "compound task '" + std::string(compound) + "' has no method");
    return it->second;
  }

  const std::map<std::string, cores::SemanticAnnotation>& primitives() const { return primitives_; }

  /// Tab-separated rows:
  ///   primitive <name> <label,label> <constraint|constraint>
  ///   method    <compound> <step,step,...>
  std::string to_text() const {
    std::string out;
    for (const auto& [name, sa] : primitives_) {
      std::string labels, cons;
      for (const auto& l : sa.labels) labels += (labels.empty() ? "" : ",") + l;
      for (const auto& c : sa.constraints) cons += (cons.empty() ? "" : "|") + c.to_text();
      out += "primitive\t" + name + "\t" + labels + "\t" + cons + "\n";
    }
    for (const auto& [name, ms] : methods_)
      for (const auto& m : ms) {
        std::string steps;
        for (const auto& s : m) steps += (steps.empty() ? "" : ",") + s;
        out += "method\t" + name + "\t" + steps + "\n";
      }
    return out;
  }

  static PlanningVocabulary from_text(std::string_view doc) {
    PlanningVocabulary v;
    for (auto line : text::lines(doc)) {
      if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
      const auto f = text::split(line, '\t');
      if (f[0] == "primitive" && (f.size() == 3 || f.size() == 4)) {
        cores::SemanticAnnotation sa;
        for (auto l : text::split(f[2], ','))
          if (!text::trim(l).empty()) sa.labels.emplace(text::trim(l));
        if (f.size() == 4)
          for (auto c : text::split(f[3], '|'))
            if (!text::trim(c).empty()) sa.constraints.push_back(cores::Constraint::from_text(text::trim(c)));
        v.add_primitive(std::string(f[1]), std::move(sa));
      } else if (f[0] == "method" && f.size() == 3) {
        std::vector<std::string> steps;
        for (auto s : text::split(f[2], ',')) steps.emplace_back(text::trim(s));
        v.add_method(std::string(f[1]), std::move(steps));
      } else {
        fail(ErrorCode::SchemaViolation, "malformed vocabulary line '" + std::string(line) + "'");
      }
    }
    return v;
  }

 private:
  static void check_name(std::string_view n) {
    if (n.empty() || n.find_first_of("\t\n, |") != std::string_view::npos)
      fail(ErrorCode::InvalidArgument, "task name '" + std::string(n) + "' is empty or contains a separator");
  }

  std::map<std::string, cores::SemanticAnnotation> primitives_;
  std::map<std::string, std::vector<std::vector<std::string>>> methods_;
};

using Sequence = std::vector<std::string>;

namespace detail {

// Every primitive expansion of one task, depth-first in method order.
// Expansions that revisit a compound on the current path are dropped.
inline std::vector<Sequence> expand(const PlanningVocabulary& v, const std::string& task, std::vector<std::string>& path) {
  if (v.is_primitive(task)) return {{task}};
  if (!v.is_compound(task)) fail(ErrorCode::UnknownTask, "unknown task '" + task + "'");
  if (std::find(path.begin(), path.end(), task) != path.end()) return {};
  path.push_back(task);
  std::vector<Sequence> out;
  for (const auto& method : v.methods(task)) {
    std::vector<Sequence> partial{{}};
    for (const auto& step : method) {
      const auto tails = expand(v, step, path);
      std::vector<Sequence> next;
      for (const auto& head : partial)
        for (const auto& tail : tails) {
          Sequence s = head;
          s.insert(s.end(), tail.begin(), tail.end());
          next.push_back(std::move(s));
        }
      partial = std::move(next);
      if (partial.empty()) break;
    }
    out.insert(out.end(), partial.begin(), partial.end());
  }
  path.pop_back();
  return out;
}

}  // namespace detail

/// All primitive task sequences a mission can decompose into.
inline std::vector<Sequence> decompose(const PlanningVocabulary& v, const Sequence& mission) {
  if (mission.empty()) fail(ErrorCode::InvalidArgument, "mission is empty");
  std::vector<Sequence> result{{}};
  for (const auto& task : mission) {
    std::vector<std::string> path;
    const auto options = detail::expand(v, task, path);
    if (options.empty()) fail(ErrorCode::NoMethod, "no method of '" + task + "' terminates in primitive tasks");
    std::vector<Sequence> next;
    for (const auto& head : result)
      for (const auto& tail : options) {
        Sequence s = head;
        s.insert(s.end(), tail.begin(), tail.end());
        next.push_back(std::move(s));
      }
    result = std::move(next);
  }
  return result;
}

/// True when a core label satisfies a task label: equal, or (outside exact
/// mode) subsumed by it. Core labels unknown to the ontology only match
/// exactly.
inline bool label_matches(const onto::Ontology& o, const std::string& task_label, const std::string& core_label,
                          bool exact) {
  if (task_label == core_label) return true;
  if (exact || !o.has(core_label)) return false;
  return o.subsumes(task_label, core_label);
}

/// Open intervals (lo, hi) of two MinMax constraints overlap.
inline bool ranges_intersect(const cores::Constraint& a, const cores::Constraint& b) {
  return std::max(a.lo, b.lo) < std::min(a.hi, b.hi);
}

inline bool core_matches(const AnnotatedTask& task, const cores::CognitiveCore& core, const onto::Ontology& o,
                         bool exact = false) {
  for (const auto& tl : task.annotation.labels) {
    if (!o.has(tl)) fail(ErrorCode::UnknownTerm, "task label '" + tl + "' is not in the ontology");
    const bool any = std::any_of(core.annotation.labels.begin(), core.annotation.labels.end(),
                                 [&](const std::string& cl) { return label_matches(o, tl, cl, exact); });
    if (!any) return false;
  }
  for (const auto& tc : task.annotation.constraints) {
    if (tc.kind != cores::ConstraintKind::MinMax) continue;
    for (const auto& cc : core.annotation.constraints)
      if (cc.feature == tc.feature && cc.kind == cores::ConstraintKind::MinMax && !ranges_intersect(tc, cc)) return false;
  }
  return true;
}

/// Cores whose annotation satisfies the task's, in the given order.
inline std::vector<const cores::CognitiveCore*> match_cores(const AnnotatedTask& task,
                                                            const std::vector<cores::CognitiveCore>& store,
                                                            const onto::Ontology& o, bool exact = false) {
  std::vector<const cores::CognitiveCore*> out;
  for (const auto& core : store)
    if (core_matches(task, core, o, exact)) out.push_back(&core);
  return out;
}

struct Solution {
  std::string robot;
  std::size_t decomposition = 0;  // index into decompose(mission)
  Sequence tasks;
  std::vector<std::string> cores;  // one core id per task

  std::string to_text() const {
    std::string out = "robot\t" + robot + "\ndecomposition\t" + std::to_string(decomposition) + "\n";
    for (std::size_t i = 0; i < tasks.size(); ++i) out += "task\t" + tasks[i] + "\t" + cores[i] + "\n";
    return out;
  }
};

/// The first decomposition, in method order, that a single robot covers
/// entirely; robots are tried by id and each task takes the first matching
/// core by id.
inline Solution solve_mission(const Sequence& mission, const PlanningVocabulary& v,
                              const std::vector<cores::CognitiveCore>& store, const onto::Ontology& o,
                              bool exact = false) {
  const auto options = decompose(v, mission);
  std::vector<const cores::CognitiveCore*> sorted;
  for (const auto& c : store) sorted.push_back(&c);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
    return std::tie(a->robot, a->id, a->version) < std::tie(b->robot, b->id, b->version);
  });
  std::vector<std::string> robots;
  for (const auto* c : sorted)
    if (robots.empty() || robots.back() != c->robot) robots.push_back(c->robot);

  std::set<std::string> uncovered;  // primitive tasks no robot can do
  for (std::size_t d = 0; d < options.size(); ++d) {
    for (const auto& t : options[d]) {
      const auto task = v.task(t);
      if (std::none_of(sorted.begin(), sorted.end(), [&](auto* c) { return core_matches(task, *c, o, exact); }))
        uncovered.insert(t);
    }
    for (const auto& robot : robots) {
      Solution s{robot, d, options[d], {}};
      for (const auto& t : options[d]) {
        const auto task = v.task(t);
        auto it = std::find_if(sorted.begin(), sorted.end(),
                               [&](auto* c) { return c->robot == robot && core_matches(task, *c, o, exact); });
        if (it == sorted.end()) break;
        s.cores.push_back((*it)->id);
      }
      if (s.cores.size() == s.tasks.size()) return s;
    }
  }
  std::string diag;
  for (const auto& t : uncovered) diag += (diag.empty() ? "" : ", ") + t;
  if (diag.empty())
    fail(ErrorCode::NoCapableRobot, "every task has a capable robot, but no single robot covers a whole decomposition");
  fail(ErrorCode::NoCapableRobot, "no robot can perform: " + diag);
}

/// Mission document: one task name per line, '#' comments allowed.
inline Sequence mission_from_text(std::string_view doc) {
  Sequence m;
  for (auto line : text::lines(doc)) {
    const auto t = text::trim(line);
    if (!t.empty() && t.front() != '#') m.emplace_back(t);
  }
  return m;
}

}  // namespace qrock::reason
