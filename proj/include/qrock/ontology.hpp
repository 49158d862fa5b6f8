#pragma once

// Label ontology: terms linked by subclass-of edges into a rooted acyclic
// hierarchy. Labels on behavior models, cores and tasks are terms here.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qrock/error.hpp"
#include "qrock/text.hpp"

namespace qrock::onto {

class Ontology {
 public:
  explicit Ontology(std::string root = "behavior") : root_(std::move(root)) {
    check_name(root_);
    parents_[root_];
  }

  const std::string& root() const { return root_; }
  bool has(std::string_view term) const { return parents_.count(std::string(term)) != 0; }
  std::size_t size() const { return parents_.size(); }

  std::vector<std::string> terms() const {
    std::vector<std::string> out;
    for (const auto& [t, _] : parents_) out.push_back(t);
    return out;
  }

  const std::set<std::string>& parents(std::string_view term) const { return parents_.at(require(term)); }

  /// Registers `term` as a subclass of `parent`. The term may already exist,
  /// in which case the edge is added to its parents.
  Ontology& add(const std::string& term, const std::string& parent) {
    check_name(term);
    require(parent);
    if (term == root_) fail(ErrorCode::OntologyCycle, "the root term cannot have a parent");
    if (has(term) && subsumes(term, parent))
      fail(ErrorCode::OntologyCycle, "making " + term + " a subclass of " + parent + " would close a cycle");
    parents_[term].insert(parent);
    return *this;
  }

  /// True iff `specific` equals `general` or lies below it.
  bool subsumes(std::string_view general, std::string_view specific) const {
    const std::string g = require(general);
    std::vector<std::string> stack{require(specific)};
    std::set<std::string> seen;
    while (!stack.empty()) {
      std::string t = std::move(stack.back());
      stack.pop_back();
      if (t == g) return true;
      if (!seen.insert(t).second) continue;
      for (const auto& p : parents_.at(t)) stack.push_back(p);
    }
    return false;
  }

  /// One line per term: "term<TAB>parent,parent", root first with no parents.
  std::string to_text() const {
    std::string out = root_ + "\t\n";
    for (const auto& [t, ps] : parents_) {
      if (t == root_) continue;
      out += t + "\t";
      bool first = true;
      for (const auto& p : ps) {
        out += (first ? "" : ",") + p;
        first = false;
      }
      out += "\n";
    }
    return out;
  }

  /// Parses the line format; lines may come in any order after the root.
  static Ontology from_text(std::string_view doc) {
    std::vector<std::pair<std::string, std::vector<std::string>>> rows;
    for (auto line : text::lines(doc)) {
      const auto trimmed = text::trim(line);
      if (trimmed.empty() || trimmed.front() == '#') continue;
      const auto cols = text::split(line, '\t');
      std::vector<std::string> ps;
      if (cols.size() > 1)
        for (auto p : text::split(text::trim(cols[1]), ','))
          if (!text::trim(p).empty()) ps.emplace_back(text::trim(p));
      rows.emplace_back(std::string(text::trim(cols[0])), std::move(ps));
    }
    if (rows.empty() || !rows.front().second.empty())
      fail(ErrorCode::SchemaViolation, "ontology document must start with a root term that has no parent");
    Ontology o(rows.front().first);
    // Insert in dependency order so every parent exists before its children.
    std::vector<bool> done(rows.size(), false);
    done[0] = true;
    for (bool progress = true; progress;) {
      progress = false;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (done[i]) continue;
        if (rows[i].second.empty()) fail(ErrorCode::SchemaViolation, "term " + rows[i].first + " has no parent");
        if (!std::all_of(rows[i].second.begin(), rows[i].second.end(), [&](const auto& p) { return o.has(p); }))
          continue;
        for (const auto& p : rows[i].second) o.add(rows[i].first, p);
        done[i] = progress = true;
      }
    }
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (!done[i])
        fail(ErrorCode::OntologyCycle, "term " + rows[i].first + " does not reach the root " + o.root());
    return o;
  }

  /// Behavior vocabulary used by the fixtures and the demo project.
  static Ontology defaults() {
    Ontology o("behavior");
    o.add("move", "behavior")
        .add("reach", "move")
        .add("navigate", "move")
        .add("manipulate", "behavior")
        .add("grasp", "manipulate")
        .add("pick", "manipulate")
        .add("release", "manipulate")
        .add("perceive", "behavior");
    return o;
  }

  friend bool operator==(const Ontology&, const Ontology&) = default;

 private:
  static void check_name(std::string_view term) {
    if (term.empty() || term.find_first_of("\t\n,;= ") != std::string_view::npos)
      fail(ErrorCode::InvalidArgument, "ontology term '" + std::string(term) + "' is empty or contains a separator");
  }

  std::string require(std::string_view term) const {
    std::string t(term);
    if (!parents_.count(t)) fail(ErrorCode::UnknownTerm, "unknown ontology term '" + t + "'");
    return t;
  }

  std::string root_;
  std::map<std::string, std::set<std::string>> parents_;
};

}  // namespace qrock::onto
