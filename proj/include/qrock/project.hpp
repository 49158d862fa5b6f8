#pragma once

// File-based project store used by the command-line tool. Layout under the
// project root:
//
//   project.txt          format marker
//   graph.txt            component graph
//   ontology.txt         label ontology
//   vocabulary.txt       planning vocabulary
//   robots/<id>.txt      robot specs derived from assemblies
//   sets/<name>/         capability sets
//   validators/<set>.txt trained validation models
//   clusters/<name>/     cluster stores
//   cores/<id>.txt       cognitive cores
//   plots/               exported plot-data tables
//   runs/NNNN-<cmd>.txt  one manifest per command
//
// Artifacts never contain timestamps; only the run manifests do, so re-running
// the same commands with the same seeds reproduces every artifact byte for byte.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include "qrock/cores.hpp"
#include "qrock/error.hpp"
#include "qrock/graphstore.hpp"
#include "qrock/ontology.hpp"
#include "qrock/reason.hpp"
#include "qrock/text.hpp"

namespace qrock::project {

namespace fs = std::filesystem;

inline constexpr std::string_view kProjectFormat = "qrock-project";
inline constexpr const char* kProjectEnv = "QROCK_PROJECT";

/// Content hash of a file, or of a directory as the hash of its sorted
/// relative paths and file hashes.
inline std::string hash_path(const fs::path& p) {
  if (!fs::exists(p)) fail(ErrorCode::NotFound, p.string() + " does not exist");
  if (fs::is_regular_file(p)) return text::content_hash(text::read_file(p));
  std::vector<std::string> entries;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file())
      entries.push_back(fs::relative(e.path(), p).generic_string() + "\t" + text::content_hash(text::read_file(e.path())));
  std::sort(entries.begin(), entries.end());
  std::string joined;
  for (const auto& e : entries) joined += e + "\n";
  return text::content_hash(joined);
}

/// Exclusive lock held for the lifetime of one command.
class Lock {
 public:
  explicit Lock(fs::path path) : path_(std::move(path)) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) fail(ErrorCode::ProjectLocked, "another command holds " + path_.string());
    std::fclose(f);
  }
  ~Lock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  Lock(const Lock&) = delete;
  Lock& operator=(const Lock&) = delete;

 private:
  fs::path path_;
};

class Project {
 public:
  explicit Project(fs::path root) : root_(std::move(root)) {}

  static Project init(const fs::path& root) {
    Project p(root);
    if (fs::exists(p.marker())) fail(ErrorCode::UsageError, root.string() + " already holds a project");
    text::Record r;
    r.set("format", std::string(kProjectFormat)).set("version", "1");
    text::write_file(p.marker(), r.to_text());
    graph::save(graph::PropertyGraph{}, p.graph_path());
    text::write_file(p.ontology_path(), onto::Ontology::defaults().to_text());
    text::write_file(p.vocabulary_path(), reason::PlanningVocabulary::defaults().to_text());
    return p;
  }

  static Project open(const fs::path& root) {
    Project p(root);
    if (!fs::exists(p.marker())) fail(ErrorCode::NotFound, "no project at " + root.string() + " (run init first)");
    if (text::Record::parse(text::read_file(p.marker())).get("format") != kProjectFormat)
      fail(ErrorCode::SchemaViolation, p.marker().string() + " is not a project marker");
    return p;
  }

  const fs::path& root() const { return root_; }
  fs::path marker() const { return root_ / "project.txt"; }
  fs::path lock_path() const { return root_ / ".lock"; }
  fs::path graph_path() const { return root_ / "graph.txt"; }
  fs::path ontology_path() const { return root_ / "ontology.txt"; }
  fs::path vocabulary_path() const { return root_ / "vocabulary.txt"; }
  fs::path robot_path(const std::string& id) const { return root_ / "robots" / (id + ".txt"); }
  fs::path set_dir(const std::string& name) const { return root_ / "sets" / name; }
  fs::path validator_path(const std::string& set) const { return root_ / "validators" / (set + ".txt"); }
  fs::path cluster_dir(const std::string& name) const { return root_ / "clusters" / name; }
  fs::path core_path(const std::string& id) const { return root_ / "cores" / (id + ".txt"); }
  fs::path plots_dir() const { return root_ / "plots"; }
  fs::path runs_dir() const { return root_ / "runs"; }

  /// Resolves a user-supplied output path: absolute paths stay, relative
  /// ones land under the project root.
  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : root_ / p; }

  fs::path require(const fs::path& p, const std::string& what) const {
    if (!fs::exists(p)) fail(ErrorCode::NotFound, what + " not found at " + p.string());
    return p;
  }

  onto::Ontology ontology() const { return onto::Ontology::from_text(text::read_file(ontology_path())); }
  reason::PlanningVocabulary vocabulary() const {
    return reason::PlanningVocabulary::from_text(text::read_file(vocabulary_path()));
  }

  cores::CognitiveCore core(const std::string& id) const {
    return cores::core_from_text(text::read_file(require(core_path(id), "core " + id)));
  }

  std::vector<cores::CognitiveCore> all_cores() const {
    std::vector<cores::CognitiveCore> out;
    const auto dir = root_ / "cores";
    if (!fs::exists(dir)) return out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back(cores::core_from_text(text::read_file(f)));
    return out;
  }

 private:
  fs::path root_;
};

/// Manifest of one command: what ran, with which settings, reading and
/// writing which content.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)) {
    started_ = std::chrono::system_clock::now();
  }

  RunManifest& config(const std::string& key, const std::string& value) {
    config_.emplace_back(key, value);
    return *this;
  }
  RunManifest& input(const Project& p, const fs::path& path) {
    inputs_.emplace_back(label(p, path), hash_path(path));
    return *this;
  }
  RunManifest& output(const Project& p, const fs::path& path) {
    outputs_.emplace_back(label(p, path), hash_path(path));
    return *this;
  }

  fs::path write(const Project& p) const {
    fs::create_directories(p.runs_dir());
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(p.runs_dir()))
      if (e.is_regular_file()) ++n;
    std::string slug = command_;
    std::replace(slug.begin(), slug.end(), ' ', '-');
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%04zu-", n + 1);
    const fs::path path = p.runs_dir() / (prefix + slug + ".txt");

    text::Record r;
    r.set("command", command_)
        .set("started", iso8601(started_))
        .set("finished", iso8601(std::chrono::system_clock::now()));
    for (const auto& [k, v] : config_) r.set("config." + k, v);
    for (const auto& [k, v] : inputs_) r.set("input." + k, v);
    for (const auto& [k, v] : outputs_) r.set("output." + k, v);
    text::write_file(path, r.to_text());
    return path;
  }

 private:
  static std::string label(const Project& p, const fs::path& path) {
    std::error_code ec;
    auto rel = fs::relative(path, p.root(), ec);
    return (ec || rel.empty() || *rel.begin() == "..") ? path.string() : rel.generic_string();
  }

  static std::string iso8601(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::string command_;
  std::chrono::system_clock::time_point started_;
  std::vector<std::pair<std::string, std::string>> config_, inputs_, outputs_;
};

}  // namespace qrock::project
