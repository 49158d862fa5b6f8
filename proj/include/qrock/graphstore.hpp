#pragma once

// Typed property graph for component-based robot models.
//
// Vertices are component models, components, interface models and
// interfaces. Edges carry one of eight relation kinds, each with a fixed
// source/target entity signature and cardinality. Every operator validates
// first and commits afterwards, so a failing call leaves the graph untouched.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qrock/error.hpp"
#include "qrock/text.hpp"

namespace qrock::graph {

enum class Domain { Software, Computational, Mechanics, Electronics, Assembly };

enum class EntityKind { ComponentModel, Component, InterfaceModel, Interface };

enum class RelationKind {
  InstanceOfComponentModel,
  InstanceOfInterfaceModel,
  SubclassOf,
  ModelHasInterface,
  ComponentHasInterface,
  PartOfComposition,
  ConnectedTo,
  AliasOf,
};

enum class Cardinality { ManyToOne, OneToMany, ManyToMany, OneToOne };

struct RelationSignature {
  EntityKind source;
  EntityKind target;
  Cardinality cardinality;
};

constexpr RelationSignature signature(RelationKind kind) {
  using E = EntityKind;
  using C = Cardinality;
  switch (kind) {
    case RelationKind::InstanceOfComponentModel: return {E::Component, E::ComponentModel, C::ManyToOne};
    case RelationKind::InstanceOfInterfaceModel: return {E::Interface, E::InterfaceModel, C::ManyToOne};
    case RelationKind::SubclassOf: return {E::ComponentModel, E::ComponentModel, C::ManyToOne};
    case RelationKind::ModelHasInterface: return {E::ComponentModel, E::Interface, C::OneToMany};
    case RelationKind::ComponentHasInterface: return {E::Component, E::Interface, C::OneToMany};
    case RelationKind::PartOfComposition: return {E::Component, E::ComponentModel, C::ManyToOne};
    case RelationKind::ConnectedTo: return {E::Interface, E::Interface, C::ManyToMany};
    case RelationKind::AliasOf: return {E::Interface, E::Interface, C::OneToOne};
  }
  return {E::Component, E::Component, C::ManyToMany};
}

inline constexpr std::array<Domain, 5> kAllDomains = {Domain::Software, Domain::Computational, Domain::Mechanics,
                                                      Domain::Electronics, Domain::Assembly};
inline constexpr std::array<EntityKind, 4> kAllEntityKinds = {EntityKind::ComponentModel, EntityKind::Component,
                                                              EntityKind::InterfaceModel, EntityKind::Interface};
inline constexpr std::array<RelationKind, 8> kAllRelationKinds = {
    RelationKind::InstanceOfComponentModel, RelationKind::InstanceOfInterfaceModel, RelationKind::SubclassOf,
    RelationKind::ModelHasInterface,        RelationKind::ComponentHasInterface,    RelationKind::PartOfComposition,
    RelationKind::ConnectedTo,              RelationKind::AliasOf};

constexpr std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::Software: return "Software";
    case Domain::Computational: return "Computational";
    case Domain::Mechanics: return "Mechanics";
    case Domain::Electronics: return "Electronics";
    case Domain::Assembly: return "Assembly";
  }
  return "";
}

constexpr std::string_view to_string(EntityKind k) {
  switch (k) {
    case EntityKind::ComponentModel: return "ComponentModel";
    case EntityKind::Component: return "Component";
    case EntityKind::InterfaceModel: return "InterfaceModel";
    case EntityKind::Interface: return "Interface";
  }
  return "";
}

constexpr std::string_view to_string(RelationKind k) {
  switch (k) {
    case RelationKind::InstanceOfComponentModel: return "InstanceOfComponentModel";
    case RelationKind::InstanceOfInterfaceModel: return "InstanceOfInterfaceModel";
    case RelationKind::SubclassOf: return "SubclassOf";
    case RelationKind::ModelHasInterface: return "ModelHasInterface";
    case RelationKind::ComponentHasInterface: return "ComponentHasInterface";
    case RelationKind::PartOfComposition: return "PartOfComposition";
    case RelationKind::ConnectedTo: return "ConnectedTo";
    case RelationKind::AliasOf: return "AliasOf";
  }
  return "";
}

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view s, const std::array<Enum, N>& all) {
  for (Enum e : all)
    if (to_string(e) == s) return e;
  return std::nullopt;
}

using VertexId = std::string;
using EdgeId = std::string;
using Properties = std::map<std::string, std::string>;

inline constexpr std::string_view kLabelKey = "label";

struct Vertex {
  VertexId id;
  EntityKind kind;
  Domain domain;
  Properties properties;

  const std::string& label() const { return properties.at(std::string(kLabelKey)); }

  std::optional<std::string> property(std::string_view key) const {
    auto it = properties.find(std::string(key));
    if (it == properties.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const Vertex&, const Vertex&) = default;
};

struct Edge {
  EdgeId id;
  RelationKind kind;
  VertexId source;
  VertexId target;
  Properties properties;

  const std::string& label() const { return properties.at(std::string(kLabelKey)); }

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// One entry of resolve_parts: the component model a part instantiates and
/// the part's instance name.
struct PartRef {
  VertexId component_model;
  std::string instance_name;
  VertexId component;

  friend bool operator==(const PartRef&, const PartRef&) = default;
};

class PropertyGraph {
 public:
  explicit PropertyGraph(std::string prefix = "g") : prefix_(std::move(prefix)) {
    if (prefix_.empty() || prefix_.find_first_of(":\t\n\\") != std::string::npos)
      fail(ErrorCode::InvalidArgument, "graph id prefix must be non-empty and free of ':' and control characters");
  }

  // ---- operators -------------------------------------------------------

  VertexId create_component_model(Domain domain, std::string_view name) {
    return create_model(EntityKind::ComponentModel, domain, name);
  }

  VertexId create_interface_model(Domain domain, std::string_view name) {
    return create_model(EntityKind::InterfaceModel, domain, name);
  }

  /// New interface instance of an interface model (not yet owned by anything).
  VertexId instantiate_interface(const VertexId& interface_model, std::string_view name) {
    const Vertex& model = require(interface_model, ErrorCode::UnknownModel);
    if (model.kind != EntityKind::InterfaceModel)
      fail(ErrorCode::UnknownModel, interface_model + " is not an interface model");
    if (name.empty()) fail(ErrorCode::EmptyName, "interface name must not be empty");
    const Domain domain = model.domain;
    VertexId id = add_vertex(EntityKind::Interface, domain, name);
    add_edge_unchecked(RelationKind::InstanceOfInterfaceModel, id, interface_model);
    return id;
  }

  /// New component from a component model. The model's interfaces are copied
  /// onto the instance at this point; later edits to the model do not reach
  /// existing instances.
  VertexId instantiate_component(const VertexId& component_model, std::string_view name) {
    const Vertex* model = find_vertex(component_model);
    if (!model || model->kind != EntityKind::ComponentModel)
      fail(ErrorCode::UnknownModel, component_model + " is not a component model");
    if (name.empty()) fail(ErrorCode::EmptyName, "component name must not be empty");

    struct Template {
      Properties properties;
      Domain domain;
      VertexId interface_model;
    };
    std::vector<Template> templates;
    for (const Edge* e : out_edges(component_model, RelationKind::ModelHasInterface)) {
      const Vertex& iface = vertex(e->target);
      auto ifm = interface_model_of(iface.id);
      if (!ifm) fail(ErrorCode::SchemaViolation, "interface " + iface.id + " has no interface model");
      templates.push_back({iface.properties, iface.domain, *ifm});
    }

    const Domain domain = model->domain;
    VertexId id = add_vertex(EntityKind::Component, domain, name);
    add_edge_unchecked(RelationKind::InstanceOfComponentModel, id, component_model);
    for (const auto& t : templates) {
      VertexId iface = add_vertex(EntityKind::Interface, t.domain, t.properties.at(std::string(kLabelKey)));
      vertices_.at(iface).properties = t.properties;
      add_edge_unchecked(RelationKind::InstanceOfInterfaceModel, iface, t.interface_model);
      add_edge_unchecked(RelationKind::ComponentHasInterface, id, iface);
    }
    return id;
  }

  EdgeId connect(const VertexId& a, const VertexId& b) {
    for (const auto* id : {&a, &b}) {
      const Vertex* v = find_vertex(*id);
      if (!v || v->kind != EntityKind::Interface) fail(ErrorCode::UnknownInterface, *id + " is not an interface");
    }
    auto ma = interface_model_of(a);
    auto mb = interface_model_of(b);
    if (!ma || !mb || !compatible(*ma, *mb))
      fail(ErrorCode::IncompatibleInterfaces, a + " and " + b + " have incompatible interface models");
    return add_edge(RelationKind::ConnectedTo, a, b);
  }

  EdgeId compose(const VertexId& component, const VertexId& model) {
    const Vertex& c = require(component, ErrorCode::UnknownEntity);
    const Vertex& m = require(model, ErrorCode::UnknownEntity);
    check_kinds(RelationKind::PartOfComposition, c, m);
    check_cardinality(RelationKind::PartOfComposition, component, model);
    if (m.domain != Domain::Assembly && c.domain != m.domain)
      fail(ErrorCode::DomainMismatch, "only Assembly models may compose parts of another domain");
    if (auto own = model_of(component); own && (*own == model || model_reachable_from_parts(*own, model)))
      fail(ErrorCode::HierarchyCycle, "composing " + component + " into " + model + " creates a cycle");
    return add_edge(RelationKind::PartOfComposition, component, model);
  }

  EdgeId is_a(const VertexId& child, const VertexId& parent) {
    const Vertex& c = require(child, ErrorCode::UnknownEntity);
    const Vertex& p = require(parent, ErrorCode::UnknownEntity);
    check_kinds(RelationKind::SubclassOf, c, p);
    check_cardinality(RelationKind::SubclassOf, child, parent);
    for (std::optional<VertexId> cur = parent; cur; cur = superclass_of(*cur))
      if (*cur == child) fail(ErrorCode::HierarchyCycle, child + " would become its own superclass");
    return add_edge(RelationKind::SubclassOf, child, parent);
  }

  EdgeId has_interface_model(const VertexId& model, const VertexId& iface) {
    return add_edge(RelationKind::ModelHasInterface, model, iface);
  }

  EdgeId has_interface(const VertexId& component, const VertexId& iface) {
    return add_edge(RelationKind::ComponentHasInterface, component, iface);
  }

  /// Declares `inner` an alias of `outer` (alias-of relation, 1:1).
  EdgeId export_interface(const VertexId& inner, const VertexId& outer) {
    return add_edge(RelationKind::AliasOf, inner, outer);
  }

  /// Convenience: instantiate an interface model and attach it to a component
  /// model in one step.
  VertexId add_model_interface(const VertexId& component_model, const VertexId& interface_model,
                               std::string_view name) {
    const Vertex& m = require(component_model, ErrorCode::UnknownModel);
    if (m.kind != EntityKind::ComponentModel) fail(ErrorCode::KindMismatch, component_model + " is not a component model");
    VertexId iface = instantiate_interface(interface_model, name);
    add_edge_unchecked(RelationKind::ModelHasInterface, component_model, iface);
    return iface;
  }

  /// Registers two interface models as mutually connectable. Interfaces of
  /// the same model are always compatible.
  void declare_compatible(const VertexId& a, const VertexId& b) {
    for (const auto* id : {&a, &b}) {
      const Vertex* v = find_vertex(*id);
      if (!v || v->kind != EntityKind::InterfaceModel)
        fail(ErrorCode::UnknownModel, *id + " is not an interface model");
    }
    compat_.insert(std::minmax(a, b));
  }

  bool compatible(const VertexId& a, const VertexId& b) const {
    if (a == b) return true;
    return compat_.count(std::minmax(a, b)) > 0;
  }

  void set_property(const VertexId& id, std::string_view key, std::string_view value) {
    auto it = vertices_.find(id);
    if (it == vertices_.end()) fail(ErrorCode::UnknownEntity, id);
    if (key.empty()) fail(ErrorCode::EmptyName, "property key must not be empty");
    if (key == kLabelKey && value.empty()) fail(ErrorCode::EmptyName, "label must not be empty");
    it->second.properties[std::string(key)] = std::string(value);
  }

  // ---- queries ---------------------------------------------------------

  const Vertex* find_vertex(const VertexId& id) const {
    auto it = vertices_.find(id);
    return it == vertices_.end() ? nullptr : &it->second;
  }

  const Vertex& vertex(const VertexId& id) const { return require(id, ErrorCode::UnknownEntity); }

  const Edge& edge(const EdgeId& id) const {
    auto it = edges_.find(id);
    if (it == edges_.end()) fail(ErrorCode::UnknownEntity, id);
    return it->second;
  }

  const std::map<VertexId, Vertex>& vertices() const { return vertices_; }
  const std::map<EdgeId, Edge>& edges() const { return edges_; }
  const std::set<std::pair<VertexId, VertexId>>& compatibility() const { return compat_; }
  const std::string& prefix() const { return prefix_; }

  /// Outgoing edges of a kind, in edge-id (creation) order.
  std::vector<const Edge*> out_edges(const VertexId& id, RelationKind kind) const {
    return incident(out_, id, kind);
  }

  std::vector<const Edge*> in_edges(const VertexId& id, RelationKind kind) const { return incident(in_, id, kind); }

  std::optional<VertexId> model_of(const VertexId& component) const {
    return single_target(component, RelationKind::InstanceOfComponentModel);
  }

  std::optional<VertexId> interface_model_of(const VertexId& iface) const {
    return single_target(iface, RelationKind::InstanceOfInterfaceModel);
  }

  std::optional<VertexId> superclass_of(const VertexId& model) const {
    return single_target(model, RelationKind::SubclassOf);
  }

  std::optional<VertexId> composed_into(const VertexId& component) const {
    return single_target(component, RelationKind::PartOfComposition);
  }

  /// Interfaces owned by a component or component model, in creation order.
  std::vector<VertexId> interfaces_of(const VertexId& owner) const {
    std::vector<VertexId> out;
    const Vertex& v = vertex(owner);
    const RelationKind kind =
        v.kind == EntityKind::Component ? RelationKind::ComponentHasInterface : RelationKind::ModelHasInterface;
    for (const Edge* e : out_edges(owner, kind)) out.push_back(e->target);
    return out;
  }

  /// Interface of `owner` whose label is `name` (e.g. j1.b).
  VertexId interface_named(const VertexId& owner, std::string_view name) const {
    for (const auto& id : interfaces_of(owner))
      if (vertex(id).label() == name) return id;
    fail(ErrorCode::UnknownInterface, owner + " has no interface '" + std::string(name) + "'");
  }

  /// Owner (component or component model) of an interface, if any.
  std::optional<VertexId> owner_of(const VertexId& iface) const {
    for (RelationKind k : {RelationKind::ComponentHasInterface, RelationKind::ModelHasInterface}) {
      auto in = in_edges(iface, k);
      if (!in.empty()) return in.front()->source;
    }
    return std::nullopt;
  }

  std::optional<VertexId> find_model(EntityKind kind, Domain domain, std::string_view name) const {
    for (const auto& [id, v] : vertices_)
      if (v.kind == kind && v.domain == domain && v.label() == name) return id;
    return std::nullopt;
  }

  /// Finds a component model by name in any domain (first by id).
  std::optional<VertexId> find_component_model(std::string_view name) const {
    for (const auto& [id, v] : vertices_)
      if (v.kind == EntityKind::ComponentModel && v.label() == name) return id;
    return std::nullopt;
  }

  std::size_t count(EntityKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(vertices_.begin(), vertices_.end(), [&](const auto& kv) { return kv.second.kind == kind; }));
  }

  std::size_t count(RelationKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(edges_.begin(), edges_.end(), [&](const auto& kv) { return kv.second.kind == kind; }));
  }

  /// The label vocabulary currently in use.
  std::set<std::string> vocabulary() const {
    std::set<std::string> out;
    for (const auto& [_, v] : vertices_) out.insert(v.label());
    for (const auto& [_, e] : edges_) out.insert(e.label());
    return out;
  }

  /// Parts of a component model: (instantiated model, instance name) for
  /// every component composed into it. With `recursive`, parts of the parts'
  /// models are appended depth-first, flattening the hierarchy.
  std::vector<PartRef> resolve_parts(const VertexId& model, bool recursive = false) const {
    const Vertex* m = find_vertex(model);
    if (!m || m->kind != EntityKind::ComponentModel) fail(ErrorCode::UnknownModel, model);
    std::vector<PartRef> out;
    std::set<VertexId> visiting;
    collect_parts(model, recursive, visiting, out);
    return out;
  }

  /// Re-checks every invariant from scratch. Mutations already enforce them,
  /// so on a graph built through the operators this never throws.
  void validate() const {
    PropertyGraph copy(prefix_);
    copy.next_vertex_ = next_vertex_;
    copy.next_edge_ = next_edge_;
    for (const auto& [id, v] : vertices_) copy.insert_vertex_checked(v);
    for (const auto& [a, b] : compat_) copy.insert_compat_checked(a, b);
    for (const auto& [id, e] : edges_) copy.insert_edge_checked(e);
  }

  std::uint64_t next_vertex_counter() const { return next_vertex_; }
  std::uint64_t next_edge_counter() const { return next_edge_; }

  friend bool operator==(const PropertyGraph& a, const PropertyGraph& b) {
    return a.prefix_ == b.prefix_ && a.next_vertex_ == b.next_vertex_ && a.next_edge_ == b.next_edge_ &&
           a.vertices_ == b.vertices_ && a.edges_ == b.edges_ && a.compat_ == b.compat_;
  }

 private:
  friend PropertyGraph load_text(std::string_view);

  static std::string make_id(const std::string& prefix, char tag, std::uint64_t n) {
    std::string digits = std::to_string(n);
    if (digits.size() < 8) digits.insert(0, 8 - digits.size(), '0');
    return prefix + ":" + tag + digits;
  }

  const Vertex& require(const VertexId& id, ErrorCode code) const {
    const Vertex* v = find_vertex(id);
    if (!v) fail(code, "no such vertex: " + id);
    return *v;
  }

  VertexId create_model(EntityKind kind, Domain domain, std::string_view name) {
    if (name.empty()) fail(ErrorCode::EmptyName, "model name must not be empty");
    if (find_model(kind, domain, name))
      fail(ErrorCode::DuplicateName,
           std::string(to_string(kind)) + " " + std::string(to_string(domain)) + "/" + std::string(name) + " exists");
    return add_vertex(kind, domain, name);
  }

  VertexId add_vertex(EntityKind kind, Domain domain, std::string_view label) {
    VertexId id = make_id(prefix_, 'v', next_vertex_++);
    vertices_.emplace(id, Vertex{id, kind, domain, {{std::string(kLabelKey), std::string(label)}}});
    return id;
  }

  void check_kinds(RelationKind kind, const Vertex& src, const Vertex& tgt) const {
    const auto sig = signature(kind);
    if (src.kind != sig.source || tgt.kind != sig.target)
      fail(ErrorCode::KindMismatch, std::string(to_string(kind)) + " requires " + std::string(to_string(sig.source)) +
                                        " -> " + std::string(to_string(sig.target)) + ", got " +
                                        std::string(to_string(src.kind)) + " -> " + std::string(to_string(tgt.kind)));
  }

  void check_cardinality(RelationKind kind, const VertexId& src, const VertexId& tgt) const {
    const auto card = signature(kind).cardinality;
    const bool source_bound = card == Cardinality::ManyToOne || card == Cardinality::OneToOne;
    const bool target_bound = card == Cardinality::OneToMany || card == Cardinality::OneToOne;
    if (source_bound && !out_edges(src, kind).empty())
      fail(ErrorCode::CardinalityViolation, src + " already has a " + std::string(to_string(kind)) + " edge");
    if (target_bound && !in_edges(tgt, kind).empty())
      fail(ErrorCode::CardinalityViolation, tgt + " already is the target of a " + std::string(to_string(kind)) + " edge");
  }

  EdgeId add_edge(RelationKind kind, const VertexId& src, const VertexId& tgt) {
    const Vertex& s = require(src, ErrorCode::UnknownEntity);
    const Vertex& t = require(tgt, ErrorCode::UnknownEntity);
    check_kinds(kind, s, t);
    check_cardinality(kind, src, tgt);
    return add_edge_unchecked(kind, src, tgt);
  }

  EdgeId add_edge_unchecked(RelationKind kind, const VertexId& src, const VertexId& tgt) {
    EdgeId id = make_id(prefix_, 'e', next_edge_++);
    edges_.emplace(id, Edge{id, kind, src, tgt, {{std::string(kLabelKey), std::string(to_string(kind))}}});
    out_[src].push_back(id);
    in_[tgt].push_back(id);
    return id;
  }

  std::vector<const Edge*> incident(const std::map<VertexId, std::vector<EdgeId>>& index, const VertexId& id,
                                    RelationKind kind) const {
    std::vector<const Edge*> out;
    auto it = index.find(id);
    if (it == index.end()) return out;
    for (const auto& eid : it->second) {
      const Edge& e = edges_.at(eid);
      if (e.kind == kind) out.push_back(&e);
    }
    return out;
  }

  std::optional<VertexId> single_target(const VertexId& id, RelationKind kind) const {
    auto out = out_edges(id, kind);
    if (out.empty()) return std::nullopt;
    return out.front()->target;
  }

  bool model_reachable_from_parts(const VertexId& from_model, const VertexId& target) const {
    std::set<VertexId> seen;
    std::vector<VertexId> stack{from_model};
    while (!stack.empty()) {
      VertexId cur = stack.back();
      stack.pop_back();
      if (!seen.insert(cur).second) continue;
      for (const Edge* e : in_edges(cur, RelationKind::PartOfComposition)) {
        auto m = model_of(e->source);
        if (!m) continue;
        if (*m == target) return true;
        stack.push_back(*m);
      }
    }
    return false;
  }

  void collect_parts(const VertexId& model, bool recursive, std::set<VertexId>& visiting,
                     std::vector<PartRef>& out) const {
    if (!visiting.insert(model).second) return;
    for (const Edge* e : in_edges(model, RelationKind::PartOfComposition)) {
      const Vertex& part = vertex(e->source);
      auto part_model = model_of(part.id);
      if (!part_model) continue;
      out.push_back({*part_model, part.label(), part.id});
      if (recursive) collect_parts(*part_model, true, visiting, out);
    }
    visiting.erase(model);
  }

  // ---- checked insertion used by load and validate ----------------------

  void insert_vertex_checked(const Vertex& v) {
    if (vertices_.count(v.id)) fail(ErrorCode::SchemaViolation, v.id + ": duplicate vertex id");
    check_id(v.id, 'v', next_vertex_);
    auto label = v.properties.find(std::string(kLabelKey));
    if (label == v.properties.end() || label->second.empty())
      fail(ErrorCode::SchemaViolation, v.id + ": missing label");
    if (v.kind == EntityKind::ComponentModel || v.kind == EntityKind::InterfaceModel) {
      if (find_model(v.kind, v.domain, label->second))
        fail(ErrorCode::SchemaViolation, v.id + ": duplicate model name");
    }
    vertices_.emplace(v.id, v);
  }

  void insert_compat_checked(const VertexId& a, const VertexId& b) {
    for (const auto* id : {&a, &b}) {
      const Vertex* v = find_vertex(*id);
      if (!v || v->kind != EntityKind::InterfaceModel)
        fail(ErrorCode::SchemaViolation, *id + ": compatibility entry is not an interface model");
    }
    if (!(a < b)) fail(ErrorCode::SchemaViolation, a + ": compatibility pair not in canonical order");
    compat_.insert({a, b});
  }

  void insert_edge_checked(const Edge& e) {
    if (edges_.count(e.id)) fail(ErrorCode::SchemaViolation, e.id + ": duplicate edge id");
    check_id(e.id, 'e', next_edge_);
    auto label = e.properties.find(std::string(kLabelKey));
    if (label == e.properties.end() || label->second.empty())
      fail(ErrorCode::SchemaViolation, e.id + ": missing label");
    try {
      const Vertex& s = require(e.source, ErrorCode::UnknownEntity);
      const Vertex& t = require(e.target, ErrorCode::UnknownEntity);
      check_kinds(e.kind, s, t);
      check_cardinality(e.kind, e.source, e.target);
      if (e.kind == RelationKind::ConnectedTo) {
        auto ma = interface_model_of(e.source);
        auto mb = interface_model_of(e.target);
        if (ma && mb && !compatible(*ma, *mb)) fail(ErrorCode::IncompatibleInterfaces, "incompatible connection");
      }
      if (e.kind == RelationKind::PartOfComposition && t.domain != Domain::Assembly && s.domain != t.domain)
        fail(ErrorCode::DomainMismatch, "cross-domain composition");
    } catch (const Error& err) {
      fail(ErrorCode::SchemaViolation, e.id + ": " + err.what());
    }
    edges_.emplace(e.id, e);
    out_[e.source].push_back(e.id);
    in_[e.target].push_back(e.id);
  }

  void check_id(const std::string& id, char tag, std::uint64_t limit) const {
    const std::string head = prefix_ + ":" + tag;
    if (id.size() < head.size() + 8 || id.compare(0, head.size(), head) != 0)
      fail(ErrorCode::SchemaViolation, id + ": malformed id");
    const std::uint64_t n = text::parse_u64(std::string_view(id).substr(head.size()));
    if (n == 0 || n >= limit || make_id(prefix_, tag, n) != id)
      fail(ErrorCode::SchemaViolation, id + ": id outside the allocated range");
  }

  std::string prefix_;
  std::uint64_t next_vertex_ = 1;
  std::uint64_t next_edge_ = 1;
  std::map<VertexId, Vertex> vertices_;
  std::map<EdgeId, Edge> edges_;
  std::map<VertexId, std::vector<EdgeId>> out_;
  std::map<VertexId, std::vector<EdgeId>> in_;
  std::set<std::pair<VertexId, VertexId>> compat_;
};

// ---- persistence ---------------------------------------------------------
//
//   qrock-graph <TAB> 1
//   prefix <TAB> <prefix>
//   next <TAB> <next vertex counter> <TAB> <next edge counter>
//   compat <TAB> <interface model> <TAB> <interface model>
//   vertex <TAB> <id> <TAB> <entity kind> <TAB> <domain> {<TAB> key <TAB> value}
//   edge <TAB> <id> <TAB> <relation kind> <TAB> <source> <TAB> <target> {<TAB> key <TAB> value}
//
// Records are sorted by id, properties by key; fields are backslash-escaped.

inline constexpr std::string_view kGraphFormat = "qrock-graph";
inline constexpr int kGraphFormatVersion = 1;

inline std::string save_text(const PropertyGraph& g) {
  std::string out;
  auto field = [&](std::string_view s) {
    out += '\t';
    out += text::escape(s);
  };
  out += std::string(kGraphFormat) + "\t" + std::to_string(kGraphFormatVersion) + "\n";
  out += "prefix";
  field(g.prefix());
  out += "\nnext\t" + std::to_string(g.next_vertex_counter()) + "\t" + std::to_string(g.next_edge_counter()) + "\n";
  for (const auto& [a, b] : g.compatibility()) {
    out += "compat";
    field(a);
    field(b);
    out += '\n';
  }
  for (const auto& [id, v] : g.vertices()) {
    out += "vertex";
    field(id);
    field(to_string(v.kind));
    field(to_string(v.domain));
    for (const auto& [k, val] : v.properties) {
      field(k);
      field(val);
    }
    out += '\n';
  }
  for (const auto& [id, e] : g.edges()) {
    out += "edge";
    field(id);
    field(to_string(e.kind));
    field(e.source);
    field(e.target);
    for (const auto& [k, val] : e.properties) {
      field(k);
      field(val);
    }
    out += '\n';
  }
  return out;
}

/// Parses and fully validates a graph document. Anything save_text could not
/// have produced (bad structure, cardinality or kind violations, unsorted or
/// otherwise non-canonical text) raises SchemaViolation naming the element.
inline PropertyGraph load_text(std::string_view doc) {
  auto rows = text::lines(doc);
  std::size_t line_no = 0;
  auto where = [&] { return "line " + std::to_string(line_no + 1); };
  auto fields_of = [&](std::string_view line) {
    std::vector<std::string> out;
    for (auto f : text::split(line, '\t')) out.push_back(text::unescape(f));
    return out;
  };
  auto read_props = [&](const std::vector<std::string>& f, std::size_t from, const std::string& id) {
    Properties props;
    if ((f.size() - from) % 2 != 0) fail(ErrorCode::SchemaViolation, id + ": odd property field count");
    for (std::size_t i = from; i < f.size(); i += 2) {
      if (f[i].empty()) fail(ErrorCode::SchemaViolation, id + ": empty property key");
      if (!props.emplace(f[i], f[i + 1]).second) fail(ErrorCode::SchemaViolation, id + ": duplicate property key");
    }
    return props;
  };

  if (rows.size() < 3) fail(ErrorCode::SchemaViolation, "truncated graph document");
  auto header = fields_of(rows[0]);
  if (header.size() != 2 || header[0] != kGraphFormat || header[1] != std::to_string(kGraphFormatVersion))
    fail(ErrorCode::SchemaViolation, "line 1: not a qrock-graph version 1 document");
  line_no = 1;
  auto pre = fields_of(rows[1]);
  if (pre.size() != 2 || pre[0] != "prefix") fail(ErrorCode::SchemaViolation, where() + ": expected prefix");
  PropertyGraph g = [&] {
    try {
      return PropertyGraph(pre[1]);
    } catch (const Error& e) {
      fail(ErrorCode::SchemaViolation, where() + ": " + e.what());
    }
  }();
  line_no = 2;
  auto next = fields_of(rows[2]);
  if (next.size() != 3 || next[0] != "next") fail(ErrorCode::SchemaViolation, where() + ": expected next counters");
  g.next_vertex_ = text::parse_u64(next[1]);
  g.next_edge_ = text::parse_u64(next[2]);

  std::vector<Edge> edges;
  for (line_no = 3; line_no < rows.size(); ++line_no) {
    auto f = fields_of(rows[line_no]);
    if (f.empty()) fail(ErrorCode::SchemaViolation, where() + ": empty record");
    if (f[0] == "compat") {
      if (f.size() != 3) fail(ErrorCode::SchemaViolation, where() + ": malformed compat record");
      g.insert_compat_checked(f[1], f[2]);
    } else if (f[0] == "vertex") {
      if (f.size() < 4) fail(ErrorCode::SchemaViolation, where() + ": malformed vertex record");
      auto kind = parse_enum(f[2], kAllEntityKinds);
      auto domain = parse_enum(f[3], kAllDomains);
      if (!kind || !domain) fail(ErrorCode::SchemaViolation, f[1] + ": unknown entity kind or domain");
      g.insert_vertex_checked(Vertex{f[1], *kind, *domain, read_props(f, 4, f[1])});
    } else if (f[0] == "edge") {
      if (f.size() < 5) fail(ErrorCode::SchemaViolation, where() + ": malformed edge record");
      auto kind = parse_enum(f[2], kAllRelationKinds);
      if (!kind) fail(ErrorCode::SchemaViolation, f[1] + ": unknown relation kind");
      edges.push_back(Edge{f[1], *kind, f[3], f[4], read_props(f, 5, f[1])});
    } else {
      fail(ErrorCode::SchemaViolation, where() + ": unknown record type '" + f[0] + "'");
    }
  }
  for (const auto& e : edges) g.insert_edge_checked(e);

  if (save_text(g) != doc) fail(ErrorCode::SchemaViolation, "document is not in canonical form");
  return g;
}

inline void save(const PropertyGraph& g, const std::filesystem::path& path) { text::write_file(path, save_text(g)); }

inline PropertyGraph load(const std::filesystem::path& path) { return load_text(text::read_file(path)); }

/// Single-writer / multi-reader wrapper around a graph value.
class SharedGraph {
 public:
  explicit SharedGraph(PropertyGraph g = PropertyGraph()) : graph_(std::move(g)) {}

  template <typename Fn>
  decltype(auto) read(Fn&& fn) const {
    std::shared_lock lock(mutex_);
    return std::forward<Fn>(fn)(static_cast<const PropertyGraph&>(graph_));
  }

  template <typename Fn>
  decltype(auto) write(Fn&& fn) {
    std::unique_lock lock(mutex_);
    return std::forward<Fn>(fn)(graph_);
  }

  PropertyGraph snapshot() const {
    std::shared_lock lock(mutex_);
    return graph_;
  }

 private:
  mutable std::shared_mutex mutex_;
  PropertyGraph graph_;
};

}  // namespace qrock::graph
