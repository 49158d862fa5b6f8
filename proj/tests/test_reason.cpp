#include <gtest/gtest.h>

#include <algorithm>
#include <optional>
#include <random>

#include "qrock/reason.hpp"

using namespace qrock;
using namespace qrock::reason;

namespace {

cores::CognitiveCore make_core(const std::string& robot, const std::string& label,
                               std::vector<cores::Constraint> constraints = {}) {
  cores::CognitiveCore c;
  c.robot = robot;
  c.id = cores::default_core_id(robot, label);
  c.behavior.label = label;
  c.annotation.labels = {label};
  c.annotation.constraints = std::move(constraints);
  return c;
}

template <class F>
std::optional<ErrorCode> code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// Random tree over terms t1..tn below the root; parent[i] < i.
struct RandomTree {
  onto::Ontology o;
  std::vector<std::size_t> parent;
  std::vector<std::string> names;
};

RandomTree random_tree(std::size_t n, std::mt19937_64& rng) {
  RandomTree t;
  t.names.push_back(t.o.root());
  t.parent.push_back(0);
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t p = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    t.names.push_back("t" + std::to_string(i));
    t.parent.push_back(p);
    t.o.add(t.names[i], t.names[p]);
  }
  return t;
}

// Ancestor test by walking the parent array.
bool is_ancestor_or_self(const RandomTree& t, std::size_t general, std::size_t specific) {
  for (std::size_t x = specific;; x = t.parent[x]) {
    if (x == general) return true;
    if (x == 0) return false;
  }
}

}  // namespace

TEST(Ontology, ReflexiveTransitiveAndSiblings) {
  const auto o = onto::Ontology::defaults();
  EXPECT_TRUE(o.subsumes("reach", "reach"));
  EXPECT_TRUE(o.subsumes("move", "reach"));
  EXPECT_TRUE(o.subsumes("behavior", "reach"));
  EXPECT_FALSE(o.subsumes("reach", "move"));
  EXPECT_FALSE(o.subsumes("reach", "navigate"));
  EXPECT_FALSE(o.subsumes("manipulate", "reach"));
  EXPECT_EQ(code_of([&] { o.subsumes("fly", "reach"); }), ErrorCode::UnknownTerm);
}

TEST(Ontology, CyclesAndBadInputRejected) {
  auto o = onto::Ontology::defaults();
  EXPECT_EQ(code_of([&] { o.add("move", "reach"); }), ErrorCode::OntologyCycle);
  EXPECT_EQ(code_of([&] { o.add("behavior", "move"); }), ErrorCode::OntologyCycle);
  EXPECT_EQ(code_of([&] { o.add("x", "nowhere"); }), ErrorCode::UnknownTerm);
  EXPECT_EQ(code_of([&] { o.add("two words", "move"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { onto::Ontology::from_text("behavior\t\na\tb\nb\ta\n"); }), ErrorCode::OntologyCycle);
  EXPECT_EQ(code_of([] { onto::Ontology::from_text("a\tb\n"); }), ErrorCode::SchemaViolation);
}

TEST(Ontology, TextRoundTripInAnyLineOrder) {
  auto o = onto::Ontology::defaults();
  o.add("reach", "manipulate");  // second parent
  EXPECT_EQ(onto::Ontology::from_text(o.to_text()), o);
  const auto shuffled = onto::Ontology::from_text("behavior\nreach\tmove\nmove\tbehavior\n");
  EXPECT_TRUE(shuffled.subsumes("behavior", "reach"));
}

TEST(OntologyProperty, SubsumesIsAPartialOrderMatchingTheAncestorRelation) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_tree(12, rng);
    const std::size_t n = t.names.size();
    for (std::size_t a = 0; a < n; ++a) {
      EXPECT_TRUE(t.o.subsumes(t.names[a], t.names[a]));
      for (std::size_t b = 0; b < n; ++b) {
        const bool ab = t.o.subsumes(t.names[a], t.names[b]);
        ASSERT_EQ(ab, is_ancestor_or_self(t, a, b)) << t.names[a] << " " << t.names[b];
        if (a != b && ab) {
          EXPECT_FALSE(t.o.subsumes(t.names[b], t.names[a]));
        }
        for (std::size_t c = 0; c < n; ++c) {
          if (ab && t.o.subsumes(t.names[b], t.names[c])) {
            EXPECT_TRUE(t.o.subsumes(t.names[a], t.names[c]));
          }
        }
      }
    }
  }
}

TEST(Vocabulary, DefaultsAndTextRoundTrip) {
  auto v = PlanningVocabulary::defaults();
  for (const char* p : {"grasp", "navigate", "perceive", "pick", "reach", "release"}) {
    ASSERT_TRUE(v.is_primitive(p));
    EXPECT_EQ(v.task(p).annotation.labels, std::set<std::string>{p});
  }
  v.add_primitive("reach_straight", {{"reach"}, {cores::Constraint::min_max("dir", 0.9, 1.0)}});
  v.add_method("fetch", {"navigate", "reach", "grasp"});
  const auto back = PlanningVocabulary::from_text(v.to_text());
  EXPECT_EQ(back.to_text(), v.to_text());
  EXPECT_EQ(back.task("reach_straight").annotation.constraints.at(0).lo, 0.9);
  EXPECT_EQ(code_of([] { PlanningVocabulary::from_text("bogus\tline\n"); }), ErrorCode::SchemaViolation);
  EXPECT_EQ(code_of([&] { v.add_method("reach", {"grasp"}); }), ErrorCode::InvalidArgument);
}

TEST(Decompose, PrimitiveFetchAndTwoMethods) {
  auto v = PlanningVocabulary::defaults();
  EXPECT_EQ(decompose(v, {"reach"}), (std::vector<Sequence>{{"reach"}}));

  v.add_method("fetch", {"navigate", "reach", "grasp"});
  EXPECT_EQ(decompose(v, {"fetch"}), (std::vector<Sequence>{{"navigate", "reach", "grasp"}}));

  v.add_method("fetch", {"perceive", "pick"});
  EXPECT_EQ(decompose(v, {"fetch"}),
            (std::vector<Sequence>{{"navigate", "reach", "grasp"}, {"perceive", "pick"}}));

  // Mission order is kept and alternatives multiply out, first task outermost.
  EXPECT_EQ(decompose(v, {"fetch", "release"}),
            (std::vector<Sequence>{{"navigate", "reach", "grasp", "release"}, {"perceive", "pick", "release"}}));
}

TEST(Decompose, NestedCompoundsAndCycleGuard) {
  auto v = PlanningVocabulary::defaults();
  v.add_method("approach", {"perceive", "navigate"});
  v.add_method("fetch", {"approach", "pick"});
  v.add_method("loop", {"loop", "reach"});  // never terminates
  v.add_method("loop", {"reach"});
  EXPECT_EQ(decompose(v, {"fetch"}), (std::vector<Sequence>{{"perceive", "navigate", "pick"}}));
  EXPECT_EQ(decompose(v, {"loop"}), (std::vector<Sequence>{{"reach"}}));

  v.add_method("spin", {"spin"});
  EXPECT_EQ(code_of([&] { decompose(v, {"spin"}); }), ErrorCode::NoMethod);
  EXPECT_EQ(code_of([&] { decompose(v, {"fly"}); }), ErrorCode::UnknownTask);
  EXPECT_EQ(code_of([&] { decompose(v, {}); }), ErrorCode::InvalidArgument);
}

TEST(MatchCores, LabelsAndRanges) {
  const auto o = onto::Ontology::defaults();
  const auto v = PlanningVocabulary::defaults();
  std::vector<cores::CognitiveCore> store{make_core("arm", "reach", {cores::Constraint::min_max("dir", 0.8, 1.0)})};

  EXPECT_EQ(match_cores(v.task("reach"), store, o).size(), 1u);
  EXPECT_TRUE(match_cores(v.task("grasp"), store, o).empty());

  // A general task label accepts a more specific core unless matching is exact.
  const AnnotatedTask move{"move", {{"move"}, {}}};
  EXPECT_EQ(match_cores(move, store, o).size(), 1u);
  EXPECT_TRUE(match_cores(move, store, o, /*exact=*/true).empty());

  const AnnotatedTask unknown{"fly", {{"fly"}, {}}};
  EXPECT_EQ(code_of([&] { match_cores(unknown, store, o); }), ErrorCode::UnknownTerm);
}

TEST(MatchCores, RangeIntersectionAgreesWithIntervalOracle) {
  const auto o = onto::Ontology::defaults();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    std::vector<cores::CognitiveCore> store{make_core("arm", "reach", {cores::Constraint::min_max("dir", a, b)})};
    const AnnotatedTask task{"reach", {{"reach"}, {cores::Constraint::min_max("dir", c, d)}}};
    // Two open intervals share a point iff neither lies entirely to one side.
    const bool overlap = !(b <= c || d <= a);
    EXPECT_EQ(match_cores(task, store, o).size() == 1, overlap);
  }
  std::vector<cores::CognitiveCore> store{make_core("arm", "reach", {cores::Constraint::min_max("dir", 0.8, 1.0)})};
  const AnnotatedTask tight{"reach", {{"reach"}, {cores::Constraint::min_max("dir", 0.9, 1.0)}}};
  EXPECT_EQ(match_cores(tight, store, o).size(), 1u);
  const AnnotatedTask other_space{"reach", {{"reach"}, {cores::Constraint::min_max("end", 5.0, 6.0)}}};
  EXPECT_EQ(match_cores(other_space, store, o).size(), 1u);
}

TEST(MatchCoresProperty, AddingSubclassEdgesNeverRemovesMatches) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    auto t = random_tree(10, rng);
    std::uniform_int_distribution<std::size_t> pick(0, t.names.size() - 1);
    std::vector<cores::CognitiveCore> store;
    for (int k = 0; k < 6; ++k) store.push_back(make_core("r" + std::to_string(k), t.names[pick(rng)]));
    std::vector<std::vector<std::size_t>> before;
    std::vector<AnnotatedTask> tasks;
    for (const auto& name : t.names) tasks.push_back({name, {{name}, {}}});
    auto snapshot = [&] {
      std::vector<std::vector<std::size_t>> out;
      for (const auto& task : tasks) {
        std::vector<std::size_t> idx;
        for (const auto* c : match_cores(task, store, t.o)) idx.push_back(static_cast<std::size_t>(c - store.data()));
        out.push_back(idx);
      }
      return out;
    };
    before = snapshot();
    for (int e = 0; e < 5; ++e) {
      const auto a = pick(rng), b = pick(rng);
      if (a == 0 || a == b || t.o.subsumes(t.names[a], t.names[b])) continue;  // would be a cycle
      t.o.add(t.names[a], t.names[b]);
      const auto after = snapshot();
      for (std::size_t i = 0; i < tasks.size(); ++i)
        EXPECT_TRUE(std::includes(after[i].begin(), after[i].end(), before[i].begin(), before[i].end()));
      before = after;
    }
  }
}

TEST(SolveMission, ReachGraspAndEmptyStore) {
  const auto o = onto::Ontology::defaults();
  const auto v = PlanningVocabulary::defaults();
  std::vector<cores::CognitiveCore> store{make_core("NewShoppingCart", "reach")};

  const auto s = solve_mission({"reach"}, v, store, o);
  EXPECT_EQ(s.robot, "NewShoppingCart");
  EXPECT_EQ(s.cores, std::vector<std::string>{"NewShoppingCart.reach"});

  try {
    solve_mission({"reach", "grasp"}, v, store, o);
    FAIL() << "expected NoCapableRobot";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoCapableRobot);
    EXPECT_NE(std::string(e.what()).find("grasp"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).find("reach"), std::string::npos);
  }
  EXPECT_EQ(code_of([&] { solve_mission({"reach"}, v, {}, o); }), ErrorCode::NoCapableRobot);
}

TEST(SolveMission, SingleRobotDeterministicOrder) {
  const auto o = onto::Ontology::defaults();
  auto v = PlanningVocabulary::defaults();
  v.add_method("fetch", {"navigate", "reach", "grasp"});
  v.add_method("fetch", {"reach", "pick"});

  // Robot "b" can do the first method; "a" only the second. Method order wins.
  std::vector<cores::CognitiveCore> store{make_core("b", "navigate"), make_core("b", "reach"), make_core("b", "grasp"),
                                          make_core("a", "reach"), make_core("a", "pick")};
  auto s = solve_mission({"fetch"}, v, store, o);
  EXPECT_EQ(s.robot, "b");
  EXPECT_EQ(s.decomposition, 0u);
  EXPECT_EQ(s.cores, (std::vector<std::string>{"b.navigate", "b.reach", "b.grasp"}));

  // Both robots cover the only method: the lower id is chosen.
  store.push_back(make_core("a", "navigate"));
  store.push_back(make_core("a", "grasp"));
  s = solve_mission({"fetch"}, v, store, o);
  EXPECT_EQ(s.robot, "a");

  // Split capabilities across robots are not combined.
  std::vector<cores::CognitiveCore> split{make_core("a", "reach"), make_core("b", "grasp")};
  try {
    solve_mission({"reach", "grasp"}, v, split, o);
    FAIL() << "expected NoCapableRobot";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoCapableRobot);
    EXPECT_NE(std::string(e.what()).find("single robot"), std::string::npos);
  }
}

TEST(SolveMissionProperty, ChosenRobotMatchesEveryTask) {
  const auto o = onto::Ontology::defaults();
  auto v = PlanningVocabulary::defaults();
  v.add_method("fetch", {"navigate", "reach", "grasp"});
  v.add_method("fetch", {"perceive", "pick"});
  const std::vector<std::string> labels{"grasp", "navigate", "perceive", "pick", "reach", "release", "move"};
  std::mt19937_64 rng(9);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<cores::CognitiveCore> store;
    for (int k = 0; k < 6; ++k)
      store.push_back(make_core("r" + std::to_string(rng() % 3), labels[rng() % labels.size()]));
    Solution s;
    try {
      s = solve_mission({"fetch"}, v, store, o);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::NoCapableRobot);
      continue;
    }
    ++solved;
    std::vector<cores::CognitiveCore> own;
    for (const auto& c : store)
      if (c.robot == s.robot) own.push_back(c);
    for (const auto& t : s.tasks) EXPECT_FALSE(match_cores(v.task(t), own, o).empty()) << t;
  }
  EXPECT_GT(solved, 0);
}

TEST(Mission, TextDocument) {
  EXPECT_EQ(mission_from_text("# fetch the cup\nreach\n\n grasp \n"), (Sequence{"reach", "grasp"}));
}
