#include <gtest/gtest.h>

#include <cmath>

#include "qrock/cores.hpp"
#include "qrock/fixtures.hpp"

using namespace qrock;
using namespace qrock::cores;
using cluster::Vector;

namespace {

cluster::ClusterSpace dir_space(const std::vector<double>& centroids) {
  cluster::ClusterSpace cs;
  cs.feature = "dir";
  cs.k = centroids.size();
  for (std::size_t j = 0; j < centroids.size(); ++j) {
    cluster::Cluster c;
    c.index = j;
    c.center = {centroids[j]};
    c.centroid = {centroids[j]};
    cs.clusters.push_back(c);
  }
  return cs;
}

cluster::GaussianMixture isotropic(const Vector& mean, double var) {
  const auto d = static_cast<Eigen::Index>(mean.size());
  return cluster::GaussianMixture({1.0}, {Eigen::Map<const Eigen::VectorXd>(mean.data(), d)},
                                  {Eigen::MatrixXd::Identity(d, d) * var});
}

struct Fixture {
  sim::RobotSpec arm, base, combined;
  cluster::ClusterStore arm_store, base_store;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    graph::PropertyGraph g;
    x.arm = sim::robot_from_assembly(g, fixtures::build_arm(g));
    x.base = sim::robot_from_assembly(g, fixtures::build_base(g));
    x.combined = sim::robot_from_assembly(g, fixtures::build_arm_on_base(g));
    const sim::SimConfig sim{0.02, 4.0};
    const auto arm_set = explore::explore(x.arm, {600, 2, cfm::ParameterSpace::for_robot(x.arm), sim, 1});
    const auto base_set = explore::explore(x.base, {1500, 3, cfm::ParameterSpace::for_robot(x.base), sim, 1});
    cluster::ClusterConfig ac;
    ac.requests = {{"start", 4}, {"end", 4}, {"dir", 3}};
    x.arm_store = cluster::cluster_set(arm_set, ac);
    cluster::ClusterConfig bc;
    bc.requests = {{"start", 1}, {"end", 4}, {"dir", 2}};
    x.base_store = cluster::cluster_set(base_set, bc);
    return x;
  }();
  return f;
}

// A directness range that admits exactly the highest arm centroid.
BehaviorModel direct_model() {
  double best = 0.0;
  for (const auto& c : fixture().arm_store.at("dir").clusters) best = std::max(best, c.centroid[0]);
  return {"reach", {Constraint::min_max("dir", best - 1e-6, 1.0), Constraint::variable("start"), Constraint::variable("end")}};
}

Targets arm_targets() { return {{"start", {0, 0, 0}}, {"end", {0.1, 0.3, 0.2}}}; }

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::NotFound;
}

}  // namespace

TEST(Cc, MinMaxChecksTheCentroid) {
  const auto cs = dir_space({0.9, 0.5});
  const auto c = Constraint::min_max("dir", 0.8, 1.0);
  EXPECT_TRUE(cc(cs, 0, c));
  EXPECT_FALSE(cc(cs, 1, c));
  // Strict bounds.
  EXPECT_FALSE(cc(dir_space({0.8}), 0, c));
}

TEST(Cc, VariablePicksTheNearestCentroid) {
  const auto v = Constraint::variable("dir");
  EXPECT_TRUE(cc(dir_space({0.3}), 0, v, Vector{0.9}));
  const auto cs = dir_space({0.2, 0.6, 0.6});
  EXPECT_TRUE(cc(cs, 1, v, Vector{0.7}));
  EXPECT_FALSE(cc(cs, 2, v, Vector{0.7}));  // tie goes to the lower index
  EXPECT_FALSE(cc(cs, 0, v, Vector{0.7}));
  EXPECT_EQ(code_of([&] { cc(cs, 0, v); }), ErrorCode::MissingTarget);
  EXPECT_EQ(code_of([&] { cc(cs, 0, Constraint::variable("end"), Vector{0.1}); }), ErrorCode::InvalidArgument);
}

TEST(BehaviorModel, TextRoundTripAndValidation) {
  const auto bm = reach_model();
  EXPECT_EQ(BehaviorModel::from_text(bm.to_text()), bm);
  EXPECT_EQ(code_of([] { BehaviorModel{"x", {Constraint::min_max("dir", 1.0, 0.5)}}.check(); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] {
              BehaviorModel{"x", {Constraint::variable("end"), Constraint::min_max("end", 0, 1)}}.check();
            }),
            ErrorCode::InvalidArgument);
}

TEST(CreateCore, LinksExactlyTheQualifyingClusters) {
  const auto& store = fixture().arm_store;
  const auto& cs = store.at("dir");
  for (double lo : {0.0, 0.2, 0.4, 0.6}) {
    const BehaviorModel bm{"reach", {Constraint::min_max("dir", lo, 1.0)}};
    // Exhaustive centroid scan.
    std::vector<std::size_t> expected;
    for (const auto& c : cs.clusters)
      if (lo < c.centroid[0] && c.centroid[0] < 1.0) expected.push_back(c.index);
    if (expected.empty()) {
      EXPECT_EQ(code_of([&] { create_core(store, bm); }), ErrorCode::UnsatisfiableConstraint);
      continue;
    }
    const auto core = create_core(store, bm);
    EXPECT_EQ(core.links.at("dir"), expected);
    EXPECT_EQ(core.annotation.labels, std::set<std::string>{"reach"});
    EXPECT_EQ(core.annotation.constraints, bm.constraints);
  }
  EXPECT_EQ(code_of([&] { create_core(store, {"reach", {Constraint::min_max("dir", 0.999, 1.0)}}); }),
            ErrorCode::UnsatisfiableConstraint);
  EXPECT_TRUE(create_core(store, unconstrained_reach_model()).links.empty());
  EXPECT_EQ(code_of([&] { create_core(fixture().base_store, {"x", {Constraint::variable("speed")}}); }),
            ErrorCode::InvalidArgument);
}

TEST(Annotate, AppendsLabelsUnderPolicy) {
  const auto core = create_core(fixture().arm_store, direct_model());
  auto ontology = onto::Ontology::defaults();
  const auto same = annotate_core(core, {"reach"}, ontology, true);
  EXPECT_EQ(same, core);

  EXPECT_EQ(code_of([&] { annotate_core(core, {"reach-planar"}, ontology, true); }),
            ErrorCode::UnknownOntologyPolicyViolation);
  const auto planar = annotate_core(core, {"reach-planar"}, ontology, false);
  EXPECT_EQ(planar.annotation.labels.size(), 2u);
  EXPECT_EQ(planar.version, core.version + 1);
  EXPECT_TRUE(ontology.subsumes("reach", "reach-planar"));
  EXPECT_EQ(code_of([&] { annotate_core(planar, {}, ontology, true, {"reach", "reach-planar"}); }),
            ErrorCode::EmptyAnnotation);
}

TEST(Swarm, ProductOfTwoGaussiansPeaksAtThePrecisionWeightedMean) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const double m1 = rng.uniform(-2, 2), m2 = rng.uniform(-2, 2);
    const double v1 = rng.uniform(0.05, 1.0), v2 = rng.uniform(0.05, 1.0);
    const auto g1 = isotropic({m1}, v1), g2 = isotropic({m2}, v2);
    SamplerConfig cfg;
    cfg.seed = trial;
    const auto r = particle_swarm([&](const Vector& x) { return g1.log_density(x) + g2.log_density(x); }, {-4.0},
                                  {4.0}, cfg);
    const double expected = (m1 / v1 + m2 / v2) / (1 / v1 + 1 / v2);
    EXPECT_NEAR(r.best[0], expected, 1e-3 * std::max(1.0, std::abs(expected)));
    for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_GE(r.trace[i], r.trace[i - 1]);
  }
}

TEST(Swarm, SingleGaussianPeaksAtItsMeanWhateverTheScale) {
  const Vector mean{0.5, -1.0, 2.0};
  const auto g = isotropic(mean, 0.3);
  SamplerConfig cfg;
  const Vector lo(3, -3.0), hi(3, 3.0);
  const auto a = particle_swarm([&](const Vector& x) { return g.log_density(x); }, lo, hi, cfg);
  // Scaling the density by a constant shifts every log value alike.
  const auto b = particle_swarm([&](const Vector& x) { return g.log_density(x) + 7.25; }, lo, hi, cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(a.best[i], mean[i], 1e-4);
    EXPECT_NEAR(b.best[i], a.best[i], 1e-6);
  }
  EXPECT_NEAR(b.value - a.value, 7.25, 1e-9);
  EXPECT_LE(a.alternates.size(), cfg.alternates);
  for (std::size_t i = 1; i < a.alternates.size(); ++i) EXPECT_LE(a.alternates[i].second, a.alternates[i - 1].second);

  cfg.workers = 3;
  EXPECT_EQ(particle_swarm([&](const Vector& x) { return g.log_density(x); }, lo, hi, cfg).best, a.best);
}

TEST(SampleCore, ReportsAndReproduces) {
  const auto& store = fixture().arm_store;
  const auto core = create_core(store, direct_model());
  auto cfg = core.sampler;
  cfg.iterations = 60;
  const auto r = sample_core(core, store, arm_targets(), cfg);
  EXPECT_TRUE(store.space.contains(r.theta));
  EXPECT_GE(r.log_density, r.threshold);
  EXPECT_EQ(r.capability.size(), 201u);
  ASSERT_EQ(r.report.size(), 3u);
  EXPECT_EQ(r.report[0].clusters, core.links.at("dir"));
  EXPECT_EQ(r.report[0].value, cluster::feature_directness(store.spec, r.capability));
  EXPECT_EQ(r.report[0].satisfied, within(r.report[0].constraint, r.report[0].value));
  ASSERT_TRUE(r.report[2].target.has_value());
  EXPECT_NEAR(r.report[2].target_distance, cluster::distance(r.report[2].value, Vector{0.1, 0.3, 0.2}), 1e-15);
  EXPECT_DOUBLE_EQ(joint_log_density(resolve_factors(core, store, arm_targets()), r.theta), r.log_density);

  EXPECT_EQ(sample_core(core, store, arm_targets(), cfg).theta, r.theta);
  cfg.seed = 99;
  EXPECT_NE(sample_core(core, store, arm_targets(), cfg).theta, r.theta);

  EXPECT_EQ(code_of([&] { sample_core(core, store, {{"end", {0.1, 0.3, 0.2}}}, cfg); }), ErrorCode::MissingTarget);
  EXPECT_EQ(code_of([&] { sample_core(core, fixture().base_store, arm_targets(), cfg); }), ErrorCode::SchemaViolation);
}

TEST(SampleCore, RejectsBelowTheFloor) {
  // Two tight, far-apart models: their joint optimum is improbable under both.
  auto store = fixture().arm_store;
  const std::size_t d = store.space.dimension();
  for (auto& cs : store.spaces) {
    cs.clusters.resize(1);
    cs.k = 1;
  }
  auto& start = store.spaces[0].clusters[0];
  auto& end = store.spaces[1].clusters[0];
  start.model = isotropic(Vector(d, -1.0), 0.01);
  end.model = isotropic(Vector(d, 1.0), 0.01);
  start.threshold = start.model.log_density(Vector(d, -1.0)) - 20.0;
  end.threshold = end.model.log_density(Vector(d, 1.0)) - 20.0;
  const auto core = create_core(store, unconstrained_reach_model());
  EXPECT_EQ(code_of([&] { sample_core(core, store, arm_targets()); }), ErrorCode::NoFeasibleSample);
}

TEST(Parallel, MergedRunIsTheSuperpositionOfSubsystems) {
  const auto& f = fixture();
  const auto arm_core = create_core(f.arm_store, unconstrained_reach_model());
  const auto base_core = create_core(f.base_store, unconstrained_reach_model());
  const std::vector<CoreRun> runs{{&arm_core, &f.arm_store, arm_targets()},
                                  {&base_core, &f.base_store, {{"start", Vector(7, 0.0)}, {"end", {1.0, 0.5, 0.0}}}}};
  const auto r = execute_parallel(runs, f.combined, 4);
  ASSERT_EQ(r.parts.size(), 2u);
  ASSERT_EQ(r.capability.size(), r.parts[0].capability.size());
  for (std::size_t k = 0; k < r.capability.size(); ++k) {
    const auto& pose = r.parts[1].capability.states[k].observation.base;
    const auto expected = sim::apply_base_pose(pose, r.parts[0].capability.states[k].observation.end_effector);
    EXPECT_EQ(r.capability.states[k].observation.end_effector, expected) << k;
  }
  EXPECT_EQ(code_of([&] { execute_parallel({runs[0], runs[0]}, f.combined, 4); }), ErrorCode::OverlappingActuators);

  // One core driving its whole robot reproduces sample_core.
  const auto single = execute_parallel({runs[0]}, f.arm, 4);
  auto cfg = arm_core.sampler;
  cfg.seed = derive_seed(4, 0);
  EXPECT_EQ(single.capability, sample_core(arm_core, f.arm_store, arm_targets(), cfg).capability);
}

TEST(CorePersistence, RoundTrip) {
  auto ontology = onto::Ontology::defaults();
  const auto core = annotate_core(create_core(fixture().arm_store, direct_model()), {"reach-planar"}, ontology, false);
  EXPECT_EQ(core_from_text(core_to_text(core)), core);
  EXPECT_EQ(code_of([] { core_from_text("format\tsomething-else\n"); }), ErrorCode::SchemaViolation);
}
