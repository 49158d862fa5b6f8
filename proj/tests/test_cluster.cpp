#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "qrock/cluster.hpp"
#include "qrock/fixtures.hpp"

using namespace qrock;
using namespace qrock::cluster;

namespace {

sim::RobotSpec arm() {
  graph::PropertyGraph g;
  return sim::robot_from_assembly(g, fixtures::build_arm(g));
}

sim::Capability path_capability(const std::vector<sim::Vec3>& points) {
  sim::Capability cap;
  for (std::size_t i = 0; i < points.size(); ++i) {
    sim::WorldState s;
    s.observation.end_effector = points[i];
    cap.times.push_back(static_cast<double>(i));
    cap.states.push_back(s);
  }
  return cap;
}

explore::CapabilitySet small_set(std::size_t n, std::uint64_t seed) {
  const auto spec = arm();
  return explore::explore(spec, {n, seed, cfm::ParameterSpace::for_robot(spec), sim::SimConfig{0.02, 4.0}, 1});
}

// Brute-force optimum for two labelled blobs: the assignment that puts every
// point with the nearer blob mean.
std::vector<std::size_t> nearer_blob(const std::vector<Vector>& points, const Vector& a, const Vector& b) {
  std::vector<std::size_t> out;
  for (const auto& p : points) out.push_back(distance(p, a) <= distance(p, b) ? 0 : 1);
  return out;
}

}  // namespace

TEST(Features, StartAndEndOfAHeldPose) {
  const auto spec = arm();
  const auto space = cfm::ParameterSpace::for_robot(spec);
  const auto cap = cfm::simulate(space, std::vector<double>(15, 0.0), spec, {0.02, 4.0});
  EXPECT_EQ(feature_start(spec, cap), (Vector{0, 0, 0}));
  // Every joint at zero stretches the chain along x.
  const auto end = feature_end(spec, cap);
  EXPECT_NEAR(end[0], spec.reach(), 1e-12);
  EXPECT_NEAR(end[1], 0.0, 1e-12);
  EXPECT_NEAR(end[2], 0.0, 1e-12);
  EXPECT_EQ(feature_directness(spec, cap), Vector{1.0});
}

TEST(Features, MatchTheExportedTable) {
  const auto spec = arm();
  const auto space = cfm::ParameterSpace::for_robot(spec);
  const std::vector<double> theta{0.1, 0.5, 0.0, 0.2, 0.0, -0.2, 0.3, 0.1, 0.0, 0.0, 0.0, -0.4, 0.0, 0.0, 0.1};
  const auto cap = cfm::simulate(space, theta, spec, {0.02, 4.0});
  const auto table = sim::read_table(sim::export_table(spec, cap, {}));
  const auto& first = table.rows.front();
  const auto& last = table.rows.back();
  const auto start = feature_start(spec, cap);
  for (std::size_t j = 0; j < 3; ++j)
    EXPECT_EQ(start[j], first[table.column("q." + spec.joints()[j].name)]) << j;
  const auto end = feature_end(spec, cap);
  EXPECT_EQ(end[0], last[table.column("ee_x")]);
  EXPECT_EQ(end[1], last[table.column("ee_y")]);
  EXPECT_EQ(end[2], last[table.column("ee_z")]);
  // Purity: repeated evaluation is bit-identical.
  EXPECT_EQ(feature_directness(spec, cap), feature_directness(spec, cap));
}

TEST(Features, DirectnessOfSyntheticPaths) {
  using sim::Vec3;
  // Out and half way back: chord 1, arc 3.
  EXPECT_NEAR(directness({Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(1, 0, 0)}), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(directness({Vec3(0, 0, 0), Vec3(0.5, 0.5, 0), Vec3(1, 1, 0)}), 1.0);
  EXPECT_EQ(directness({Vec3(1, 2, 3), Vec3(1, 2, 3)}), 1.0);
  EXPECT_LT(directness({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0)}), 1.0);
  EXPECT_EQ(feature_directness(arm(), path_capability({Vec3(0, 0, 0), Vec3(0, 0, 1)})), Vector{1.0});
}

TEST(FeaturesProperty, DirectnessNeverExceedsOne) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<sim::Vec3> path(2 + rng.index(20));
    for (auto& p : path) p = sim::Vec3(rng.normal(), rng.normal(), rng.normal());
    const double d = directness(path);
    EXPECT_GT(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
}

TEST(Features, UnknownSpace) {
  try {
    feature_space("speed");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(KMeans, SingleClusterIsTheMean) {
  const std::vector<Vector> pts{{1, 2}, {3, 6}, {5, 1}, {-1, 3}};
  const auto r = kmeans(pts, 1, 7);
  EXPECT_NEAR(r.centers[0][0], 2.0, 1e-15);
  EXPECT_NEAR(r.centers[0][1], 3.0, 1e-15);
}

TEST(KMeans, TwoSeparatedBlobs) {
  Rng rng(11);
  std::vector<Vector> pts;
  const Vector a{-5, 0}, b{5, 1};
  for (int i = 0; i < 200; ++i) {
    const auto& m = i % 2 ? a : b;
    pts.push_back({m[0] + 0.5 * rng.normal(), m[1] + 0.5 * rng.normal()});
  }
  const auto r = kmeans(pts, 2, 3);
  const auto oracle = nearer_blob(pts, a, b);
  // Cluster ids are arbitrary: compare up to relabelling.
  const bool flip = r.assignment[0] != oracle[0];
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(r.assignment[i] ^ (flip ? 1u : 0u), oracle[i]) << i;
}

TEST(KMeans, KTooLarge) {
  const std::vector<Vector> pts{{1, 1}, {1, 1}, {2, 2}};
  try {
    kmeans(pts, 3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KTooLarge);
  }
  EXPECT_NO_THROW(kmeans(pts, 2, 1));
}

TEST(KMeansProperty, MonotoneDeterministicAndPartitioning) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vector> pts(30 + rng.index(100), Vector(1 + rng.index(4)));
    for (auto& p : pts)
      for (auto& v : p) v = rng.uniform(-3, 3);
    const std::size_t k = 1 + rng.index(8);
    const auto r = kmeans(pts, k, trial);
    for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
    ASSERT_EQ(r.assignment.size(), pts.size());
    std::vector<std::size_t> counts(k, 0);
    for (auto a : r.assignment) {
      ASSERT_LT(a, k);
      ++counts[a];
    }
    for (auto c : counts) EXPECT_GT(c, 0u);
    EXPECT_EQ(kmeans(pts, k, trial).assignment, r.assignment);
  }
}

TEST(Mixture, RecoversAGaussianMean) {
  Rng rng(21);
  const std::size_t n = 2000;
  const Vector mu{1.0, -2.0, 0.5}, sd{0.5, 2.0, 1.0};
  std::vector<Vector> rows(n, Vector(3));
  for (auto& r : rows)
    for (std::size_t i = 0; i < 3; ++i) r[i] = mu[i] + sd[i] * rng.normal();
  FitConfig fc;
  fc.components = 1;
  const auto g = GaussianMixture::fit(rows, fc);
  Vector sample_mean(3, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < 3; ++i) sample_mean[i] += r[i] / static_cast<double>(n);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(g.means()[0](static_cast<Eigen::Index>(i)), sample_mean[i], 1e-9);
    EXPECT_NEAR(g.means()[0](static_cast<Eigen::Index>(i)), mu[i], 3.0 * sd[i] / std::sqrt(double(n)));
  }
}

TEST(Mixture, DensityAtTheMeanIsClosedForm) {
  // Single component with a known covariance.
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.3, 0.3, 0.5;
  Eigen::VectorXd mean(2);
  mean << 0.4, -1.0;
  const GaussianMixture g({1.0}, {mean}, {cov});
  const double det = 2.0 * 0.5 - 0.3 * 0.3;
  const double expected = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det);
  EXPECT_NEAR(g.log_density(Vector{0.4, -1.0}), expected, 1e-12);
  const auto m = g.mode();
  EXPECT_NEAR(m[0], 0.4, 1e-12);
  EXPECT_NEAR(m[1], -1.0, 1e-12);

  const auto back = GaussianMixture::from_text(g.to_text());
  EXPECT_EQ(back.log_density(Vector{0.1, 0.2}), g.log_density(Vector{0.1, 0.2}));
}

TEST(Mixture, DegenerateData) {
  const std::vector<Vector> rows{{1, 2}, {3, 4}};
  FitConfig fc;
  fc.components = 3;
  try {
    GaussianMixture::fit(rows, fc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateData);
  }
}

TEST(MixtureProperty, EmObjectiveIsMonotone) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 1 + rng.index(5);
    std::vector<Vector> rows(50 + rng.index(200), Vector(d));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (auto& v : rows[i]) v = (i % 3 == 0 ? 4.0 : 0.0) + rng.normal();
    FitConfig fc;
    fc.components = 1 + rng.index(4);
    fc.seed = trial;
    const auto g = GaussianMixture::fit(rows, fc);
    const auto& log = g.fit_log();
    ASSERT_FALSE(log.empty());
    for (std::size_t i = 1; i < log.size(); ++i) EXPECT_GE(log[i], log[i - 1] - 1e-9);
  }
}

TEST(Percentile, NearestRank) {
  EXPECT_EQ(percentile({5, 1, 3, 2, 4}, 0.01), 1.0);
  EXPECT_EQ(percentile({5, 1, 3, 2, 4}, 0.5), 3.0);
  EXPECT_EQ(percentile({5, 1, 3, 2, 4}, 1.0), 5.0);
}

class ClusterStoreTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    set_ = new explore::CapabilitySet(small_set(600, 4));
    ClusterConfig cfg;
    cfg.requests = {{"start", 4}, {"end", 4}, {"dir", 2}};
    store_ = new ClusterStore(cluster_set(*set_, cfg));
  }
  static void TearDownTestSuite() {
    delete store_;
    delete set_;
  }
  static explore::CapabilitySet* set_;
  static ClusterStore* store_;
};

explore::CapabilitySet* ClusterStoreTest::set_ = nullptr;
ClusterStore* ClusterStoreTest::store_ = nullptr;

TEST_F(ClusterStoreTest, EveryFeasibleMemberInExactlyOneCluster) {
  for (const auto& cs : store_->spaces) {
    std::vector<int> seen(set_->size(), 0);
    for (const auto& c : cs.clusters)
      for (auto m : c.members) ++seen[m];
    for (std::size_t i = 0; i < set_->size(); ++i) EXPECT_EQ(seen[i], set_->members[i].feasible ? 1 : 0) << cs.feature;
    for (std::size_t i = 1; i < cs.objective_trace.size(); ++i) EXPECT_LE(cs.objective_trace[i], cs.objective_trace[i - 1]);
  }
}

TEST_F(ClusterStoreTest, CentroidIsTheFeatureAtTheMode) {
  const auto& cs = store_->at("end");
  for (const auto& c : cs.clusters) {
    EXPECT_TRUE(store_->space.contains(c.mode));
    EXPECT_EQ(c.centroid, feature_end(store_->spec, cfm::simulate(store_->space, c.mode, store_->spec, store_->sim)));
  }
  try {
    store_->at("speed");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotFound);
  }
}

TEST_F(ClusterStoreTest, RoundTripAndTamperDetection) {
  const auto dir = std::filesystem::temp_directory_path() / "qrock_test_store";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_store(*store_, dir);
  const auto back = load_store(dir);
  ASSERT_EQ(back.spaces.size(), store_->spaces.size());
  for (std::size_t f = 0; f < back.spaces.size(); ++f) EXPECT_EQ(space_to_text(back.spaces[f]), space_to_text(store_->spaces[f]));
  EXPECT_EQ(back.set_hash, store_->set_hash);
  EXPECT_EQ(back.spec, store_->spec);

  auto doc = text::read_file(dir / "space-dir.txt");
  doc.back() = ' ';
  text::write_file(dir / "space-dir.txt", doc);
  EXPECT_THROW(load_store(dir), Error);
  std::filesystem::remove_all(dir);
}

TEST_F(ClusterStoreTest, SingleClusterAccuracyIsOne) {
  ClusterConfig cfg;
  cfg.requests = {{"dir", 1}};
  const auto one = cluster_set(*set_, cfg);
  EXPECT_EQ(model_accuracy(one, one.at("dir"), 0, 20, 3), 1.0);
  // A cluster's own accuracy is a fraction, reproducible for a seed.
  const auto& cs = store_->at("start");
  const double a = model_accuracy(*store_, cs, 0, 20, 9);
  EXPECT_GE(a, 0.0);
  EXPECT_LE(a, 1.0);
  EXPECT_EQ(model_accuracy(*store_, cs, 0, 20, 9, 3), a);
}
