#pragma once

// Feature functions, k-means clustering in feature space, and per-cluster
// Gaussian-mixture densities over the parameter space.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "qrock/cfm.hpp"
#include "qrock/error.hpp"
#include "qrock/explore.hpp"
#include "qrock/parallel.hpp"
#include "qrock/rng.hpp"
#include "qrock/simkin.hpp"
#include "qrock/text.hpp"

namespace qrock::cluster {

using Vector = std::vector<double>;

// ---- feature functions -----------------------------------------------------

/// Joint positions of the first state, followed by the base pose for
/// wheeled robots.
inline Vector feature_start(const sim::RobotSpec& spec, const sim::Capability& cap) {
  const auto& s = cap.states.front();
  Vector f = s.robot.actuator.q;
  if (spec.base()) f.insert(f.end(), {s.observation.base.x, s.observation.base.y, s.observation.base.theta});
  return f;
}

/// Final end-effector position in the world frame.
inline Vector feature_end(const sim::RobotSpec&, const sim::Capability& cap) {
  const auto& p = cap.states.back().observation.end_effector;
  return {p.x(), p.y(), p.z()};
}

/// Chord over arc length of an end-effector path; a path that never moves
/// counts as perfectly direct.
inline double directness(const std::vector<sim::Vec3>& path) {
  double arc = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) arc += (path[i] - path[i - 1]).norm();
  if (arc <= 0.0) return 1.0;
  return std::min(1.0, (path.back() - path.front()).norm() / arc);
}

inline Vector feature_directness(const sim::RobotSpec&, const sim::Capability& cap) {
  std::vector<sim::Vec3> path;
  path.reserve(cap.states.size());
  for (const auto& s : cap.states) path.push_back(s.observation.end_effector);
  return {directness(path)};
}

using FeatureFunction = std::function<Vector(const sim::RobotSpec&, const sim::Capability&)>;

struct FeatureSpace {
  std::string id;
  std::string label;
  FeatureFunction fn;
};

inline const std::vector<FeatureSpace>& feature_spaces() {
  static const std::vector<FeatureSpace> spaces{
      {"start", "start state", feature_start},
      {"end", "end effector end state", feature_end},
      {"dir", "end effector directness", feature_directness},
  };
  return spaces;
}

inline const FeatureSpace& feature_space(std::string_view id) {
  for (const auto& s : feature_spaces())
    if (s.id == id) return s;
  fail(ErrorCode::InvalidArgument, "unknown feature space '" + std::string(id) + "' (known: start, end, dir)");
}

/// Euclidean metric shared by every feature space.
inline double distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::DimensionMismatch, "feature dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// ---- k-means ---------------------------------------------------------------

struct KMeansResult {
  std::vector<Vector> centers;
  std::vector<std::size_t> assignment;
  double objective = 0.0;       // within-cluster sum of squares
  std::vector<double> trace;    // objective after each Lloyd iteration of the kept run
};

namespace detail {

inline double sq(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline std::size_t nearest(const std::vector<Vector>& centers, const Vector& p) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = sq(centers[c], p);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

inline KMeansResult lloyd(const std::vector<Vector>& points, std::size_t k, Rng& rng, std::size_t max_iterations) {
  const std::size_t n = points.size();
  KMeansResult r;
  // k-means++ seeding.
  r.centers.push_back(points[rng.index(n)]);
  std::vector<double> d2(n);
  while (r.centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = sq(points[i], r.centers[detail::nearest(r.centers, points[i])]);
      total += d2[i];
    }
    double u = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      u -= d2[i];
      if (u < 0.0) break;
    }
    r.centers.push_back(points[pick]);
  }

  const std::size_t dim = points.front().size();
  r.assignment.assign(n, k);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(r.centers, points[i]);
      changed |= c != r.assignment[i];
      r.assignment[i] = c;
    }
    // Empty clusters take the point farthest from its own center, drawn
    // from clusters that keep at least one other member.
    std::vector<std::size_t> counts(k, 0);
    for (auto a : r.assignment) ++counts[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[r.assignment[i]] < 2) continue;
        const double d = sq(points[i], r.centers[r.assignment[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --counts[r.assignment[far]];
      r.assignment[far] = c;
      counts[c] = 1;
      changed = true;
    }
    for (auto& center : r.centers) center.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dim; ++j) r.centers[r.assignment[i]][j] += points[i][j];
    for (std::size_t c = 0; c < k; ++c)
      for (auto& v : r.centers[c]) v /= static_cast<double>(counts[c]);
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) objective += sq(points[i], r.centers[r.assignment[i]]);
    r.trace.push_back(objective);
    r.objective = objective;
    if (!changed) break;
  }
  return r;
}

}  // namespace detail

/// Lloyd's algorithm from k-means++ seeds; the best of `restarts` runs is
/// kept. Deterministic given the seed.
inline KMeansResult kmeans(const std::vector<Vector>& points, std::size_t k, std::uint64_t seed,
                           std::size_t restarts = 5, std::size_t max_iterations = 300) {
  if (k == 0) fail(ErrorCode::InvalidArgument, "k must be at least 1");
  if (points.empty()) fail(ErrorCode::KTooLarge, "no points to cluster");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) fail(ErrorCode::DimensionMismatch, "points have different dimensions");
  std::set<Vector> distinct(points.begin(), points.end());
  if (k > distinct.size())
    fail(ErrorCode::KTooLarge,
         "k=" + std::to_string(k) + " exceeds the " + std::to_string(distinct.size()) + " distinct points");
  KMeansResult best;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
    Rng rng(derive_seed(seed, r));
    auto run = detail::lloyd(points, k, rng, max_iterations);
    if (r == 0 || run.objective < best.objective) best = std::move(run);
  }
  return best;
}

// ---- density models --------------------------------------------------------

/// Density over the parameter space; Gaussian mixtures are the one family
/// implemented, other families plug in behind this interface.
class DensityModel {
 public:
  virtual ~DensityModel() = default;
  virtual std::size_t dimension() const = 0;
  virtual double log_density(std::span<const double> theta) const = 0;
  virtual Vector sample(Rng& rng) const = 0;
  /// Highest-density point found by local ascent.
  virtual Vector mode() const = 0;
  virtual std::string to_text() const = 0;
};

struct FitConfig {
  std::size_t components = 3;
  std::size_t max_iterations = 200;
  double tolerance = 1e-8;        // stop when the objective gains less than this per sample
  double covariance_floor = 1e-6;
  std::uint64_t seed = 1;
};

class GaussianMixture final : public DensityModel {
 public:
  GaussianMixture() = default;

  GaussianMixture(std::vector<double> weights, std::vector<Eigen::VectorXd> means, std::vector<Eigen::MatrixXd> covariances)
      : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covariances)) {
    if (weights_.empty() || weights_.size() != means_.size() || means_.size() != covs_.size())
      fail(ErrorCode::InvalidArgument, "mixture parts disagree in count");
    prepare();
  }

  /// Expectation-maximization from a k-means start. Each covariance update
  /// Sigma = (S + lambda I) / N_k is the exact maximizer of the
  /// log-likelihood penalized by -lambda/2 tr(Sigma^-1), so the recorded
  /// penalized objective never decreases; lambda is the floor times the
  /// mean component size.
  static GaussianMixture fit(const std::vector<Vector>& rows, const FitConfig& config) {
    const std::size_t n = rows.size();
    const std::size_t K = config.components;
    if (K == 0) fail(ErrorCode::InvalidArgument, "mixture needs at least one component");
    if (n == 0 || K > n)
      fail(ErrorCode::DegenerateData,
           std::to_string(K) + " components requested for " + std::to_string(n) + " rows");
    const std::size_t d = rows.front().size();
    std::set<Vector> distinct(rows.begin(), rows.end());
    if (K > distinct.size()) fail(ErrorCode::DegenerateData, "fewer distinct rows than mixture components");

    Eigen::MatrixXd X(d, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].size() != d) fail(ErrorCode::DimensionMismatch, "rows have different dimensions");
      X.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(rows[i].data(), static_cast<Eigen::Index>(d));
    }
    const double lambda = config.covariance_floor * static_cast<double>(n) / static_cast<double>(K);

    // Responsibilities from the k-means partition.
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, K);
    if (K == 1) {
      resp.setOnes();
    } else {
      const auto km = kmeans(rows, K, config.seed, 1);
      for (std::size_t i = 0; i < n; ++i) resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(km.assignment[i])) = 1.0;
    }

    GaussianMixture g;
    double previous = -std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
      g.m_step(X, resp, lambda);
      const double objective = g.e_step(X, resp) - g.penalty(lambda) / static_cast<double>(n);
      g.log_.push_back(objective);
      if (objective - previous < config.tolerance) break;
      previous = objective;
    }
    return g;
  }

  std::size_t components() const { return weights_.size(); }
  std::size_t dimension() const override { return means_.empty() ? 0 : static_cast<std::size_t>(means_.front().size()); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& means() const { return means_; }
  const std::vector<Eigen::MatrixXd>& covariances() const { return covs_; }
  /// Penalized mean log-likelihood per sample after each EM iteration.
  const std::vector<double>& fit_log() const { return log_; }
  void set_fit_log(std::vector<double> log) { log_ = std::move(log); }

  double component_log_density(std::size_t k, const Eigen::VectorXd& x) const {
    const Eigen::VectorXd z = chol_[k].matrixL().solve(x - means_[k]);
    return log_norm_[k] - 0.5 * z.squaredNorm();
  }

  double log_density(std::span<const double> theta) const override {
    if (theta.size() != dimension()) fail(ErrorCode::DimensionMismatch, "density evaluated at a vector of the wrong size");
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    std::vector<double> terms(weights_.size());
    for (std::size_t k = 0; k < weights_.size(); ++k) terms[k] = std::log(weights_[k]) + component_log_density(k, x);
    return log_sum_exp(terms);
  }

  Vector sample(Rng& rng) const override {
    double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < weights_.size() && u >= weights_[k]) u -= weights_[k++];
    Eigen::VectorXd z(static_cast<Eigen::Index>(dimension()));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    const Eigen::VectorXd x = means_[k] + chol_[k].matrixL() * z;
    return {x.data(), x.data() + x.size()};
  }

  /// Fixed-point mode search started from every component mean; the
  /// iteration x <- (sum r_k P_k)^-1 sum r_k P_k mu_k (P_k the precisions,
  /// r_k the posterior weights at x) never lowers the density.
  Vector mode() const override {
    Eigen::VectorXd best;
    double best_ld = -std::numeric_limits<double>::infinity();
    for (std::size_t start = 0; start < means_.size(); ++start) {
      Eigen::VectorXd x = means_[start];
      for (int iter = 0; iter < 500; ++iter) {
        std::vector<double> logs(weights_.size());
        for (std::size_t k = 0; k < weights_.size(); ++k) logs[k] = std::log(weights_[k]) + component_log_density(k, x);
        const double total = log_sum_exp(logs);
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(x.size(), x.size());
        Eigen::VectorXd b = Eigen::VectorXd::Zero(x.size());
        for (std::size_t k = 0; k < weights_.size(); ++k) {
          const double r = std::exp(logs[k] - total);
          A += r * precisions_[k];
          b += r * (precisions_[k] * means_[k]);
        }
        const Eigen::VectorXd next = A.ldlt().solve(b);
        const double step = (next - x).norm();
        x = next;
        if (step < 1e-12 * (1.0 + x.norm())) break;
      }
      const double ld = log_density(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
      if (ld > best_ld) {
        best_ld = ld;
        best = x;
      }
    }
    return {best.data(), best.data() + best.size()};
  }

  /// "gmm;K;d;weights;means;covariances", numbers comma-separated.
  std::string to_text() const override {
    std::vector<double> mu, cov;
    for (const auto& m : means_) mu.insert(mu.end(), m.data(), m.data() + m.size());
    for (const auto& c : covs_) cov.insert(cov.end(), c.data(), c.data() + c.size());
    return "gmm;" + std::to_string(components()) + ";" + std::to_string(dimension()) + ";" + text::join_numbers(weights_) +
           ";" + text::join_numbers(mu) + ";" + text::join_numbers(cov);
  }

  static GaussianMixture from_text(std::string_view s) {
    const auto f = text::split(s, ';');
    if (f.size() != 6 || f[0] != "gmm") fail(ErrorCode::SchemaViolation, "malformed mixture record");
    const auto K = static_cast<std::size_t>(text::parse_u64(f[1]));
    const auto d = static_cast<Eigen::Index>(text::parse_u64(f[2]));
    const auto w = text::parse_vector(f[3]);
    const auto mu = text::parse_vector(f[4]);
    const auto cov = text::parse_vector(f[5]);
    const auto du = static_cast<std::size_t>(d);
    if (w.size() != K || mu.size() != K * du || cov.size() != K * du * du)
      fail(ErrorCode::SchemaViolation, "mixture record sizes disagree");
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
    for (std::size_t k = 0; k < K; ++k) {
      means.push_back(Eigen::Map<const Eigen::VectorXd>(mu.data() + k * du, d));
      covs.push_back(Eigen::Map<const Eigen::MatrixXd>(cov.data() + k * du * du, d, d));
    }
    return GaussianMixture(w, std::move(means), std::move(covs));
  }

  static double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
  }

 private:
  void prepare() {
    chol_.clear();
    log_norm_.clear();
    precisions_.clear();
    double wsum = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0)) fail(ErrorCode::DegenerateData, "mixture weight must be positive");
      wsum += w;
    }
    for (auto& w : weights_) w /= wsum;
    for (const auto& c : covs_) {
      Eigen::LLT<Eigen::MatrixXd> llt(c);
      if (llt.info() != Eigen::Success) fail(ErrorCode::DegenerateData, "covariance is not positive definite");
      const Eigen::MatrixXd L = llt.matrixL();
      double logdet = 0.0;
      for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += 2.0 * std::log(L(i, i));
      log_norm_.push_back(-0.5 * (static_cast<double>(c.rows()) * std::log(2.0 * std::numbers::pi) + logdet));
      precisions_.push_back(llt.solve(Eigen::MatrixXd::Identity(c.rows(), c.cols())));
      chol_.push_back(std::move(llt));
    }
  }

  void m_step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& resp, double lambda) {
    const auto K = static_cast<std::size_t>(resp.cols());
    weights_.assign(K, 0.0);
    means_.assign(K, Eigen::VectorXd());
    covs_.assign(K, Eigen::MatrixXd());
    for (std::size_t k = 0; k < K; ++k) {
      const Eigen::VectorXd r = resp.col(static_cast<Eigen::Index>(k));
      const double nk = r.sum();
      if (!(nk > 1e-10)) fail(ErrorCode::DegenerateData, "a mixture component lost all of its data");
      weights_[k] = nk / static_cast<double>(X.cols());
      means_[k] = X * r / nk;
      const Eigen::MatrixXd centered = X.colwise() - means_[k];
      Eigen::MatrixXd scatter = centered * r.asDiagonal() * centered.transpose();
      scatter.diagonal().array() += lambda;
      covs_[k] = (scatter + scatter.transpose()) / (2.0 * nk);
    }
    prepare();
  }

  // Fills responsibilities, returns mean log-likelihood per sample.
  double e_step(const Eigen::MatrixXd& X, Eigen::MatrixXd& resp) const {
    double total = 0.0;
    std::vector<double> logs(weights_.size());
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
      const Eigen::VectorXd x = X.col(i);
      for (std::size_t k = 0; k < weights_.size(); ++k) logs[k] = std::log(weights_[k]) + component_log_density(k, x);
      const double lse = log_sum_exp(logs);
      total += lse;
      for (std::size_t k = 0; k < weights_.size(); ++k) resp(i, static_cast<Eigen::Index>(k)) = std::exp(logs[k] - lse);
    }
    return total / static_cast<double>(X.cols());
  }

  // lambda/2 tr(Sigma_k^-1), summed over components.
  double penalty(double lambda) const {
    double t = 0.0;
    for (const auto& p : precisions_) t += 0.5 * lambda * p.trace();
    return t;
  }

  std::vector<double> weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covs_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol_;
  std::vector<Eigen::MatrixXd> precisions_;
  std::vector<double> log_norm_;
  std::vector<double> log_;
};

// ---- clusters and stores ---------------------------------------------------

struct Cluster {
  std::size_t index = 0;
  std::vector<std::size_t> members;  // indices into the capability set
  Vector center;                     // k-means center in feature space
  Vector mode;                       // highest-density theta found, clipped into the bounds
  Vector centroid;                   // feature of the capability simulated from `mode`
  double threshold = 0.0;            // 1st percentile of member log-densities
  GaussianMixture model;
};

struct ClusterSpace {
  std::string feature;  // feature space id
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<double> objective_trace;
  std::vector<Cluster> clusters;

  const FeatureSpace& space() const { return cluster::feature_space(feature); }
  std::string label(std::size_t j) const { return feature + "/" + std::to_string(j); }

  /// Index of the nearest k-means center.
  std::size_t nearest_center(const Vector& f) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& c : clusters) {
      const double d = distance(c.center, f);
      if (d < best_d) {
        best_d = d;
        best = c.index;
      }
    }
    return best;
  }
};

struct ClusterStore {
  std::string robot;
  sim::RobotSpec spec;
  cfm::ParameterSpace space;
  sim::SimConfig sim;
  std::string set_hash;  // content hash of the clustered set's theta table
  FitConfig fit;
  std::vector<ClusterSpace> spaces;

  const ClusterSpace* find(std::string_view feature) const {
    for (const auto& s : spaces)
      if (s.feature == feature) return &s;
    return nullptr;
  }

  const ClusterSpace& at(std::string_view feature) const {
    if (const auto* s = find(feature)) return *s;
    fail(ErrorCode::NotFound, "robot " + robot + " has no clusters in feature space '" + std::string(feature) + "'");
  }
};

struct ClusterRequest {
  std::string feature;
  std::size_t k;
};

struct ClusterConfig {
  std::vector<ClusterRequest> requests{{"start", 50}, {"end", 50}, {"dir", 5}};
  std::uint64_t seed = 1;
  FitConfig fit;
  std::size_t workers = 1;
  bool include_infeasible = false;
};

/// Value at fraction q of the sorted data (nearest rank).
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

/// Features of every member for the requested spaces, one row per member.
inline std::vector<std::vector<Vector>> compute_features(const explore::CapabilitySet& set,
                                                         const std::vector<std::string>& features, std::size_t workers) {
  std::vector<const FeatureSpace*> fs;
  for (const auto& f : features) fs.push_back(&feature_space(f));
  std::vector<std::vector<Vector>> out(set.size(), std::vector<Vector>(fs.size()));
  parallel_for(set.size(), workers, [&](std::size_t i) {
    const auto cap = set.capability(i);
    for (std::size_t f = 0; f < fs.size(); ++f) out[i][f] = fs[f]->fn(set.spec, cap);
  });
  return out;
}

/// Clusters the (feasible) members of `set` in each requested feature space
/// and fits one mixture per cluster.
inline ClusterStore cluster_set(const explore::CapabilitySet& set, const ClusterConfig& config) {
  ClusterStore store;
  store.robot = set.robot();
  store.spec = set.spec;
  store.space = set.space;
  store.sim = set.sim;
  store.set_hash = text::content_hash(explore::theta_table(set));
  store.fit = config.fit;

  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (config.include_infeasible || set.members[i].feasible) chosen.push_back(i);
  if (chosen.empty()) fail(ErrorCode::DegenerateData, "no capabilities to cluster");

  std::vector<std::string> names;
  for (const auto& r : config.requests) {
    feature_space(r.feature);
    if (std::count(names.begin(), names.end(), r.feature)) fail(ErrorCode::InvalidArgument, "feature space listed twice");
    names.push_back(r.feature);
  }
  explore::CapabilitySet subset{set.spec, set.space, set.sim, set.seed, {}};
  for (auto i : chosen) subset.members.push_back(set.members[i]);
  const auto features = compute_features(subset, names, config.workers);

  for (std::size_t f = 0; f < names.size(); ++f) {
    ClusterSpace cs;
    cs.feature = names[f];
    cs.k = config.requests[f].k;
    cs.seed = derive_seed(config.seed, f);
    std::vector<Vector> points;
    points.reserve(chosen.size());
    for (const auto& row : features) points.push_back(row[f]);
    const auto km = kmeans(points, cs.k, cs.seed);
    cs.objective_trace = km.trace;
    cs.clusters.resize(cs.k);
    for (std::size_t j = 0; j < cs.k; ++j) {
      cs.clusters[j].index = j;
      cs.clusters[j].center = km.centers[j];
    }
    for (std::size_t i = 0; i < chosen.size(); ++i) cs.clusters[km.assignment[i]].members.push_back(chosen[i]);

    const auto& fs = feature_space(names[f]);
    parallel_for(cs.k, config.workers, [&](std::size_t j) {
      auto& c = cs.clusters[j];
      std::vector<Vector> rows;
      for (auto m : c.members) rows.push_back(set.members[m].theta);
      FitConfig fc = config.fit;
      fc.seed = derive_seed(cs.seed, 1000 + j);
      fc.components = std::min(fc.components, std::set<Vector>(rows.begin(), rows.end()).size());
      c.model = GaussianMixture::fit(rows, fc);
      c.mode = set.space.clip(c.model.mode());
      c.centroid = fs.fn(set.spec, cfm::simulate(set.space, c.mode, set.spec, set.sim));
      std::vector<double> lds;
      for (const auto& r : rows) lds.push_back(c.model.log_density(r));
      c.threshold = percentile(std::move(lds), 0.01);
    });
    store.spaces.push_back(std::move(cs));
  }
  return store;
}

/// Fraction of n draws from the cluster's model (clipped into the bounds)
/// whose simulated feature lands nearest to the cluster's own center.
inline double model_accuracy(const ClusterStore& store, const ClusterSpace& cs, std::size_t cluster, std::size_t n,
                             std::uint64_t seed, std::size_t workers = 1) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "model_accuracy needs at least one draw");
  const auto& c = cs.clusters.at(cluster);
  const auto& fs = cs.space();
  std::vector<char> hit(n, 0);
  parallel_for(n, workers, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    const auto theta = store.space.clip(c.model.sample(rng));
    const auto f = fs.fn(store.spec, cfm::simulate(store.space, theta, store.spec, store.sim));
    hit[i] = cs.nearest_center(f) == cluster;
  });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(n);
}

/// Mean model accuracy over every cluster of a feature space.
inline double mean_model_accuracy(const ClusterStore& store, const ClusterSpace& cs, std::size_t n, std::uint64_t seed,
                                  std::size_t workers = 1) {
  double total = 0.0;
  for (std::size_t j = 0; j < cs.clusters.size(); ++j)
    total += model_accuracy(store, cs, j, n, derive_seed(seed, j), workers);
  return total / static_cast<double>(cs.clusters.size());
}

// ---- persistence -------------------------------------------------------------
//
// <dir>/store.txt            robot, provenance and fit config
// <dir>/robot.txt            robot description
// <dir>/space-<feature>.txt  one record file per feature space

inline constexpr std::string_view kStoreFormat = "qrock-cluster-store";

inline std::string space_to_text(const ClusterSpace& cs) {
  text::Record r;
  r.set("feature", cs.feature)
      .set("label", cs.space().label)
      .set("metric", "euclidean")
      .set("k", std::to_string(cs.k))
      .set("seed", std::to_string(cs.seed))
      .set("objective_trace", text::join_numbers(cs.objective_trace));
  for (const auto& c : cs.clusters) {
    const std::string p = "cluster." + std::to_string(c.index) + ".";
    std::vector<double> members(c.members.begin(), c.members.end());
    r.set(p + "members", text::join_numbers(members))
        .set(p + "center", text::join_numbers(c.center))
        .set(p + "mode", text::join_numbers(c.mode))
        .set(p + "centroid", text::join_numbers(c.centroid))
        .set(p + "threshold", text::format_double(c.threshold))
        .set(p + "fit_log", text::join_numbers(c.model.fit_log()))
        .set(p + "model", c.model.to_text());
  }
  return r.to_text();
}

inline ClusterSpace space_from_text(std::string_view doc) {
  const auto r = text::Record::parse(doc);
  ClusterSpace cs;
  cs.feature = r.get("feature");
  feature_space(cs.feature);
  cs.k = r.integer("k");
  cs.seed = r.integer("seed");
  cs.objective_trace = text::parse_vector(r.get("objective_trace"));
  for (std::size_t j = 0; j < cs.k; ++j) {
    const std::string p = "cluster." + std::to_string(j) + ".";
    Cluster c;
    c.index = j;
    for (double m : text::parse_vector(r.get(p + "members"))) c.members.push_back(static_cast<std::size_t>(m));
    c.center = text::parse_vector(r.get(p + "center"));
    c.mode = text::parse_vector(r.get(p + "mode"));
    c.centroid = text::parse_vector(r.get(p + "centroid"));
    c.threshold = r.number(p + "threshold");
    c.model = GaussianMixture::from_text(r.get(p + "model"));
    c.model.set_fit_log(text::parse_vector(r.get(p + "fit_log")));
    cs.clusters.push_back(std::move(c));
  }
  return cs;
}

inline void save_store(const ClusterStore& store, const std::filesystem::path& dir) {
  text::Record r;
  r.set("format", std::string(kStoreFormat))
      .set("version", "1")
      .set("robot", store.robot)
      .set("set_hash", store.set_hash)
      .set("space", store.space.to_text())
      .set("dt", text::format_double(store.sim.dt))
      .set("horizon", text::format_double(store.sim.horizon))
      .set("components", std::to_string(store.fit.components))
      .set("covariance_floor", text::format_double(store.fit.covariance_floor));
  std::string features;
  for (const auto& cs : store.spaces) {
    const std::string doc = space_to_text(cs);
    text::write_file(dir / ("space-" + cs.feature + ".txt"), doc);
    features += (features.empty() ? "" : ",") + cs.feature;
    r.set("hash." + cs.feature, text::content_hash(doc));
  }
  r.set("features", features);
  const std::string robot = to_text(store.spec);
  r.set("robot_hash", text::content_hash(robot));
  text::write_file(dir / "robot.txt", robot);
  text::write_file(dir / "store.txt", r.to_text());
}

inline ClusterStore load_store(const std::filesystem::path& dir) {
  const auto r = text::Record::parse(text::read_file(dir / "store.txt"));
  if (r.get("format") != kStoreFormat) fail(ErrorCode::SchemaViolation, dir.string() + " is not a cluster store");
  ClusterStore store;
  store.robot = r.get("robot");
  const std::string robot = text::read_file(dir / "robot.txt");
  if (text::content_hash(robot) != r.get("robot_hash")) fail(ErrorCode::SchemaViolation, "robot hash mismatch");
  store.spec = sim::robot_spec_from_text(robot);
  store.space = cfm::ParameterSpace::from_text(r.get("space"));
  store.sim.dt = r.number("dt");
  store.sim.horizon = r.number("horizon");
  store.set_hash = r.get("set_hash");
  store.fit.components = r.integer("components");
  store.fit.covariance_floor = r.number("covariance_floor");
  for (auto f : text::split(r.get("features"), ',')) {
    if (f.empty()) continue;
    const std::string doc = text::read_file(dir / ("space-" + std::string(f) + ".txt"));
    if (text::content_hash(doc) != r.get("hash." + std::string(f)))
      fail(ErrorCode::SchemaViolation, "cluster space hash mismatch for " + std::string(f));
    store.spaces.push_back(space_from_text(doc));
  }
  return store;
}

}  // namespace qrock::cluster
