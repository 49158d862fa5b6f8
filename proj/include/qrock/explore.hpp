#pragma once

// Goal-agnostic exploration: uniform sampling of the parameter space, batch
// simulation, and a feed-forward classifier that learns which parameter
// vectors produce feasible capabilities.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "qrock/cfm.hpp"
#include "qrock/error.hpp"
#include "qrock/parallel.hpp"
#include "qrock/rng.hpp"
#include "qrock/simkin.hpp"
#include "qrock/text.hpp"

namespace qrock::explore {

struct ExplorationConfig {
  std::size_t samples = 10000;
  std::uint64_t seed = 1;
  cfm::ParameterSpace space;
  sim::SimConfig sim;
  std::size_t workers = 1;
};

struct Member {
  std::vector<double> theta;
  bool feasible = false;
  std::size_t violations = 0;
  friend bool operator==(const Member&, const Member&) = default;
};

/// Explored capabilities of one robot. Only theta and the feasibility label
/// are stored per member; trajectories are recomputed on demand because the
/// simulator is deterministic.
struct CapabilitySet {
  sim::RobotSpec spec;
  cfm::ParameterSpace space;
  sim::SimConfig sim;
  std::uint64_t seed = 0;
  std::vector<Member> members;

  std::size_t size() const { return members.size(); }
  const std::string& robot() const { return spec.name(); }

  sim::Capability capability(std::size_t i) const { return cfm::simulate(space, members.at(i).theta, spec, sim); }

  std::size_t feasible_count() const {
    return static_cast<std::size_t>(std::count_if(members.begin(), members.end(), [](const Member& m) { return m.feasible; }));
  }
};

/// Uniform draw from the box; stream `index` of `seed`.
inline std::vector<double> draw_uniform(const cfm::ParameterSpace& space, std::uint64_t seed, std::uint64_t index) {
  Rng rng(derive_seed(seed, index));
  const auto lo = space.lower();
  const auto hi = space.upper();
  std::vector<double> theta(space.dimension());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = rng.uniform(lo[i], hi[i]);
  return theta;
}

/// Draws `samples` unique parameter vectors and simulates each. Draw i comes
/// from its own derived stream, so the result does not depend on how the
/// simulations are spread over workers.
inline CapabilitySet explore(const sim::RobotSpec& spec, const ExplorationConfig& config) {
  if (config.samples == 0) fail(ErrorCode::InvalidArgument, "sample count must be at least 1");
  if (config.space.joint_count() != spec.dof())
    fail(ErrorCode::DimensionMismatch, "parameter space does not match the robot");
  config.sim.steps();

  CapabilitySet set{spec, config.space, config.sim, config.seed, {}};
  set.members.resize(config.samples);
  std::set<std::vector<double>> seen;
  std::uint64_t stream = 0;
  for (auto& m : set.members) {
    do m.theta = draw_uniform(config.space, config.seed, stream++);
    while (!seen.insert(m.theta).second);
  }
  parallel_for(set.members.size(), config.workers, [&](std::size_t i) {
    auto& m = set.members[i];
    const auto cap = cfm::simulate(set.space, m.theta, spec, config.sim);
    m.feasible = cap.feasible();
    m.violations = cap.feasibility.violations.size();
  });
  return set;
}

// ---- capability set persistence -----------------------------------------
//
// <dir>/manifest.txt     provenance and config, with content hashes
// <dir>/robot.txt        robot description
// <dir>/theta.tsv        one parameter vector per row, joint-major columns
// <dir>/labels.tsv       index, feasible flag, violation count
// <dir>/trajectories/    optional per-capability tables

inline constexpr std::string_view kSetFormat = "qrock-capability-set";

inline std::string theta_table(const CapabilitySet& set) {
  std::string out = "# joint-major coefficients, <joint>:<index>\n";
  const auto cols = set.space.column_names(set.spec);
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "\t" : "") + cols[i];
  out += '\n';
  for (const auto& m : set.members) out += text::join_numbers(m.theta, '\t') + "\n";
  return out;
}

inline std::string label_table(const CapabilitySet& set) {
  std::string out = "index\tfeasible\tviolations\n";
  for (std::size_t i = 0; i < set.members.size(); ++i)
    out += std::to_string(i) + "\t" + (set.members[i].feasible ? "1" : "0") + "\t" +
           std::to_string(set.members[i].violations) + "\n";
  return out;
}

/// Writes the set; the first `trajectories` capabilities are also exported
/// as tables.
inline void save_set(const CapabilitySet& set, const std::filesystem::path& dir, std::size_t trajectories = 0) {
  const std::string robot = to_text(set.spec);
  const std::string thetas = theta_table(set);
  const std::string labels = label_table(set);
  text::Record manifest;
  manifest.set("format", std::string(kSetFormat))
      .set("version", "1")
      .set("robot", set.robot())
      .set("seed", std::to_string(set.seed))
      .set("samples", std::to_string(set.size()))
      .set("feasible", std::to_string(set.feasible_count()))
      .set("dt", text::format_double(set.sim.dt))
      .set("horizon", text::format_double(set.sim.horizon))
      .set("space", set.space.to_text())
      .set("robot_hash", text::content_hash(robot))
      .set("theta_hash", text::content_hash(thetas))
      .set("labels_hash", text::content_hash(labels));
  text::write_file(dir / "robot.txt", robot);
  text::write_file(dir / "theta.tsv", thetas);
  text::write_file(dir / "labels.tsv", labels);
  const std::size_t n = std::min(trajectories, set.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto cap = set.capability(i);
    text::write_file(dir / "trajectories" / (std::to_string(i) + ".tsv"),
                     sim::export_table(set.spec, cap, {{"index", std::to_string(i)}, {"theta", text::join_numbers(cap.theta)}}));
  }
  manifest.set("trajectories", std::to_string(n));
  text::write_file(dir / "manifest.txt", manifest.to_text());
}

inline CapabilitySet load_set(const std::filesystem::path& dir) {
  const auto manifest = text::Record::parse(text::read_file(dir / "manifest.txt"));
  if (manifest.get("format") != kSetFormat) fail(ErrorCode::SchemaViolation, dir.string() + " is not a capability set");
  const std::string robot = text::read_file(dir / "robot.txt");
  const std::string thetas = text::read_file(dir / "theta.tsv");
  const std::string labels = text::read_file(dir / "labels.tsv");
  auto check_hash = [&](const char* key, const std::string& content) {
    if (manifest.get(key) != text::content_hash(content))
      fail(ErrorCode::SchemaViolation, dir.string() + ": content hash mismatch for " + key);
  };
  check_hash("robot_hash", robot);
  check_hash("theta_hash", thetas);
  check_hash("labels_hash", labels);

  CapabilitySet set;
  set.spec = sim::robot_spec_from_text(robot);
  set.space = cfm::ParameterSpace::from_text(manifest.get("space"));
  set.sim.dt = manifest.number("dt");
  set.sim.horizon = manifest.number("horizon");
  set.seed = manifest.integer("seed");
  const auto table = sim::read_table(thetas);
  const auto label_rows = sim::read_table(labels);
  if (table.rows.size() != label_rows.rows.size() || table.rows.size() != manifest.integer("samples"))
    fail(ErrorCode::SchemaViolation, dir.string() + ": row counts disagree");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (table.rows[i].size() != set.space.dimension()) fail(ErrorCode::SchemaViolation, "theta row width");
    const auto& l = label_rows.rows[i];
    set.members.push_back({table.rows[i], l.at(1) != 0.0, static_cast<std::size_t>(l.at(2))});
  }
  return set;
}

// ---- validation model ------------------------------------------------------

/// Fully connected network with tanh hidden layers and a sigmoid output.
/// Inputs are mapped from the parameter box onto [-1, 1] first.
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<std::size_t> layers, std::vector<double> input_lo, std::vector<double> input_hi, std::uint64_t seed)
      : layers_(std::move(layers)) {
    if (layers_.size() < 2 || layers_.back() != 1) fail(ErrorCode::InvalidArgument, "network needs a scalar output layer");
    if (input_lo.size() != layers_.front() || input_hi.size() != layers_.front())
      fail(ErrorCode::DimensionMismatch, "input bounds do not match the input layer");
    lo_ = Eigen::Map<const Eigen::VectorXd>(input_lo.data(), input_lo.size());
    hi_ = Eigen::Map<const Eigen::VectorXd>(input_hi.data(), input_hi.size());
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      const double limit = std::sqrt(6.0 / static_cast<double>(layers_[l] + layers_[l + 1]));
      Eigen::MatrixXd w(layers_[l + 1], layers_[l]);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
      weights_.push_back(std::move(w));
      biases_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layers_[l + 1])));
    }
  }

  const std::vector<std::size_t>& layers() const { return layers_; }
  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  /// Columns of X are samples in raw parameter units.
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& X) const {
    return ((2.0 * (X.colwise() - lo_)).array().colwise() / (hi_ - lo_).array() - 1.0).matrix();
  }

  Eigen::RowVectorXd logits(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd a = normalize(X);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = (weights_[l] * a).colwise() + biases_[l];
      a = (l + 1 < weights_.size()) ? Eigen::MatrixXd(z.array().tanh()) : z;
    }
    return a.row(0);
  }

  double probability(std::span<const double> theta) const {
    if (theta.size() != input_dim())
      fail(ErrorCode::DimensionMismatch, "parameter vector has " + std::to_string(theta.size()) +
                                             " entries, validator expects " + std::to_string(input_dim()));
    Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size());
    return sigmoid(logits(x)(0));
  }

  /// Mean binary cross-entropy over the columns of X.
  double loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) const {
    const Eigen::RowVectorXd z = logits(X);
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) total += bce(z(i), y(i));
    return total / static_cast<double>(z.size());
  }

  /// Mean loss and its gradient, flattened in parameters() order.
  double loss_and_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<double>& grad) const {
    const std::size_t L = weights_.size();
    std::vector<Eigen::MatrixXd> acts{normalize(X)};
    for (std::size_t l = 0; l < L; ++l) {
      Eigen::MatrixXd z = (weights_[l] * acts.back()).colwise() + biases_[l];
      acts.push_back(l + 1 < L ? Eigen::MatrixXd(z.array().tanh()) : z);
    }
    const double n = static_cast<double>(X.cols());
    const Eigen::RowVectorXd z = acts.back().row(0);
    double total = 0.0;
    Eigen::MatrixXd delta(1, X.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      total += bce(z(i), y(i));
      delta(0, i) = (sigmoid(z(i)) - y(i)) / n;
    }
    std::vector<Eigen::MatrixXd> gw(L);
    std::vector<Eigen::VectorXd> gb(L);
    for (std::size_t l = L; l-- > 0;) {
      gw[l] = delta * acts[l].transpose();
      gb[l] = delta.rowwise().sum();
      if (l > 0) delta = ((weights_[l].transpose() * delta).array() * (1.0 - acts[l].array().square())).matrix();
    }
    grad.clear();
    grad.reserve(parameter_count());
    for (std::size_t l = 0; l < L; ++l) {
      grad.insert(grad.end(), gw[l].data(), gw[l].data() + gw[l].size());
      grad.insert(grad.end(), gb[l].data(), gb[l].data() + gb[l].size());
    }
    return total / n;
  }

  std::vector<double> parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      p.insert(p.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
      p.insert(p.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
    }
    return p;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != parameter_count()) fail(ErrorCode::DimensionMismatch, "parameter count mismatch");
    std::size_t k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(k), weights_[l].size(), weights_[l].data());
      k += weights_[l].size();
      std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(k), biases_[l].size(), biases_[l].data());
      k += biases_[l].size();
    }
  }

  /// Adds `step` to the parameters in place (used by the optimizer).
  void add_to_parameters(const std::vector<double>& step) {
    std::size_t k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index i = 0; i < weights_[l].size(); ++i) weights_[l].data()[i] += step[k++];
      for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l].data()[i] += step[k++];
    }
  }

  std::vector<double> input_lo() const { return {lo_.data(), lo_.data() + lo_.size()}; }
  std::vector<double> input_hi() const { return {hi_.data(), hi_.data() + hi_.size()}; }

  static double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

 private:
  // Stable -[y log s(z) + (1-y) log(1-s(z))].
  static double bce(double z, double y) { return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z))); }

  std::vector<std::size_t> layers_;
  Eigen::VectorXd lo_, hi_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

struct TrainingConfig {
  double split = 0.8;
  std::size_t epochs = 30;
  std::size_t batch = 100;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double final_rate_fraction = 0.1;  // learning rate decays linearly to this fraction of itself
  double weight_decay = 0.0;         // L2 coefficient on the weights and biases
  std::size_t hidden_layers = 4;
  std::size_t width = 32;
  std::uint64_t seed = 1;
};

struct EpochLog {
  std::size_t epoch;  // 0 = before training
  double train_loss;
  double heldout_loss;
  double heldout_accuracy;
};

struct ValidationModel {
  Mlp net;
  TrainingConfig config;
  std::vector<EpochLog> log;
  std::vector<std::size_t> heldout;  // member indices not used for training

  double heldout_accuracy() const { return log.empty() ? 0.0 : log.back().heldout_accuracy; }
};

/// Feasibility probability of theta; the decision threshold is 0.5.
inline double validate(const ValidationModel& model, std::span<const double> theta) {
  return model.net.probability(theta);
}

namespace detail {

inline void gather(const CapabilitySet& set, const std::vector<std::size_t>& idx, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
  const auto d = static_cast<Eigen::Index>(set.space.dimension());
  X.resize(d, static_cast<Eigen::Index>(idx.size()));
  y.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const auto& m = set.members[idx[c]];
    X.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(m.theta.data(), d);
    y(static_cast<Eigen::Index>(c)) = m.feasible ? 1.0 : 0.0;
  }
}

inline double accuracy(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.cols() == 0) return 0.0;
  const Eigen::RowVectorXd z = net.logits(X);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) hits += ((z(i) > 0.0) == (y(i) > 0.5)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(z.size());
}

}  // namespace detail

/// Mini-batch gradient descent with momentum on cross-entropy. The held-out
/// split is never used for fitting; the log records its loss and accuracy
/// after every epoch.
inline ValidationModel train_validator(const CapabilitySet& set, const TrainingConfig& config) {
  if (!(config.split > 0.0 && config.split < 1.0)) fail(ErrorCode::InvalidArgument, "split must lie in (0, 1)");
  if (config.batch == 0 || config.width == 0 || config.hidden_layers == 0)
    fail(ErrorCode::InvalidArgument, "batch, width and depth must be positive");
  const std::size_t feasible = set.feasible_count();
  if (feasible == 0 || feasible == set.size())
    fail(ErrorCode::SingleClassData, "training data holds a single feasibility class");

  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(config.seed, 0));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.index(i)]);
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(config.split * static_cast<double>(set.size()))), 1, set.size() - 1);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> held(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(held.begin(), held.end());

  std::vector<std::size_t> layers{set.space.dimension()};
  layers.insert(layers.end(), config.hidden_layers, config.width);
  layers.push_back(1);
  ValidationModel model{Mlp(layers, set.space.lower(), set.space.upper(), derive_seed(config.seed, 1)), config, {}, held};

  Eigen::MatrixXd X_train, X_held;
  Eigen::VectorXd y_train, y_held;
  detail::gather(set, train, X_train, y_train);
  detail::gather(set, held, X_held, y_held);
  auto record = [&](std::size_t epoch) {
    model.log.push_back({epoch, model.net.loss(X_train, y_train), model.net.loss(X_held, y_held),
                         detail::accuracy(model.net, X_held, y_held)});
  };
  record(0);

  Rng shuffle(derive_seed(config.seed, 2));
  std::vector<double> velocity(model.net.parameter_count(), 0.0);
  std::vector<double> grad;
  std::vector<std::size_t> perm(train.size());
  std::iota(perm.begin(), perm.end(), 0);
  Eigen::MatrixXd Xb;
  Eigen::VectorXd yb;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double progress = config.epochs > 1 ? static_cast<double>(epoch - 1) / static_cast<double>(config.epochs - 1) : 0.0;
    const double rate = config.learning_rate * (1.0 - progress * (1.0 - config.final_rate_fraction));
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[shuffle.index(i)]);
    for (std::size_t start = 0; start < perm.size(); start += config.batch) {
      const std::size_t end = std::min(perm.size(), start + config.batch);
      Xb.resize(X_train.rows(), static_cast<Eigen::Index>(end - start));
      yb.resize(static_cast<Eigen::Index>(end - start));
      for (std::size_t c = start; c < end; ++c) {
        Xb.col(static_cast<Eigen::Index>(c - start)) = X_train.col(static_cast<Eigen::Index>(perm[c]));
        yb(static_cast<Eigen::Index>(c - start)) = y_train(static_cast<Eigen::Index>(perm[c]));
      }
      model.net.loss_and_gradient(Xb, yb, grad);
      if (config.weight_decay > 0.0) {
        const auto p = model.net.parameters();
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += config.weight_decay * p[k];
      }
      for (std::size_t k = 0; k < grad.size(); ++k) velocity[k] = config.momentum * velocity[k] - rate * grad[k];
      model.net.add_to_parameters(velocity);
    }
    record(epoch);
  }
  return model;
}

// ---- validator persistence -------------------------------------------------

inline constexpr std::string_view kValidatorFormat = "qrock-validator";

inline std::string validator_to_text(const ValidationModel& m) {
  std::vector<double> layers(m.net.layers().begin(), m.net.layers().end());
  text::Record r;
  r.set("format", std::string(kValidatorFormat))
      .set("version", "1")
      .set("layers", text::join_numbers(layers))
      .set("input_lo", text::join_numbers(m.net.input_lo()))
      .set("input_hi", text::join_numbers(m.net.input_hi()))
      .set("split", text::format_double(m.config.split))
      .set("epochs", std::to_string(m.config.epochs))
      .set("batch", std::to_string(m.config.batch))
      .set("learning_rate", text::format_double(m.config.learning_rate))
      .set("momentum", text::format_double(m.config.momentum))
      .set("final_rate_fraction", text::format_double(m.config.final_rate_fraction))
      .set("weight_decay", text::format_double(m.config.weight_decay))
      .set("seed", std::to_string(m.config.seed))
      .set("heldout_accuracy", text::format_double(m.heldout_accuracy()))
      .set("parameters", text::join_numbers(m.net.parameters()));
  std::string log;
  for (const auto& e : m.log)
    log += std::to_string(e.epoch) + ";" + text::format_double(e.train_loss) + ";" +
           text::format_double(e.heldout_loss) + ";" + text::format_double(e.heldout_accuracy) + " ";
  r.set("log", std::string(text::trim(log)));
  return r.to_text();
}

inline ValidationModel validator_from_text(std::string_view doc) {
  const auto r = text::Record::parse(doc);
  if (r.get("format") != kValidatorFormat) fail(ErrorCode::SchemaViolation, "not a validator document");
  std::vector<std::size_t> layers;
  for (double v : text::parse_vector(r.get("layers"))) layers.push_back(static_cast<std::size_t>(v));
  ValidationModel m;
  m.net = Mlp(layers, text::parse_vector(r.get("input_lo")), text::parse_vector(r.get("input_hi")), 0);
  m.net.set_parameters(text::parse_vector(r.get("parameters")));
  m.config.split = r.number("split");
  m.config.epochs = r.integer("epochs");
  m.config.batch = r.integer("batch");
  m.config.learning_rate = r.number("learning_rate");
  m.config.momentum = r.number("momentum");
  m.config.final_rate_fraction = r.number("final_rate_fraction");
  m.config.weight_decay = r.number("weight_decay");
  m.config.seed = r.integer("seed");
  for (auto entry : text::split(r.get("log"), ' ')) {
    if (entry.empty()) continue;
    auto f = text::split(entry, ';');
    if (f.size() != 4) fail(ErrorCode::SchemaViolation, "malformed training log entry");
    m.log.push_back({static_cast<std::size_t>(text::parse_u64(f[0])), text::parse_double(f[1]), text::parse_double(f[2]),
                     text::parse_double(f[3])});
  }
  return m;
}

}  // namespace qrock::explore
