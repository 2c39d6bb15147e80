#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "gmegnn/errors.hpp"
#include "gmegnn/exposure.hpp"
#include "gmegnn/netgraph.hpp"
#include "gmegnn/rng.hpp"

namespace gmegnn {

using Mask = std::vector<std::uint8_t>;

enum class Task { regression, binary };

struct GcnConfig {
  int hidden = 16;
  double dropout = 0.1;
  double learning_rate = 0.001;
  int epochs = 300;
  Task task = Task::regression;
  std::uint64_t seed = 0;
  double weight_init_scale = 1.0;  // multiplies the Glorot bound

  void validate() const {
    if (hidden < 1) throw ParameterError("gnn.hidden must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("gnn.dropout must be in [0, 1)");
    if (!(learning_rate > 0.0)) throw ParameterError("gnn.lr must be > 0");
    if (epochs < 1) throw ParameterError("gnn.epochs must be >= 1");
    if (!(weight_init_scale >= 0.0)) throw ParameterError("weight_init_scale must be >= 0");
  }
};

// Two-layer graph convolution: out = A (relu(A X W1 + b1) W2) + b2, with a
// sigmoid on top for the binary task.
struct GcnModel {
  Eigen::MatrixXd W1;  // f x h
  Eigen::VectorXd b1;  // h
  Eigen::VectorXd W2;  // h
  double b2 = 0.0;
  Task task = Task::regression;

  Eigen::Index n_features() const { return W1.rows(); }
  Eigen::Index hidden() const { return W1.cols(); }

  bool all_finite() const {
    return W1.allFinite() && b1.allFinite() && W2.allFinite() && std::isfinite(b2);
  }
};

struct GcnGradient {
  Eigen::MatrixXd W1;
  Eigen::VectorXd b1;
  Eigen::VectorXd W2;
  double b2 = 0.0;
};

// D^{-1/2} (A + I) D^{-1/2}, D the degree matrix of A + I.
struct NormalizedAdjacency {
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;

  Eigen::Index size() const { return matrix.rows(); }
};

inline NormalizedAdjacency normalize_adjacency(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  if (n < 1) throw ParameterError("normalize_adjacency needs at least one node");
  Eigen::VectorXd inv_sqrt(n);
  for (NodeId i = 0; i < n; ++i) inv_sqrt(i) = 1.0 / std::sqrt(1.0 + g.degree(i));
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) + 2 * g.n_edges());
  for (NodeId i = 0; i < n; ++i) {
    trip.emplace_back(i, i, inv_sqrt(i) * inv_sqrt(i));
    for (NodeId j : g.neighbors(i)) trip.emplace_back(i, j, inv_sqrt(i) * inv_sqrt(j));
  }
  NormalizedAdjacency a;
  a.matrix.resize(n, n);
  a.matrix.setFromTriplets(trip.begin(), trip.end());
  return a;
}

// Disjoint union of several groups' operators.
inline NormalizedAdjacency block_diagonal(std::span<const NormalizedAdjacency> blocks) {
  Eigen::Index n = 0;
  std::size_t nnz = 0;
  for (const auto& b : blocks) {
    n += b.size();
    nnz += static_cast<std::size_t>(b.matrix.nonZeros());
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(nnz);
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    for (Eigen::Index r = 0; r < b.matrix.outerSize(); ++r) {
      for (decltype(b.matrix)::InnerIterator it(b.matrix, r); it; ++it) {
        trip.emplace_back(off + it.row(), off + it.col(), it.value());
      }
    }
    off += b.size();
  }
  NormalizedAdjacency a;
  a.matrix.resize(n, n);
  a.matrix.setFromTriplets(trip.begin(), trip.end());
  return a;
}

// Glorot-uniform weights, zero biases.
inline GcnModel init_model(Eigen::Index n_features, const GcnConfig& cfg, Rng& rng) {
  GcnModel m;
  m.task = cfg.task;
  const auto h = static_cast<Eigen::Index>(cfg.hidden);
  auto uniform_fill = [&](auto& mat, double fan_in, double fan_out) {
    const double s = cfg.weight_init_scale * std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-s, s);
    for (Eigen::Index c = 0; c < mat.cols(); ++c)
      for (Eigen::Index r = 0; r < mat.rows(); ++r) mat(r, c) = u(rng);
  };
  m.W1.resize(n_features, h);
  uniform_fill(m.W1, static_cast<double>(n_features), static_cast<double>(h));
  m.W2.resize(h);
  uniform_fill(m.W2, static_cast<double>(h), 1.0);
  m.b1 = Eigen::VectorXd::Zero(h);
  m.b2 = 0.0;
  return m;
}

// Inverted dropout: entries are 0 or 1/(1-rate).
inline Eigen::MatrixXd make_dropout_scale(Eigen::Index rows, Eigen::Index cols, double rate,
                                          Rng& rng) {
  Eigen::MatrixXd s(rows, cols);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) s(r, c) = u(rng) < rate ? 0.0 : keep;
  return s;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {

struct ForwardCache {
  Eigen::MatrixXd Z1;  // pre-activation, N x h
  Eigen::MatrixXd H1;  // relu (and dropout), N x h
  Eigen::VectorXd logits;
};

inline void check_shapes(const GcnModel& m, const NormalizedAdjacency& adj,
                         const Eigen::MatrixXd& x) {
  if (x.cols() != m.n_features()) {
    throw DimensionError("feature width " + std::to_string(x.cols()) +
                         " does not match model input width " +
                         std::to_string(m.n_features()));
  }
  if (x.rows() != adj.size()) {
    throw DimensionError("feature rows " + std::to_string(x.rows()) +
                         " do not match adjacency size " + std::to_string(adj.size()));
  }
}

inline ForwardCache forward_pass(const GcnModel& m, const NormalizedAdjacency& adj,
                                 const Eigen::MatrixXd& x, const Eigen::MatrixXd* dropout) {
  check_shapes(m, adj, x);
  ForwardCache c;
  const Eigen::MatrixXd xw = x * m.W1;
  c.Z1 = adj.matrix * xw;
  c.Z1.rowwise() += m.b1.transpose();
  c.H1 = c.Z1.cwiseMax(0.0);
  if (dropout) c.H1.array() *= dropout->array();
  const Eigen::VectorXd hw = c.H1 * m.W2;
  c.logits = adj.matrix * hw;
  c.logits.array() += m.b2;
  return c;
}

inline Eigen::VectorXd activate(const GcnModel& m, Eigen::VectorXd logits) {
  if (m.task == Task::binary) logits = logits.unaryExpr([](double z) { return sigmoid(z); });
  return logits;
}

}  // namespace detail

// Evaluation-mode forward pass.
inline Eigen::VectorXd forward(const GcnModel& m, const NormalizedAdjacency& adj,
                               const Eigen::MatrixXd& x) {
  return detail::activate(m, detail::forward_pass(m, adj, x, nullptr).logits);
}

// Training-mode forward pass with a fresh inverted-dropout mask.
inline Eigen::VectorXd forward(const GcnModel& m, const NormalizedAdjacency& adj,
                               const Eigen::MatrixXd& x, double dropout_rate, Rng& rng) {
  const Eigen::MatrixXd scale = make_dropout_scale(x.rows(), m.hidden(), dropout_rate, rng);
  return detail::activate(m, detail::forward_pass(m, adj, x, &scale).logits);
}

/*
 * Mean loss over masked-in units and, when grad is non-null, its gradient
 * with respect to every parameter. Regression uses 0.5*(y - f)^2; the binary
 * task uses the logistic loss -y*z + log(1 + e^z) on the logit z.
 * dropout, when given, is the fixed N x h scale applied after the ReLU.
 */
inline double loss_and_gradient(const GcnModel& m, const NormalizedAdjacency& adj,
                                const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const Mask& mask, const Eigen::MatrixXd* dropout,
                                GcnGradient* grad) {
  const auto n = x.rows();
  if (y.size() != n || static_cast<Eigen::Index>(mask.size()) != n) {
    throw DimensionError("targets/mask length does not match number of nodes");
  }
  double n_in = 0;
  for (auto v : mask) n_in += v ? 1 : 0;
  if (n_in == 0) throw TrainingError("no masked-in units to train on");

  const auto c = detail::forward_pass(m, adj, x, dropout);
  double loss = 0.0;
  Eigen::VectorXd dz = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double z = c.logits(i);
    if (m.task == Task::regression) {
      const double r = z - y(i);
      loss += 0.5 * r * r;
      dz(i) = r;
    } else {
      loss += std::max(z, 0.0) - y(i) * z + std::log1p(std::exp(-std::abs(z)));
      dz(i) = sigmoid(z) - y(i);
    }
  }
  loss /= n_in;
  if (!grad) return loss;
  dz /= n_in;

  // logits = A (H1 W2) + b2
  grad->b2 = dz.sum();
  const Eigen::VectorXd du = adj.matrix.transpose() * dz;
  grad->W2 = c.H1.transpose() * du;
  Eigen::MatrixXd dh = du * m.W2.transpose();
  if (dropout) dh.array() *= dropout->array();
  dh.array() *= (c.Z1.array() > 0.0).cast<double>();
  // Z1 = A (X W1) + b1
  grad->b1 = dh.colwise().sum().transpose();
  const Eigen::MatrixXd dxw = adj.matrix.transpose() * dh;
  grad->W1 = x.transpose() * dxw;
  return loss;
}

namespace detail {

template <class T>
void adam_update(T& param, const T& g, T& m, T& v, double lr, double bc1, double bc2) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

inline void adam_update(double& param, double g, double& m, double& v, double lr, double bc1,
                        double bc2) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g * g;
  param -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
}

}  // namespace detail

// Full-batch Adam on the mean masked loss. Deterministic given cfg.seed.
inline GcnModel train(const GcnConfig& cfg, const NormalizedAdjacency& adj,
                      const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Mask& mask) {
  cfg.validate();
  if (x.rows() != adj.size()) throw DimensionError("features and adjacency disagree on N");
  if (cfg.task == Task::binary) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y(i) != 0.0 && y(i) != 1.0) throw TrainingError("binary targets must be 0/1");
    }
  }
  Rng rng(cfg.seed);
  GcnModel m = init_model(x.cols(), cfg, rng);

  GcnGradient g;
  Eigen::MatrixXd mW1 = Eigen::MatrixXd::Zero(m.W1.rows(), m.W1.cols()), vW1 = mW1;
  Eigen::VectorXd mb1 = Eigen::VectorXd::Zero(m.b1.size()), vb1 = mb1;
  Eigen::VectorXd mW2 = Eigen::VectorXd::Zero(m.W2.size()), vW2 = mW2;
  double mb2 = 0.0, vb2 = 0.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss;
    if (cfg.dropout > 0.0) {
      const Eigen::MatrixXd scale = make_dropout_scale(x.rows(), m.hidden(), cfg.dropout, rng);
      loss = loss_and_gradient(m, adj, x, y, mask, &scale, &g);
    } else {
      loss = loss_and_gradient(m, adj, x, y, mask, nullptr, &g);
    }
    if (!std::isfinite(loss)) {
      throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch),
                            epoch);
    }
    const double bc1 = 1.0 - std::pow(0.9, epoch);
    const double bc2 = 1.0 - std::pow(0.999, epoch);
    detail::adam_update(m.W1, g.W1, mW1, vW1, cfg.learning_rate, bc1, bc2);
    detail::adam_update(m.b1, g.b1, mb1, vb1, cfg.learning_rate, bc1, bc2);
    detail::adam_update(m.W2, g.W2, mW2, vW2, cfg.learning_rate, bc1, bc2);
    detail::adam_update(m.b2, g.b2, mb2, vb2, cfg.learning_rate, bc1, bc2);
  }
  if (!m.all_finite()) throw DivergenceError("non-finite parameters after training", cfg.epochs);
  return m;
}

struct PropensityFit {
  Eigen::VectorXd p;  // in (0, 1)
  bool degenerate = false;  // level absent (or universal) among the units
};

// One-vs-rest generalized propensity score for level t: logistic GCN on
// targets 1{T_i = t} over all units.
inline PropensityFit fit_propensity(const NormalizedAdjacency& adj, const Eigen::MatrixXd& x,
                                    const ExposureAssignment& a, int t, GcnConfig cfg) {
  const auto n = x.rows();
  if (static_cast<Eigen::Index>(a.levels.size()) != n) {
    throw DimensionError("exposure assignment length does not match features");
  }
  cfg.task = Task::binary;
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) target(i) = a.levels[static_cast<std::size_t>(i)] == t;
  const auto hits = target.sum();
  PropensityFit fit;
  fit.degenerate = hits == 0 || hits == static_cast<double>(n);
  const GcnModel model = train(cfg, adj, x, target, Mask(static_cast<std::size_t>(n), 1));
  fit.p = forward(model, adj, x);
  return fit;
}

// Outcome regression for level t, trained on units with T_i = t only and
// evaluated on every unit. Targets are centered and scaled over the training
// units; predictions are mapped back to the outcome scale.
inline Eigen::VectorXd fit_outcome(const NormalizedAdjacency& adj, const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& y, const ExposureAssignment& a, int t,
                                   GcnConfig cfg) {
  const auto n = x.rows();
  if (y.size() != n || static_cast<Eigen::Index>(a.levels.size()) != n) {
    throw DimensionError("outcome/assignment length does not match features");
  }
  cfg.task = Task::regression;
  Mask mask(static_cast<std::size_t>(n), 0);
  double cnt = 0, sum = 0, sq = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a.levels[static_cast<std::size_t>(i)] != t) continue;
    mask[static_cast<std::size_t>(i)] = 1;
    cnt += 1;
    sum += y(i);
  }
  if (cnt == 0) throw EstimationError("no unit at exposure level " + std::to_string(t));
  const double mean = sum / cnt;
  for (Eigen::Index i = 0; i < n; ++i)
    if (mask[static_cast<std::size_t>(i)]) sq += (y(i) - mean) * (y(i) - mean);
  double scale = std::sqrt(sq / cnt);
  if (!(scale > 1e-12)) scale = 1.0;
  const Eigen::VectorXd target = (y.array() - mean) / scale;
  const GcnModel model = train(cfg, adj, x, target, mask);
  return (forward(model, adj, x).array() * scale + mean).matrix();
}

// Flat text dump: one "name rows cols" header line per array, then values.
inline void write_model(std::ostream& os, const GcnModel& m) {
  os << "task " << (m.task == Task::binary ? "binary" : "regression") << '\n';
  os << std::setprecision(17);
  auto put = [&](const char* name, const auto& mat) {
    os << name << ' ' << mat.rows() << ' ' << mat.cols() << '\n';
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < mat.cols(); ++c) os << (c ? " " : "") << mat(r, c);
      os << '\n';
    }
  };
  put("W1", m.W1);
  put("b1", m.b1);
  put("W2", m.W2);
  os << "b2 1 1\n" << m.b2 << '\n';
}

inline GcnModel read_model(std::istream& is) {
  GcnModel m;
  std::string key, task;
  if (!(is >> key >> task) || key != "task") throw DataError("model dump: missing task line");
  m.task = task == "binary" ? Task::binary : Task::regression;
  auto get = [&](const char* name, Eigen::Index& rows, Eigen::Index& cols) {
    std::string k;
    if (!(is >> k >> rows >> cols) || k != name) {
      throw DataError(std::string("model dump: expected header ") + name);
    }
  };
  Eigen::Index r, c;
  get("W1", r, c);
  m.W1.resize(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) is >> m.W1(i, j);
  get("b1", r, c);
  m.b1.resize(r);
  for (Eigen::Index i = 0; i < r; ++i) is >> m.b1(i);
  get("W2", r, c);
  m.W2.resize(r);
  for (Eigen::Index i = 0; i < r; ++i) is >> m.W2(i);
  get("b2", r, c);
  is >> m.b2;
  if (!is) throw DataError("model dump: truncated values");
  return m;
}

}  // namespace gmegnn
