#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gmegnn/gnn.hpp"
#include "gmegnn/gradcheck.hpp"
#include "support.hpp"

using namespace gmegnn;
using namespace testsupport;

namespace {

Eigen::MatrixXd dense_normalized(const Graph& g) {
  const Eigen::MatrixXd a = dense_adjacency(g).cast<double>() +
                            Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(g.n_nodes()),
                                                      static_cast<Eigen::Index>(g.n_nodes()));
  const Eigen::VectorXd dinv = a.rowwise().sum().array().rsqrt();
  return dinv.asDiagonal() * a * dinv.asDiagonal();
}

// Dense re-derivation of the masked mean loss, used as the finite-difference
// target so the check does not go through the library's forward pass.
double reference_loss(const GcnModel& m, const Eigen::MatrixXd& a, const Eigen::MatrixXd& x,
                      const Eigen::VectorXd& y, const Mask& mask, const Eigen::MatrixXd& drop) {
  Eigen::MatrixXd z1 = a * x * m.W1;
  for (Eigen::Index r = 0; r < z1.rows(); ++r) z1.row(r) += m.b1.transpose();
  const Eigen::MatrixXd h = z1.cwiseMax(0.0).cwiseProduct(drop);
  const Eigen::VectorXd z = (a * h * m.W2).array() + m.b2;
  double loss = 0, cnt = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    cnt += 1;
    if (m.task == Task::regression) {
      loss += 0.5 * (y(i) - z(i)) * (y(i) - z(i));
    } else {
      const double p = 1.0 / (1.0 + std::exp(-z(i)));
      loss += -(y(i) * std::log(p) + (1 - y(i)) * std::log(1 - p));
    }
  }
  return loss / cnt;
}

Eigen::ArrayXXd relu_pattern(const GcnModel& m, const Eigen::MatrixXd& a,
                             const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z1 = a * x * m.W1;
  for (Eigen::Index r = 0; r < z1.rows(); ++r) z1.row(r) += m.b1.transpose();
  return (z1.array() > 0.0).cast<double>();
}

struct FdStats {
  double max_rel = 0.0;
  int checked = 0;
};

FdStats finite_difference_check(const GcnModel& m, const Graph& g, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y, const Mask& mask,
                                const Eigen::MatrixXd& drop) {
  const auto adj = normalize_adjacency(g);
  const auto a = dense_normalized(g);
  GcnGradient grad;
  loss_and_gradient(m, adj, x, y, mask, &drop, &grad);
  const double h = 1e-5;
  const auto base = relu_pattern(m, a, x);
  FdStats st;
  auto check = [&](auto&& ref, double analytic) {
    GcnModel p = m, q = m;
    ref(p) += h;
    ref(q) -= h;
    // the loss has a kink where a hidden pre-activation crosses zero
    if ((relu_pattern(p, a, x) != base).any() || (relu_pattern(q, a, x) != base).any()) return;
    const double num =
        (reference_loss(p, a, x, y, mask, drop) - reference_loss(q, a, x, y, mask, drop)) /
        (2 * h);
    const double rel = std::abs(num - analytic) / std::max(1.0, std::abs(num) + std::abs(analytic));
    st.max_rel = std::max(st.max_rel, rel);
    ++st.checked;
  };
  for (Eigen::Index i = 0; i < m.W1.rows(); ++i)
    for (Eigen::Index j = 0; j < m.W1.cols(); ++j)
      check([=](GcnModel& mm) -> double& { return mm.W1(i, j); }, grad.W1(i, j));
  for (Eigen::Index j = 0; j < m.b1.size(); ++j)
    check([=](GcnModel& mm) -> double& { return mm.b1(j); }, grad.b1(j));
  for (Eigen::Index j = 0; j < m.W2.size(); ++j)
    check([=](GcnModel& mm) -> double& { return mm.W2(j); }, grad.W2(j));
  check([](GcnModel& mm) -> double& { return mm.b2; }, grad.b2);
  return st;
}

GcnConfig quick(Task task, int epochs = 300, double lr = 0.01) {
  GcnConfig c;
  c.task = task;
  c.epochs = epochs;
  c.learning_rate = lr;
  c.dropout = 0.0;
  c.seed = 3;
  return c;
}

ExposureAssignment levels(std::vector<int> l, int K = 2) {
  ExposureAssignment a;
  a.levels = std::move(l);
  a.K = K;
  return a;
}

}  // namespace

TEST(NormalizeAdjacency, Examples) {
  EXPECT_EQ(Eigen::MatrixXd(normalize_adjacency(Graph(1)).matrix), Eigen::MatrixXd::Ones(1, 1));
  const auto two = Eigen::MatrixXd(normalize_adjacency(path_graph(2)).matrix);
  EXPECT_TRUE(two.isApprox(Eigen::MatrixXd::Constant(2, 2, 0.5), 1e-15));
  EXPECT_EQ(Eigen::MatrixXd(normalize_adjacency(Graph(5)).matrix), Eigen::MatrixXd::Identity(5, 5));
}

TEST(NormalizeAdjacency, MatchesDenseFormula) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = random_graph(15, 0.2, rng);
    const Eigen::MatrixXd s = normalize_adjacency(g).matrix;
    EXPECT_LT((s - dense_normalized(g)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(s, s.transpose());
    EXPECT_GE(s.minCoeff(), 0.0);
    EXPECT_GT(s.diagonal().minCoeff(), 0.0);
  }
}

TEST(NormalizeAdjacency, BlockDiagonal) {
  std::vector<NormalizedAdjacency> blocks{normalize_adjacency(path_graph(2)),
                                          normalize_adjacency(path_graph(3))};
  const Eigen::MatrixXd d = block_diagonal(blocks).matrix;
  ASSERT_EQ(d.rows(), 5);
  EXPECT_EQ(d.block(0, 0, 2, 2), Eigen::MatrixXd(blocks[0].matrix));
  EXPECT_EQ(d.block(2, 2, 3, 3), Eigen::MatrixXd(blocks[1].matrix));
  EXPECT_EQ(d.block(0, 2, 2, 3).cwiseAbs().sum(), 0.0);
}

TEST(Forward, ZeroWeights) {
  const auto adj = normalize_adjacency(path_graph(4));
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
  GcnModel m;
  m.W1 = Eigen::MatrixXd::Zero(3, 5);
  m.b1 = Eigen::VectorXd::Zero(5);
  m.W2 = Eigen::VectorXd::Zero(5);
  m.task = Task::binary;
  EXPECT_EQ(forward(m, adj, x), Eigen::VectorXd::Constant(4, 0.5));
  m.task = Task::regression;
  m.b2 = -1.25;
  EXPECT_EQ(forward(m, adj, x), Eigen::VectorXd::Constant(4, -1.25));
}

TEST(Forward, ShapeMismatch) {
  Rng rng(0);
  GcnConfig cfg;
  const auto m = init_model(3, cfg, rng);
  const auto adj = normalize_adjacency(path_graph(4));
  EXPECT_THROW(forward(m, adj, Eigen::MatrixXd::Zero(4, 2)), DimensionError);
  EXPECT_THROW(forward(m, adj, Eigen::MatrixXd::Zero(5, 3)), DimensionError);
}

TEST(Forward, PermutationEquivariant) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = random_group(12, 3, 0.25, rng);
    const auto perm = random_permutation(g.size(), rng);
    const auto h = permute_group(g, perm);
    Rng r(trial);
    GcnConfig cfg;
    cfg.task = trial % 2 ? Task::binary : Task::regression;
    const auto m = init_model(3, cfg, r);
    const auto a = forward(m, normalize_adjacency(g.graph), g.X);
    const auto b = forward(m, normalize_adjacency(h.graph), h.X);
    for (std::size_t i = 0; i < g.size(); ++i)
      EXPECT_NEAR(a(static_cast<Eigen::Index>(i)), b(perm[i]), 1e-12);
  }
}

TEST(Forward, EvaluationModeIsBitIdentical) {
  std::mt19937_64 rng(3);
  const auto g = random_group(10, 2, 0.3, rng);
  Rng r(1);
  const auto m = init_model(2, GcnConfig{}, r);
  const auto adj = normalize_adjacency(g.graph);
  EXPECT_EQ(forward(m, adj, g.X), forward(m, adj, g.X));
}

TEST(Forward, OutputsInRange) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = random_group(10, 2, 0.3, rng);
    Rng r(trial);
    GcnConfig cfg;
    cfg.task = Task::binary;
    cfg.weight_init_scale = 5.0;
    const auto p = forward(init_model(2, cfg, r), normalize_adjacency(g.graph), g.X);
    EXPECT_GT(p.minCoeff(), 0.0);
    EXPECT_LT(p.maxCoeff(), 1.0);
  }
}

TEST(Forward, TrainingModeDropout) {
  std::mt19937_64 rng(5);
  const auto g = random_group(10, 2, 0.3, rng);
  Rng r(1);
  const auto m = init_model(2, GcnConfig{}, r);
  const auto adj = normalize_adjacency(g.graph);
  Rng d1(9), d2(9);
  EXPECT_EQ(forward(m, adj, g.X, 0.5, d1), forward(m, adj, g.X, 0.5, d2));
  Rng d3(9);
  EXPECT_EQ(forward(m, adj, g.X, 0.0, d3), forward(m, adj, g.X));
}

TEST(Gradient, RandomEightNodeInstance) {
  std::mt19937_64 rng(6);
  for (Task task : {Task::regression, Task::binary}) {
    const auto g = random_group(8, 3, 0.3, rng);
    Rng r(7);
    GcnConfig cfg;
    cfg.task = task;
    cfg.hidden = 6;
    auto m = init_model(3, cfg, r);
    m.b1.setConstant(0.05);
    m.b2 = 0.2;
    Eigen::VectorXd y = g.Y;
    if (task == Task::binary)
      for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = y(i) > 0;
    Mask mask(8, 1);
    mask[2] = mask[5] = 0;
    const auto drop = make_dropout_scale(8, 6, 0.25, r);
    const auto st = finite_difference_check(m, g.graph, g.X, y, mask, drop);
    EXPECT_GT(st.checked, 20);
    EXPECT_LT(st.max_rel, 1e-4);
  }
}

TEST(Gradient, TwentyRandomSmallInstancesPerLoss) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> nn(2, 12), ff(1, 4), hh(1, 8);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Task task : {Task::regression, Task::binary}) {
    for (int trial = 0; trial < 20; ++trial) {
      const int n = nn(rng), f = ff(rng), h = hh(rng);
      const auto g = random_graph(static_cast<std::size_t>(n), 0.3, rng);
      Eigen::MatrixXd x(n, f);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) y(i) = task == Task::binary ? (gauss(rng) > 0) : gauss(rng);
      Rng r(rng());
      GcnConfig cfg;
      cfg.task = task;
      cfg.hidden = h;
      cfg.weight_init_scale = 1.5;
      auto m = init_model(f, cfg, r);
      for (Eigen::Index j = 0; j < h; ++j) m.b1(j) = 0.1 * gauss(rng);
      m.b2 = 0.1 * gauss(rng);
      Mask mask(static_cast<std::size_t>(n), 1);
      const auto drop = make_dropout_scale(n, h, 0.2, r);
      const auto st = finite_difference_check(m, g, x, y, mask, drop);
      EXPECT_LT(st.max_rel, 1e-4) << "trial " << trial;
    }
  }
}

TEST(Gradient, LibraryCheckerAgrees) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto inst = random_instance(Task::binary, s);
    const auto r = check_gradient(inst.model, inst.adj, inst.x, inst.y, inst.mask, &inst.dropout);
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_GT(r.n_checked, 0u);
  }
}

TEST(Train, ConstantRegressionTarget) {
  std::mt19937_64 rng(9);
  const auto g = random_group(20, 2, 0.2, rng);
  const auto adj = normalize_adjacency(g.graph);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 1.7);
  Mask mask(20, 1);
  for (int i = 0; i < 20; i += 3) mask[static_cast<std::size_t>(i)] = 0;
  const auto m = train(quick(Task::regression, 10000, 0.01), adj, g.X, y, mask);
  const auto pred = forward(m, adj, g.X);
  for (Eigen::Index i = 0; i < 20; ++i)
    if (mask[static_cast<std::size_t>(i)]) {
      EXPECT_NEAR(pred(i), 1.7, 1e-3);
    }
}

TEST(Train, SeparableConstantClass) {
  std::mt19937_64 rng(10);
  const auto g = random_group(15, 2, 0.2, rng);
  const auto adj = normalize_adjacency(g.graph);
  const auto m = train(quick(Task::binary, 500, 0.01), adj, g.X, Eigen::VectorXd::Ones(15), Mask(15, 1));
  EXPECT_GE(forward(m, adj, g.X).minCoeff(), 0.9);
}

TEST(Train, DeterministicGivenSeed) {
  std::mt19937_64 rng(11);
  const auto g = random_group(15, 2, 0.2, rng);
  const auto adj = normalize_adjacency(g.graph);
  GcnConfig c;
  c.epochs = 50;
  c.seed = 77;
  const auto a = train(c, adj, g.X, g.Y, Mask(15, 1));
  const auto b = train(c, adj, g.X, g.Y, Mask(15, 1));
  EXPECT_EQ(a.W1, b.W1);
  EXPECT_EQ(a.W2, b.W2);
  EXPECT_EQ(a.b1, b.b1);
  EXPECT_EQ(a.b2, b.b2);
  c.seed = 78;
  EXPECT_NE(train(c, adj, g.X, g.Y, Mask(15, 1)).W1, a.W1);
}

TEST(Train, Errors) {
  std::mt19937_64 rng(12);
  const auto g = random_group(6, 1, 0.3, rng);
  const auto adj = normalize_adjacency(g.graph);
  EXPECT_THROW(train(quick(Task::regression, 5), adj, g.X, g.Y, Mask(6, 0)), TrainingError);
  EXPECT_THROW(train(quick(Task::binary, 5), adj, g.X, g.Y, Mask(6, 1)), TrainingError);
  const Eigen::MatrixXd huge = Eigen::MatrixXd::Constant(6, 1, 1e300);
  try {
    train(quick(Task::regression, 5), adj, huge, g.Y, Mask(6, 1));
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch, 1);
  }
  GcnConfig bad;
  bad.hidden = 0;
  EXPECT_THROW(bad.validate(), ParameterError);
  bad = GcnConfig{};
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), ParameterError);
  bad = GcnConfig{};
  bad.learning_rate = 0.0;
  EXPECT_THROW(bad.validate(), ParameterError);
}

TEST(FitPropensity, AllUnitsAtLevel) {
  std::mt19937_64 rng(13);
  const auto g = random_group(12, 2, 0.3, rng);
  const auto fit = fit_propensity(normalize_adjacency(g.graph), g.X,
                                  levels(std::vector<int>(12, 1)), 1, quick(Task::binary, 500));
  EXPECT_GE(fit.p.minCoeff(), 0.9);
  EXPECT_TRUE(fit.degenerate);
}

TEST(FitPropensity, StrictlyInsideUnitInterval) {
  std::mt19937_64 rng(14);
  const auto g = random_group(12, 2, 0.3, rng);
  std::vector<int> l(12);
  for (int i = 0; i < 12; ++i) l[static_cast<std::size_t>(i)] = i % 3 == 0;
  const auto fit = fit_propensity(normalize_adjacency(g.graph), g.X, levels(l), 1, GcnConfig{});
  EXPECT_GT(fit.p.minCoeff(), 0.0);
  EXPECT_LT(fit.p.maxCoeff(), 1.0);
  EXPECT_FALSE(fit.degenerate);
  const auto absent = fit_propensity(normalize_adjacency(g.graph), g.X, levels(l), 3, GcnConfig{});
  EXPECT_TRUE(absent.degenerate);
  EXPECT_EQ(absent.p.size(), 12);
}

TEST(FitPropensity, OneVsRestNeedNotSumToOne) {
  std::mt19937_64 rng(15);
  const auto g = random_group(16, 2, 0.3, rng);
  std::vector<int> l(16);
  for (int i = 0; i < 16; ++i) l[static_cast<std::size_t>(i)] = i % 4;
  const auto adj = normalize_adjacency(g.graph);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(16);
  for (int t = 0; t < 4; ++t) {
    auto c = quick(Task::binary, 200);
    c.seed = static_cast<std::uint64_t>(t);
    total += fit_propensity(adj, g.X, levels(l, 4), t, c).p;
  }
  EXPECT_GT((total.array() - 1.0).abs().maxCoeff(), 1e-6);
}

TEST(FitOutcome, ConstantOutcome) {
  std::mt19937_64 rng(16);
  const auto g = random_group(12, 2, 0.3, rng);
  const auto mu = fit_outcome(normalize_adjacency(g.graph), g.X, Eigen::VectorXd::Constant(12, -3.0),
                              levels(std::vector<int>(12, 0)), 0, quick(Task::regression, 800));
  EXPECT_LT((mu.array() + 3.0).abs().maxCoeff(), 1e-2);
}

TEST(FitOutcome, SingleUnitMask) {
  std::mt19937_64 rng(17);
  const auto g = random_group(10, 2, 0.3, rng);
  std::vector<int> l(10, 0);
  l[4] = 1;
  const auto mu = fit_outcome(normalize_adjacency(g.graph), g.X, g.Y, levels(l), 1, GcnConfig{});
  EXPECT_TRUE(mu.allFinite());
  EXPECT_EQ(mu.size(), 10);
}

TEST(FitOutcome, NoUnitAtLevel) {
  std::mt19937_64 rng(18);
  const auto g = random_group(10, 2, 0.3, rng);
  EXPECT_THROW(fit_outcome(normalize_adjacency(g.graph), g.X, g.Y,
                           levels(std::vector<int>(10, 0)), 1, GcnConfig{}),
               EstimationError);
}

TEST(FitOutcome, LinearSignalBeatsVarianceOnHeldOut) {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n = 200;
  GroupData g;
  g.graph = random_graph(n, 0.05, rng);
  g.X.resize(n, 1);
  g.Y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    g.X(k, 0) = gauss(rng);
  }
  // Aggregated features carry the signal the GCN can see.
  const auto adj = normalize_adjacency(g.graph);
  const Eigen::VectorXd smooth = adj.matrix * (adj.matrix * g.X.col(0));
  for (std::size_t i = 0; i < n; ++i)
    g.Y(static_cast<Eigen::Index>(i)) = 2.0 * smooth(static_cast<Eigen::Index>(i)) + 0.1 * gauss(rng);
  std::vector<int> l(n);
  for (std::size_t i = 0; i < n; ++i) l[i] = i % 4 == 0 ? 1 : 0;  // every 4th unit held out
  auto c = quick(Task::regression, 1000, 0.01);
  const auto mu = fit_outcome(adj, g.X, g.Y, levels(l), 0, c);
  double mse = 0, var = 0, mean = 0, cnt = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (l[i]) {
      mean += g.Y(static_cast<Eigen::Index>(i));
      cnt += 1;
    }
  mean /= cnt;
  for (std::size_t i = 0; i < n; ++i) {
    if (!l[i]) continue;
    const auto k = static_cast<Eigen::Index>(i);
    mse += (mu(k) - g.Y(k)) * (mu(k) - g.Y(k));
    var += (g.Y(k) - mean) * (g.Y(k) - mean);
  }
  EXPECT_LT(mse / cnt, 0.5 * var / cnt);
}

TEST(ModelDump, RoundTrip) {
  Rng r(5);
  GcnConfig c;
  c.task = Task::binary;
  c.hidden = 4;
  auto m = init_model(3, c, r);
  m.b2 = 0.123456789012345678;
  std::stringstream ss;
  write_model(ss, m);
  const auto back = read_model(ss);
  EXPECT_EQ(back.W1, m.W1);
  EXPECT_EQ(back.b1, m.b1);
  EXPECT_EQ(back.W2, m.W2);
  EXPECT_EQ(back.b2, m.b2);
  EXPECT_EQ(back.task, Task::binary);
  std::stringstream bad("task regression\nW1 2 2\n1 2\n");
  EXPECT_THROW(read_model(bad), DataError);
}
