#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "nmk/classify.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace nmk;
using namespace nmk::classify;
using namespace nmk::test::oracle;

// ----- oracle agreement on 20-point random datasets -----

TEST(Knn, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = clouds(seed, 20, 3, 0.8);
    const auto P = probes(seed + 100, 50, 3, -2, 3);
    for (int k : {1, 2, 3, 4, 5, 7, 20, 25}) {
      const auto m = fit(ModelKind::knn, d.X, d.y, Hyperparams{.k = k});
      for (std::size_t i = 0; i < P.rows(); ++i)
        ASSERT_EQ(predict(m, P.row(i)).label, knn_oracle(d, P.row(i), static_cast<std::size_t>(k))) << seed << " " << k;
    }
  }
}

TEST(Knn, EqualDistanceVoteTieGoesToNegative) {
  Data d{Matrix::from_rows({{-1.0}, {1.0}}), {Reaction::Positive, Reaction::Negative}};
  const auto m = fit_knn(d.X, d.y, 2);
  const std::vector<double> x{0.0};
  EXPECT_EQ(predict(m, x).label, Reaction::Negative);
  const std::vector<double> near_pos{-0.1};
  EXPECT_EQ(predict(m, near_pos).label, Reaction::Positive);
}

TEST(NaiveBayes, MatchesClosedFormOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = clouds(seed, 20, 4, 0.7);
    const auto m = fit(ModelKind::nb, d.X, d.y, {});
    const auto P = probes(seed + 200, 50, 4, -3, 4);
    for (std::size_t i = 0; i < P.rows(); ++i) ASSERT_EQ(predict(m, P.row(i)).label, nb_oracle(d, P.row(i))) << seed;
  }
}

TEST(NaiveBayes, ConstantFeatureUsesVarianceFloor) {
  Data d{Matrix::from_rows({{0.0, 1.0}, {0.0, 2.0}, {0.0, 5.0}, {0.0, 6.0}}),
         {Reaction::Negative, Reaction::Negative, Reaction::Positive, Reaction::Positive}};
  const auto m = fit_nb(d.X, d.y);
  EXPECT_DOUBLE_EQ(m.var[0][0], NaiveBayesModel::kVarianceFloor);
  const std::vector<double> x{0.0, 5.5};
  EXPECT_EQ(predict(m, x).label, Reaction::Positive);
  EXPECT_NEAR(m.log_prior[0], std::log(0.5), 1e-15);
}

TEST(DecisionTree, MatchesExhaustiveOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto d = clouds(seed, 20, 3, 0.6);
    // Quantize one axis so tied values and tied gains occur.
    for (std::size_t i = 0; i < d.X.rows(); ++i) d.X.row(i)[2] = std::round(d.X.row(i)[2]);
    const auto P = probes(seed + 300, 60, 3, -2, 3);
    for (int depth : {0, 1, 2, 3, 5, 8}) {
      const auto m = fit(ModelKind::dt, d.X, d.y, Hyperparams{.max_depth = depth});
      const OracleTree oracle{d, depth};
      for (std::size_t i = 0; i < P.rows(); ++i)
        ASSERT_EQ(predict(m, P.row(i)).label, oracle(P.row(i))) << seed << " depth " << depth;
    }
  }
}

TEST(DecisionTree, DepthLimitAndPureLeaves) {
  const auto d = clouds(3, 40, 2, 1.0);
  for (int depth : {0, 1, 2, 4}) EXPECT_LE(fit_tree(d.X, d.y, depth).depth(), depth);
  const auto deep = fit_tree(d.X, d.y, 50);
  EXPECT_DOUBLE_EQ(accuracy(predict_all(TrainedModel{deep}, d.X), d.y), 1.0);
  for (const auto& n : deep.nodes)
    if (n.feature < 0) {
      EXPECT_TRUE(n.positive_fraction == 0.0 || n.positive_fraction == 1.0);
    }
}

TEST(DecisionTree, IdenticalRowsStopSplitting) {
  Data d{Matrix::from_rows({{1.0}, {1.0}, {1.0}}), {Reaction::Negative, Reaction::Positive, Reaction::Positive}};
  const auto t = fit_tree(d.X, d.y, 5);
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.nodes[0].label, Reaction::Positive);
}

TEST(Svm, AgreesWithIndependentSolver) {
  std::size_t agree = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = clouds(seed, 20, 2, 1.2);
    for (auto [C, g] : {std::pair{1.0, 0.5}, std::pair{10.0, 1.0}}) {
      const auto m = fit(ModelKind::svm, d.X, d.y, Hyperparams{.C = C, .gamma = g});
      const OracleSvm oracle(d, C, g);
      const auto P = probes(seed + 400, 100, 2, -2, 3.5);
      for (std::size_t i = 0; i < P.rows(); ++i) {
        const auto want = oracle.f(P.row(i)) > 0 ? Reaction::Positive : Reaction::Negative;
        agree += predict(m, P.row(i)).label == want;
        ++total;
      }
    }
  }
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(total), 0.95) << agree << "/" << total;
}

TEST(Svm, KktConditionsHold) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = clouds(seed, 20, 3, 1.0);
    const Hyperparams hp{.C = 5.0, .gamma = 0.7};
    const auto m = fit_svm(d.X, d.y, hp);
    ASSERT_TRUE(m.converged);
    // Support vectors are stored in training order; recover alpha per sample.
    std::vector<double> alpha(d.y.size(), 0.0);
    std::size_t s = 0;
    double balance = 0;
    for (std::size_t i = 0; i < d.y.size() && s < m.alpha.size(); ++i) {
      if (std::equal(d.X.row(i).begin(), d.X.row(i).end(), m.support.row(s).begin())) {
        alpha[i] = m.alpha[s];
        balance += m.coef[s];
        ++s;
      }
    }
    ASSERT_EQ(s, m.alpha.size());
    EXPECT_NEAR(balance, 0.0, 1e-9);
    for (std::size_t i = 0; i < d.y.size(); ++i) {
      const double yf = (d.y[i] == Reaction::Positive ? 1.0 : -1.0) * decision_function(m, d.X.row(i));
      EXPECT_GE(alpha[i], 0.0);
      EXPECT_LE(alpha[i], hp.C);
      if (alpha[i] == 0.0) {
        EXPECT_GE(yf, 1.0 - 1e-3) << seed << " " << i;
      } else if (alpha[i] >= hp.C) {
        EXPECT_LE(yf, 1.0 + 1e-3) << seed << " " << i;
      } else {
        EXPECT_NEAR(yf, 1.0, 1e-3) << seed << " " << i;
      }
    }
  }
}

TEST(Svm, RbfSeparatesXor) {
  Matrix X(2);
  Labels y;
  Rng rng(5);
  for (int q = 0; q < 4; ++q) {
    const double cx = q & 1 ? 1.0 : -1.0, cy = q & 2 ? 1.0 : -1.0;
    for (int i = 0; i < 10; ++i) {
      X.push_row(std::vector<double>{cx + rng.normal(0, 0.2), cy + rng.normal(0, 0.2)});
      y.push_back(cx * cy > 0 ? Reaction::Positive : Reaction::Negative);
    }
  }
  const auto m = fit(ModelKind::svm, X, y, Hyperparams{.C = 10.0, .gamma = 1.0});
  EXPECT_DOUBLE_EQ(accuracy(predict_all(m, X), y), 1.0);
  const auto lin = fit(ModelKind::svm, X, y, Hyperparams{.C = 10.0, .kernel = Kernel::linear});
  EXPECT_LT(accuracy(predict_all(lin, X), y), 1.0);
}

TEST(Svm, ScoreIsLogisticOfDecision) {
  const auto d = clouds(1, 20, 2, 2.0);
  const auto m = fit_svm(d.X, d.y, Hyperparams{});
  const std::vector<double> x{0.3, 0.4};
  EXPECT_NEAR(predict(m, x).score, 1.0 / (1.0 + std::exp(-decision_function(m, x))), 1e-15);
}

// ----- training-data validation -----

TEST(Fit, SingleClassAndShapeErrors) {
  Data d{Matrix::from_rows({{1.0}, {2.0}, {3.0}}), {Reaction::Positive, Reaction::Positive, Reaction::Positive}};
  for (auto kind : {ModelKind::svm, ModelKind::dt, ModelKind::nb})
    EXPECT_THROW(fit(kind, d.X, d.y, {}), DegenerateTrainingError) << to_string(kind);
  EXPECT_NO_THROW(fit(ModelKind::knn, d.X, d.y, {}));
  Labels short_y{Reaction::Positive};
  EXPECT_THROW(fit(ModelKind::knn, d.X, short_y, {}), ShapeError);
  const auto m = fit(ModelKind::knn, d.X, d.y, {});
  const std::vector<double> wide{1.0, 2.0};
  EXPECT_THROW(predict(m, wide), ShapeError);
}

TEST(Fit, InvalidHyperparameters) {
  const auto d = clouds(1, 20, 2, 1.0);
  EXPECT_THROW(fit(ModelKind::knn, d.X, d.y, Hyperparams{.k = 0}), ParameterError);
  EXPECT_THROW(fit(ModelKind::svm, d.X, d.y, Hyperparams{.C = 0}), ParameterError);
  EXPECT_THROW(fit(ModelKind::svm, d.X, d.y, Hyperparams{.gamma = -1}), ParameterError);
  EXPECT_THROW(fit(ModelKind::dt, d.X, d.y, Hyperparams{.max_depth = -1}), ParameterError);
}

// ----- folds and grid search -----

TEST(Folds, StratifiedBalanceAndDeterminism) {
  Labels y;
  for (int i = 0; i < 31; ++i) y.push_back(i % 3 == 0 ? Reaction::Positive : Reaction::Negative);
  const auto f = stratified_folds(y, 3, 7);
  EXPECT_EQ(f, stratified_folds(y, 3, 7));
  std::map<int, std::array<int, 2>> counts;
  for (std::size_t i = 0; i < y.size(); ++i) ++counts[f[i]][static_cast<int>(y[i])];
  ASSERT_EQ(counts.size(), 3u);
  for (const auto& [fold, c] : counts) {
    EXPECT_NEAR(c[0], 20.0 / 3, 1.0);
    EXPECT_NEAR(c[1], 11.0 / 3, 1.0);
  }
  EXPECT_THROW(stratified_folds(y, 1, 7), ParameterError);
  Labels tiny{Reaction::Positive, Reaction::Negative, Reaction::Negative};
  EXPECT_THROW(stratified_folds(tiny, 2, 7), StratificationError);
}

TEST(Folds, GroupsStayTogether) {
  Labels y;
  std::vector<std::size_t> group;
  for (std::size_t g = 0; g < 12; ++g) {
    for (int c = 0; c < 6; ++c) {
      y.push_back(g % 2 ? Reaction::Positive : Reaction::Negative);
      group.push_back(100 + 3 * g);
    }
  }
  const auto f = stratified_group_folds(y, group, 3, 1);
  std::map<std::size_t, std::set<int>> seen;
  for (std::size_t i = 0; i < y.size(); ++i) seen[group[i]].insert(f[i]);
  for (const auto& [g, folds] : seen) EXPECT_EQ(folds.size(), 1u) << g;
  std::map<int, std::array<int, 2>> counts;
  for (std::size_t i = 0; i < y.size(); ++i) ++counts[f[i]][static_cast<int>(y[i])];
  for (const auto& [fold, c] : counts) {
    EXPECT_EQ(c[0], 12);
    EXPECT_EQ(c[1], 12);
  }
  EXPECT_THROW(stratified_group_folds(y, std::vector<std::size_t>{1, 2}, 3, 1), ShapeError);
}

TEST(GridSearch, PicksBestMeanAccuracy) {
  const auto d = clouds(4, 60, 2, 1.5);
  const auto grid = default_grid(ModelKind::knn);
  const auto fold = stratified_folds(d.y, 3, 2);
  const auto r = grid_search(ModelKind::knn, d.X, d.y, grid, fold);
  ASSERT_EQ(r.mean_accuracy.size(), grid.size());
  // Recompute each candidate's cross-validated accuracy directly.
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0;
    for (int k = 0; k < 3; ++k) {
      std::vector<std::size_t> tr, va;
      for (std::size_t i = 0; i < d.y.size(); ++i) (fold[i] == k ? va : tr).push_back(i);
      const auto m = fit(ModelKind::knn, d.X.select(tr), select(d.y, tr), grid[g]);
      acc += accuracy(predict_all(m, d.X.select(va)), select(d.y, va)) / 3;
    }
    EXPECT_NEAR(r.mean_accuracy[g], acc, 1e-12);
  }
  const auto best = std::max_element(r.mean_accuracy.begin(), r.mean_accuracy.end()) - r.mean_accuracy.begin();
  EXPECT_EQ(r.best, grid[static_cast<std::size_t>(best)]);
  EXPECT_EQ(grid_search(ModelKind::knn, d.X, d.y, grid, 3, 2).best, r.best);
}

TEST(GridSearch, SingleCandidateSkipsValidation) {
  const auto d = clouds(4, 10, 2, 1.5);
  const auto r = grid_search(ModelKind::nb, d.X, d.y, default_grid(ModelKind::nb), 3, 1);
  ASSERT_EQ(r.mean_accuracy.size(), 1u);
  EXPECT_TRUE(std::isnan(r.mean_accuracy[0]));
  EXPECT_THROW(grid_search(ModelKind::nb, d.X, d.y, {}, 3, 1), ParameterError);
}

TEST(GridSearch, DefaultGrids) {
  EXPECT_EQ(default_grid(ModelKind::knn).size(), 5u);
  EXPECT_EQ(default_grid(ModelKind::svm).size(), 16u);
  EXPECT_EQ(default_grid(ModelKind::dt).size(), 4u);
  EXPECT_EQ(default_grid(ModelKind::nb).size(), 1u);
}

// ----- persistence -----

TEST(Persistence, RoundTripPreservesPredictions) {
  const auto d = clouds(8, 40, 3, 1.0);
  const auto P = probes(9, 30, 3, -2, 3);
  test::TempDir dir("classify");
  for (auto kind : {ModelKind::knn, ModelKind::svm, ModelKind::dt, ModelKind::nb}) {
    const auto m = fit(kind, d.X, d.y, {});
    const auto path = dir / (std::string(to_string(kind)) + ".bin");
    save_model(m, path);
    const auto back = load_model(path);
    EXPECT_EQ(back.kind(), kind);
    EXPECT_EQ(encode_model(back), encode_model(m));
    for (std::size_t i = 0; i < P.rows(); ++i) {
      EXPECT_EQ(predict(back, P.row(i)).label, predict(m, P.row(i)).label);
      EXPECT_EQ(predict(back, P.row(i)).score, predict(m, P.row(i)).score);
    }
  }
}

TEST(Persistence, CorruptBytesRejected) {
  const auto d = clouds(8, 20, 2, 1.0);
  const auto bytes = encode_model(fit(ModelKind::dt, d.X, d.y, {}));
  EXPECT_THROW(decode_model(bytes.substr(0, bytes.size() / 2)), CorruptBundleError);
  EXPECT_THROW(decode_model("XXXX" + bytes.substr(4)), CorruptBundleError);
  auto bad_kind = bytes;
  bad_kind[5] = 9;
  EXPECT_THROW(decode_model(bad_kind), CorruptBundleError);
}
