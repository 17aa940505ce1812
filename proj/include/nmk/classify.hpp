#pragma once

// Classical classifiers over scaled feature vectors: k-nearest neighbours,
// kernel SVM, CART decision tree and Gaussian naive Bayes, plus stratified
// k-fold grid search.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "nmk/binio.hpp"
#include "nmk/core.hpp"
#include "nmk/features.hpp"
#include "nmk/rng.hpp"

namespace nmk::classify {

// Row-major sample matrix.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t cols) : cols_(cols) {}
  Matrix(std::size_t rows, std::size_t cols) : cols_(cols), data_(rows * cols, 0.0) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.empty() ? 0 : rows.front().size());
    for (const auto& r : rows) m.push_row(r);
    return m;
  }
  static Matrix from_features(std::span<const features::FeatureVector> vs) {
    Matrix m(features::kNumFeatures);
    for (const auto& v : vs) m.push_row(v.values);
    return m;
  }

  void push_row(std::span<const double> r) {
    if (r.size() != cols_) throw ShapeError("row of width " + std::to_string(r.size()) + ", expected " + std::to_string(cols_));
    data_.insert(data_.end(), r.begin(), r.end());
  }

  std::size_t rows() const { return cols_ == 0 ? 0 : data_.size() / cols_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  const std::vector<double>& data() const { return data_; }

  Matrix select(std::span<const std::size_t> idx) const {
    Matrix m(cols_);
    m.data_.reserve(idx.size() * cols_);
    for (auto i : idx) m.push_row(row(i));
    return m;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using Labels = std::vector<Reaction>;

inline Labels select(const Labels& y, std::span<const std::size_t> idx) {
  Labels out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(y[i]);
  return out;
}

enum class ModelKind : std::uint8_t { knn = 0, svm = 1, dt = 2, nb = 3 };
enum class Kernel : std::uint8_t { rbf = 0, linear = 1 };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::knn: return "knn";
    case ModelKind::svm: return "svm";
    case ModelKind::dt: return "dt";
    case ModelKind::nb: return "nb";
  }
  return "?";
}

struct Hyperparams {
  int k = 5;                // knn
  double C = 1.0;           // svm
  double gamma = 1.0;       // svm rbf
  Kernel kernel = Kernel::rbf;
  double tol = 1e-3;        // svm KKT tolerance
  long max_iter = 1000000;  // svm working-set iterations
  int max_depth = 5;        // dt

  bool operator==(const Hyperparams&) const = default;
};

struct Prediction {
  Reaction label = Reaction::Negative;
  double score = 0.0;  // in [0, 1], larger favours Positive
};

// ---------------------------------------------------------------------------
// Model parameter blocks
// ---------------------------------------------------------------------------

struct KnnModel {
  int k = 5;
  Matrix X;
  Labels y;
};

struct SvmModel {
  Kernel kernel = Kernel::rbf;
  double C = 1.0;
  double gamma = 1.0;
  Matrix support;                 // support vectors
  std::vector<double> coef;       // alpha_i * y_i per support vector
  std::vector<double> alpha;      // alpha_i per support vector
  double bias = 0.0;
  long iterations = 0;
  bool converged = false;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;     // x[feature] <= threshold
  int right = -1;
  Reaction label = Reaction::Negative;
  double positive_fraction = 0.0;
  int depth = 0;
};

struct TreeModel {
  int max_depth = 5;
  std::size_t dim = 0;
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
  }
};

struct NaiveBayesModel {
  static constexpr double kVarianceFloor = 1e-9;
  // Index 0 = Negative, 1 = Positive.
  std::array<std::vector<double>, 2> mean;
  std::array<std::vector<double>, 2> var;
  std::array<double, 2> log_prior{};
};

struct TrainedModel {
  std::variant<KnnModel, SvmModel, TreeModel, NaiveBayesModel> params;

  ModelKind kind() const { return static_cast<ModelKind>(params.index()); }
  std::size_t dim() const;
};

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double kernel_value(Kernel k, double gamma, std::span<const double> a, std::span<const double> b) {
  if (k == Kernel::linear) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  return std::exp(-gamma * squared_distance(a, b));
}

namespace detail {

inline void check_training(const Matrix& X, const Labels& y, bool need_both) {
  if (X.rows() != y.size()) throw ShapeError("sample/label count mismatch");
  if (y.size() < 2) throw ShapeError("need at least two training samples");
  if (need_both) {
    const auto pos = std::count(y.begin(), y.end(), Reaction::Positive);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) {
      throw DegenerateTrainingError("training data holds a single class");
    }
  }
}

inline double sign(Reaction r) { return r == Reaction::Positive ? 1.0 : -1.0; }

}  // namespace detail

// ---------------------------------------------------------------------------
// KNN
// ---------------------------------------------------------------------------

inline KnnModel fit_knn(const Matrix& X, const Labels& y, int k) {
  detail::check_training(X, y, false);
  if (k < 1) throw ParameterError("k must be >= 1");
  return {k, X, y};
}

// Majority vote of the k nearest (Euclidean; equal distances ordered by
// training index). Vote ties go to the class with the smaller summed
// distance, then to Negative.
inline Prediction predict(const KnnModel& m, std::span<const double> x) {
  const std::size_t n = m.X.rows();
  std::vector<std::pair<double, std::size_t>> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = {squared_distance(m.X.row(i), x), i};
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(m.k), n);
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  int votes[2] = {0, 0};
  double dist[2] = {0, 0};
  for (std::size_t i = 0; i < k; ++i) {
    const int c = static_cast<int>(m.y[d[i].second]);
    ++votes[c];
    dist[c] += std::sqrt(d[i].first);
  }
  Reaction label = Reaction::Negative;
  if (votes[1] > votes[0] || (votes[1] == votes[0] && dist[1] < dist[0])) label = Reaction::Positive;
  return {label, static_cast<double>(votes[1]) / static_cast<double>(k)};
}

// ---------------------------------------------------------------------------
// SVM: dual solved by sequential minimal optimization, picking the maximal
// KKT-violating pair each step and stopping once the violation gap is below
// tol. The bias is the mean over free vectors (midpoint of the feasible
// interval when none are free).
// ---------------------------------------------------------------------------

inline SvmModel fit_svm(const Matrix& X, const Labels& y, const Hyperparams& hp) {
  detail::check_training(X, y, true);
  if (!(hp.C > 0)) throw ParameterError("C must be positive");
  if (hp.kernel == Kernel::rbf && !(hp.gamma > 0)) throw ParameterError("gamma must be positive");
  const std::size_t n = X.rows();
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = detail::sign(y[i]);

  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = kernel_value(hp.kernel, hp.gamma, X.row(i), X.row(j));
      K[i * n + j] = v;
      K[j * n + i] = v;
    }
  }
  auto Q = [&](std::size_t i, std::size_t j) { return ys[i] * ys[j] * K[i * n + j]; };

  const double C = hp.C;
  constexpr double tau = 1e-12;
  std::vector<double> a(n, 0.0), G(n, -1.0);
  auto in_up = [&](std::size_t t) { return (ys[t] > 0 && a[t] < C) || (ys[t] < 0 && a[t] > 0); };
  auto in_low = [&](std::size_t t) { return (ys[t] > 0 && a[t] > 0) || (ys[t] < 0 && a[t] < C); };

  SvmModel m;
  m.kernel = hp.kernel;
  m.C = C;
  m.gamma = hp.gamma;
  long iter = 0;
  for (; iter < hp.max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -ys[t] * G[t];
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    if (i == n || j == n || gmax - gmin < hp.tol) {
      m.converged = true;
      break;
    }

    const double ai_old = a[i], aj_old = a[j];
    if (ys[i] != ys[j]) {
      double quad = Q(i, i) + Q(j, j) + 2 * Q(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0) {
        if (a[j] < 0) { a[j] = 0; a[i] = diff; }
      } else {
        if (a[i] < 0) { a[i] = 0; a[j] = -diff; }
      }
      if (diff > 0) {
        if (a[i] > C) { a[i] = C; a[j] = C - diff; }
      } else {
        if (a[j] > C) { a[j] = C; a[i] = C + diff; }
      }
    } else {
      double quad = Q(i, i) + Q(j, j) - 2 * Q(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > C) {
        if (a[i] > C) { a[i] = C; a[j] = sum - C; }
      } else {
        if (a[j] < 0) { a[j] = 0; a[i] = sum; }
      }
      if (sum > C) {
        if (a[j] > C) { a[j] = C; a[i] = sum - C; }
      } else {
        if (a[i] < 0) { a[i] = 0; a[j] = sum; }
      }
    }
    const double di = a[i] - ai_old, dj = a[j] - aj_old;
    for (std::size_t t = 0; t < n; ++t) G[t] += Q(t, i) * di + Q(t, j) * dj;
  }
  m.iterations = iter;

  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = ys[t] * G[t];
    if (a[t] >= C) {
      if (ys[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (a[t] <= 0) {
      if (ys[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2;
  m.bias = -rho;

  m.support = Matrix(X.cols());
  for (std::size_t t = 0; t < n; ++t) {
    if (a[t] > 0) {
      m.support.push_row(X.row(t));
      m.coef.push_back(a[t] * ys[t]);
      m.alpha.push_back(a[t]);
    }
  }
  return m;
}

inline double decision_function(const SvmModel& m, std::span<const double> x) {
  double f = m.bias;
  for (std::size_t s = 0; s < m.coef.size(); ++s) f += m.coef[s] * kernel_value(m.kernel, m.gamma, m.support.row(s), x);
  return f;
}

inline Prediction predict(const SvmModel& m, std::span<const double> x) {
  const double f = decision_function(m, x);
  return {f > 0 ? Reaction::Positive : Reaction::Negative, 1.0 / (1.0 + std::exp(-f))};
}

// ---------------------------------------------------------------------------
// CART decision tree (Gini). Candidate thresholds are midpoints between
// consecutive distinct values; the best split wins, ties going to the lowest
// feature index and then the lowest threshold. A node becomes a leaf when
// pure, at max depth, or when no feature varies within it.
// ---------------------------------------------------------------------------

namespace detail {

// Gains closer than this are ties.
inline constexpr double kGainTieEps = 1e-12;

inline double gini(double pos, double total) {
  if (total <= 0) return 0.0;
  const double p = pos / total;
  return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

inline TreeNode make_leaf(const Labels& y, std::span<const std::size_t> idx, int depth) {
  TreeNode leaf;
  std::size_t pos = 0;
  for (auto i : idx) pos += y[i] == Reaction::Positive;
  leaf.positive_fraction = idx.empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(idx.size());
  leaf.label = 2 * pos > idx.size() ? Reaction::Positive : Reaction::Negative;
  leaf.depth = depth;
  return leaf;
}

inline int grow(TreeModel& tree, const Matrix& X, const Labels& y, std::vector<std::size_t> idx, int depth) {
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(make_leaf(y, idx, depth));
  const std::size_t n = idx.size();
  std::size_t pos = 0;
  for (auto i : idx) pos += y[i] == Reaction::Positive;
  if (depth >= tree.max_depth || pos == 0 || pos == n) return node_id;

  const double parent = gini(static_cast<double>(pos), static_cast<double>(n));
  double best_gain = -std::numeric_limits<double>::infinity();
  int best_feature = -1;
  double best_threshold = 0;
  std::vector<std::size_t> order(idx);
  for (std::size_t f = 0; f < X.cols(); ++f) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return X.row(a)[f] < X.row(b)[f]; });
    std::size_t left_pos = 0;
    for (std::size_t t = 0; t + 1 < n; ++t) {
      left_pos += y[order[t]] == Reaction::Positive;
      const double v = X.row(order[t])[f];
      const double next = X.row(order[t + 1])[f];
      if (!(next > v)) continue;
      const double nl = static_cast<double>(t + 1), nr = static_cast<double>(n - t - 1);
      const double child = (nl * gini(static_cast<double>(left_pos), nl) +
                            nr * gini(static_cast<double>(pos - left_pos), nr)) /
                           static_cast<double>(n);
      const double gain = parent - child;
      if (gain > best_gain + kGainTieEps) {
        best_gain = gain;
        best_feature = static_cast<int>(f);
        best_threshold = v + (next - v) / 2;
      }
    }
  }
  if (best_feature < 0) return node_id;

  std::vector<std::size_t> left, right;
  for (auto i : idx) {
    (X.row(i)[static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(i);
  }
  const int l = grow(tree, X, y, std::move(left), depth + 1);
  const int r = grow(tree, X, y, std::move(right), depth + 1);
  auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
  node.feature = best_feature;
  node.threshold = best_threshold;
  node.left = l;
  node.right = r;
  return node_id;
}

}  // namespace detail

inline TreeModel fit_tree(const Matrix& X, const Labels& y, int max_depth) {
  detail::check_training(X, y, true);
  if (max_depth < 0) throw ParameterError("max depth must be >= 0");
  TreeModel tree;
  tree.max_depth = max_depth;
  tree.dim = X.cols();
  std::vector<std::size_t> idx(X.rows());
  std::iota(idx.begin(), idx.end(), 0);
  detail::grow(tree, X, y, std::move(idx), 0);
  return tree;
}

inline Prediction predict(const TreeModel& m, std::span<const double> x) {
  std::size_t id = 0;
  while (m.nodes[id].feature >= 0) {
    const auto& n = m.nodes[id];
    id = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return {m.nodes[id].label, m.nodes[id].positive_fraction};
}

// ---------------------------------------------------------------------------
// Gaussian naive Bayes
// ---------------------------------------------------------------------------

inline NaiveBayesModel fit_nb(const Matrix& X, const Labels& y) {
  detail::check_training(X, y, true);
  const std::size_t d = X.cols();
  NaiveBayesModel m;
  std::array<double, 2> count{};
  for (int c = 0; c < 2; ++c) {
    m.mean[static_cast<std::size_t>(c)].assign(d, 0.0);
    m.var[static_cast<std::size_t>(c)].assign(d, 0.0);
  }
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto c = static_cast<std::size_t>(y[i]);
    count[c] += 1;
    for (std::size_t f = 0; f < d; ++f) m.mean[c][f] += X.row(i)[f];
  }
  for (std::size_t c = 0; c < 2; ++c)
    for (auto& v : m.mean[c]) v /= count[c];
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto c = static_cast<std::size_t>(y[i]);
    for (std::size_t f = 0; f < d; ++f) {
      const double r = X.row(i)[f] - m.mean[c][f];
      m.var[c][f] += r * r;
    }
  }
  const double n = static_cast<double>(X.rows());
  for (std::size_t c = 0; c < 2; ++c) {
    for (auto& v : m.var[c]) v = std::max(v / count[c], NaiveBayesModel::kVarianceFloor);
    m.log_prior[c] = std::log(count[c] / n);
  }
  return m;
}

inline std::array<double, 2> log_joint(const NaiveBayesModel& m, std::span<const double> x) {
  std::array<double, 2> lj{};
  for (std::size_t c = 0; c < 2; ++c) {
    double s = m.log_prior[c];
    for (std::size_t f = 0; f < x.size(); ++f) {
      const double r = x[f] - m.mean[c][f];
      s += -0.5 * std::log(2.0 * std::numbers::pi * m.var[c][f]) - r * r / (2.0 * m.var[c][f]);
    }
    lj[c] = s;
  }
  return lj;
}

inline Prediction predict(const NaiveBayesModel& m, std::span<const double> x) {
  const auto lj = log_joint(m, x);
  const double score = 1.0 / (1.0 + std::exp(lj[0] - lj[1]));
  return {lj[1] > lj[0] ? Reaction::Positive : Reaction::Negative, score};
}

// ---------------------------------------------------------------------------
// Uniform interface
// ---------------------------------------------------------------------------

inline std::size_t TrainedModel::dim() const {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, KnnModel>) return m.X.cols();
        else if constexpr (std::is_same_v<T, SvmModel>) return m.support.cols();
        else if constexpr (std::is_same_v<T, NaiveBayesModel>) return m.mean[0].size();
        else return m.dim;
      },
      params);
}

inline TrainedModel fit(ModelKind kind, const Matrix& X, const Labels& y, const Hyperparams& hp) {
  switch (kind) {
    case ModelKind::knn: return {fit_knn(X, y, hp.k)};
    case ModelKind::svm: return {fit_svm(X, y, hp)};
    case ModelKind::dt: return {fit_tree(X, y, hp.max_depth)};
    case ModelKind::nb: return {fit_nb(X, y)};
  }
  throw ParameterError("unknown model kind");
}

inline Prediction predict(const TrainedModel& model, std::span<const double> x) {
  const auto d = model.dim();
  if (d != x.size()) {
    throw ShapeError("input of width " + std::to_string(x.size()) + ", model expects " + std::to_string(d));
  }
  return std::visit([&](const auto& m) { return predict(m, x); }, model.params);
}

inline Labels predict_all(const TrainedModel& model, const Matrix& X) {
  Labels out;
  out.reserve(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out.push_back(predict(model, X.row(i)).label);
  return out;
}

inline double accuracy(const Labels& pred, const Labels& truth) {
  if (pred.size() != truth.size() || pred.empty()) throw ShapeError("accuracy needs equal, non-empty label sets");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == truth[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

inline std::vector<Hyperparams> default_grid(ModelKind kind) {
  std::vector<Hyperparams> grid;
  switch (kind) {
    case ModelKind::knn:
      for (int k : {1, 3, 5, 7, 9}) grid.push_back(Hyperparams{.k = k});
      break;
    case ModelKind::svm:
      for (double C : {0.1, 1.0, 10.0, 100.0})
        for (double g : {0.01, 0.1, 1.0, 10.0}) grid.push_back(Hyperparams{.C = C, .gamma = g});
      break;
    case ModelKind::dt:
      for (int d : {2, 3, 5, 8}) grid.push_back(Hyperparams{.max_depth = d});
      break;
    case ModelKind::nb:
      grid.push_back(Hyperparams{});
      break;
  }
  return grid;
}

// Fold index per sample. Each class is shuffled and dealt round-robin.
inline std::vector<int> stratified_folds(const Labels& y, int folds, std::uint64_t seed) {
  if (folds < 2) throw ParameterError("need at least 2 folds");
  std::vector<int> fold(y.size(), 0);
  Rng rng(seed);
  for (Reaction c : {Reaction::Negative, Reaction::Positive}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) members.push_back(i);
    if (members.size() < static_cast<std::size_t>(folds)) {
      throw StratificationError(std::string(to_string(c)) + " class has " + std::to_string(members.size()) +
                                " members, fewer than " + std::to_string(folds) + " folds");
    }
    rng.shuffle(members);
    for (std::size_t t = 0; t < members.size(); ++t) fold[members[t]] = static_cast<int>(t % static_cast<std::size_t>(folds));
  }
  return fold;
}

struct GridResult {
  Hyperparams best;
  std::vector<double> mean_accuracy;  // per grid entry
};

// Fold index per sample with every member of a group kept in one fold.
// Groups (each labelled by its first member) are stratified like samples.
inline std::vector<int> stratified_group_folds(const Labels& y, std::span<const std::size_t> group, int folds,
                                               std::uint64_t seed) {
  if (folds < 2) throw ParameterError("need at least 2 folds");
  if (group.size() != y.size()) throw ShapeError("group/label count mismatch");
  std::vector<std::size_t> ids(group.begin(), group.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Labels group_label(ids.size());
  std::vector<bool> seen(ids.size(), false);
  auto slot = [&](std::size_t g) { return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), g) - ids.begin()); };
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto s = slot(group[i]);
    if (!seen[s]) {
      seen[s] = true;
      group_label[s] = y[i];
    }
  }
  const auto group_fold = stratified_folds(group_label, folds, seed);
  std::vector<int> fold(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) fold[i] = group_fold[slot(group[i])];
  return fold;
}

inline GridResult grid_search(ModelKind kind, const Matrix& X, const Labels& y, const std::vector<Hyperparams>& grid,
                              const std::vector<int>& fold);

inline GridResult grid_search(ModelKind kind, const Matrix& X, const Labels& y, const std::vector<Hyperparams>& grid,
                              int folds, std::uint64_t seed) {
  if (grid.size() == 1) return grid_search(kind, X, y, grid, std::vector<int>{});
  return grid_search(kind, X, y, grid, stratified_folds(y, folds, seed));
}

// Explicit fold assignment (ignored for a single-candidate grid).
inline GridResult grid_search(ModelKind kind, const Matrix& X, const Labels& y, const std::vector<Hyperparams>& grid,
                              const std::vector<int>& fold) {
  if (grid.empty()) throw ParameterError("empty hyperparameter grid");
  if (X.rows() != y.size()) throw ShapeError("sample/label count mismatch");
  GridResult r;
  if (grid.size() == 1) {
    r.best = grid.front();
    r.mean_accuracy.assign(1, std::numeric_limits<double>::quiet_NaN());
    return r;
  }
  if (fold.size() != y.size()) throw ShapeError("fold/label count mismatch");
  const int folds = fold.empty() ? 0 : *std::max_element(fold.begin(), fold.end()) + 1;
  std::vector<std::vector<std::size_t>> train(static_cast<std::size_t>(folds)), val(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (int f = 0; f < folds; ++f) (fold[i] == f ? val : train)[static_cast<std::size_t>(f)].push_back(i);
  }
  double best = -1;
  for (const auto& hp : grid) {
    double acc = 0;
    for (std::size_t f = 0; f < static_cast<std::size_t>(folds); ++f) {
      const auto model = fit(kind, X.select(train[f]), select(y, train[f]), hp);
      acc += accuracy(predict_all(model, X.select(val[f])), select(y, val[f]));
    }
    acc /= folds;
    r.mean_accuracy.push_back(acc);
    if (acc > best) {
      best = acc;
      r.best = hp;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Persistence: "NMK1" u8(kind=2) u8(model kind) then the kind's parameters.
// ---------------------------------------------------------------------------

namespace detail {
inline void put_matrix(binio::Writer& w, const Matrix& m) {
  w.u64(m.cols());
  w.f64s(m.data());
}
inline Matrix get_matrix(binio::Reader& r) {
  const auto cols = r.u64();
  auto data = r.f64s();
  if (cols == 0 ? !data.empty() : data.size() % cols != 0) throw CorruptBundleError("matrix shape mismatch");
  Matrix m(cols);
  for (std::size_t i = 0; cols && i < data.size() / cols; ++i) m.push_row({data.data() + i * cols, cols});
  return m;
}
inline void put_labels(binio::Writer& w, const Labels& y) {
  w.u64(y.size());
  for (auto l : y) w.u8(static_cast<std::uint8_t>(l));
}
inline Labels get_labels(binio::Reader& r) {
  Labels y(r.count(1));
  for (auto& l : y) {
    auto v = r.u8();
    if (v > 1) throw CorruptBundleError("label out of range");
    l = static_cast<Reaction>(v);
  }
  return y;
}
}  // namespace detail

inline std::string encode_model(const TrainedModel& model) {
  binio::Writer w;
  w.header(binio::PayloadKind::model);
  w.u8(static_cast<std::uint8_t>(model.kind()));
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, KnnModel>) {
          w.i64(m.k);
          detail::put_matrix(w, m.X);
          detail::put_labels(w, m.y);
        } else if constexpr (std::is_same_v<T, SvmModel>) {
          w.u8(static_cast<std::uint8_t>(m.kernel));
          w.f64(m.C);
          w.f64(m.gamma);
          detail::put_matrix(w, m.support);
          w.f64s(m.coef);
          w.f64s(m.alpha);
          w.f64(m.bias);
          w.i64(m.iterations);
          w.u8(m.converged ? 1 : 0);
        } else if constexpr (std::is_same_v<T, TreeModel>) {
          w.i64(m.max_depth);
          w.u64(m.dim);
          w.u64(m.nodes.size());
          for (const auto& n : m.nodes) {
            w.i64(n.feature);
            w.f64(n.threshold);
            w.i64(n.left);
            w.i64(n.right);
            w.u8(static_cast<std::uint8_t>(n.label));
            w.f64(n.positive_fraction);
            w.i64(n.depth);
          }
        } else {
          for (std::size_t c = 0; c < 2; ++c) {
            w.f64s(m.mean[c]);
            w.f64s(m.var[c]);
            w.f64(m.log_prior[c]);
          }
        }
      },
      model.params);
  return w.bytes();
}

inline TrainedModel decode_model(std::string_view bytes) {
  binio::Reader r(bytes);
  r.header(binio::PayloadKind::model);
  const auto kind = r.u8();
  TrainedModel out;
  switch (static_cast<ModelKind>(kind)) {
    case ModelKind::knn: {
      KnnModel m;
      m.k = static_cast<int>(r.i64());
      m.X = detail::get_matrix(r);
      m.y = detail::get_labels(r);
      if (m.X.rows() != m.y.size()) throw CorruptBundleError("knn sample/label mismatch");
      out.params = std::move(m);
      break;
    }
    case ModelKind::svm: {
      SvmModel m;
      m.kernel = static_cast<Kernel>(r.u8());
      m.C = r.f64();
      m.gamma = r.f64();
      m.support = detail::get_matrix(r);
      m.coef = r.f64s();
      m.alpha = r.f64s();
      m.bias = r.f64();
      m.iterations = r.i64();
      m.converged = r.u8() != 0;
      if (m.coef.size() != m.support.rows() || m.alpha.size() != m.coef.size()) throw CorruptBundleError("svm block mismatch");
      out.params = std::move(m);
      break;
    }
    case ModelKind::dt: {
      TreeModel m;
      m.max_depth = static_cast<int>(r.i64());
      m.dim = r.u64();
      const auto n = r.count(8);
      for (std::uint64_t i = 0; i < n; ++i) {
        TreeNode node;
        node.feature = static_cast<int>(r.i64());
        node.threshold = r.f64();
        node.left = static_cast<int>(r.i64());
        node.right = static_cast<int>(r.i64());
        node.label = static_cast<Reaction>(r.u8() & 1);
        node.positive_fraction = r.f64();
        node.depth = static_cast<int>(r.i64());
        const auto limit = static_cast<int>(n);
        if (node.feature >= 0 && (static_cast<std::size_t>(node.feature) >= m.dim || node.left <= 0 || node.right <= 0 || node.left >= limit || node.right >= limit)) {
          throw CorruptBundleError("tree child index out of range");
        }
        m.nodes.push_back(node);
      }
      if (m.nodes.empty()) throw CorruptBundleError("empty tree");
      out.params = std::move(m);
      break;
    }
    case ModelKind::nb: {
      NaiveBayesModel m;
      for (std::size_t c = 0; c < 2; ++c) {
        m.mean[c] = r.f64s();
        m.var[c] = r.f64s();
        m.log_prior[c] = r.f64();
      }
      out.params = std::move(m);
      break;
    }
    default:
      throw CorruptBundleError("unknown model kind " + std::to_string(kind));
  }
  r.expect_end();
  return out;
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  binio::write_file_atomic(path, encode_model(m));
}

inline TrainedModel load_model(const std::filesystem::path& path) { return decode_model(binio::read_file(path)); }

}  // namespace nmk::classify
