#include "endoscan/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace endoscan {

using nlohmann::json;

Prediction make_prediction(Eigen::VectorXd probs) {
  Prediction p;
  p.label = probs.size() ? static_cast<int>(argmax(probs)) : 0;
  p.probs = std::move(probs);
  return p;
}

Eigen::VectorXd Model::predict_proba(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, kind() + " model expects " + std::to_string(input_dim()) +
                                                  " inputs, got " + std::to_string(x.size()));
  }
  return proba(x);
}

Prediction Model::predict(const Eigen::VectorXd& x) const { return make_prediction(predict_proba(x)); }

Eigen::MatrixXd Model::predict_proba_rows(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), num_classes());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = predict_proba(x.row(i).transpose()).transpose();
  return out;
}

std::vector<int> Model::predict_labels(const Eigen::MatrixXd& x) const {
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) labels.push_back(predict(x.row(i).transpose()).label);
  return labels;
}

void check_training_set(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes) {
  if (x.rows() == 0 || x.cols() == 0) throw Error(ErrorCode::EmptyMatrix, "training matrix is empty");
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorCode::LengthMismatch, "feature rows and labels differ in length");
  }
  if (!x.allFinite()) throw Error(ErrorCode::NonFinite, "training matrix contains NaN or infinity");
  std::set<int> present;
  for (int label : y) {
    if (label < 0 || label >= num_classes) {
      throw Error(ErrorCode::ShapeMismatch, "label " + std::to_string(label) + " outside [0, " +
                                                std::to_string(num_classes) + ")");
    }
    present.insert(label);
  }
  if (present.size() < 2) throw Error(ErrorCode::SingleClass, "training data contains a single class");
}

namespace detail {

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data.data(), m.rows(), m.cols()) = m;
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(ErrorCode::SchemaMismatch, "matrix data does not match its shape");
  }
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data.data(), rows, cols);
}

}  // namespace detail

namespace {

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

double normal01(Rng& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * M_PI * u2);
}

// ---------------------------------------------------------------------------
// CART

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const std::vector<int>& y, int classes, const TreeParams& params,
              std::uint64_t seed)
      : x_(x), y_(y), classes_(classes), params_(params), rng_(seed), features_(static_cast<std::size_t>(x.cols())) {
    std::iota(features_.begin(), features_.end(), Eigen::Index{0});
  }

  DecisionTree build(std::vector<Eigen::Index> rows) {
    grow(rows, 0);
    return DecisionTree(std::move(nodes_), classes_, x_.cols());
  }

 private:
  struct Split {
    Eigen::Index feature = -1;
    double threshold = 0.0;
    double score = std::numeric_limits<double>::infinity();
  };

  // n_l * gini_l + n_r * gini_r
  static double weighted_gini(const std::vector<double>& left, double nl, const std::vector<double>& right, double nr) {
    double sl = 0.0, sr = 0.0;
    for (std::size_t c = 0; c < left.size(); ++c) {
      sl += left[c] * left[c];
      sr += right[c] * right[c];
    }
    return (nl - sl / nl) + (nr - sr / nr);
  }

  /// Returns false if the feature is constant over the rows.
  bool best_threshold(Eigen::Index f, const std::vector<Eigen::Index>& rows, const std::vector<double>& counts,
                      Split& best) {
    const double n = static_cast<double>(rows.size());
    if (params_.random_thresholds) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (auto r : rows) {
        lo = std::min(lo, x_(r, f));
        hi = std::max(hi, x_(r, f));
      }
      if (!(hi > lo)) return false;
      const double t = uniform_real(rng_, lo, hi);
      std::vector<double> left(counts.size(), 0.0);
      double nl = 0.0;
      for (auto r : rows) {
        if (x_(r, f) <= t) {
          left[static_cast<std::size_t>(y_[static_cast<std::size_t>(r)])] += 1.0;
          nl += 1.0;
        }
      }
      std::vector<double> right(counts.size());
      for (std::size_t c = 0; c < counts.size(); ++c) right[c] = counts[c] - left[c];
      const double score = weighted_gini(left, nl, right, n - nl);
      if (score < best.score) best = {f, t, score};
      return true;
    }
    sorted_.clear();
    for (auto r : rows) sorted_.emplace_back(x_(r, f), y_[static_cast<std::size_t>(r)]);
    std::sort(sorted_.begin(), sorted_.end());
    if (!(sorted_.back().first > sorted_.front().first)) return false;
    std::vector<double> left(counts.size(), 0.0), right = counts;
    for (std::size_t i = 0; i + 1 < sorted_.size(); ++i) {
      const auto c = static_cast<std::size_t>(sorted_[i].second);
      left[c] += 1.0;
      right[c] -= 1.0;
      const double a = sorted_[i].first, b = sorted_[i + 1].first;
      if (a == b) continue;
      const double nl = static_cast<double>(i + 1);
      const double score = weighted_gini(left, nl, right, n - nl);
      if (score < best.score) {
        double t = a + (b - a) / 2.0;
        if (!(t < b)) t = a;
        best = {f, t, score};
      }
    }
    return true;
  }

  int grow(const std::vector<Eigen::Index>& rows, int depth) {
    std::vector<double> counts(static_cast<std::size_t>(classes_), 0.0);
    for (auto r : rows) counts[static_cast<std::size_t>(y_[static_cast<std::size_t>(r)])] += 1.0;
    const double n = static_cast<double>(rows.size());
    TreeNode node;
    node.distribution = Eigen::Map<const Eigen::VectorXd>(counts.data(), classes_) / n;
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back(node);

    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; }) <= 1;
    if (pure || depth >= params_.max_depth || static_cast<int>(rows.size()) < params_.min_samples_split) {
      return index;
    }

    // Visit features in a random order until enough non-constant ones were seen.
    const auto d = static_cast<std::size_t>(x_.cols());
    const std::size_t wanted =
        params_.max_features > 0 ? std::min<std::size_t>(d, static_cast<std::size_t>(params_.max_features)) : d;
    Split best;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < d && seen < wanted; ++i) {
      Eigen::Index f = static_cast<Eigen::Index>(i);
      if (wanted < d) {
        std::swap(features_[i], features_[i + uniform_index(rng_, d - i)]);
        f = features_[i];
      }
      if (best_threshold(f, rows, counts, best)) ++seen;
    }
    if (best.feature < 0) return index;

    std::vector<Eigen::Index> left, right;
    for (auto r : rows) (x_(r, best.feature) <= best.threshold ? left : right).push_back(r);
    nodes_[static_cast<std::size_t>(index)].feature = static_cast<int>(best.feature);
    nodes_[static_cast<std::size_t>(index)].threshold = best.threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[static_cast<std::size_t>(index)].left = l;
    nodes_[static_cast<std::size_t>(index)].right = r;
    return index;
  }

  const Eigen::MatrixXd& x_;
  const std::vector<int>& y_;
  int classes_;
  TreeParams params_;
  Rng rng_;
  std::vector<Eigen::Index> features_;
  std::vector<std::pair<double, int>> sorted_;
  std::vector<TreeNode> nodes_;
};

void check_tree_params(const TreeParams& p) {
  if (p.max_depth < 1 || p.min_samples_split < 2 || p.max_features < 0) {
    throw Error(ErrorCode::InvalidParameters, "tree needs max_depth >= 1 and min_samples_split >= 2");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, int num_classes, Eigen::Index input_dim)
    : nodes_(std::move(nodes)), classes_(num_classes), dim_(input_dim) {}

const Eigen::VectorXd& DecisionTree::leaf(const Eigen::VectorXd& x) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    i = static_cast<std::size_t>(x(nodes_[i].feature) <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right);
  }
  return nodes_[i].distribution;
}

int DecisionTree::depth() const {
  std::function<int(int)> walk = [&](int i) -> int {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    return n.feature < 0 ? 0 : 1 + std::max(walk(n.left), walk(n.right));
  };
  return nodes_.empty() ? 0 : walk(0);
}

json DecisionTree::to_json() const {
  std::vector<int> feature, left, right;
  std::vector<double> threshold;
  json dist = json::array();
  for (const auto& n : nodes_) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    dist.push_back(vector_to_json(n.distribution));
  }
  return {{"kind", "tree"}, {"version", 1}, {"classes", classes_}, {"input_dim", dim_},
          {"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
          {"distribution", dist}};
}

DecisionTree DecisionTree::from_json(const json& j) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto& dist = j.at("distribution");
  std::vector<TreeNode> nodes(feature.size());
  if (threshold.size() != nodes.size() || left.size() != nodes.size() || right.size() != nodes.size() ||
      dist.size() != nodes.size()) {
    throw Error(ErrorCode::SchemaMismatch, "tree arrays differ in length");
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes[i] = {feature[i], threshold[i], left[i], right[i], vector_from_json(dist[i])};
  }
  return DecisionTree(std::move(nodes), j.at("classes").get<int>(), j.at("input_dim").get<Eigen::Index>());
}

DecisionTree train_tree(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                        const TreeParams& params, std::uint64_t seed) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return train_tree(x, y, num_classes, rows, params, seed);
}

DecisionTree train_tree(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                        const std::vector<Eigen::Index>& rows, const TreeParams& params, std::uint64_t seed) {
  check_tree_params(params);
  check_training_set(x, y, num_classes);
  std::set<int> present;
  for (auto r : rows) present.insert(y[static_cast<std::size_t>(r)]);
  if (present.size() < 2) throw Error(ErrorCode::SingleClass, "tree rows contain a single class");
  return TreeBuilder(x, y, num_classes, params, seed).build(rows);
}

// ---------------------------------------------------------------------------

RandomForest::RandomForest(std::vector<DecisionTree> trees, int num_classes, Eigen::Index input_dim)
    : trees_(std::move(trees)), classes_(num_classes), dim_(input_dim) {}

Eigen::VectorXd RandomForest::proba(const Eigen::VectorXd& x) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(classes_);
  for (const auto& t : trees_) sum += t.leaf(x);
  return sum / static_cast<double>(trees_.size());
}

json RandomForest::to_json() const {
  json trees = json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return {{"kind", "forest"}, {"version", 1}, {"classes", classes_}, {"input_dim", dim_}, {"trees", trees}};
}

RandomForest RandomForest::from_json(const json& j) {
  std::vector<DecisionTree> trees;
  for (const auto& t : j.at("trees")) trees.push_back(DecisionTree::from_json(t));
  if (trees.empty()) throw Error(ErrorCode::SchemaMismatch, "forest without trees");
  return RandomForest(std::move(trees), j.at("classes").get<int>(), j.at("input_dim").get<Eigen::Index>());
}

RandomForest train_forest(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                          const ForestParams& params, std::uint64_t seed, int jobs) {
  if (params.n_trees < 1) throw Error(ErrorCode::InvalidParameters, "forest needs at least one tree");
  check_tree_params(params.tree);
  check_training_set(x, y, num_classes);
  TreeParams tp = params.tree;
  tp.max_features = params.max_features >= 0
                        ? params.max_features
                        : std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(x.cols())))));
  tp.random_thresholds = tp.random_thresholds || params.extra_trees;
  const bool bootstrap = params.bootstrap && !params.extra_trees;
  const auto n = static_cast<std::size_t>(x.rows());

  std::vector<DecisionTree> trees(static_cast<std::size_t>(params.n_trees));
  parallel_for(trees.size(), jobs, [&](std::size_t t) {
    const std::uint64_t tree_seed = derive_seed(seed, t);
    std::vector<Eigen::Index> rows(n);
    if (bootstrap) {
      Rng rng(derive_seed(tree_seed, "bootstrap"));
      for (auto& r : rows) r = static_cast<Eigen::Index>(uniform_index(rng, n));
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    }
    trees[t] = TreeBuilder(x, y, num_classes, tp, tree_seed).build(rows);
  });
  return RandomForest(std::move(trees), num_classes, x.cols());
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z.row(i).array() -= z.row(i).maxCoeff();
    z.row(i) = z.row(i).array().exp().matrix();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

Eigen::MatrixXd one_hot(const std::vector<int>& y, int classes) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(y.size()), classes);
  for (std::size_t i = 0; i < y.size(); ++i) t(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return t;
}

}  // namespace

LogisticRegression::LogisticRegression(Eigen::Index input_dim, int num_classes)
    : weights(Eigen::MatrixXd::Zero(num_classes, input_dim)), bias(Eigen::VectorXd::Zero(num_classes)) {}

Eigen::VectorXd LogisticRegression::proba(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd z = (weights * x + bias).transpose();
  return softmax_rows(std::move(z)).row(0).transpose();
}

double LogisticRegression::loss(const Eigen::MatrixXd& x, const std::vector<int>& y) const {
  const Eigen::MatrixXd p = softmax_rows((x * weights.transpose()).rowwise() + bias.transpose());
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total -= std::log(std::max(p(static_cast<Eigen::Index>(i), y[i]), 1e-300));
  return total / static_cast<double>(y.size());
}

json LogisticRegression::to_json() const {
  return {{"kind", "logistic"}, {"version", 1}, {"weights", detail::matrix_to_json(weights)},
          {"bias", vector_to_json(bias)}};
}

LogisticRegression LogisticRegression::from_json(const json& j) {
  LogisticRegression m;
  m.weights = detail::matrix_from_json(j.at("weights"));
  m.bias = vector_from_json(j.at("bias"));
  if (m.bias.size() != m.weights.rows()) throw Error(ErrorCode::SchemaMismatch, "logistic bias shape");
  return m;
}

LogisticRegression train_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                                  const LogisticParams& params, std::uint64_t /*seed*/,
                                  std::vector<double>* loss_history) {
  check_training_set(x, y, num_classes);
  if (!(params.learning_rate > 0.0) || params.epochs < 0) {
    throw Error(ErrorCode::InvalidParameters, "logistic needs learning_rate > 0 and epochs >= 0");
  }
  LogisticRegression m(x.cols(), num_classes);
  const Eigen::MatrixXd t = one_hot(y, num_classes);
  const double n = static_cast<double>(x.rows());
  for (int e = 0; e < params.epochs; ++e) {
    const Eigen::MatrixXd p = softmax_rows((x * m.weights.transpose()).rowwise() + m.bias.transpose());
    if (loss_history) loss_history->push_back(m.loss(x, y));
    const Eigen::MatrixXd g = (p - t) / n;
    m.weights -= params.learning_rate * g.transpose() * x;
    m.bias -= params.learning_rate * g.colwise().sum().transpose();
    if (!m.weights.allFinite() || !m.bias.allFinite()) {
      throw Error(ErrorCode::NonFinite, "logistic regression diverged");
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// MLP

namespace {

struct MlpGrads {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
};

struct MlpCache {
  Eigen::MatrixXd z1, a1, z2, a2, z3;
};

MlpCache forward_cache(const Mlp& m, const Eigen::MatrixXd& x) {
  MlpCache c;
  c.z1 = (x * m.w1).rowwise() + m.b1.transpose();
  c.a1 = c.z1.cwiseMax(0.0);
  c.z2 = (c.a1 * m.w2).rowwise() + m.b2.transpose();
  c.a2 = c.z2.cwiseMax(0.0);
  c.z3 = (c.a2 * m.w3).rowwise() + m.b3.transpose();
  return c;
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

// Binary cross-entropy from logits: max(z, 0) - z t + log(1 + exp(-|z|)).
double bce_from_logits(const Eigen::MatrixXd& z, const Eigen::MatrixXd& t) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double v = z.data()[i];
    total += std::max(v, 0.0) - v * t.data()[i] + std::log1p(std::exp(-std::abs(v)));
  }
  return total / static_cast<double>(z.rows());
}

double backprop(const Mlp& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t, MlpGrads& g) {
  const auto c = forward_cache(m, x);
  const double n = static_cast<double>(x.rows());
  const Eigen::MatrixXd dz3 = (sigmoid(c.z3) - t) / n;
  g.w3 = c.a2.transpose() * dz3;
  g.b3 = dz3.colwise().sum().transpose();
  const Eigen::MatrixXd dz2 = (dz3 * m.w3.transpose()).cwiseProduct((c.z2.array() > 0.0).cast<double>().matrix());
  g.w2 = c.a1.transpose() * dz2;
  g.b2 = dz2.colwise().sum().transpose();
  const Eigen::MatrixXd dz1 = (dz2 * m.w2.transpose()).cwiseProduct((c.z1.array() > 0.0).cast<double>().matrix());
  g.w1 = x.transpose() * dz1;
  g.b1 = dz1.colwise().sum().transpose();
  return bce_from_logits(c.z3, t);
}

template <typename F>
void for_each_block(Mlp& m, F&& f) {
  f(m.w1.data(), m.w1.size());
  f(m.b1.data(), m.b1.size());
  f(m.w2.data(), m.w2.size());
  f(m.b2.data(), m.b2.size());
  f(m.w3.data(), m.w3.size());
  f(m.b3.data(), m.b3.size());
}

Eigen::VectorXd flatten(const MlpGrads& g) {
  Eigen::VectorXd out(g.w1.size() + g.b1.size() + g.w2.size() + g.b2.size() + g.w3.size() + g.b3.size());
  Eigen::Index o = 0;
  auto put = [&](const double* data, Eigen::Index size) {
    out.segment(o, size) = Eigen::Map<const Eigen::VectorXd>(data, size);
    o += size;
  };
  put(g.w1.data(), g.w1.size());
  put(g.b1.data(), g.b1.size());
  put(g.w2.data(), g.w2.size());
  put(g.b2.data(), g.b2.size());
  put(g.w3.data(), g.w3.size());
  put(g.b3.data(), g.b3.size());
  return out;
}

}  // namespace

Mlp::Mlp(Eigen::Index input_dim, int hidden1, int hidden2, int num_classes)
    : w1(Eigen::MatrixXd::Zero(input_dim, hidden1)),
      w2(Eigen::MatrixXd::Zero(hidden1, hidden2)),
      w3(Eigen::MatrixXd::Zero(hidden2, num_classes)),
      b1(Eigen::VectorXd::Zero(hidden1)),
      b2(Eigen::VectorXd::Zero(hidden2)),
      b3(Eigen::VectorXd::Zero(num_classes)) {}

void Mlp::initialize(std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& w, double sd) {
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * normal01(rng);
  };
  fill(w1, std::sqrt(2.0 / static_cast<double>(w1.rows())));
  fill(w2, std::sqrt(2.0 / static_cast<double>(w2.rows())));
  fill(w3, std::sqrt(2.0 / static_cast<double>(w3.rows() + w3.cols())));
  b1.setZero();
  b2.setZero();
  b3.setZero();
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const { return sigmoid(forward_cache(*this, x).z3); }

Eigen::VectorXd Mlp::proba(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd a1 = (w1.transpose() * x + b1).cwiseMax(0.0);
  const Eigen::VectorXd a2 = (w2.transpose() * a1 + b2).cwiseMax(0.0);
  return sigmoid(w3.transpose() * a2 + b3);
}

double Mlp::loss(const Eigen::MatrixXd& x, const std::vector<int>& y) const {
  return bce_from_logits(forward_cache(*this, x).z3, one_hot(y, num_classes()));
}

Eigen::Index Mlp::parameter_count() const {
  return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
}

Eigen::VectorXd Mlp::parameters() const {
  return flatten(MlpGrads{w1, w2, w3, b1, b2, b3});
}

void Mlp::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != parameter_count()) throw Error(ErrorCode::ShapeMismatch, "parameter vector length");
  Eigen::Index o = 0;
  for_each_block(*this, [&](double* data, Eigen::Index size) {
    Eigen::Map<Eigen::VectorXd>(data, size) = p.segment(o, size);
    o += size;
  });
}

Eigen::VectorXd Mlp::gradient(const Eigen::MatrixXd& x, const std::vector<int>& y) const {
  MlpGrads g;
  backprop(*this, x, one_hot(y, num_classes()), g);
  return flatten(g);
}

json Mlp::to_json() const {
  return {{"kind", "mlp"}, {"version", 1},
          {"w1", detail::matrix_to_json(w1)}, {"b1", vector_to_json(b1)},
          {"w2", detail::matrix_to_json(w2)}, {"b2", vector_to_json(b2)},
          {"w3", detail::matrix_to_json(w3)}, {"b3", vector_to_json(b3)}};
}

Mlp Mlp::from_json(const json& j) {
  Mlp m;
  m.w1 = detail::matrix_from_json(j.at("w1"));
  m.w2 = detail::matrix_from_json(j.at("w2"));
  m.w3 = detail::matrix_from_json(j.at("w3"));
  m.b1 = vector_from_json(j.at("b1"));
  m.b2 = vector_from_json(j.at("b2"));
  m.b3 = vector_from_json(j.at("b3"));
  if (m.w1.cols() != m.w2.rows() || m.w2.cols() != m.w3.rows() || m.b1.size() != m.w1.cols() ||
      m.b2.size() != m.w2.cols() || m.b3.size() != m.w3.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "inconsistent MLP layer shapes");
  }
  return m;
}

Mlp train_mlp(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes, const MlpParams& params,
              std::uint64_t seed, std::vector<double>* loss_history) {
  check_training_set(x, y, num_classes);
  if (params.hidden1 < 1 || params.hidden2 < 1 || params.batch_size < 1 || params.epochs < 0 ||
      !(params.learning_rate > 0.0)) {
    throw Error(ErrorCode::InvalidParameters, "invalid MLP parameters");
  }
  Mlp m(x.cols(), params.hidden1, params.hidden2, num_classes);
  m.initialize(derive_seed(seed, "init"));
  const Eigen::MatrixXd t = one_hot(y, num_classes);

  // Nadam moments, one flat buffer per parameter block.
  std::vector<Eigen::VectorXd> first, second;
  for_each_block(m, [&](double*, Eigen::Index size) {
    first.push_back(Eigen::VectorXd::Zero(size));
    second.push_back(Eigen::VectorXd::Zero(size));
  });

  Rng rng(derive_seed(seed, "batches"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  long step = 0;
  MlpGrads g;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(params.batch_size));
      const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      const Eigen::MatrixXd xb = x(rows, Eigen::all);
      const Eigen::MatrixXd tb = t(rows, Eigen::all);
      epoch_loss += backprop(m, xb, tb, g) * static_cast<double>(rows.size());
      ++step;
      const double c1 = 1.0 - std::pow(params.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(params.beta2, static_cast<double>(step));
      const double* grads[] = {g.w1.data(), g.b1.data(), g.w2.data(), g.b2.data(), g.w3.data(), g.b3.data()};
      std::size_t block = 0;
      for_each_block(m, [&](double* data, Eigen::Index size) {
        Eigen::Map<Eigen::VectorXd> p(data, size);
        const Eigen::Map<const Eigen::VectorXd> gr(grads[block], size);
        auto& mo = first[block];
        auto& ve = second[block];
        mo = params.beta1 * mo + (1.0 - params.beta1) * gr;
        ve = params.beta2 * ve + (1.0 - params.beta2) * gr.cwiseAbs2();
        const Eigen::VectorXd nesterov = params.beta1 * mo / c1 + (1.0 - params.beta1) * gr / c1;
        p.array() -= params.learning_rate * nesterov.array() / ((ve.array() / c2).sqrt() + params.epsilon);
        ++block;
      });
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) throw Error(ErrorCode::NonFinite, "MLP loss diverged");
    if (loss_history) loss_history->push_back(epoch_loss);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Bagging

std::uint64_t bag_draw_seed(std::uint64_t seed, int b) noexcept {
  return derive_seed(seed, 2 * static_cast<std::uint64_t>(b));
}
std::uint64_t bag_member_seed(std::uint64_t seed, int b) noexcept {
  return derive_seed(seed, 2 * static_cast<std::uint64_t>(b) + 1);
}

std::vector<Eigen::Index> draw_bag(Eigen::Index n, double fraction, bool with_replacement, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::EmptyMatrix, "cannot bag an empty set");
  if (!(fraction > 0.0) || fraction > 1.0) throw Error(ErrorCode::InvalidParameters, "bag fraction must lie in (0,1]");
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  Rng rng(seed);
  std::vector<Eigen::Index> rows;
  if (with_replacement) {
    for (std::size_t i = 0; i < count; ++i) rows.push_back(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  } else {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(all[i], all[i + uniform_index(rng, all.size() - i)]);
      rows.push_back(all[i]);
    }
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

BaggedEnsemble::BaggedEnsemble(std::vector<ModelPtr> members, VoteMode mode) : members_(std::move(members)), mode_(mode) {
  if (members_.empty()) throw Error(ErrorCode::InvalidParameters, "ensemble needs at least one member");
}

Eigen::VectorXd BaggedEnsemble::proba(const Eigen::VectorXd& x) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(num_classes());
  for (const auto& m : members_) {
    if (mode_ == VoteMode::Soft) {
      sum += m->predict_proba(x);
    } else {
      sum(m->predict(x).label) += 1.0;
    }
  }
  const double total = sum.sum();
  return total > 0.0 ? Eigen::VectorXd(sum / total) : Eigen::VectorXd::Constant(num_classes(), 1.0 / num_classes());
}

json BaggedEnsemble::to_json() const {
  json members = json::array();
  for (const auto& m : members_) members.push_back(m->to_json());
  return {{"kind", "bagged"}, {"version", 1}, {"mode", mode_ == VoteMode::Soft ? "soft" : "hard"}, {"members", members}};
}

BaggedEnsemble bag_ensemble(const Trainer& trainer, const Eigen::MatrixXd& x, const std::vector<int>& y,
                            int num_classes, const BagParams& params, std::uint64_t seed, int jobs) {
  if (params.n_bags < 1) throw Error(ErrorCode::InvalidParameters, "bagging needs at least one bag");
  check_training_set(x, y, num_classes);
  std::vector<ModelPtr> members(static_cast<std::size_t>(params.n_bags));
  parallel_for(members.size(), jobs, [&](std::size_t b) {
    const int bag = static_cast<int>(b);
    const auto rows = draw_bag(x.rows(), params.fraction, params.with_replacement, bag_draw_seed(seed, bag));
    std::vector<int> yb;
    for (auto r : rows) yb.push_back(y[static_cast<std::size_t>(r)]);
    members[b] = trainer(x(rows, Eigen::all), yb, num_classes, bag_member_seed(seed, bag));
  });
  return BaggedEnsemble(std::move(members), params.mode);
}

// ---------------------------------------------------------------------------
// Voting, subsets, stacking

Prediction weighted_vote(const std::vector<int>& votes, const std::vector<double>& weights, int num_classes) {
  if (votes.size() != weights.size()) throw Error(ErrorCode::LengthMismatch, "votes and weights differ in length");
  if (votes.empty()) throw Error(ErrorCode::EmptyInput, "no votes");
  Eigen::VectorXd tally = Eigen::VectorXd::Zero(num_classes);
  double total = 0.0;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw Error(ErrorCode::InvalidParameters, "vote weights must be >= 0");
    if (votes[i] < 0 || votes[i] >= num_classes) throw Error(ErrorCode::ShapeMismatch, "vote outside the class set");
    tally(votes[i]) += weights[i];
    total += weights[i];
  }
  if (!(total > 0.0)) throw Error(ErrorCode::AllZeroWeights, "all vote weights are zero");
  return make_prediction(tally / total);
}

WeightedVote::WeightedVote(std::vector<ModelPtr> members, std::vector<double> weights)
    : members_(std::move(members)), weights_(std::move(weights)) {
  if (members_.size() != weights_.size()) throw Error(ErrorCode::LengthMismatch, "models and weights differ in length");
  if (members_.empty()) throw Error(ErrorCode::InvalidParameters, "vote needs at least one model");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidParameters, "vote weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::AllZeroWeights, "all vote weights are zero");
  for (const auto& m : members_) {
    if (m->num_classes() != members_.front()->num_classes() || m->input_dim() != members_.front()->input_dim()) {
      throw Error(ErrorCode::ClassSetMismatch, "voting members disagree on classes or inputs");
    }
  }
}

Eigen::VectorXd WeightedVote::proba(const Eigen::VectorXd& x) const {
  std::vector<int> votes;
  for (const auto& m : members_) votes.push_back(m->predict(x).label);
  return weighted_vote(votes, weights_, num_classes()).probs;
}

json WeightedVote::to_json() const {
  json members = json::array();
  for (const auto& m : members_) members.push_back(m->to_json());
  return {{"kind", "vote"}, {"version", 1}, {"weights", weights_}, {"members", members}};
}

ColumnSubset::ColumnSubset(ModelPtr inner, std::vector<Eigen::Index> columns, Eigen::Index input_dim)
    : inner_(std::move(inner)), columns_(std::move(columns)), dim_(input_dim) {
  if (static_cast<Eigen::Index>(columns_.size()) != inner_->input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "column subset does not match the inner model");
  }
  for (auto c : columns_) {
    if (c < 0 || c >= dim_) throw Error(ErrorCode::ShapeMismatch, "column subset index out of range");
  }
}

Eigen::VectorXd ColumnSubset::select(const Eigen::VectorXd& x) const { return x(columns_); }

Eigen::VectorXd ColumnSubset::proba(const Eigen::VectorXd& x) const { return inner_->predict_proba(select(x)); }

json ColumnSubset::to_json() const {
  return {{"kind", "subset"}, {"version", 1}, {"input_dim", dim_}, {"columns", columns_}, {"inner", inner_->to_json()}};
}

StackedModel::StackedModel(std::vector<ModelPtr> members, Mlp head) : members_(std::move(members)), head_(std::move(head)) {
  if (members_.empty()) throw Error(ErrorCode::InvalidParameters, "stack needs at least one member");
  if (head_.input_dim() != static_cast<Eigen::Index>(members_.size()) * head_.num_classes()) {
    throw Error(ErrorCode::ShapeMismatch, "stacking head does not match its members");
  }
}

Eigen::VectorXd StackedModel::stack(const Eigen::VectorXd& x) const {
  const int k = num_classes();
  Eigen::VectorXd z(static_cast<Eigen::Index>(members_.size()) * k);
  for (std::size_t i = 0; i < members_.size(); ++i) {
    z.segment(static_cast<Eigen::Index>(i) * k, k) = members_[i]->predict_proba(x);
  }
  return z;
}

Eigen::VectorXd StackedModel::proba(const Eigen::VectorXd& x) const { return head_.predict_proba(stack(x)); }

json StackedModel::to_json() const {
  json members = json::array();
  for (const auto& m : members_) members.push_back(m->to_json());
  return {{"kind", "stacked"}, {"version", 1}, {"members", members}, {"head", head_.to_json()}};
}

Eigen::MatrixXd stack_probabilities(const std::vector<ModelPtr>& members, const Eigen::MatrixXd& x, int num_classes) {
  if (members.empty()) throw Error(ErrorCode::InvalidParameters, "stack needs at least one member");
  for (const auto& m : members) {
    if (m->num_classes() != num_classes) throw Error(ErrorCode::ClassSetMismatch, "stack members disagree on classes");
  }
  Eigen::MatrixXd z(x.rows(), static_cast<Eigen::Index>(members.size()) * num_classes);
  for (std::size_t i = 0; i < members.size(); ++i) {
    z.middleCols(static_cast<Eigen::Index>(i) * num_classes, num_classes) = members[i]->predict_proba_rows(x);
  }
  return z;
}

StackedModel stacked_mlp(const std::vector<ModelPtr>& members, const Eigen::MatrixXd& x, const std::vector<int>& y,
                         int num_classes, const MlpParams& params, std::uint64_t seed) {
  const Eigen::MatrixXd z = stack_probabilities(members, x, num_classes);
  return StackedModel(members, train_mlp(z, y, num_classes, params, seed));
}

}  // namespace endoscan
