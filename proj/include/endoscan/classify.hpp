#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "endoscan/core.hpp"

namespace endoscan {

/// Class probabilities and the lowest-index argmax.
struct Prediction {
  Eigen::VectorXd probs;
  int label = 0;
};
Prediction make_prediction(Eigen::VectorXd probs);

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string kind() const = 0;
  virtual int num_classes() const = 0;
  virtual Eigen::Index input_dim() const = 0;
  virtual nlohmann::json to_json() const = 0;

  /// Throws DimensionMismatch when x has the wrong length.
  Eigen::VectorXd predict_proba(const Eigen::VectorXd& x) const;
  Prediction predict(const Eigen::VectorXd& x) const;
  /// One probability row per input row.
  Eigen::MatrixXd predict_proba_rows(const Eigen::MatrixXd& x) const;
  std::vector<int> predict_labels(const Eigen::MatrixXd& x) const;

 protected:
  virtual Eigen::VectorXd proba(const Eigen::VectorXd& x) const = 0;
};

using ModelPtr = std::shared_ptr<const Model>;

/// Validates a training set: non-empty, finite, labels in [0, k), at least
/// two classes present.
void check_training_set(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes);

// ---------------------------------------------------------------------------
// Trees and forests

struct TreeParams {
  int max_depth = 20;
  int min_samples_split = 2;
  /// Features examined per split; 0 means all.
  int max_features = 0;
  /// Extra-trees mode: one uniform random threshold per examined feature.
  bool random_thresholds = false;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  Eigen::VectorXd distribution;  // class frequencies at the node
};

class DecisionTree final : public Model {
 public:
  DecisionTree() = default;
  DecisionTree(std::vector<TreeNode> nodes, int num_classes, Eigen::Index input_dim);

  std::string kind() const override { return "tree"; }
  int num_classes() const override { return classes_; }
  Eigen::Index input_dim() const override { return dim_; }
  nlohmann::json to_json() const override;
  static DecisionTree from_json(const nlohmann::json& j);

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  int depth() const;
  /// Distribution of the leaf reached by x (no dimension check).
  const Eigen::VectorXd& leaf(const Eigen::VectorXd& x) const;

 protected:
  Eigen::VectorXd proba(const Eigen::VectorXd& x) const override { return leaf(x); }

 private:
  std::vector<TreeNode> nodes_;
  int classes_ = 0;
  Eigen::Index dim_ = 0;
};

/// Greedy CART with Gini impurity. Impure nodes are split whenever some
/// threshold separates their samples, even without an impurity decrease.
DecisionTree train_tree(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                        const TreeParams& params, std::uint64_t seed);
/// Same, restricted to (possibly repeated) row indices.
DecisionTree train_tree(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                        const std::vector<Eigen::Index>& rows, const TreeParams& params,
                        std::uint64_t seed);

struct ForestParams {
  int n_trees = 100;
  TreeParams tree;
  /// Features per split; -1 means round(sqrt(d)).
  int max_features = -1;
  bool bootstrap = true;
  /// Random thresholds and no bootstrap.
  bool extra_trees = false;
};

class RandomForest final : public Model {
 public:
  RandomForest() = default;
  RandomForest(std::vector<DecisionTree> trees, int num_classes, Eigen::Index input_dim);

  std::string kind() const override { return "forest"; }
  int num_classes() const override { return classes_; }
  Eigen::Index input_dim() const override { return dim_; }
  nlohmann::json to_json() const override;
  static RandomForest from_json(const nlohmann::json& j);

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }

 protected:
  Eigen::VectorXd proba(const Eigen::VectorXd& x) const override;

 private:
  std::vector<DecisionTree> trees_;
  int classes_ = 0;
  Eigen::Index dim_ = 0;
};

/// Tree t is trained with seed derive_seed(seed, t).
RandomForest train_forest(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                          const ForestParams& params, std::uint64_t seed, int jobs = 1);

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticParams {
  double learning_rate = 0.5;
  int epochs = 500;
};

class LogisticRegression final : public Model {
 public:
  LogisticRegression() = default;
  /// Zero weights: uniform probabilities.
  LogisticRegression(Eigen::Index input_dim, int num_classes);

  std::string kind() const override { return "logistic"; }
  int num_classes() const override { return static_cast<int>(weights.rows()); }
  Eigen::Index input_dim() const override { return weights.cols(); }
  nlohmann::json to_json() const override;
  static LogisticRegression from_json(const nlohmann::json& j);

  /// Mean cross-entropy.
  double loss(const Eigen::MatrixXd& x, const std::vector<int>& y) const;

  Eigen::MatrixXd weights;  // classes x inputs
  Eigen::VectorXd bias;

 protected:
  Eigen::VectorXd proba(const Eigen::VectorXd& x) const override;
};

/// Full-batch gradient descent on the softmax cross-entropy from zero
/// weights. `loss_history` receives the loss before every step.
LogisticRegression train_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                                  const LogisticParams& params, std::uint64_t seed,
                                  std::vector<double>* loss_history = nullptr);

// ---------------------------------------------------------------------------
// Three-layer perceptron

struct MlpParams {
  int hidden1 = 64;
  int hidden2 = 64;
  int epochs = 500;
  double learning_rate = 1e-4;
  int batch_size = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Y = sigmoid(W3^T relu(W2^T relu(W1^T x + b1) + b2) + b3). Outputs are
/// independent per-class sigmoids and need not sum to 1.
class Mlp final : public Model {
 public:
  Mlp() = default;
  /// All-zero weights and biases.
  Mlp(Eigen::Index input_dim, int hidden1, int hidden2, int num_classes);

  std::string kind() const override { return "mlp"; }
  int num_classes() const override { return static_cast<int>(w3.cols()); }
  Eigen::Index input_dim() const override { return w1.rows(); }
  nlohmann::json to_json() const override;
  static Mlp from_json(const nlohmann::json& j);

  /// He-normal hidden weights, Glorot-normal output weights, zero biases.
  void initialize(std::uint64_t seed);

  /// Outputs for a batch, rows = samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  /// Mean over samples of the summed per-class binary cross-entropy.
  double loss(const Eigen::MatrixXd& x, const std::vector<int>& y) const;

  Eigen::Index parameter_count() const;
  /// Flattened (w1, b1, w2, b2, w3, b3), matrices column-major.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& p);
  /// Analytic gradient of loss() in parameters() order.
  Eigen::VectorXd gradient(const Eigen::MatrixXd& x, const std::vector<int>& y) const;

  Eigen::MatrixXd w1, w2, w3;  // inputs x outputs
  Eigen::VectorXd b1, b2, b3;

 protected:
  Eigen::VectorXd proba(const Eigen::VectorXd& x) const override;
};

/// Minibatch Nadam. Throws NonFinite if the loss diverges.
Mlp train_mlp(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes, const MlpParams& params,
              std::uint64_t seed, std::vector<double>* loss_history = nullptr);

// ---------------------------------------------------------------------------
// Ensembles

using Trainer = std::function<ModelPtr(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                                       std::uint64_t seed)>;

enum class VoteMode { Soft, Hard };

struct BagParams {
  int n_bags = 11;
  double fraction = 0.7;
  bool with_replacement = true;
  VoteMode mode = VoteMode::Soft;
};

/// round(fraction * n) row indices (at least 1), ascending.
std::vector<Eigen::Index> draw_bag(Eigen::Index n, double fraction, bool with_replacement, std::uint64_t seed);
/// Seeds used for bag b: rows from draw_bag(bag_draw_seed), member from bag_member_seed.
std::uint64_t bag_draw_seed(std::uint64_t seed, int b) noexcept;
std::uint64_t bag_member_seed(std::uint64_t seed, int b) noexcept;

class BaggedEnsemble final : public Model {
 public:
  BaggedEnsemble(std::vector<ModelPtr> members, VoteMode mode);

  std::string kind() const override { return "bagged"; }
  int num_classes() const override { return members_.front()->num_classes(); }
  Eigen::Index input_dim() const override { return members_.front()->input_dim(); }
  nlohmann::json to_json() const override;

  const std::vector<ModelPtr>& members() const noexcept { return members_; }
  VoteMode mode() const noexcept { return mode_; }

 protected:
  /// Soft: per-class sums of member probabilities, renormalized.
  /// Hard: fraction of member votes per class.
  Eigen::VectorXd proba(const Eigen::VectorXd& x) const override;

 private:
  std::vector<ModelPtr> members_;
  VoteMode mode_;
};

BaggedEnsemble bag_ensemble(const Trainer& trainer, const Eigen::MatrixXd& x, const std::vector<int>& y,
                            int num_classes, const BagParams& params, std::uint64_t seed, int jobs = 1);

/// Vote distribution sum_i w_i [vote_i = c] / sum_i w_i.
Prediction weighted_vote(const std::vector<int>& votes, const std::vector<double>& weights, int num_classes);

class WeightedVote final : public Model {
 public:
  WeightedVote(std::vector<ModelPtr> members, std::vector<double> weights);

  std::string kind() const override { return "vote"; }
  int num_classes() const override { return members_.front()->num_classes(); }
  Eigen::Index input_dim() const override { return members_.front()->input_dim(); }
  nlohmann::json to_json() const override;

  const std::vector<double>& weights() const noexcept { return weights_; }

 protected:
  Eigen::VectorXd proba(const Eigen::VectorXd& x) const override;

 private:
  std::vector<ModelPtr> members_;
  std::vector<double> weights_;
};

/// Model applied to a fixed subset of the input columns.
class ColumnSubset final : public Model {
 public:
  ColumnSubset(ModelPtr inner, std::vector<Eigen::Index> columns, Eigen::Index input_dim);

  std::string kind() const override { return "subset"; }
  int num_classes() const override { return inner_->num_classes(); }
  Eigen::Index input_dim() const override { return dim_; }
  nlohmann::json to_json() const override;

  const std::vector<Eigen::Index>& columns() const noexcept { return columns_; }
  Eigen::VectorXd select(const Eigen::VectorXd& x) const;

 protected:
  Eigen::VectorXd proba(const Eigen::VectorXd& x) const override;

 private:
  ModelPtr inner_;
  std::vector<Eigen::Index> columns_;
  Eigen::Index dim_;
};

/// Concatenated member probabilities feeding an MLP head.
class StackedModel final : public Model {
 public:
  StackedModel(std::vector<ModelPtr> members, Mlp head);

  std::string kind() const override { return "stacked"; }
  int num_classes() const override { return head_.num_classes(); }
  Eigen::Index input_dim() const override { return members_.front()->input_dim(); }
  nlohmann::json to_json() const override;

  const Mlp& head() const noexcept { return head_; }
  Eigen::VectorXd stack(const Eigen::VectorXd& x) const;

 protected:
  Eigen::VectorXd proba(const Eigen::VectorXd& x) const override;

 private:
  std::vector<ModelPtr> members_;
  Mlp head_;
};

/// n_members * num_classes stacked inputs. Throws ClassSetMismatch.
Eigen::MatrixXd stack_probabilities(const std::vector<ModelPtr>& members, const Eigen::MatrixXd& x,
                                    int num_classes);
StackedModel stacked_mlp(const std::vector<ModelPtr>& members, const Eigen::MatrixXd& x, const std::vector<int>& y,
                         int num_classes, const MlpParams& params, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Serialization

/// Versioned JSON; doubles round-trip exactly. Handles every model kind,
/// including layered forests.
std::unique_ptr<Model> model_from_json(const nlohmann::json& j);
void save_model(const Model& m, const std::filesystem::path& path);
std::unique_ptr<Model> load_model(const std::filesystem::path& path);

namespace detail {
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
}  // namespace detail

}  // namespace endoscan
