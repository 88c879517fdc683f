#pragma once

#include <filesystem>
#include <vector>

#include "endoscan/classify.hpp"
#include "endoscan/eval.hpp"

namespace endoscan {

struct TreeNetParams {
  int layers = 3;
  int forests_per_layer = 5;
  int trees_per_forest = 50;
  ForestParams forest;  // n_trees is overridden by trees_per_forest
};

/// Layers of forests with forward-only flow. Layer 0 sees the base features;
/// layer l > 0 sees the base features followed by the class probabilities of
/// every forest in layer l - 1. The output is the mean of the last layer.
class TreeNetModel final : public Model {
 public:
  TreeNetModel(std::vector<std::vector<RandomForest>> layers, Eigen::Index base_dim, int num_classes);

  std::string kind() const override { return "treenet"; }
  int num_classes() const override { return classes_; }
  Eigen::Index input_dim() const override { return base_dim_; }
  nlohmann::json to_json() const override;
  static TreeNetModel from_json(const nlohmann::json& j);

  const std::vector<std::vector<RandomForest>>& layers() const noexcept { return layers_; }
  /// base_dim for layer 0, base_dim + forests(l - 1) * classes afterwards.
  Eigen::Index layer_input_dim(std::size_t layer) const;

 protected:
  Eigen::VectorXd proba(const Eigen::VectorXd& x) const override;

 private:
  std::vector<std::vector<RandomForest>> layers_;
  Eigen::Index base_dim_;
  int classes_;
};

/// Seed of forest f in layer l; forest (0, 0) uses `seed` itself.
std::uint64_t treenet_forest_seed(std::uint64_t seed, int layer, int forest) noexcept;

/// Trains layer by layer. Later layers are fed the earlier layers'
/// probabilities on the training rows themselves. Throws SingleClass or
/// MissingClassInstance.
TreeNetModel treenet_train(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                           const TreeNetParams& params, std::uint64_t seed, int jobs = 1);

/// Stratified subsample of round(fraction * n) rows (ascending). Classes
/// missing from the draw get their first shuffled occurrence swapped in.
std::vector<Eigen::Index> stratified_subsample(const std::vector<int>& labels, int num_classes, double fraction,
                                               std::uint64_t seed);

struct FractionRow {
  double chunk = 0.0;
  std::size_t size = 0;
  double seconds = 0.0;  // training wall-clock
  double accuracy = 0.0;
  double precision = 0.0;  // weighted
  double recall = 0.0;     // weighted
  double mcc = 0.0;
  double f1 = 0.0;  // weighted
};

/// Trains on each fraction of `train` and scores on `test`.
std::vector<FractionRow> data_fraction_experiment(const FeatureMatrix& train, const FeatureMatrix& test,
                                                  const std::vector<double>& fractions, const TreeNetParams& params,
                                                  std::uint64_t seed, int jobs = 1);
/// Columns Chunk,Size,Time,Acc,P,R,MCC,F1. Timing is omitted (written as 0)
/// when `include_time` is false so reruns compare byte-for-byte.
void write_fraction_csv(const std::vector<FractionRow>& rows, const std::filesystem::path& path,
                        bool include_time = true);

}  // namespace endoscan
