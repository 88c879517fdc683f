#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "endoscan/classify.hpp"

namespace endoscan {

// ---------------------------------------------------------------------------
// Threshold search

struct GaConfig {
  int population = 10;
  int iterations = 20;
  double mutation_rate = 0.2;
  std::vector<double> alphabet{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::uint64_t seed = 0;

  /// Throws InvalidParameters.
  void validate() const;
};

using ThresholdVector = std::vector<double>;

/// (x + y) mod 1.
double crossover_mod1(double x, double y) noexcept;

/// Among classes with p_c >= t_c, the one with the largest margin p_c - t_c;
/// plain argmax when no class qualifies. Lowest index wins ties.
int apply_thresholds(const Eigen::VectorXd& p, const ThresholdVector& t);
std::vector<int> apply_thresholds(const Eigen::MatrixXd& probs, const ThresholdVector& t);

/// Support-weighted F1 of the thresholded decisions.
double threshold_f1(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int num_classes,
                    const ThresholdVector& t);

struct GaBoostResult {
  ThresholdVector thresholds;
  double f1 = 0.0;          // best thresholded F1
  double argmax_f1 = 0.0;   // baseline with zero thresholds
  std::vector<double> best_per_generation;  // index 0 is the initial population
};

/// Chromosomes are threshold vectors over the alphabet. The all-zero vector
/// (plain argmax) is part of the first population. Crossover adds parents
/// elementwise mod 1 at a random subset of positions, giving two children
/// per pair; mutation resamples a gene from the alphabet; the best distinct
/// chromosomes among parents and children survive.
GaBoostResult ga_boost_thresholds(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int num_classes,
                                  const GaConfig& cfg);

nlohmann::json thresholds_to_json(const ThresholdVector& t, const std::vector<std::string>& class_names);
ThresholdVector thresholds_from_json(const nlohmann::json& j, const std::vector<std::string>& class_names);

// ---------------------------------------------------------------------------
// Feature selection

struct SelectConfig {
  int population = 20;
  int generations = 30;
  double mutation_rate = 0.05;
  double crossover_rate = 0.9;
  /// Held-out share of the training rows used to score masks.
  double validation_fraction = 0.3;
  std::uint64_t seed = 0;
  /// Starting masks; random masks when empty.
  std::vector<std::vector<bool>> initial_population;
};

using FeatureMask = std::vector<bool>;
/// Fitness of a non-empty mask; higher is better.
using MaskFitness = std::function<double(const FeatureMask&)>;

struct SelectResult {
  FeatureMask mask;
  double fitness = 0.0;
  std::vector<double> best_per_generation;
};

/// Generic GA over masks of `n_features` genes: roulette parents,
/// single-point crossover, per-gene bit flips, all-zero children repaired
/// by setting one random gene, best-ever mask returned. Fitness values are
/// cached per mask.
SelectResult ga_search_masks(std::size_t n_features, const MaskFitness& fitness, const SelectConfig& cfg);

/// Wrapper selection: masks are scored by training `trainer` on the masked
/// columns of a stratified split and measuring weighted F1 on the held-out
/// part. Throws TooFewFeatures for an empty matrix; a single feature is
/// returned without search.
SelectResult ga_feature_select(const FeatureMatrix& x, const Trainer& trainer, const SelectConfig& cfg);

std::vector<Eigen::Index> mask_columns(const FeatureMask& mask);

}  // namespace endoscan
