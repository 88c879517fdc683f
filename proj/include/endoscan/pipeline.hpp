#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "endoscan/augment.hpp"
#include "endoscan/classify.hpp"
#include "endoscan/eval.hpp"
#include "endoscan/features.hpp"
#include "endoscan/genetic.hpp"
#include "endoscan/preprocess.hpp"
#include "endoscan/treenet.hpp"

namespace endoscan {

inline constexpr int kConfigSchemaVersion = 1;

enum class PreprocessMode { None, Crop, Inpaint };

const char* to_string(PreprocessMode m) noexcept;
PreprocessMode preprocess_mode_from_string(const std::string& s);

/// Reflection handling applied to every image before extraction. Images
/// without flagged pixels pass through unchanged.
Image preprocess_image(const Image& img, PreprocessMode mode, const ReflectionParams& params);

struct ClassifierConfig {
  /// tree, forest, extra-trees, logistic, mlp, treenet or vote.
  std::string kind = "forest";
  TreeParams tree;
  ForestParams forest;
  LogisticParams logistic;
  MlpParams mlp;
  TreeNetParams treenet;
  /// Members of a `vote` ensemble, each one of the single-model kinds.
  std::vector<std::string> vote_members;
  /// Fixed vote weights; held-out accuracies when empty.
  std::vector<double> vote_weights;
};

/// Trainer for a single-model kind. Throws ConfigError for unknown kinds.
Trainer make_trainer(const ClassifierConfig& c, const std::string& kind, int jobs = 1);

struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  std::filesystem::path dataset;
  std::filesystem::path output;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  double train_fraction = 0.8;

  PreprocessMode preprocess = PreprocessMode::None;
  ReflectionParams reflection;

  bool augment = false;
  BalancePolicy augment_policy = BalancePolicy::Default;
  /// Target images per class; 0 means the largest class size.
  std::size_t max_images = 0;

  /// Preset name or spec file the features were taken from.
  std::string feature_preset = "selected";
  FeatureSpec features = FeatureSpec::selected();

  ClassifierConfig classifier;
  /// Bagging is applied when bags > 0.
  BagParams bagging{0, 0.7, true, VoteMode::Soft};

  bool select_features = false;
  SelectConfig selection;

  bool ga_boost = false;
  GaConfig ga;
  /// Share of the training split held out for threshold search and vote weights.
  double validation_fraction = 0.2;

  /// Throws ConfigError: missing seed, missing dataset, bad ranges.
  void validate() const;
};

nlohmann::json config_to_json(const PipelineConfig& c);
/// Strict: unknown keys and a wrong schema_version are ConfigErrors.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

/// FNV-1a over the canonical JSON of every setting that affects results
/// (the output directory and job count are excluded), as 16 hex digits.
std::string config_hash(const PipelineConfig& c);

/// Everything needed to classify a raw image.
struct ModelBundle {
  PreprocessMode preprocess = PreprocessMode::None;
  ReflectionParams reflection;
  FeatureSpec spec;
  Normalizer normalizer;
  /// Selected feature columns; all columns when empty.
  std::vector<Eigen::Index> columns;
  ModelPtr model;
  std::vector<std::string> class_names;
  std::optional<ThresholdVector> thresholds;
  std::string config_hash;

  /// Normalized, column-selected feature rows ready for the model.
  Eigen::MatrixXd prepare(const Eigen::MatrixXd& raw) const;
  Prediction predict(const Image& img) const;
  /// Class index after optional thresholding.
  int classify(const Image& img) const;
  std::vector<int> classify_rows(const Eigen::MatrixXd& raw) const;

  nlohmann::json to_json() const;
  static ModelBundle from_json(const nlohmann::json& j);
};

void save_bundle(const ModelBundle& b, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

/// Error raised by a pipeline stage, carrying the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct PipelineResult {
  EvalReport report;  // thresholded when GA-Boost ran, argmax otherwise
  nlohmann::json document;  // contents of report.json
};

/// preprocess -> augment -> extract -> select -> train -> thresholds ->
/// evaluate. Every artifact goes to cfg.output and carries the config hash.
/// report.json holds no timings, so identical configs give identical bytes.
PipelineResult full_pipeline(const PipelineConfig& cfg);

}  // namespace endoscan
