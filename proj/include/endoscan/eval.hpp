#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "endoscan/core.hpp"

namespace endoscan {

/// Rows = actual class, columns = predicted class.
struct ConfusionMatrix {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

  int num_classes() const noexcept { return static_cast<int>(counts.rows()); }
  std::int64_t total() const { return counts.sum(); }
};

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes);

/// Zero denominators give 0 and set `degenerate`.
struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  bool degenerate = false;
};
BinaryMetrics binary_metrics(std::int64_t tp, std::int64_t tn, std::int64_t fp, std::int64_t fn);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  bool degenerate = false;
};

struct AggregateMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  AggregateMetrics macro;
  AggregateMetrics weighted;  // by support
  double mcc = 0.0;
  bool mcc_degenerate = false;
  std::optional<double> auc;
};

/// Throws LengthMismatch, or ShapeMismatch for labels outside [0, k).
EvalReport evaluate(const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes);

/// Generalized correlation over the full confusion matrix; equals the
/// binary formula for two classes.
double multiclass_mcc(const ConfusionMatrix& cm, bool* degenerate = nullptr);

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
double binary_auc(const std::vector<double>& scores, const std::vector<bool>& positive);
/// Macro average of one-vs-rest AUCs over classes having both positives and
/// negatives. Throws SingleClassPresent if fewer than two classes occur.
double auc_roc(const Eigen::MatrixXd& probs, const std::vector<int>& labels);

struct RunSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};
RunSummary summarize_runs(const std::vector<double>& values);

/// Two-sided Welch t-test p-value. Two constant samples give 1 when their
/// means agree and 0 otherwise.
double welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct FpsResult {
  std::size_t images = 0;
  double seconds = 0.0;
  double fps = 0.0;
  double mean_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
};
/// Calls `process(i)` for i in [0, n). The first `warmup` calls are untimed;
/// the timing window covers the rest.
FpsResult fps_bench(const std::function<void(std::size_t)>& process, std::size_t n, std::size_t warmup);
FpsResult fps_from_timings(const std::vector<double>& seconds_per_image);

nlohmann::json report_to_json(const EvalReport& r, const std::vector<std::string>& class_names);
/// Aligned-column text: per-class table, aggregate rows, confusion matrix.
std::string report_table(const EvalReport& r, const std::vector<std::string>& class_names);

}  // namespace endoscan
