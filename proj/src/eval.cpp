#include "endoscan/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

namespace endoscan {

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes) {
  if (y_true.size() != y_pred.size()) throw Error(ErrorCode::LengthMismatch, "label vectors differ in length");
  if (num_classes < 1) throw Error(ErrorCode::InvalidParameters, "need at least one class");
  ConfusionMatrix cm;
  cm.counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= num_classes || y_pred[i] < 0 || y_pred[i] >= num_classes) {
      throw Error(ErrorCode::ShapeMismatch, "label outside the class set");
    }
    ++cm.counts(y_true[i], y_pred[i]);
  }
  return cm;
}

namespace {

double ratio(double num, double den, bool& degenerate) {
  if (den == 0.0) {
    degenerate = true;
    return 0.0;
  }
  return num / den;
}

}  // namespace

BinaryMetrics binary_metrics(std::int64_t tp, std::int64_t tn, std::int64_t fp, std::int64_t fn) {
  BinaryMetrics m;
  const double TP = static_cast<double>(tp), TN = static_cast<double>(tn);
  const double FP = static_cast<double>(fp), FN = static_cast<double>(fn);
  m.accuracy = ratio(TP + TN, TP + TN + FP + FN, m.degenerate);
  m.precision = ratio(TP, TP + FP, m.degenerate);
  m.recall = ratio(TP, TP + FN, m.degenerate);
  m.specificity = ratio(TN, TN + FP, m.degenerate);
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall, m.degenerate);
  const double den = std::sqrt((TP + FP) * (TP + FN) * (TN + FP) * (TN + FN));
  m.mcc = ratio(TP * TN - FP * FN, den, m.degenerate);
  return m;
}

double multiclass_mcc(const ConfusionMatrix& cm, bool* degenerate) {
  const auto c = cm.counts.cast<double>();
  const double s = c.sum();
  const double correct = c.trace();
  const Eigen::VectorXd t = c.rowwise().sum();     // actual
  const Eigen::VectorXd p = c.colwise().sum().transpose();  // predicted
  const double num = correct * s - p.dot(t);
  const double den = std::sqrt((s * s - p.dot(p)) * (s * s - t.dot(t)));
  bool flag = false;
  const double mcc = ratio(num, den, flag);
  if (degenerate) *degenerate = flag;
  return mcc;
}

EvalReport evaluate(const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes) {
  EvalReport r;
  r.confusion = confusion_matrix(y_true, y_pred, num_classes);
  const auto& c = r.confusion.counts;
  const std::int64_t total = r.confusion.total();
  bool unused = false;
  r.accuracy = ratio(static_cast<double>(c.trace()), static_cast<double>(total), unused);
  for (int k = 0; k < num_classes; ++k) {
    const std::int64_t tp = c(k, k);
    const std::int64_t fn = c.row(k).sum() - tp;
    const std::int64_t fp = c.col(k).sum() - tp;
    const std::int64_t tn = total - tp - fn - fp;
    ClassMetrics m;
    m.support = tp + fn;
    m.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp), m.degenerate);
    m.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn), m.degenerate);
    m.specificity = ratio(static_cast<double>(tn), static_cast<double>(tn + fp), m.degenerate);
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall, m.degenerate);
    r.per_class.push_back(m);
  }
  for (const auto& m : r.per_class) {
    const double w = total > 0 ? static_cast<double>(m.support) / static_cast<double>(total) : 0.0;
    const double u = 1.0 / num_classes;
    r.macro.precision += u * m.precision;
    r.macro.recall += u * m.recall;
    r.macro.specificity += u * m.specificity;
    r.macro.f1 += u * m.f1;
    r.weighted.precision += w * m.precision;
    r.weighted.recall += w * m.recall;
    r.weighted.specificity += w * m.specificity;
    r.weighted.f1 += w * m.f1;
  }
  r.mcc = multiclass_mcc(r.confusion, &r.mcc_degenerate);
  return r;
}

double binary_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with midranks for ties.
  double rank_sum = 0.0;
  double npos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += midrank;
        npos += 1.0;
      }
    }
    i = j;
  }
  const double nneg = static_cast<double>(scores.size()) - npos;
  if (npos == 0.0 || nneg == 0.0) throw Error(ErrorCode::SingleClassPresent, "AUC needs positives and negatives");
  return (rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg);
}

double auc_roc(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "probabilities and labels differ in length");
  }
  double sum = 0.0;
  int used = 0;
  for (Eigen::Index k = 0; k < probs.cols(); ++k) {
    std::vector<bool> pos(labels.size());
    std::size_t npos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      pos[i] = labels[i] == k;
      npos += pos[i];
    }
    if (npos == 0 || npos == labels.size()) continue;
    std::vector<double> scores(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) scores[i] = probs(static_cast<Eigen::Index>(i), k);
    sum += binary_auc(scores, pos);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::SingleClassPresent, "AUC needs at least two classes present");
  return sum / used;
}

RunSummary summarize_runs(const std::vector<double>& values) {
  RunSummary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

double welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::TooFewRuns, "t-test needs at least two runs per side");
  const auto sa = summarize_runs(a);
  const auto sb = summarize_runs(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = sa.stddev * sa.stddev / na;
  const double vb = sb.stddev * sb.stddev / nb;
  const double diff = sa.mean - sb.mean;
  if (va + vb == 0.0) return diff == 0.0 ? 1.0 : 0.0;
  const double t = diff / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

FpsResult fps_from_timings(const std::vector<double>& seconds_per_image) {
  if (seconds_per_image.empty()) throw Error(ErrorCode::EmptyBatch, "no timed images");
  FpsResult r;
  r.images = seconds_per_image.size();
  r.seconds = std::accumulate(seconds_per_image.begin(), seconds_per_image.end(), 0.0);
  r.fps = r.seconds > 0.0 ? static_cast<double>(r.images) / r.seconds : std::numeric_limits<double>::infinity();
  r.mean_latency_ms = 1000.0 * r.seconds / static_cast<double>(r.images);
  std::vector<double> sorted = seconds_per_image;
  std::sort(sorted.begin(), sorted.end());
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size())));
  r.p95_latency_ms = 1000.0 * sorted[std::max<std::size_t>(rank, 1) - 1];
  return r;
}

FpsResult fps_bench(const std::function<void(std::size_t)>& process, std::size_t n, std::size_t warmup) {
  if (n <= warmup) throw Error(ErrorCode::EmptyBatch, "no images left after warmup");
  for (std::size_t i = 0; i < warmup; ++i) process(i);
  using clock = std::chrono::steady_clock;
  std::vector<double> timings;
  timings.reserve(n - warmup);
  const auto start = clock::now();
  for (std::size_t i = warmup; i < n; ++i) {
    const auto t0 = clock::now();
    process(i);
    timings.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }
  const double window = std::chrono::duration<double>(clock::now() - start).count();
  auto r = fps_from_timings(timings);
  r.seconds = window;
  r.fps = window > 0.0 ? static_cast<double>(r.images) / window : std::numeric_limits<double>::infinity();
  return r;
}

nlohmann::json report_to_json(const EvalReport& r, const std::vector<std::string>& class_names) {
  using nlohmann::json;
  auto name = [&](std::size_t k) { return k < class_names.size() ? class_names[k] : std::to_string(k); };
  json per_class = json::array();
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& m = r.per_class[k];
    per_class.push_back({{"class", name(k)}, {"precision", m.precision}, {"recall", m.recall},
                         {"specificity", m.specificity}, {"f1", m.f1}, {"support", m.support},
                         {"degenerate", m.degenerate}});
  }
  auto agg = [](const AggregateMetrics& a) {
    return json{{"precision", a.precision}, {"recall", a.recall}, {"specificity", a.specificity}, {"f1", a.f1}};
  };
  json confusion = json::array();
  for (Eigen::Index i = 0; i < r.confusion.counts.rows(); ++i) {
    std::vector<std::int64_t> row;
    for (Eigen::Index j = 0; j < r.confusion.counts.cols(); ++j) row.push_back(r.confusion.counts(i, j));
    confusion.push_back(row);
  }
  json j = {{"samples", r.confusion.total()}, {"accuracy", r.accuracy}, {"macro", agg(r.macro)},
            {"weighted", agg(r.weighted)}, {"mcc", r.mcc}, {"mcc_degenerate", r.mcc_degenerate},
            {"per_class", per_class}, {"confusion", confusion}};
  if (r.auc) j["auc"] = *r.auc;
  return j;
}

std::string report_table(const EvalReport& r, const std::vector<std::string>& class_names) {
  std::size_t width = 9;
  for (const auto& n : class_names) width = std::max(width, n.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s %9s %8s\n", static_cast<int>(width), "class", "precision",
                "recall", "specific.", "f1", "support");
  os << buf;
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& m = r.per_class[k];
    const std::string name = k < class_names.size() ? class_names[k] : std::to_string(k);
    std::snprintf(buf, sizeof buf, "%-*s %9.4f %9.4f %9.4f %9.4f %8lld%s\n", static_cast<int>(width), name.c_str(),
                  m.precision, m.recall, m.specificity, m.f1, static_cast<long long>(m.support),
                  m.degenerate ? " *" : "");
    os << buf;
  }
  for (const auto& [label, a] : {std::pair{"macro", r.macro}, std::pair{"weighted", r.weighted}}) {
    std::snprintf(buf, sizeof buf, "%-*s %9.4f %9.4f %9.4f %9.4f\n", static_cast<int>(width), label, a.precision,
                  a.recall, a.specificity, a.f1);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "\naccuracy %.4f  mcc %.4f%s", r.accuracy, r.mcc, r.mcc_degenerate ? " *" : "");
  os << buf;
  if (r.auc) {
    std::snprintf(buf, sizeof buf, "  auc %.4f", *r.auc);
    os << buf;
  }
  os << "\n\nconfusion (rows actual, columns predicted)\n";
  for (Eigen::Index i = 0; i < r.confusion.counts.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.confusion.counts.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%7lld", static_cast<long long>(r.confusion.counts(i, j)));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace endoscan
