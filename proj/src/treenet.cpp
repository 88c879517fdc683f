#include "endoscan/treenet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace endoscan {

using nlohmann::json;

TreeNetModel::TreeNetModel(std::vector<std::vector<RandomForest>> layers, Eigen::Index base_dim, int num_classes)
    : layers_(std::move(layers)), base_dim_(base_dim), classes_(num_classes) {
  if (layers_.empty()) throw Error(ErrorCode::InvalidParameters, "TreeNet needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].empty()) throw Error(ErrorCode::InvalidParameters, "TreeNet layers need at least one forest");
    for (const auto& f : layers_[l]) {
      if (f.input_dim() != layer_input_dim(l) || f.num_classes() != classes_) {
        throw Error(ErrorCode::ShapeMismatch, "forest shape does not match the TreeNet wiring");
      }
    }
  }
}

Eigen::Index TreeNetModel::layer_input_dim(std::size_t layer) const {
  if (layer == 0) return base_dim_;
  return base_dim_ + static_cast<Eigen::Index>(layers_[layer - 1].size()) * classes_;
}

Eigen::VectorXd TreeNetModel::proba(const Eigen::VectorXd& x) const {
  Eigen::VectorXd input = x;
  Eigen::VectorXd out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (l + 1 == layers_.size()) {
      out = Eigen::VectorXd::Zero(classes_);
      for (const auto& f : layer) out += f.predict_proba(input);
      out /= static_cast<double>(layer.size());
    } else {
      Eigen::VectorXd next(base_dim_ + static_cast<Eigen::Index>(layer.size()) * classes_);
      next.head(base_dim_) = x;
      for (std::size_t f = 0; f < layer.size(); ++f) {
        next.segment(base_dim_ + static_cast<Eigen::Index>(f) * classes_, classes_) = layer[f].predict_proba(input);
      }
      input = std::move(next);
    }
  }
  return out;
}

json TreeNetModel::to_json() const {
  json layers = json::array();
  for (const auto& layer : layers_) {
    json forests = json::array();
    for (const auto& f : layer) forests.push_back(f.to_json());
    layers.push_back(forests);
  }
  return {{"kind", "treenet"}, {"version", 1}, {"classes", classes_}, {"input_dim", base_dim_}, {"layers", layers}};
}

TreeNetModel TreeNetModel::from_json(const json& j) {
  std::vector<std::vector<RandomForest>> layers;
  for (const auto& layer : j.at("layers")) {
    std::vector<RandomForest> forests;
    for (const auto& f : layer) forests.push_back(RandomForest::from_json(f));
    layers.push_back(std::move(forests));
  }
  return TreeNetModel(std::move(layers), j.at("input_dim").get<Eigen::Index>(), j.at("classes").get<int>());
}

std::uint64_t treenet_forest_seed(std::uint64_t seed, int layer, int forest) noexcept {
  if (layer == 0 && forest == 0) return seed;
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(layer)), static_cast<std::uint64_t>(forest));
}

TreeNetModel treenet_train(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                           const TreeNetParams& params, std::uint64_t seed, int jobs) {
  if (params.layers < 1 || params.forests_per_layer < 1 || params.trees_per_forest < 1) {
    throw Error(ErrorCode::InvalidParameters, "TreeNet needs >= 1 layer, forest and tree");
  }
  check_training_set(x, y, num_classes);
  std::vector<bool> present(static_cast<std::size_t>(num_classes), false);
  for (int label : y) present[static_cast<std::size_t>(label)] = true;
  for (int k = 0; k < num_classes; ++k) {
    if (!present[static_cast<std::size_t>(k)]) {
      throw Error(ErrorCode::MissingClassInstance, "class " + std::to_string(k) + " has no training instance");
    }
  }
  ForestParams fp = params.forest;
  fp.n_trees = params.trees_per_forest;

  std::vector<std::vector<RandomForest>> layers;
  Eigen::MatrixXd input = x;
  for (int l = 0; l < params.layers; ++l) {
    std::vector<RandomForest> forests(static_cast<std::size_t>(params.forests_per_layer));
    parallel_for(forests.size(), jobs, [&](std::size_t f) {
      forests[f] = train_forest(input, y, num_classes, fp, treenet_forest_seed(seed, l, static_cast<int>(f)));
    });
    if (l + 1 < params.layers) {
      Eigen::MatrixXd next(x.rows(), x.cols() + static_cast<Eigen::Index>(forests.size()) * num_classes);
      next.leftCols(x.cols()) = x;
      for (std::size_t f = 0; f < forests.size(); ++f) {
        next.middleCols(x.cols() + static_cast<Eigen::Index>(f) * num_classes, num_classes) =
            forests[f].predict_proba_rows(input);
      }
      input = std::move(next);
    }
    layers.push_back(std::move(forests));
  }
  return TreeNetModel(std::move(layers), x.cols(), num_classes);
}

std::vector<Eigen::Index> stratified_subsample(const std::vector<int>& labels, int num_classes, double fraction,
                                               std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw Error(ErrorCode::FractionOutOfRange, "fraction must lie in (0,1]");
  const std::size_t n = labels.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "no rows to subsample");
  // Per-class shuffles interleaved into one stratified order.
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  Rng rng(seed);
  std::vector<Eigen::Index> chosen;
  std::vector<Eigen::Index> leftovers;
  for (auto& rows : by_class) {
    shuffle(rows, rng);
    const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(rows.size())));
    chosen.insert(chosen.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
    leftovers.insert(leftovers.end(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end());
  }
  // Top up to round(fraction * n) from the remaining rows at random.
  const auto target = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  shuffle(leftovers, rng);
  for (std::size_t i = 0; chosen.size() < target && i < leftovers.size(); ++i) chosen.push_back(leftovers[i]);

  // Swap in the first shuffled occurrence of any class still missing,
  // replacing a row of the most represented class.
  std::vector<std::size_t> count(static_cast<std::size_t>(num_classes), 0);
  for (auto r : chosen) ++count[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])];
  for (int k = 0; k < num_classes; ++k) {
    const auto& rows = by_class[static_cast<std::size_t>(k)];
    if (rows.empty() || count[static_cast<std::size_t>(k)] > 0) continue;
    const auto donor = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
    if (count[static_cast<std::size_t>(donor)] > 1) {
      for (std::size_t i = chosen.size(); i-- > 0;) {
        if (labels[static_cast<std::size_t>(chosen[i])] == donor) {
          chosen[i] = rows.front();
          break;
        }
      }
      --count[static_cast<std::size_t>(donor)];
    } else {
      chosen.push_back(rows.front());
    }
    ++count[static_cast<std::size_t>(k)];
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<FractionRow> data_fraction_experiment(const FeatureMatrix& train, const FeatureMatrix& test,
                                                  const std::vector<double>& fractions, const TreeNetParams& params,
                                                  std::uint64_t seed, int jobs) {
  if (train.cols() != test.cols()) throw Error(ErrorCode::ShapeMismatch, "train and test widths differ");
  if (fractions.empty()) throw Error(ErrorCode::FractionOutOfRange, "no fractions given");
  for (double f : fractions) {
    if (!(f > 0.0) || f > 1.0) throw Error(ErrorCode::FractionOutOfRange, "fraction must lie in (0,1]");
  }
  const int k = static_cast<int>(train.num_classes());
  std::vector<FractionRow> out;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const auto rows = stratified_subsample(train.labels, k, fractions[i], derive_seed(seed, i));
    const Eigen::MatrixXd x = train.values(rows, Eigen::all);
    std::vector<int> y;
    for (auto r : rows) y.push_back(train.labels[static_cast<std::size_t>(r)]);
    const auto t0 = std::chrono::steady_clock::now();
    const auto model = treenet_train(x, y, k, params, seed, jobs);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto report = evaluate(test.labels, model.predict_labels(test.values), k);
    out.push_back({fractions[i], rows.size(), seconds, report.accuracy, report.weighted.precision,
                   report.weighted.recall, report.mcc, report.weighted.f1});
  }
  return out;
}

void write_fraction_csv(const std::vector<FractionRow>& rows, const std::filesystem::path& path, bool include_time) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << "Chunk,Size,Time,Acc,P,R,MCC,F1\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%g,%zu,%.3f,%.4f,%.4f,%.4f,%.4f,%.4f\n", r.chunk, r.size,
                  include_time ? r.seconds : 0.0, r.accuracy, r.precision, r.recall, r.mcc, r.f1);
    out << buf;
  }
}

}  // namespace endoscan
