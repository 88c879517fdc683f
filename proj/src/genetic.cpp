#include "endoscan/genetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "endoscan/eval.hpp"

namespace endoscan {

using nlohmann::json;

void GaConfig::validate() const {
  if (population < 2) throw Error(ErrorCode::InvalidParameters, "GA population must be >= 2");
  if (iterations < 0) throw Error(ErrorCode::InvalidParameters, "GA iterations must be >= 0");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidParameters, "mutation rate must lie in [0,1]");
  }
  if (alphabet.empty()) throw Error(ErrorCode::InvalidParameters, "threshold alphabet is empty");
  for (double a : alphabet) {
    if (!(a >= 0.0 && a < 1.0)) throw Error(ErrorCode::InvalidParameters, "alphabet values must lie in [0,1)");
  }
}

double crossover_mod1(double x, double y) noexcept {
  const double s = std::fmod(x + y, 1.0);
  return s < 0.0 ? s + 1.0 : s;
}

int apply_thresholds(const Eigen::VectorXd& p, const ThresholdVector& t) {
  if (static_cast<std::size_t>(p.size()) != t.size()) {
    throw Error(ErrorCode::LengthMismatch, "probabilities and thresholds differ in length");
  }
  int best = -1;
  double best_margin = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    const double margin = p(c) - t[static_cast<std::size_t>(c)];
    if (margin >= 0.0 && (best < 0 || margin > best_margin)) {
      best = static_cast<int>(c);
      best_margin = margin;
    }
  }
  return best >= 0 ? best : static_cast<int>(argmax(p));
}

std::vector<int> apply_thresholds(const Eigen::MatrixXd& probs, const ThresholdVector& t) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) out.push_back(apply_thresholds(Eigen::VectorXd(probs.row(i).transpose()), t));
  return out;
}

double threshold_f1(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int num_classes,
                    const ThresholdVector& t) {
  return evaluate(labels, apply_thresholds(probs, t), num_classes).weighted.f1;
}

namespace {

/// Nearest alphabet value (lowest on ties); removes rounding drift of the
/// mod-1 sum.
double snap(double v, const std::vector<double>& alphabet) {
  double best = alphabet.front();
  for (double a : alphabet) {
    if (std::abs(a - v) < std::abs(best - v)) best = a;
  }
  return best;
}

/// Fitness-proportional pick; uniform when every fitness is zero.
std::size_t roulette(const std::vector<double>& fitness, Rng& rng) {
  const double total = std::accumulate(fitness.begin(), fitness.end(), 0.0);
  if (!(total > 0.0)) return uniform_index(rng, fitness.size());
  double r = uniform01(rng) * total;
  for (std::size_t i = 0; i < fitness.size(); ++i) {
    r -= fitness[i];
    if (r < 0.0) return i;
  }
  return fitness.size() - 1;
}

}  // namespace

GaBoostResult ga_boost_thresholds(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int num_classes,
                                  const GaConfig& cfg) {
  cfg.validate();
  if (labels.empty() || probs.rows() == 0) throw Error(ErrorCode::EmptyInput, "no samples to optimize on");
  if (static_cast<std::size_t>(probs.rows()) != labels.size() || probs.cols() != num_classes) {
    throw Error(ErrorCode::ShapeMismatch, "probability matrix does not match labels and classes");
  }
  const auto k = static_cast<std::size_t>(num_classes);
  Rng rng(cfg.seed);
  std::map<ThresholdVector, double> cache;
  auto fitness = [&](const ThresholdVector& t) {
    auto it = cache.find(t);
    if (it == cache.end()) it = cache.emplace(t, threshold_f1(probs, labels, num_classes, t)).first;
    return it->second;
  };
  auto random_vector = [&] {
    ThresholdVector t(k);
    for (auto& g : t) g = cfg.alphabet[uniform_index(rng, cfg.alphabet.size())];
    return t;
  };

  GaBoostResult result;
  const ThresholdVector zeros(k, 0.0);
  result.argmax_f1 = fitness(zeros);

  std::vector<ThresholdVector> pop;
  pop.push_back(ThresholdVector(k, snap(0.0, cfg.alphabet)));
  while (pop.size() < static_cast<std::size_t>(cfg.population)) pop.push_back(random_vector());

  // Keep the best distinct chromosomes; top up with fresh random ones.
  auto survive = [&](std::vector<ThresholdVector> pool) {
    std::vector<ThresholdVector> unique;
    for (auto& c : pool) {
      if (std::find(unique.begin(), unique.end(), c) == unique.end()) unique.push_back(std::move(c));
    }
    std::stable_sort(unique.begin(), unique.end(),
                     [&](const ThresholdVector& a, const ThresholdVector& b) { return fitness(a) > fitness(b); });
    if (unique.size() > static_cast<std::size_t>(cfg.population)) unique.resize(static_cast<std::size_t>(cfg.population));
    while (unique.size() < static_cast<std::size_t>(cfg.population)) unique.push_back(random_vector());
    return unique;
  };
  pop = survive(pop);
  result.best_per_generation.push_back(fitness(pop.front()));

  for (int gen = 0; gen < cfg.iterations; ++gen) {
    std::vector<double> scores;
    for (const auto& c : pop) scores.push_back(fitness(c));
    std::vector<ThresholdVector> pool = pop;
    while (pool.size() < 2 * pop.size()) {
      const auto& a = pop[roulette(scores, rng)];
      const auto& b = pop[roulette(scores, rng)];
      ThresholdVector c1 = a, c2 = b;
      for (std::size_t j = 0; j < k; ++j) {
        const double sum = snap(crossover_mod1(a[j], b[j]), cfg.alphabet);
        (uniform01(rng) < 0.5 ? c1[j] : c2[j]) = sum;
      }
      for (auto* c : {&c1, &c2}) {
        for (auto& g : *c) {
          if (uniform01(rng) < cfg.mutation_rate) g = cfg.alphabet[uniform_index(rng, cfg.alphabet.size())];
        }
      }
      pool.push_back(std::move(c1));
      pool.push_back(std::move(c2));
    }
    pop = survive(std::move(pool));
    result.best_per_generation.push_back(fitness(pop.front()));
  }
  result.thresholds = pop.front();
  result.f1 = fitness(pop.front());
  return result;
}

json thresholds_to_json(const ThresholdVector& t, const std::vector<std::string>& class_names) {
  if (t.size() != class_names.size()) throw Error(ErrorCode::LengthMismatch, "thresholds and classes differ in length");
  json j = json::object();
  for (std::size_t i = 0; i < t.size(); ++i) j[class_names[i]] = t[i];
  return j;
}

ThresholdVector thresholds_from_json(const json& j, const std::vector<std::string>& class_names) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaMismatch, "thresholds must be a JSON object");
  ThresholdVector t;
  for (const auto& name : class_names) {
    if (!j.contains(name)) throw Error(ErrorCode::ClassSetMismatch, "no threshold for class " + name);
    t.push_back(j.at(name).get<double>());
  }
  if (j.size() != class_names.size()) throw Error(ErrorCode::ClassSetMismatch, "thresholds name unknown classes");
  return t;
}

// ---------------------------------------------------------------------------
// Feature selection

std::vector<Eigen::Index> mask_columns(const FeatureMask& mask) {
  std::vector<Eigen::Index> cols;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) cols.push_back(static_cast<Eigen::Index>(i));
  }
  return cols;
}

SelectResult ga_search_masks(std::size_t n, const MaskFitness& fitness_fn, const SelectConfig& cfg) {
  if (n == 0) throw Error(ErrorCode::TooFewFeatures, "no features to select from");
  if (n == 1) return {FeatureMask{true}, fitness_fn(FeatureMask{true}), {}};
  if (cfg.population < 2 || cfg.generations < 0 || !(cfg.mutation_rate >= 0.0 && cfg.mutation_rate <= 1.0) ||
      !(cfg.crossover_rate >= 0.0 && cfg.crossover_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidParameters, "invalid feature-selection GA settings");
  }
  Rng rng(cfg.seed);
  std::map<FeatureMask, double> cache;
  auto fitness = [&](const FeatureMask& m) {
    auto it = cache.find(m);
    if (it == cache.end()) it = cache.emplace(m, fitness_fn(m)).first;
    return it->second;
  };
  auto repair = [&](FeatureMask& m) {
    if (std::none_of(m.begin(), m.end(), [](bool b) { return b; })) m[uniform_index(rng, n)] = true;
  };

  std::vector<FeatureMask> pop = cfg.initial_population;
  for (auto& m : pop) {
    if (m.size() != n) throw Error(ErrorCode::ShapeMismatch, "initial mask has the wrong length");
    if (std::none_of(m.begin(), m.end(), [](bool b) { return b; })) {
      throw Error(ErrorCode::DegenerateMask, "initial mask selects no feature");
    }
  }
  while (pop.size() < static_cast<std::size_t>(cfg.population)) {
    FeatureMask m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = uniform01(rng) < 0.5;
    repair(m);
    pop.push_back(std::move(m));
  }

  SelectResult result;
  auto track = [&] {
    for (const auto& m : pop) {
      const double f = fitness(m);
      if (result.mask.empty() || f > result.fitness) {
        result.mask = m;
        result.fitness = f;
      }
    }
    result.best_per_generation.push_back(result.fitness);
  };
  track();

  for (int gen = 0; gen < cfg.generations; ++gen) {
    std::vector<double> scores;
    for (const auto& m : pop) scores.push_back(fitness(m));
    std::vector<FeatureMask> next{result.mask};  // elitism
    while (next.size() < pop.size()) {
      FeatureMask a = pop[roulette(scores, rng)];
      FeatureMask b = pop[roulette(scores, rng)];
      if (uniform01(rng) < cfg.crossover_rate) {
        const std::size_t point = 1 + uniform_index(rng, n - 1);
        for (std::size_t i = point; i < n; ++i) {
          const bool tmp = a[i];
          a[i] = b[i];
          b[i] = tmp;
        }
      }
      for (auto* m : {&a, &b}) {
        for (std::size_t i = 0; i < n; ++i) {
          if (uniform01(rng) < cfg.mutation_rate) (*m)[i] = !(*m)[i];
        }
        repair(*m);
      }
      next.push_back(std::move(a));
      if (next.size() < pop.size()) next.push_back(std::move(b));
    }
    pop = std::move(next);
    track();
  }
  return result;
}

SelectResult ga_feature_select(const FeatureMatrix& x, const Trainer& trainer, const SelectConfig& cfg) {
  if (x.cols() == 0) throw Error(ErrorCode::TooFewFeatures, "no features to select from");
  const int k = static_cast<int>(x.num_classes());
  check_training_set(x.values, x.labels, k);
  if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidParameters, "validation fraction must lie in (0,1)");
  }
  // Stratified split; every class with two or more rows contributes to both sides.
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < x.labels.size(); ++i) {
    by_class[static_cast<std::size_t>(x.labels[i])].push_back(static_cast<Eigen::Index>(i));
  }
  Rng rng(derive_seed(cfg.seed, "split"));
  std::vector<Eigen::Index> fit_rows, val_rows;
  for (auto& rows : by_class) {
    shuffle(rows, rng);
    std::size_t nval = rows.size() < 2 ? 0 : static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(rows.size())));
    nval = std::min(std::max<std::size_t>(nval, rows.size() < 2 ? 0 : 1), rows.size() - 1);
    val_rows.insert(val_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(nval));
    fit_rows.insert(fit_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(nval), rows.end());
  }
  std::sort(fit_rows.begin(), fit_rows.end());
  std::sort(val_rows.begin(), val_rows.end());
  std::vector<int> yfit, yval;
  for (auto r : fit_rows) yfit.push_back(x.labels[static_cast<std::size_t>(r)]);
  for (auto r : val_rows) yval.push_back(x.labels[static_cast<std::size_t>(r)]);
  const std::uint64_t model_seed = derive_seed(cfg.seed, "model");

  auto fitness = [&](const FeatureMask& mask) {
    const auto cols = mask_columns(mask);
    const Eigen::MatrixXd xf = x.values(fit_rows, cols);
    const Eigen::MatrixXd xv = x.values(val_rows, cols);
    const auto model = trainer(xf, yfit, k, model_seed);
    return evaluate(yval, model->predict_labels(xv), k).weighted.f1;
  };
  return ga_search_masks(static_cast<std::size_t>(x.cols()), fitness, cfg);
}

}  // namespace endoscan
