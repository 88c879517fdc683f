#include "doctest.h"

#include <cmath>

#include "endoscan/genetic.hpp"
#include "support.hpp"

using namespace endoscan;
using test::code_of;

namespace {

/// Noisy two-class probabilities where a nonzero threshold can beat argmax.
void random_problem(std::uint64_t seed, int n, Eigen::MatrixXd& probs, std::vector<int>& labels) {
  Rng rng(seed);
  probs.resize(n, 2);
  labels.clear();
  for (int i = 0; i < n; ++i) {
    const int y = uniform01(rng) < 0.3 ? 1 : 0;
    const double shift = y == 1 ? 0.15 : 0.0;
    const double p1 = std::clamp(uniform_real(rng, 0.0, 0.75) + shift, 0.0, 1.0);
    probs(i, 0) = 1.0 - p1;
    probs(i, 1) = p1;
    labels.push_back(y);
  }
}

double grid_best(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  double best = 0.0;
  for (int a = 0; a < 10; ++a) {
    for (int b = 0; b < 10; ++b) best = std::max(best, threshold_f1(probs, labels, 2, {a / 10.0, b / 10.0}));
  }
  return best;
}

}  // namespace

TEST_CASE("mod-1 crossover") {
  CHECK(crossover_mod1(0.6, 0.7) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(crossover_mod1(0.2, 0.3) == doctest::Approx(0.5));
  CHECK(crossover_mod1(0.0, 0.0) == 0.0);
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double c = crossover_mod1(uniform01(rng), uniform01(rng));
    CHECK((c >= 0.0 && c < 1.0));
  }
}

TEST_CASE("threshold decisions") {
  CHECK(apply_thresholds(Eigen::VectorXd(Eigen::Vector2d(0.7, 0.4)), {0.6, 0.2}) == 1);  // margins 0.1 and 0.2
  CHECK(apply_thresholds(Eigen::VectorXd(Eigen::Vector2d(0.3, 0.7)), {0.0, 0.0}) == 1);
  CHECK(apply_thresholds(Eigen::VectorXd(Eigen::Vector2d(0.1, 0.1)), {0.6, 0.6}) == 0);
  CHECK(apply_thresholds(Eigen::VectorXd(Eigen::Vector3d(0.2, 0.5, 0.3)), {0.0, 0.9, 0.0}) == 2);
  Eigen::MatrixXd probs(2, 2);
  probs << 0.7, 0.3, 0.45, 0.55;
  CHECK(apply_thresholds(probs, {0.0, 0.0}) == std::vector<int>{0, 1});
}

TEST_CASE("GA-Boost is never worse than argmax and tracks the grid optimum") {
  int matches = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Eigen::MatrixXd probs;
    std::vector<int> labels;
    random_problem(100 + s, 80, probs, labels);
    GaConfig cfg;
    cfg.seed = s;
    const auto r = ga_boost_thresholds(probs, labels, 2, cfg);
    CHECK(r.f1 >= r.argmax_f1);
    CHECK(r.argmax_f1 == threshold_f1(probs, labels, 2, {0.0, 0.0}));
    CHECK(r.f1 == threshold_f1(probs, labels, 2, r.thresholds));
    CHECK(r.best_per_generation.size() == static_cast<std::size_t>(cfg.iterations + 1));
    CHECK(std::is_sorted(r.best_per_generation.begin(), r.best_per_generation.end()));
    for (double t : r.thresholds) CHECK(std::abs(t * 10 - std::round(t * 10)) < 1e-9);
    const double grid = grid_best(probs, labels);
    CHECK(r.f1 <= grid + 1e-12);
    matches += std::abs(r.f1 - grid) <= 1e-9;
  }
  CHECK(matches >= 19);
}

TEST_CASE("GA-Boost determinism and preconditions") {
  Eigen::MatrixXd probs;
  std::vector<int> labels;
  random_problem(5, 50, probs, labels);
  GaConfig cfg;
  cfg.seed = 77;
  const auto a = ga_boost_thresholds(probs, labels, 2, cfg);
  const auto b = ga_boost_thresholds(probs, labels, 2, cfg);
  CHECK(a.thresholds == b.thresholds);
  CHECK(a.best_per_generation == b.best_per_generation);

  CHECK(code_of([&] { ga_boost_thresholds(Eigen::MatrixXd(0, 2), {}, 2, cfg); }) == ErrorCode::EmptyInput);
  CHECK(code_of([&] { ga_boost_thresholds(probs, {0, 1}, 2, cfg); }) == ErrorCode::ShapeMismatch);
  GaConfig bad = cfg;
  bad.population = 0;
  CHECK(code_of([&] { ga_boost_thresholds(probs, labels, 2, bad); }) == ErrorCode::InvalidParameters);
}

TEST_CASE("threshold JSON") {
  const std::vector<std::string> names{"normal", "polyp"};
  const ThresholdVector t{0.3, 0.7};
  const auto j = thresholds_to_json(t, names);
  CHECK(thresholds_from_json(j, names) == t);
  CHECK(code_of([&] { thresholds_from_json(j, {"normal", "ulcer"}); }) == ErrorCode::ClassSetMismatch);
}

TEST_CASE("mask search finds the exhaustive optimum on a small problem") {
  // Column 0 carries the label; the other nine are noise.
  Rng rng(9);
  FeatureMatrix fm;
  fm.values.resize(120, 10);
  fm.class_names = {"a", "b"};
  for (int i = 0; i < 120; ++i) {
    const int y = i % 2;
    fm.labels.push_back(y);
    fm.values(i, 0) = y + uniform_real(rng, -0.1, 0.1);
    for (int j = 1; j < 10; ++j) fm.values(i, j) = uniform01(rng);
  }
  const auto fitness = [](const FeatureMask& m) {
    // Rewards the informative column and penalises each extra one.
    double f = m[0] ? 1.0 : 0.2;
    for (std::size_t j = 1; j < m.size(); ++j) f -= m[j] ? 0.01 * static_cast<double>(j) : 0.0;
    return f;
  };
  double best = -1e9;
  for (unsigned bits = 1; bits < (1u << 10); ++bits) {
    FeatureMask m(10);
    for (int j = 0; j < 10; ++j) m[static_cast<std::size_t>(j)] = (bits >> j) & 1u;
    best = std::max(best, fitness(m));
  }
  SelectConfig cfg;
  cfg.seed = 1;
  const auto r = ga_search_masks(10, fitness, cfg);
  CHECK(r.fitness == doctest::Approx(best));
  CHECK(r.mask[0]);
  CHECK(std::is_sorted(r.best_per_generation.begin(), r.best_per_generation.end()));

  const Trainer tree = [](const Eigen::MatrixXd& x, const std::vector<int>& y, int k, std::uint64_t seed) {
    return ModelPtr(std::make_unique<DecisionTree>(train_tree(x, y, k, TreeParams{}, seed)));
  };
  SelectConfig small;
  small.population = 8;
  small.generations = 5;
  small.seed = 2;
  const auto sel = ga_feature_select(fm, tree, small);
  CHECK(sel.mask[0]);
  CHECK(sel.fitness == doctest::Approx(1.0));
  const auto again = ga_feature_select(fm, tree, small);
  CHECK(again.mask == sel.mask);
}

TEST_CASE("mask search edge cases") {
  const auto count = [](const FeatureMask& m) {
    return static_cast<double>(std::count(m.begin(), m.end(), true));
  };
  CHECK(ga_search_masks(1, count, {}).mask == FeatureMask{true});
  CHECK(code_of([&] { ga_search_masks(0, count, {}); }) == ErrorCode::TooFewFeatures);

  SelectConfig frozen;
  frozen.mutation_rate = 0.0;
  frozen.population = 6;
  const FeatureMask start{true, false, true, false};
  frozen.initial_population.assign(6, start);
  const auto r = ga_search_masks(4, count, frozen);
  CHECK(r.mask == start);

  SelectConfig wrong;
  wrong.initial_population = {{true, false}};
  CHECK(code_of([&] { ga_search_masks(4, count, wrong); }) == ErrorCode::ShapeMismatch);
  wrong.initial_population = {{false, false, false, false}};
  CHECK(code_of([&] { ga_search_masks(4, count, wrong); }) == ErrorCode::DegenerateMask);

  FeatureMatrix empty;
  empty.values.resize(4, 0);
  empty.labels = {0, 1, 0, 1};
  empty.class_names = {"a", "b"};
  const Trainer none = [](const Eigen::MatrixXd&, const std::vector<int>&, int, std::uint64_t) -> ModelPtr {
    return nullptr;
  };
  CHECK(code_of([&] { ga_feature_select(empty, none, {}); }) == ErrorCode::TooFewFeatures);
  CHECK(mask_columns({false, true, true}) == std::vector<Eigen::Index>{1, 2});
}
