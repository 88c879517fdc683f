#include "doctest.h"

#include <fstream>
#include <sstream>

#include "endoscan/treenet.hpp"
#include "support.hpp"

using namespace endoscan;
using test::code_of;

namespace {

TreeNetParams small_params(int layers, int forests, int trees) {
  TreeNetParams p;
  p.layers = layers;
  p.forests_per_layer = forests;
  p.trees_per_forest = trees;
  return p;
}

/// Forest whose only tree is a single leaf with the given distribution.
RandomForest leaf_forest(std::vector<double> dist, Eigen::Index dim) {
  nlohmann::json tree = {{"kind", "tree"},       {"version", 1},      {"classes", dist.size()},
                         {"input_dim", dim},      {"feature", {-1}},   {"threshold", {0.0}},
                         {"left", {-1}},          {"right", {-1}},     {"distribution", {dist}}};
  nlohmann::json forest = {{"kind", "forest"}, {"version", 1}, {"classes", dist.size()}, {"input_dim", dim},
                           {"trees", nlohmann::json::array({tree})}};
  return RandomForest::from_json(forest);
}

}  // namespace

TEST_CASE("single layer single forest reduces to a forest") {
  Eigen::MatrixXd x;
  std::vector<int> y;
  test::blobs(20, 3, 5, 0.9, 1, x, y);
  const auto p = small_params(1, 1, 10);
  const auto net = treenet_train(x, y, 3, p, 42);
  ForestParams fp = p.forest;
  fp.n_trees = 10;
  const auto forest = train_forest(x, y, 3, fp, treenet_forest_seed(42, 0, 0));
  CHECK(net.predict_proba_rows(x) == forest.predict_proba_rows(x));
}

TEST_CASE("layer wiring") {
  Eigen::MatrixXd x;
  std::vector<int> y;
  test::blobs(10, 4, 6, 0.9, 2, x, y);
  const auto net = treenet_train(x, y, 4, small_params(3, 5, 3), 7);
  CHECK(net.layer_input_dim(0) == 6);
  CHECK(net.layer_input_dim(1) == 6 + 5 * 4);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    for (const auto& f : net.layers()[l]) CHECK(f.input_dim() == net.layer_input_dim(l));
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto p = net.predict_proba(x.row(i).transpose());
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(net.predict_proba(x.row(i).transpose()) == p);
  }
  CHECK(code_of([&] { net.predict_proba(Eigen::VectorXd::Zero(5)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("training is forward-only") {
  Eigen::MatrixXd x;
  std::vector<int> y;
  test::blobs(12, 2, 4, 1.0, 3, x, y);
  const auto two = treenet_train(x, y, 2, small_params(2, 2, 4), 9);
  const auto three = treenet_train(x, y, 2, small_params(3, 2, 4), 9);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t f = 0; f < 2; ++f) CHECK(two.layers()[l][f].to_json() == three.layers()[l][f].to_json());
  }
  CHECK(treenet_train(x, y, 2, small_params(2, 2, 4), 9, 2).to_json() == two.to_json());
}

TEST_CASE("XOR is learned at least as well as a stump") {
  Eigen::MatrixXd x(8, 2);
  x << 0, 0, 0, 1, 1, 0, 1, 1, 0.1, 0.1, 0.1, 0.9, 0.9, 0.1, 0.9, 0.9;
  const std::vector<int> y{0, 1, 1, 0, 0, 1, 1, 0};
  const auto net = treenet_train(x, y, 2, small_params(3, 2, 10), 5);
  const auto pred = net.predict_labels(x);
  int ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i];
  CHECK(ok / 8.0 >= 0.75);  // a stump gets at most 0.75 here
}

TEST_CASE("final-layer averaging") {
  std::vector<std::vector<RandomForest>> same{{leaf_forest({0, 1}, 2), leaf_forest({0, 1}, 2)}};
  const TreeNetModel agree(same, 2, 2);
  CHECK(agree.predict(Eigen::VectorXd::Zero(2)).probs(1) == 1.0);
  std::vector<std::vector<RandomForest>> split{{leaf_forest({1, 0}, 2), leaf_forest({0, 1}, 2)}};
  const TreeNetModel tie(split, 2, 2);
  const auto p = tie.predict(Eigen::VectorXd::Zero(2));
  CHECK(p.probs(0) == 0.5);
  CHECK(p.label == 0);

  const auto back = TreeNetModel::from_json(tie.to_json());
  CHECK(back.predict_proba(Eigen::VectorXd::Zero(2)) == p.probs);
}

TEST_CASE("training preconditions") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 2);
  CHECK(code_of([&] { treenet_train(x, {0, 0, 0, 0, 0, 0}, 1, small_params(1, 1, 1), 0); }) == ErrorCode::SingleClass);
  CHECK(code_of([&] { treenet_train(x, {0, 1, 0, 1, 0, 1}, 3, small_params(1, 1, 1), 0); }) ==
        ErrorCode::MissingClassInstance);
}

TEST_CASE("stratified subsampling keeps every class") {
  std::vector<int> labels;
  for (int i = 0; i < 97; ++i) labels.push_back(0);
  for (int i = 0; i < 2; ++i) labels.push_back(1);
  labels.push_back(2);
  for (double f : {0.01, 0.05, 0.1, 0.5, 1.0}) {
    const auto rows = stratified_subsample(labels, 3, f, 4);
    CHECK(rows.size() == std::max<std::size_t>(3, static_cast<std::size_t>(std::llround(f * 100))));
    std::vector<int> seen(3, 0);
    for (auto r : rows) seen[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])] = 1;
    CHECK(seen == std::vector<int>{1, 1, 1});
    CHECK(std::is_sorted(rows.begin(), rows.end()));
  }
  CHECK(stratified_subsample(labels, 3, 1.0, 1).size() == 100);
  CHECK(code_of([&] { stratified_subsample(labels, 3, 0.0, 1); }) == ErrorCode::FractionOutOfRange);
  CHECK(code_of([&] { stratified_subsample(labels, 3, 1.5, 1); }) == ErrorCode::FractionOutOfRange);
}

TEST_CASE("data fraction experiment") {
  Eigen::MatrixXd x, xt;
  std::vector<int> y, yt;
  test::blobs(100, 2, 4, 0.45, 11, x, y);
  test::blobs(40, 2, 4, 0.45, 12, xt, yt);
  FeatureMatrix train, test;
  train.values = x;
  train.labels = y;
  train.class_names = {"a", "b"};
  test.values = xt;
  test.labels = yt;
  test.class_names = {"a", "b"};
  const auto rows = data_fraction_experiment(train, test, {0.1, 1.0}, small_params(2, 2, 5), 3);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].size == 200);
  CHECK(rows[0].size == 20);
  CHECK(rows[1].f1 >= rows[0].f1 - 0.05);
  CHECK(data_fraction_experiment(train, test, {1.0}, small_params(1, 1, 3), 3).size() == 1);

  const auto dir = test::temp_dir("treenet_csv");
  write_fraction_csv(rows, dir / "f.csv", false);
  std::ifstream in(dir / "f.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "Chunk,Size,Time,Acc,P,R,MCC,F1");
  std::string first;
  std::getline(in, first);
  CHECK(first.rfind("0.1,20,0.000,", 0) == 0);
}
