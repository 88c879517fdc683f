#include <fstream>

#include "endoscan/classify.hpp"
#include "endoscan/treenet.hpp"

namespace endoscan {

using nlohmann::json;

std::unique_ptr<Model> model_from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw Error(ErrorCode::SchemaMismatch, "unsupported model version");
    const auto kind = j.at("kind").get<std::string>();
    auto members = [&j] {
      std::vector<ModelPtr> out;
      for (const auto& m : j.at("members")) out.push_back(model_from_json(m));
      return out;
    };
    if (kind == "tree") return std::make_unique<DecisionTree>(DecisionTree::from_json(j));
    if (kind == "forest") return std::make_unique<RandomForest>(RandomForest::from_json(j));
    if (kind == "logistic") return std::make_unique<LogisticRegression>(LogisticRegression::from_json(j));
    if (kind == "mlp") return std::make_unique<Mlp>(Mlp::from_json(j));
    if (kind == "treenet") return std::make_unique<TreeNetModel>(TreeNetModel::from_json(j));
    if (kind == "bagged") {
      const auto mode = j.at("mode").get<std::string>() == "hard" ? VoteMode::Hard : VoteMode::Soft;
      return std::make_unique<BaggedEnsemble>(members(), mode);
    }
    if (kind == "vote") return std::make_unique<WeightedVote>(members(), j.at("weights").get<std::vector<double>>());
    if (kind == "subset") {
      return std::make_unique<ColumnSubset>(model_from_json(j.at("inner")),
                                            j.at("columns").get<std::vector<Eigen::Index>>(),
                                            j.at("input_dim").get<Eigen::Index>());
    }
    if (kind == "stacked") return std::make_unique<StackedModel>(members(), Mlp::from_json(j.at("head")));
    throw Error(ErrorCode::SchemaMismatch, "unknown model kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("malformed model document: ") + e.what());
  }
}

void save_model(const Model& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << m.to_json().dump() << '\n';
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  try {
    return model_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
}

}  // namespace endoscan
