#include "endoscan/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

namespace endoscan {

using nlohmann::json;

const char* to_string(PreprocessMode m) noexcept {
  switch (m) {
    case PreprocessMode::None: return "none";
    case PreprocessMode::Crop: return "crop";
    case PreprocessMode::Inpaint: return "inpaint";
  }
  return "none";
}

PreprocessMode preprocess_mode_from_string(const std::string& s) {
  if (s == "none") return PreprocessMode::None;
  if (s == "crop") return PreprocessMode::Crop;
  if (s == "inpaint") return PreprocessMode::Inpaint;
  throw Error(ErrorCode::ConfigError, "unknown preprocessing mode '" + s + "'");
}

Image preprocess_image(const Image& img, PreprocessMode mode, const ReflectionParams& params) {
  if (mode == PreprocessMode::None) return img;
  const auto mask = detect_reflections(img, params);
  if (mask.maxCoeff() == 0) return img;
  return mode == PreprocessMode::Crop ? crop_reflection(img, mask) : remove_reflections(img, mask);
}

// ---------------------------------------------------------------------------
// Classifiers

Trainer make_trainer(const ClassifierConfig& c, const std::string& kind, int jobs) {
  if (kind == "tree") {
    return [p = c.tree](const Eigen::MatrixXd& x, const std::vector<int>& y, int k, std::uint64_t seed) -> ModelPtr {
      return std::make_shared<DecisionTree>(train_tree(x, y, k, p, seed));
    };
  }
  if (kind == "forest" || kind == "extra-trees") {
    ForestParams p = c.forest;
    p.extra_trees = kind == "extra-trees";
    return [p, jobs](const Eigen::MatrixXd& x, const std::vector<int>& y, int k, std::uint64_t seed) -> ModelPtr {
      return std::make_shared<RandomForest>(train_forest(x, y, k, p, seed, jobs));
    };
  }
  if (kind == "logistic") {
    return [p = c.logistic](const Eigen::MatrixXd& x, const std::vector<int>& y, int k, std::uint64_t seed) -> ModelPtr {
      return std::make_shared<LogisticRegression>(train_logistic(x, y, k, p, seed));
    };
  }
  if (kind == "mlp") {
    return [p = c.mlp](const Eigen::MatrixXd& x, const std::vector<int>& y, int k, std::uint64_t seed) -> ModelPtr {
      return std::make_shared<Mlp>(train_mlp(x, y, k, p, seed));
    };
  }
  if (kind == "treenet") {
    return [p = c.treenet, jobs](const Eigen::MatrixXd& x, const std::vector<int>& y, int k,
                                 std::uint64_t seed) -> ModelPtr {
      return std::make_shared<TreeNetModel>(treenet_train(x, y, k, p, seed, jobs));
    };
  }
  throw Error(ErrorCode::ConfigError, "unknown classifier '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

/// Reads optional keys from an object and rejects any key it was not asked about.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, where_ + "." + key + ": " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw Error(ErrorCode::ConfigError, "unknown key " + where_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json tree_json(const TreeParams& p) {
  return {{"max_depth", p.max_depth}, {"min_samples_split", p.min_samples_split}, {"max_features", p.max_features}};
}

TreeParams tree_params(const json& j, const std::string& where) {
  TreeParams p;
  Reader r(j, where);
  r.get("max_depth", p.max_depth);
  r.get("min_samples_split", p.min_samples_split);
  r.get("max_features", p.max_features);
  r.finish();
  return p;
}

json forest_json(const ForestParams& p) {
  return {{"n_trees", p.n_trees}, {"max_features", p.max_features}, {"bootstrap", p.bootstrap}, {"tree", tree_json(p.tree)}};
}

ForestParams forest_params(const json& j, const std::string& where) {
  ForestParams p;
  Reader r(j, where);
  r.get("n_trees", p.n_trees);
  r.get("max_features", p.max_features);
  r.get("bootstrap", p.bootstrap);
  if (const auto* t = r.child("tree")) p.tree = tree_params(*t, where + ".tree");
  r.finish();
  return p;
}

json mlp_json(const MlpParams& p) {
  return {{"hidden1", p.hidden1}, {"hidden2", p.hidden2}, {"epochs", p.epochs}, {"learning_rate", p.learning_rate},
          {"batch_size", p.batch_size}, {"beta1", p.beta1}, {"beta2", p.beta2}, {"epsilon", p.epsilon}};
}

MlpParams mlp_params(const json& j) {
  MlpParams p;
  Reader r(j, "classifier.mlp");
  r.get("hidden1", p.hidden1);
  r.get("hidden2", p.hidden2);
  r.get("epochs", p.epochs);
  r.get("learning_rate", p.learning_rate);
  r.get("batch_size", p.batch_size);
  r.get("beta1", p.beta1);
  r.get("beta2", p.beta2);
  r.get("epsilon", p.epsilon);
  r.finish();
  return p;
}

const char* policy_name(BalancePolicy p) { return p == BalancePolicy::Literal ? "literal" : "default"; }

BalancePolicy policy_from_string(const std::string& s) {
  if (s == "default") return BalancePolicy::Default;
  if (s == "literal") return BalancePolicy::Literal;
  throw Error(ErrorCode::ConfigError, "unknown augmentation policy '" + s + "'");
}

}  // namespace

json config_to_json(const PipelineConfig& c) {
  const auto& cl = c.classifier;
  json classifier = {
      {"kind", cl.kind},
      {"tree", tree_json(cl.tree)},
      {"forest", forest_json(cl.forest)},
      {"logistic", {{"learning_rate", cl.logistic.learning_rate}, {"epochs", cl.logistic.epochs}}},
      {"mlp", mlp_json(cl.mlp)},
      {"treenet",
       {{"layers", cl.treenet.layers},
        {"forests_per_layer", cl.treenet.forests_per_layer},
        {"trees_per_forest", cl.treenet.trees_per_forest},
        {"forest", forest_json(cl.treenet.forest)}}},
      {"vote_members", cl.vote_members},
      {"vote_weights", cl.vote_weights},
  };
  json features;
  to_json(features, c.features);
  return {
      {"schema_version", c.schema_version},
      {"dataset", c.dataset.generic_string()},
      {"output", c.output.generic_string()},
      {"seed", c.seed ? json(*c.seed) : json(nullptr)},
      {"jobs", c.jobs},
      {"train_fraction", c.train_fraction},
      {"validation_fraction", c.validation_fraction},
      {"preprocess",
       {{"mode", to_string(c.preprocess)},
        {"strong", c.reflection.strong},
        {"weak", c.reflection.weak},
        {"channels", c.reflection.mode == ReflectionChannelMode::AnyChannel ? "any" : "luminance"}}},
      {"augment", {{"enabled", c.augment}, {"policy", policy_name(c.augment_policy)}, {"max_images", c.max_images}}},
      {"feature_preset", c.feature_preset},
      {"features", features},
      {"classifier", classifier},
      {"bagging",
       {{"bags", c.bagging.n_bags},
        {"fraction", c.bagging.fraction},
        {"with_replacement", c.bagging.with_replacement},
        {"vote", c.bagging.mode == VoteMode::Hard ? "hard" : "soft"}}},
      {"selection",
       {{"enabled", c.select_features},
        {"population", c.selection.population},
        {"generations", c.selection.generations},
        {"mutation_rate", c.selection.mutation_rate},
        {"crossover_rate", c.selection.crossover_rate},
        {"validation_fraction", c.selection.validation_fraction}}},
      {"ga_boost",
       {{"enabled", c.ga_boost},
        {"population", c.ga.population},
        {"iterations", c.ga.iterations},
        {"mutation_rate", c.ga.mutation_rate},
        {"alphabet", c.ga.alphabet}}},
  };
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  Reader r(j, "config");
  r.get("schema_version", c.schema_version);
  if (c.schema_version != kConfigSchemaVersion) {
    throw Error(ErrorCode::ConfigError, "unsupported schema_version " + std::to_string(c.schema_version));
  }
  std::string path;
  r.get("dataset", path);
  c.dataset = path;
  path.clear();
  r.get("output", path);
  c.output = path;
  if (const auto* s = r.child("seed"); s && !s->is_null()) {
    if (!s->is_number_unsigned()) throw Error(ErrorCode::ConfigError, "seed must be a non-negative integer");
    c.seed = s->get<std::uint64_t>();
  }
  r.get("jobs", c.jobs);
  r.get("train_fraction", c.train_fraction);
  r.get("validation_fraction", c.validation_fraction);

  if (const auto* p = r.child("preprocess")) {
    Reader pr(*p, "preprocess");
    std::string mode = "none", channels = "luminance";
    pr.get("mode", mode);
    pr.get("strong", c.reflection.strong);
    pr.get("weak", c.reflection.weak);
    pr.get("channels", channels);
    pr.finish();
    c.preprocess = preprocess_mode_from_string(mode);
    if (channels != "luminance" && channels != "any") throw Error(ErrorCode::ConfigError, "channels must be luminance or any");
    c.reflection.mode = channels == "any" ? ReflectionChannelMode::AnyChannel : ReflectionChannelMode::Luminance;
  }
  if (const auto* a = r.child("augment")) {
    Reader ar(*a, "augment");
    std::string policy = "default";
    ar.get("enabled", c.augment);
    ar.get("policy", policy);
    ar.get("max_images", c.max_images);
    ar.finish();
    c.augment_policy = policy_from_string(policy);
  }
  r.get("feature_preset", c.feature_preset);
  if (const auto* f = r.child("features")) {
    if (f->is_string()) {
      c.feature_preset = f->get<std::string>();
      c.features = FeatureSpec::preset(c.feature_preset);
    } else {
      from_json(*f, c.features);
    }
  } else {
    c.features = FeatureSpec::preset(c.feature_preset);
  }
  if (const auto* cl = r.child("classifier")) {
    Reader cr(*cl, "classifier");
    auto& k = c.classifier;
    cr.get("kind", k.kind);
    if (const auto* t = cr.child("tree")) k.tree = tree_params(*t, "classifier.tree");
    if (const auto* t = cr.child("forest")) k.forest = forest_params(*t, "classifier.forest");
    if (const auto* t = cr.child("logistic")) {
      Reader lr(*t, "classifier.logistic");
      lr.get("learning_rate", k.logistic.learning_rate);
      lr.get("epochs", k.logistic.epochs);
      lr.finish();
    }
    if (const auto* t = cr.child("mlp")) k.mlp = mlp_params(*t);
    if (const auto* t = cr.child("treenet")) {
      Reader tr(*t, "classifier.treenet");
      tr.get("layers", k.treenet.layers);
      tr.get("forests_per_layer", k.treenet.forests_per_layer);
      tr.get("trees_per_forest", k.treenet.trees_per_forest);
      if (const auto* f = tr.child("forest")) k.treenet.forest = forest_params(*f, "classifier.treenet.forest");
      tr.finish();
    }
    cr.get("vote_members", k.vote_members);
    cr.get("vote_weights", k.vote_weights);
    cr.finish();
  }
  if (const auto* b = r.child("bagging")) {
    Reader br(*b, "bagging");
    std::string vote = "soft";
    br.get("bags", c.bagging.n_bags);
    br.get("fraction", c.bagging.fraction);
    br.get("with_replacement", c.bagging.with_replacement);
    br.get("vote", vote);
    br.finish();
    if (vote != "soft" && vote != "hard") throw Error(ErrorCode::ConfigError, "bagging.vote must be soft or hard");
    c.bagging.mode = vote == "hard" ? VoteMode::Hard : VoteMode::Soft;
  }
  if (const auto* s = r.child("selection")) {
    Reader sr(*s, "selection");
    sr.get("enabled", c.select_features);
    sr.get("population", c.selection.population);
    sr.get("generations", c.selection.generations);
    sr.get("mutation_rate", c.selection.mutation_rate);
    sr.get("crossover_rate", c.selection.crossover_rate);
    sr.get("validation_fraction", c.selection.validation_fraction);
    sr.finish();
  }
  if (const auto* g = r.child("ga_boost")) {
    Reader gr(*g, "ga_boost");
    gr.get("enabled", c.ga_boost);
    gr.get("population", c.ga.population);
    gr.get("iterations", c.ga.iterations);
    gr.get("mutation_rate", c.ga.mutation_rate);
    gr.get("alphabet", c.ga.alphabet);
    gr.finish();
  }
  r.finish();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (!seed) fail("seed is mandatory");
  if (dataset.empty()) fail("dataset is not set");
  if (!std::filesystem::is_directory(dataset)) fail("dataset directory " + dataset.string() + " does not exist");
  if (output.empty()) fail("output is not set");
  if (jobs < 1) fail("jobs must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0,1)");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) fail("validation_fraction must lie in (0,1)");
  if (!(reflection.weak > 0 && reflection.weak < reflection.strong)) fail("reflection thresholds need strong > weak > 0");
  if (bagging.n_bags < 0 || !(bagging.fraction > 0.0 && bagging.fraction <= 1.0)) fail("invalid bagging settings");
  const auto& cl = classifier;
  if (cl.kind == "vote") {
    if (cl.vote_members.empty()) fail("vote ensemble has no members");
    if (!cl.vote_weights.empty() && cl.vote_weights.size() != cl.vote_members.size()) {
      fail("vote_weights and vote_members differ in length");
    }
    for (const auto& m : cl.vote_members) make_trainer(cl, m);
  } else {
    make_trainer(cl, cl.kind);
  }
  try {
    features.validate();
    if (ga_boost) ga.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

std::string config_hash(const PipelineConfig& c) {
  json j = config_to_json(c);
  j.erase("output");
  j.erase("jobs");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Model bundle

Eigen::MatrixXd ModelBundle::prepare(const Eigen::MatrixXd& raw) const {
  Eigen::MatrixXd x = normalizer.empty() ? raw : normalizer.apply(raw);
  if (!columns.empty()) x = Eigen::MatrixXd(x(Eigen::all, columns));
  return x;
}

Prediction ModelBundle::predict(const Image& img) const {
  const auto v = extract_all(preprocess_image(img, preprocess, reflection), spec);
  Eigen::VectorXd x = normalizer.empty() ? v.values : normalizer.apply(v.values);
  if (!columns.empty()) x = Eigen::VectorXd(x(columns));
  return model->predict(x);
}

int ModelBundle::classify(const Image& img) const {
  const auto p = predict(img);
  return thresholds ? apply_thresholds(p.probs, *thresholds) : p.label;
}

std::vector<int> ModelBundle::classify_rows(const Eigen::MatrixXd& raw) const {
  const Eigen::MatrixXd x = prepare(raw);
  if (thresholds) return apply_thresholds(model->predict_proba_rows(x), *thresholds);
  return model->predict_labels(x);
}

json ModelBundle::to_json() const {
  json spec_json;
  endoscan::to_json(spec_json, spec);
  return {
      {"kind", "bundle"},
      {"version", 1},
      {"config_hash", config_hash},
      {"preprocess",
       {{"mode", endoscan::to_string(preprocess)},
        {"strong", reflection.strong},
        {"weak", reflection.weak},
        {"channels", reflection.mode == ReflectionChannelMode::AnyChannel ? "any" : "luminance"}}},
      {"spec", spec_json},
      {"normalizer", {{"lo", detail::matrix_to_json(normalizer.lo)}, {"hi", detail::matrix_to_json(normalizer.hi)}}},
      {"columns", columns},
      {"class_names", class_names},
      {"thresholds", thresholds ? thresholds_to_json(*thresholds, class_names) : json(nullptr)},
      {"model", model->to_json()},
  };
}

ModelBundle ModelBundle::from_json(const json& j) {
  try {
    if (j.at("kind").get<std::string>() != "bundle" || j.at("version").get<int>() != 1) {
      throw Error(ErrorCode::SchemaMismatch, "not a version 1 model bundle");
    }
    ModelBundle b;
    b.config_hash = j.at("config_hash").get<std::string>();
    const auto& p = j.at("preprocess");
    b.preprocess = preprocess_mode_from_string(p.at("mode").get<std::string>());
    b.reflection.strong = p.at("strong").get<int>();
    b.reflection.weak = p.at("weak").get<int>();
    b.reflection.mode =
        p.at("channels").get<std::string>() == "any" ? ReflectionChannelMode::AnyChannel : ReflectionChannelMode::Luminance;
    endoscan::from_json(j.at("spec"), b.spec);
    b.normalizer.lo = detail::matrix_from_json(j.at("normalizer").at("lo"));
    b.normalizer.hi = detail::matrix_from_json(j.at("normalizer").at("hi"));
    b.columns = j.at("columns").get<std::vector<Eigen::Index>>();
    b.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (!j.at("thresholds").is_null()) b.thresholds = thresholds_from_json(j.at("thresholds"), b.class_names);
    b.model = model_from_json(j.at("model"));
    if (b.model->num_classes() != static_cast<int>(b.class_names.size())) {
      throw Error(ErrorCode::ClassSetMismatch, "bundle model and class list disagree");
    }
    return b;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("malformed model bundle: ") + e.what());
  }
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << b.to_json().dump() << '\n';
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  try {
    return ModelBundle::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Full pipeline

namespace {

template <typename F>
auto run_stage(const std::string& name, F&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Stratified split of row indices into (fit, held-out); classes with a
/// single row stay on the fit side.
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> holdout_rows(const std::vector<int>& labels, int k,
                                                                            double fraction, std::uint64_t seed) {
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  }
  Rng rng(seed);
  std::vector<Eigen::Index> fit, held;
  for (auto& rows : by_class) {
    shuffle(rows, rng);
    std::size_t n = 0;
    if (rows.size() >= 2) {
      n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
      n = std::clamp<std::size_t>(n, 1, rows.size() - 1);
    }
    held.insert(held.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n));
    fit.insert(fit.end(), rows.begin() + static_cast<std::ptrdiff_t>(n), rows.end());
  }
  std::sort(fit.begin(), fit.end());
  std::sort(held.begin(), held.end());
  return {fit, held};
}

std::vector<int> pick(const std::vector<int>& v, const std::vector<Eigen::Index>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[static_cast<std::size_t>(r)]);
  return out;
}

/// Writes processed copies of every sample under `out` as PNG and returns the
/// dataset rooted there.
Dataset materialize(const Dataset& d, const std::filesystem::path& out, PreprocessMode mode,
                    const ReflectionParams& params, int jobs) {
  Dataset result{out, d.class_names, d.samples};
  for (auto& s : result.samples) s.path = std::filesystem::path(s.path).replace_extension(".png").generic_string();
  for (const auto& name : d.class_names) std::filesystem::create_directories(out / name);
  parallel_for(d.samples.size(), jobs, [&](std::size_t i) {
    const auto img = preprocess_image(load_image(d.absolute(d.samples[i])), mode, params);
    save_png(img, result.absolute(result.samples[i]));
  });
  return result;
}

}  // namespace

PipelineResult full_pipeline(const PipelineConfig& cfg) {
  run_stage("config", [&] {
    cfg.validate();
    return 0;
  });
  const std::uint64_t seed = *cfg.seed;
  const std::string hash = config_hash(cfg);
  const auto& out = cfg.output;
  std::filesystem::create_directories(out);
  write_json({{"config_hash", hash}, {"config", config_to_json(cfg)}}, out / "config.json");

  json stages = json::array();
  auto mark = [&](const char* name, bool ran) { stages.push_back({{"stage", name}, {"status", ran ? "done" : "skipped"}}); };

  std::vector<std::string> warnings;
  auto [train_set, test_set] = run_stage("load", [&] {
    const auto d = load_dataset(cfg.dataset);
    return split_dataset(d, cfg.train_fraction, derive_seed(seed, "split"), &warnings);
  });
  const auto class_names = train_set.class_names;
  const int k = static_cast<int>(class_names.size());

  const bool preprocess = cfg.preprocess != PreprocessMode::None;
  if (preprocess) {
    run_stage("preprocess", [&] {
      train_set = materialize(train_set, out / "preprocessed" / "train", cfg.preprocess, cfg.reflection, cfg.jobs);
      test_set = materialize(test_set, out / "preprocessed" / "test", cfg.preprocess, cfg.reflection, cfg.jobs);
      return 0;
    });
  }
  mark("preprocess", preprocess);

  if (cfg.augment) {
    run_stage("augment", [&] {
      const auto counts = train_set.class_counts();
      const std::size_t largest = *std::max_element(counts.begin(), counts.end());
      const auto plan = plan_balancing(train_set, cfg.max_images ? cfg.max_images : largest, cfg.augment_policy);
      const auto root = out / "augmented";
      const auto records = execute_plan(train_set, plan, root, derive_seed(seed, "augment"));
      json log = json::array();
      for (const auto& r : records) log.push_back({{"output", r.output}, {"source", r.source}, {"op", r.op}, {"seed", r.seed}});
      write_json({{"config_hash", hash}, {"records", log}}, out / "augment_log.json");
      train_set = load_dataset(root);
      if (train_set.class_names != class_names) throw Error(ErrorCode::ClassSetMismatch, "augmented classes differ");
      return 0;
    });
  }
  mark("augment", cfg.augment);

  FeatureSpec spec = cfg.features;
  FeatureMatrix train_x, test_x;
  run_stage("extract", [&] {
    spec = fit_spec(train_set, spec, cfg.jobs);
    train_x = extract_matrix(train_set, spec, cfg.jobs);
    test_x = extract_matrix(test_set, spec, cfg.jobs);
    save_features(train_x, out / "features_train.csv");
    save_features(test_x, out / "features_test.csv");
    json schema = schema_document(spec);
    schema["config_hash"] = hash;
    write_json(schema, out / "schema.json");
    return 0;
  });
  mark("extract", true);

  ModelBundle bundle;
  bundle.preprocess = cfg.preprocess;
  bundle.reflection = cfg.reflection;
  bundle.spec = spec;
  bundle.class_names = class_names;
  bundle.config_hash = hash;
  bundle.normalizer = Normalizer::fit(train_x.values);
  const Eigen::MatrixXd train_n = bundle.normalizer.apply(train_x.values);

  json selection = nullptr;
  if (cfg.select_features) {
    run_stage("select", [&] {
      FeatureMatrix m = train_x;
      m.values = train_n;
      SelectConfig sc = cfg.selection;
      sc.seed = derive_seed(seed, "select");
      const auto kind = cfg.classifier.kind == "vote" ? cfg.classifier.vote_members.front() : cfg.classifier.kind;
      const auto result = ga_feature_select(m, make_trainer(cfg.classifier, kind, cfg.jobs), sc);
      bundle.columns = mask_columns(result.mask);
      selection = {{"selected", bundle.columns.size()}, {"of", train_x.cols()}, {"fitness", result.fitness}};
      std::vector<std::string> names;
      for (auto c : bundle.columns) names.push_back(train_x.column_names[static_cast<std::size_t>(c)]);
      write_json({{"config_hash", hash}, {"columns", bundle.columns}, {"names", names}, {"fitness", result.fitness},
                  {"best_per_generation", result.best_per_generation}},
                 out / "selection.json");
      return 0;
    });
  }
  mark("select", cfg.select_features);

  const Eigen::MatrixXd x_all =
      bundle.columns.empty() ? train_n : Eigen::MatrixXd(train_n(Eigen::all, bundle.columns));
  const auto& y_all = train_x.labels;
  const bool holdout = cfg.ga_boost || (cfg.classifier.kind == "vote" && cfg.classifier.vote_weights.empty());
  const auto [fit_rows, held_rows] =
      holdout ? holdout_rows(y_all, k, cfg.validation_fraction, derive_seed(seed, "holdout"))
              : std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>{};
  const Eigen::MatrixXd x_fit = holdout ? Eigen::MatrixXd(x_all(fit_rows, Eigen::all)) : x_all;
  const std::vector<int> y_fit = holdout ? pick(y_all, fit_rows) : y_all;
  const Eigen::MatrixXd x_held = holdout ? Eigen::MatrixXd(x_all(held_rows, Eigen::all)) : Eigen::MatrixXd();
  const std::vector<int> y_held = holdout ? pick(y_all, held_rows) : std::vector<int>{};

  run_stage("train", [&] {
    const auto& cl = cfg.classifier;
    const std::uint64_t model_seed = derive_seed(seed, "model");
    auto train_one = [&](const std::string& kind, std::uint64_t s) -> ModelPtr {
      const auto trainer = make_trainer(cl, kind, cfg.jobs);
      if (cfg.bagging.n_bags > 0) {
        return std::make_shared<BaggedEnsemble>(bag_ensemble(trainer, x_fit, y_fit, k, cfg.bagging, s, cfg.jobs));
      }
      return trainer(x_fit, y_fit, k, s);
    };
    ModelPtr model;
    if (cl.kind == "vote") {
      std::vector<ModelPtr> members;
      std::vector<double> weights = cl.vote_weights;
      for (std::size_t i = 0; i < cl.vote_members.size(); ++i) {
        members.push_back(train_one(cl.vote_members[i], derive_seed(model_seed, i)));
        if (cl.vote_weights.empty()) {
          weights.push_back(evaluate(y_held, members.back()->predict_labels(x_held), k).accuracy);
        }
      }
      if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
        std::fill(weights.begin(), weights.end(), 1.0);
      }
      model = std::make_shared<WeightedVote>(members, weights);
    } else {
      model = train_one(cl.kind, model_seed);
    }
    if (!bundle.columns.empty()) {
      model = std::make_shared<ColumnSubset>(model, bundle.columns, train_x.cols());
    }
    bundle.model = model;
    return 0;
  });
  mark("train", true);

  json ga_json = nullptr;
  if (cfg.ga_boost) {
    run_stage("thresholds", [&] {
      GaConfig gc = cfg.ga;
      gc.seed = derive_seed(seed, "ga_boost");
      const Eigen::MatrixXd held_full = Eigen::MatrixXd(train_n(held_rows, Eigen::all));
      const auto probs = bundle.model->predict_proba_rows(held_full);
      const auto result = ga_boost_thresholds(probs, y_held, k, gc);
      bundle.thresholds = result.thresholds;
      ga_json = {{"thresholds", thresholds_to_json(result.thresholds, class_names)},
                 {"validation_argmax_f1", result.argmax_f1},
                 {"validation_thresholded_f1", result.f1},
                 {"best_per_generation", result.best_per_generation}};
      write_json({{"config_hash", hash}, {"thresholds", thresholds_to_json(result.thresholds, class_names)}},
                 out / "thresholds.json");
      return 0;
    });
  }
  mark("thresholds", cfg.ga_boost);

  PipelineResult result;
  run_stage("evaluate", [&] {
    save_bundle(bundle, out / "model.json");
    const Eigen::MatrixXd test_n = bundle.normalizer.apply(test_x.values);
    const auto probs = bundle.model->predict_proba_rows(test_n);
    std::vector<int> argmax_pred;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) argmax_pred.push_back(static_cast<int>(argmax(probs.row(i))));
    const auto argmax_report = evaluate(test_x.labels, argmax_pred, k);
    json doc = {{"config_hash", hash},
                {"class_names", class_names},
                {"train_samples", train_x.rows()},
                {"test_samples", test_x.rows()},
                {"feature_dimension", train_x.cols()},
                {"stages", stages},
                {"warnings", warnings},
                {"selection", selection},
                {"test", report_to_json(argmax_report, class_names)}};
    result.report = argmax_report;
    if (bundle.thresholds) {
      const auto thresholded = evaluate(test_x.labels, apply_thresholds(probs, *bundle.thresholds), k);
      ga_json["test_argmax_f1"] = argmax_report.weighted.f1;
      ga_json["test_thresholded_f1"] = thresholded.weighted.f1;
      doc["test_thresholded"] = report_to_json(thresholded, class_names);
      result.report = thresholded;
    }
    doc["ga_boost"] = ga_json;
    result.document = doc;
    std::ofstream f(out / "report.json");
    if (!f) throw Error(ErrorCode::IoFailure, "cannot write report.json");
    f << doc.dump(2) << '\n';
    return 0;
  });
  return result;
}

}  // namespace endoscan
