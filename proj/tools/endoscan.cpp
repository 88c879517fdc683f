// endoscan command-line front end.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "endoscan/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace endoscan;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitData = 4;

int default_jobs() {
  if (const char* env = std::getenv("ENDOSCAN_JOBS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

bool is_config_error(ErrorCode c) {
  return c == ErrorCode::ConfigError || c == ErrorCode::InvalidParameters || c == ErrorCode::InvalidThresholds ||
         c == ErrorCode::FractionOutOfRange || c == ErrorCode::MaxTooSmall;
}

int report_error(const Error& e, const std::string& stage) {
  std::cerr << "error: kind=" << to_string(e.code()) << " stage=" << stage << " message=" << e.what() << '\n';
  return is_config_error(e.code()) ? kExitConfig : kExitData;
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
}

/// Class-per-directory corpus, or a manifest when `manifest` is set.
Dataset open_dataset(const fs::path& in, const std::string& manifest) {
  return manifest.empty() ? load_dataset(in) : load_manifest(manifest, in);
}

/// Image files under `path` (or `path` itself), sorted.
std::vector<fs::path> collect_images(const fs::path& path) {
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path)) throw Error(ErrorCode::UnreadableFile, "no such file or directory: " + path.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(ErrorCode::EmptyBatch, "no images under " + path.string());
  return out;
}

fs::path sidecar(const fs::path& features, const char* suffix) {
  fs::path p = features;
  p.replace_extension(suffix);
  return p;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "bad number '" + item + "'");
    }
  }
  return out;
}

struct ClassifierFlags {
  std::string kind = "forest";
  int trees = ForestParams{}.n_trees;
  int epochs = MlpParams{}.epochs;
  int bags = 0;
  int layers = TreeNetParams{}.layers;
  int forests = TreeNetParams{}.forests_per_layer;
  int layer_trees = TreeNetParams{}.trees_per_forest;

  void add(CLI::App* app) {
    app->add_option("--model", kind, "tree, forest, extra-trees, logistic, mlp or treenet")->capture_default_str();
    app->add_option("--trees", trees, "Trees per forest")->capture_default_str();
    app->add_option("--epochs", epochs, "Training epochs (mlp, logistic)")->capture_default_str();
    app->add_option("--bags", bags, "Bagged copies of the model; 0 disables")->capture_default_str();
    app->add_option("--layers", layers, "TreeNet layers")->capture_default_str();
    app->add_option("--forests", forests, "TreeNet forests per layer")->capture_default_str();
    app->add_option("--layer-trees", layer_trees, "TreeNet trees per forest")->capture_default_str();
  }
  ClassifierConfig config() const {
    ClassifierConfig c;
    c.kind = kind;
    c.forest.n_trees = trees;
    c.mlp.epochs = epochs;
    c.logistic.epochs = epochs;
    c.treenet.layers = layers;
    c.treenet.forests_per_layer = forests;
    c.treenet.trees_per_forest = layer_trees;
    return c;
  }
  Trainer trainer(int jobs) const {
    auto base = make_trainer(config(), kind, jobs);
    if (bags <= 0) return base;
    BagParams bp;
    bp.n_bags = bags;
    return [base, bp, jobs](const Eigen::MatrixXd& x, const std::vector<int>& y, int k, std::uint64_t seed) -> ModelPtr {
      return std::make_shared<BaggedEnsemble>(bag_ensemble(base, x, y, k, bp, seed, jobs));
    };
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Endoscopic image abnormality classification"};
  app.require_subcommand(1);
  int jobs = default_jobs();
  app.add_option("--jobs", jobs, "Worker threads (default from ENDOSCAN_JOBS)")->check(CLI::PositiveNumber);

  std::string stage = "cli";

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Remove or crop specular reflections");
  std::string pre_in, pre_out, pre_mode = "inpaint", pre_channels = "luminance", pre_masks;
  ReflectionParams refl;
  pre->add_option("--in", pre_in, "Input corpus directory")->required();
  pre->add_option("--out", pre_out, "Output corpus directory")->required();
  pre->add_option("--mode", pre_mode, "inpaint or crop")->capture_default_str();
  pre->add_option("--strong", refl.strong, "Strong reflection threshold")->capture_default_str();
  pre->add_option("--weak", refl.weak, "Expansion threshold")->capture_default_str();
  pre->add_option("--channels", pre_channels, "luminance or any")->capture_default_str();
  pre->add_option("--masks", pre_masks, "Directory for reflection mask PNGs");

  // augment
  auto* aug = app.add_subcommand("augment", "Balance classes by augmentation or resampling");
  std::string aug_in, aug_out, aug_policy = "default";
  std::size_t aug_max = 0;
  double aug_ratio = 0.0;
  std::uint64_t aug_seed = 0;
  aug->add_option("--in", aug_in, "Input corpus directory")->required();
  aug->add_option("--out", aug_out, "Output corpus directory, or manifest file with --resample")->required();
  aug->add_option("--max", aug_max, "Images per class (default: largest class)");
  aug->add_option("--policy", aug_policy, "default or literal")->capture_default_str();
  aug->add_option("--resample", aug_ratio, "Resample every class to this multiple of the majority instead");
  aug->add_option("--seed", aug_seed, "Random seed")->required();

  // extract
  auto* ext = app.add_subcommand("extract", "Extract feature vectors");
  std::string ext_spec = "selected", ext_in, ext_manifest, ext_out, ext_mode = "none", ext_external;
  ext->add_option("--spec", ext_spec, "selected, default, full or a spec JSON file")->capture_default_str();
  ext->add_option("--in", ext_in, "Corpus directory")->required();
  ext->add_option("--manifest", ext_manifest, "Sample manifest relative to --in");
  ext->add_option("--out", ext_out, "Feature CSV")->required();
  ext->add_option("--preprocess", ext_mode, "none, inpaint or crop")->capture_default_str();
  ext->add_option("--external", ext_external, "Extra feature CSV keyed by sample path");

  // train
  auto* tr = app.add_subcommand("train", "Train a classifier on a feature CSV");
  std::string tr_features = "feats.csv", tr_out = "model.json";
  std::uint64_t tr_seed = 0;
  ClassifierFlags tr_flags;
  tr->add_option("--features", tr_features, "Feature CSV from extract")->capture_default_str();
  tr->add_option("--out", tr_out, "Model bundle")->capture_default_str();
  tr->add_option("--seed", tr_seed, "Random seed")->capture_default_str();
  tr_flags.add(tr);

  // predict
  auto* pr = app.add_subcommand("predict", "Classify images");
  std::string pr_model, pr_images, pr_out;
  pr->add_option("--model", pr_model, "Model bundle")->required();
  pr->add_option("--images", pr_images, "Image file or directory")->required();
  pr->add_option("--out", pr_out, "CSV output (default stdout)");

  // select-features
  auto* sel = app.add_subcommand("select-features", "Genetic wrapper feature selection");
  std::string sel_features, sel_out = "selection.json";
  SelectConfig sel_cfg;
  ClassifierFlags sel_flags;
  sel->add_option("--features", sel_features, "Feature CSV")->required();
  sel->add_option("--out", sel_out, "Selection JSON")->capture_default_str();
  sel->add_option("--population", sel_cfg.population)->capture_default_str();
  sel->add_option("--generations", sel_cfg.generations)->capture_default_str();
  sel->add_option("--mutation", sel_cfg.mutation_rate)->capture_default_str();
  sel->add_option("--seed", sel_cfg.seed)->capture_default_str();
  sel_flags.add(sel);

  // thresholds
  auto* th = app.add_subcommand("thresholds", "Search per-class decision thresholds");
  std::string th_model, th_features, th_out = "thresholds.json";
  GaConfig th_cfg;
  th->add_option("--model", th_model, "Model bundle; updated in place")->required();
  th->add_option("--features", th_features, "Validation feature CSV")->required();
  th->add_option("--out", th_out, "Thresholds JSON")->capture_default_str();
  th->add_option("--population", th_cfg.population)->capture_default_str();
  th->add_option("--iterations", th_cfg.iterations)->capture_default_str();
  th->add_option("--mutation", th_cfg.mutation_rate)->capture_default_str();
  th->add_option("--seed", th_cfg.seed)->capture_default_str();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a model on a feature CSV");
  std::string ev_model, ev_features, ev_out;
  ev->add_option("--model", ev_model, "Model bundle")->required();
  ev->add_option("--features", ev_features, "Test feature CSV")->required();
  ev->add_option("--out", ev_out, "Report JSON");

  // fraction-experiment
  auto* fx = app.add_subcommand("fraction-experiment", "TreeNet accuracy against training-set size");
  std::string fx_train, fx_test, fx_fractions = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0", fx_out = "fractions.csv";
  std::uint64_t fx_seed = 0;
  bool fx_no_time = false;
  TreeNetParams fx_params;
  fx->add_option("--train", fx_train, "Training feature CSV")->required();
  fx->add_option("--test", fx_test, "Test feature CSV")->required();
  fx->add_option("--fractions", fx_fractions, "Comma-separated fractions")->capture_default_str();
  fx->add_option("--out", fx_out, "Result CSV")->capture_default_str();
  fx->add_option("--seed", fx_seed)->capture_default_str();
  fx->add_option("--layers", fx_params.layers)->capture_default_str();
  fx->add_option("--forests", fx_params.forests_per_layer)->capture_default_str();
  fx->add_option("--layer-trees", fx_params.trees_per_forest)->capture_default_str();
  fx->add_flag("--no-time", fx_no_time, "Write 0 for training time");

  // bench
  auto* be = app.add_subcommand("bench", "Measure extract-and-classify throughput");
  std::string be_model, be_images;
  bool be_single = false;
  std::size_t be_count = 0, be_warmup = 5;
  be->add_option("--model", be_model, "Model bundle")->required();
  be->add_option("--images", be_images, "Image file or directory")->required();
  be->add_flag("--single-thread", be_single, "Run on one thread");
  be->add_option("--count", be_count, "Images to time (default: all, cycling if fewer than 50)");
  be->add_option("--warmup", be_warmup)->capture_default_str();

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "Run every stage from a config file");
  std::string pl_config, pl_out;
  pl->add_option("--config", pl_config, "Pipeline config JSON")->required();
  pl->add_option("--out", pl_out, "Override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: kind=UsageError stage=cli message=" << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (*pre) {
      stage = "preprocess";
      const auto mode = preprocess_mode_from_string(pre_mode);
      if (pre_channels != "luminance" && pre_channels != "any") {
        throw Error(ErrorCode::ConfigError, "--channels must be luminance or any");
      }
      refl.mode = pre_channels == "any" ? ReflectionChannelMode::AnyChannel : ReflectionChannelMode::Luminance;
      if (!(refl.weak > 0 && refl.weak < refl.strong)) throw Error(ErrorCode::InvalidThresholds, "need strong > weak > 0");
      const auto d = load_dataset(pre_in);
      parallel_for(d.samples.size(), jobs, [&](std::size_t i) {
        const auto& s = d.samples[i];
        const auto img = load_image(d.absolute(s));
        const auto rel = fs::path(s.path).replace_extension(".png");
        fs::create_directories((fs::path(pre_out) / rel).parent_path());
        save_png(preprocess_image(img, mode, refl), fs::path(pre_out) / rel);
        if (!pre_masks.empty()) {
          fs::create_directories((fs::path(pre_masks) / rel).parent_path());
          save_mask_png(detect_reflections(img, refl), fs::path(pre_masks) / rel);
        }
      });
      std::cout << "preprocessed " << d.samples.size() << " images\n";
    } else if (*aug) {
      stage = "augment";
      const auto d = load_dataset(aug_in);
      if (aug_ratio > 0.0) {
        const auto r = resample_to_ratio(d, aug_ratio, aug_seed);
        std::ofstream out(aug_out);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + aug_out);
        for (const auto& s : r.samples) out << s.path << ',' << r.class_names[static_cast<std::size_t>(s.label)] << '\n';
        std::cout << "resampled to " << r.samples.size() << " samples\n";
      } else {
        const auto counts = d.class_counts();
        const std::size_t max_images = aug_max ? aug_max : *std::max_element(counts.begin(), counts.end());
        BalancePolicy policy = BalancePolicy::Default;
        if (aug_policy == "literal") {
          policy = BalancePolicy::Literal;
        } else if (aug_policy != "default") {
          throw Error(ErrorCode::ConfigError, "--policy must be default or literal");
        }
        const auto plan = plan_balancing(d, max_images, policy);
        const auto records = execute_plan(d, plan, aug_out, aug_seed);
        json log = json::array();
        for (const auto& r : records) log.push_back({{"output", r.output}, {"source", r.source}, {"op", r.op}, {"seed", r.seed}});
        write_json_file(log, fs::path(aug_out) / "augment_log.json");
        std::cout << "generated " << records.size() << " images\n";
      }
    } else if (*ext) {
      stage = "extract";
      auto spec = FeatureSpec::preset(ext_spec);
      if (!ext_external.empty()) spec.external = ext_external;
      const auto mode = preprocess_mode_from_string(ext_mode);
      const auto d = open_dataset(ext_in, ext_manifest);
      ImageTransform transform;
      if (mode != PreprocessMode::None) {
        transform = [mode](const Image& img) { return preprocess_image(img, mode, ReflectionParams{}); };
      }
      spec = fit_spec(d, spec, jobs, transform);
      const auto m = extract_matrix(d, spec, jobs, transform);
      save_features(m, ext_out);
      json spec_json;
      to_json(spec_json, spec);
      write_json_file({{"spec", spec_json}, {"preprocess", to_string(mode)}}, sidecar(ext_out, ".spec.json"));
      write_json_file(schema_document(spec), sidecar(ext_out, ".schema.json"));
      std::cout << "extracted " << m.rows() << " x " << m.cols() << " features\n";
    } else if (*tr) {
      stage = "train";
      const auto m = load_features(tr_features);
      ModelBundle b;
      const auto spec_path = sidecar(tr_features, ".spec.json");
      if (fs::exists(spec_path)) {
        const auto meta = read_json_file(spec_path);
        from_json(meta.at("spec"), b.spec);
        b.preprocess = preprocess_mode_from_string(meta.at("preprocess").get<std::string>());
      }
      b.class_names = m.class_names;
      b.normalizer = Normalizer::fit(m.values);
      b.model = tr_flags.trainer(jobs)(b.normalizer.apply(m.values), m.labels, static_cast<int>(m.num_classes()), tr_seed);
      save_bundle(b, tr_out);
      std::cout << "trained " << b.model->kind() << " on " << m.rows() << " samples -> " << tr_out << '\n';
    } else if (*pr) {
      stage = "predict";
      const auto b = load_bundle(pr_model);
      const auto files = collect_images(pr_images);
      std::vector<Prediction> preds(files.size());
      std::vector<int> labels(files.size());
      parallel_for(files.size(), jobs, [&](std::size_t i) {
        preds[i] = b.predict(load_image(files[i]));
        labels[i] = b.thresholds ? apply_thresholds(preds[i].probs, *b.thresholds) : preds[i].label;
      });
      std::ofstream file;
      if (!pr_out.empty()) {
        file.open(pr_out);
        if (!file) throw Error(ErrorCode::IoFailure, "cannot write " + pr_out);
      }
      std::ostream& out = pr_out.empty() ? std::cout : file;
      out << "image,label";
      for (const auto& c : b.class_names) out << ",p_" << c;
      out << '\n';
      char buf[32];
      for (std::size_t i = 0; i < files.size(); ++i) {
        out << files[i].generic_string() << ',' << b.class_names[static_cast<std::size_t>(labels[i])];
        for (Eigen::Index c = 0; c < preds[i].probs.size(); ++c) {
          std::snprintf(buf, sizeof buf, ",%.6f", preds[i].probs(c));
          out << buf;
        }
        out << '\n';
      }
    } else if (*sel) {
      stage = "select-features";
      auto m = load_features(sel_features);
      m.values = Normalizer::fit(m.values).apply(m.values);
      const auto result = ga_feature_select(m, sel_flags.trainer(jobs), sel_cfg);
      const auto cols = mask_columns(result.mask);
      std::vector<std::string> names;
      for (auto c : cols) names.push_back(m.column_names[static_cast<std::size_t>(c)]);
      write_json_file({{"columns", cols}, {"names", names}, {"fitness", result.fitness},
                       {"best_per_generation", result.best_per_generation}},
                      sel_out);
      std::cout << "selected " << cols.size() << " of " << m.cols() << " features, fitness " << result.fitness << '\n';
    } else if (*th) {
      stage = "thresholds";
      auto b = load_bundle(th_model);
      const auto m = load_features(th_features, b.class_names);
      const auto probs = b.model->predict_proba_rows(b.prepare(m.values));
      const auto result = ga_boost_thresholds(probs, m.labels, static_cast<int>(b.class_names.size()), th_cfg);
      b.thresholds = result.thresholds;
      save_bundle(b, th_model);
      write_json_file(thresholds_to_json(result.thresholds, b.class_names), th_out);
      std::printf("argmax F1 %.4f, thresholded F1 %.4f\n", result.argmax_f1, result.f1);
    } else if (*ev) {
      stage = "evaluate";
      const auto b = load_bundle(ev_model);
      const auto m = load_features(ev_features, b.class_names);
      const int k = static_cast<int>(b.class_names.size());
      const auto x = b.prepare(m.values);
      const auto report = evaluate(m.labels, b.classify_rows(m.values), k);
      json doc = report_to_json(report, b.class_names);
      try {
        doc["auc"] = auc_roc(b.model->predict_proba_rows(x), m.labels);
      } catch (const Error&) {
        doc["auc"] = nullptr;
      }
      if (!ev_out.empty()) write_json_file(doc, ev_out);
      std::cout << report_table(report, b.class_names);
    } else if (*fx) {
      stage = "fraction-experiment";
      const auto train = load_features(fx_train);
      const auto test = load_features(fx_test, train.class_names);
      const auto norm = Normalizer::fit(train.values);
      auto train_n = train;
      auto test_n = test;
      train_n.values = norm.apply(train.values);
      test_n.values = norm.apply(test.values);
      const auto rows = data_fraction_experiment(train_n, test_n, parse_list(fx_fractions), fx_params, fx_seed, jobs);
      write_fraction_csv(rows, fx_out, !fx_no_time);
      std::cout << "wrote " << rows.size() << " rows to " << fx_out << '\n';
    } else if (*be) {
      stage = "bench";
      const auto b = load_bundle(be_model);
      const auto files = collect_images(be_images);
      std::vector<Image> images;
      for (const auto& f : files) images.push_back(load_image(f));
      const std::size_t n = be_count ? be_count : std::max<std::size_t>(images.size(), 50);
      // Decoding is excluded; timing covers preprocessing, extraction and classification.
      const auto r = fps_bench([&](std::size_t i) { b.classify(images[i % images.size()]); }, n, be_warmup);
      std::printf("FPS %.2f images=%zu seconds=%.3f mean_ms=%.3f p95_ms=%.3f threads=1\n", r.fps, r.images, r.seconds,
                  r.mean_latency_ms, r.p95_latency_ms);
    } else if (*pl) {
      stage = "pipeline";
      auto cfg = load_config(pl_config);
      if (!pl_out.empty()) cfg.output = pl_out;
      cfg.jobs = jobs;
      const auto result = full_pipeline(cfg);
      std::cout << report_table(result.report, result.document.at("class_names").get<std::vector<std::string>>());
      std::cout << "report: " << (cfg.output / "report.json").string() << '\n';
    }
  } catch (const StageError& e) {
    return report_error(e, e.stage());
  } catch (const Error& e) {
    return report_error(e, stage);
  } catch (const nlohmann::json::exception& e) {
    return report_error(Error(ErrorCode::SchemaMismatch, e.what()), stage);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(Error(ErrorCode::IoFailure, e.what()), stage);
  }
  return 0;
}
