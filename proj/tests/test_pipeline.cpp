#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "endoscan/pipeline.hpp"
#include "support.hpp"

using namespace endoscan;
using test::code_of;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

PipelineConfig small_config(const std::filesystem::path& data, const std::filesystem::path& out) {
  PipelineConfig c;
  c.dataset = data;
  c.output = out;
  c.seed = 5;
  c.feature_preset = "default";
  c.features = FeatureSpec::preset("default");
  c.classifier.forest.n_trees = 15;
  c.ga_boost = true;
  c.ga.iterations = 5;
  return c;
}

const std::filesystem::path& corpus() {
  static const auto root = [] {
    const auto dir = test::temp_dir("pipeline_corpus");
    test::write_corpus(dir, {8, 8, 8}, 64, 3);
    return dir;
  }();
  return root;
}

/// Runs the CLI with the given arguments; returns its exit status.
int run_cli(const std::string& args, const std::filesystem::path& log) {
  const char* cli = std::getenv("ENDOSCAN_CLI");
  REQUIRE(cli != nullptr);
  const std::string cmd = std::string(cli) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config round trip and strictness") {
  auto c = small_config("/data", "/out");
  c.classifier.kind = "treenet";
  c.bagging.n_bags = 3;
  c.select_features = true;
  const auto j = config_to_json(c);
  const auto back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(config_hash(back) == config_hash(c));

  auto extra = j;
  extra["colour"] = "blue";
  CHECK(code_of([&] { config_from_json(extra); }) == ErrorCode::ConfigError);
  auto nested = j;
  nested["classifier"]["forest"]["depth_limit"] = 3;
  CHECK(code_of([&] { config_from_json(nested); }) == ErrorCode::ConfigError);
  auto version = j;
  version["schema_version"] = 99;
  CHECK(code_of([&] { config_from_json(version); }) == ErrorCode::ConfigError);

  auto unseeded = c;
  unseeded.seed.reset();
  CHECK(code_of([&] { unseeded.validate(); }) == ErrorCode::ConfigError);
  auto bad_fraction = c;
  bad_fraction.train_fraction = 1.5;
  CHECK(code_of([&] { bad_fraction.validate(); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { preprocess_mode_from_string("blur"); }) == ErrorCode::ConfigError);
}

TEST_CASE("config hash ignores output and jobs only") {
  const auto c = small_config("/data", "/out");
  auto moved = c;
  moved.output = "/elsewhere";
  moved.jobs = 4;
  CHECK(config_hash(moved) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
  auto reseeded = c;
  reseeded.seed = 6;
  CHECK(config_hash(reseeded) != config_hash(c));
}

TEST_CASE("preprocess modes") {
  Image img(16, 16, 80);
  CHECK(preprocess_image(img, PreprocessMode::Inpaint, {}) == img);
  img.set(3, 3, 255, 255, 255);
  const auto inpainted = preprocess_image(img, PreprocessMode::Inpaint, {});
  CHECK(inpainted.at(3, 3, 0) == 80);
  const auto cropped = preprocess_image(img, PreprocessMode::Crop, {});
  CHECK(cropped.pixel_count() < img.pixel_count());
  CHECK(preprocess_image(img, PreprocessMode::None, {}) == img);
}

TEST_CASE("full pipeline is reproducible and writes every artifact") {
  const auto a = test::temp_dir("pipeline_a");
  const auto b = test::temp_dir("pipeline_b");
  const auto ra = full_pipeline(small_config(corpus(), a));
  const auto rb = full_pipeline(small_config(corpus(), b));
  CHECK(read_file(a / "report.json") == read_file(b / "report.json"));
  CHECK(read_file(a / "model.json") == read_file(b / "model.json"));
  for (const char* f : {"config.json", "features_train.csv", "features_test.csv", "schema.json", "thresholds.json",
                        "model.json", "report.json"}) {
    CHECK(std::filesystem::exists(a / f));
  }
  const auto& doc = ra.document;
  CHECK(doc["config_hash"] == config_hash(small_config(corpus(), a)));
  bool augment_skipped = false;
  for (const auto& s : doc["stages"]) {
    if (s["stage"] == "augment") augment_skipped = s["status"] == "skipped";
  }
  CHECK(augment_skipped);
  CHECK(doc["ga_boost"]["validation_thresholded_f1"].get<double>() >=
        doc["ga_boost"]["validation_argmax_f1"].get<double>());
  CHECK(ra.report.accuracy >= 0.8);

  const auto bundle = load_bundle(a / "model.json");
  CHECK(bundle.class_names == std::vector<std::string>{"class0", "class1", "class2"});
  REQUIRE(bundle.thresholds.has_value());
  const auto img = load_image(corpus() / "class1" / "img000.png");
  const auto again = ModelBundle::from_json(bundle.to_json());
  CHECK(again.predict(img).probs == bundle.predict(img).probs);
  CHECK(again.classify(img) == bundle.classify(img));
}

TEST_CASE("pipeline stage errors name the stage") {
  auto c = small_config("/nonexistent/corpus", test::temp_dir("pipeline_err"));
  try {
    full_pipeline(c);
    FAIL("expected an error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "config");  // the dataset is checked up front
  }
}

TEST_CASE("command line") {
  const auto dir = test::temp_dir("cli");
  const auto log = dir / "log.txt";
  CHECK(run_cli("--no-such-flag", log) == 2);
  CHECK(run_cli("extract --spec default --in " + corpus().string() + " --out " + (dir / "f.csv").string(), log) == 0);
  CHECK(std::filesystem::exists(dir / "f.csv"));
  CHECK(run_cli("train --features " + (dir / "f.csv").string() + " --trees 10 --out " + (dir / "m.json").string(),
                log) == 0);
  CHECK(std::filesystem::exists(dir / "m.json"));
  CHECK(run_cli("bench --single-thread --count 5 --warmup 1 --model " + (dir / "m.json").string() + " --images " +
                    (corpus() / "class0").string(),
                log) == 0);
  CHECK(read_file(log).rfind("FPS ", 0) == 0);
  CHECK(run_cli("evaluate --model " + (dir / "m.json").string() + " --features " + (dir / "f.csv").string(), log) ==
        0);

  std::ofstream(dir / "bad.json") << R"({"schema_version":1,"dataset":"x","seed":1,"mystery":true})";
  CHECK(run_cli("pipeline --config " + (dir / "bad.json").string(), log) == 3);
  CHECK(read_file(log).find("error: kind=") != std::string::npos);
  CHECK(run_cli("extract --in /nonexistent --out " + (dir / "g.csv").string(), log) == 4);
}
