// One PASS/FAIL line per acceptance criterion; exits nonzero on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "endoscan/pipeline.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace endoscan;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

class Constant final : public Model {
 public:
  explicit Constant(Eigen::VectorXd p) : p_(std::move(p)) {}
  std::string kind() const override { return "constant"; }
  int num_classes() const override { return static_cast<int>(p_.size()); }
  Eigen::Index input_dim() const override { return 1; }
  nlohmann::json to_json() const override { return {{"kind", "constant"}}; }

 protected:
  Eigen::VectorXd proba(const Eigen::VectorXd&) const override { return p_; }

 private:
  Eigen::VectorXd p_;
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------

Outcome lbp_worked_example() {
  const auto g = test::gray_from({{15, 50, 30}, {18, 20, 40}, {35, 12, 10}});
  const int code = lbp_code(g, 1, 1, 1);
  return {code == 114, "code=" + std::to_string(code)};
}

Outcome texture_brute_force() {
  Rng rng(2024);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = test::random_gray(6, 6, rng);
    const int band = static_cast<int>(uniform_index(rng, 8));
    if ((lbp_histogram(g, 1).values - oracle::brute_lbp(g, 1)).cwiseAbs().maxCoeff() > 1e-12) ++mismatches;
    if ((ltp_histograms(g, 1, band).values - oracle::brute_ltp(g, 1, band)).cwiseAbs().maxCoeff() > 1e-12) {
      ++mismatches;
    }
    const auto m = glcm(g, 1, 8);
    const auto ref = oracle::brute_glcm(g, 1, 8);
    for (int d = 0; d < 4; ++d) {
      if ((m.counts[static_cast<std::size_t>(d)].cast<double>() - ref[static_cast<std::size_t>(d)]).cwiseAbs().maxCoeff() != 0.0) {
        ++mismatches;
      }
    }
  }
  return {mismatches == 0, "mismatches=" + std::to_string(mismatches)};
}

Outcome published_metrics() {
  const auto m = binary_metrics(435, 15576, 286, 286);
  const bool ok = std::abs(m.precision - 0.60) <= 0.005 && std::abs(m.recall - 0.60) <= 0.005 &&
                  std::abs(m.f1 - 0.60) <= 0.005 && std::abs(m.mcc - 0.57) <= 0.02;
  return {ok, fmt("P=%.4f R=%.4f ", m.precision, m.recall) + fmt("F1=%.4f MCC=%.4f", m.f1, m.mcc)};
}

Outcome mlp_gradient_check() {
  Rng rng(7);
  double worst = 0.0;
  for (int net_i = 0; net_i < 20; ++net_i) {
    const int d = 2 + static_cast<int>(uniform_index(rng, 15));
    const int h1 = 2 + static_cast<int>(uniform_index(rng, 8));
    const int h2 = 2 + static_cast<int>(uniform_index(rng, 8));
    const int k = 2 + static_cast<int>(uniform_index(rng, 4));
    Mlp net(d, h1, h2, k);
    net.initialize(static_cast<std::uint64_t>(net_i));
    net.b1.setConstant(0.05);
    net.b2.setConstant(0.05);
    Eigen::MatrixXd x(4, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform_real(rng, -1, 1);
    std::vector<int> y;
    for (int i = 0; i < 4; ++i) y.push_back(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(k))));
    const auto g = net.gradient(x, y);
    const auto p = net.parameters();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double step = 1e-5;
      Mlp plus = net, minus = net;
      auto pp = p, pm = p;
      pp(i) += step;
      pm(i) -= step;
      plus.set_parameters(pp);
      minus.set_parameters(pm);
      const double numeric = (plus.loss(x, y) - minus.loss(x, y)) / (2 * step);
      worst = std::max(worst, std::abs(numeric - g(i)) / std::max({std::abs(numeric), std::abs(g(i)), 1e-6}));
    }
  }
  return {worst < 1e-4, fmt("max_rel_err=%.3g", worst)};
}

void threshold_problem(std::uint64_t seed, Eigen::MatrixXd& probs, std::vector<int>& labels) {
  Rng rng(seed);
  const int n = 60 + static_cast<int>(uniform_index(rng, 60));
  probs.resize(n, 2);
  labels.clear();
  for (int i = 0; i < n; ++i) {
    const int y = uniform01(rng) < 0.35 ? 1 : 0;
    const double p1 = std::clamp(uniform_real(rng, 0.0, 0.8) + (y == 1 ? 0.2 : 0.0), 0.0, 1.0);
    probs(i, 0) = 1.0 - p1;
    probs(i, 1) = p1;
    labels.push_back(y);
  }
}

Outcome ga_boost_grid() {
  int matches = 0;
  bool never_worse = true;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Eigen::MatrixXd probs;
    std::vector<int> labels;
    threshold_problem(1000 + s, probs, labels);
    GaConfig cfg;
    cfg.seed = s;
    const auto r = ga_boost_thresholds(probs, labels, 2, cfg);
    double grid = 0.0;
    for (int a = 0; a < 10; ++a) {
      for (int b = 0; b < 10; ++b) grid = std::max(grid, threshold_f1(probs, labels, 2, {a / 10.0, b / 10.0}));
    }
    const double argmax = threshold_f1(probs, labels, 2, {0.0, 0.0});
    if (r.f1 < argmax) never_worse = false;
    if (std::abs(r.f1 - grid) <= 1e-9) ++matches;
  }
  return {matches >= 48 && never_worse,
          "grid_matches=" + std::to_string(matches) + "/50 never_below_argmax=" + (never_worse ? "yes" : "no")};
}

Outcome crossover_closure() {
  const bool example = std::abs(crossover_mod1(0.6, 0.7) - 0.3) < 1e-12;
  Rng rng(5);
  const GaConfig cfg;
  std::size_t bad = 0;
  for (int i = 0; i < 1000000; ++i) {
    const double c = crossover_mod1(uniform01(rng), uniform01(rng));
    if (!(c >= 0.0 && c < 1.0)) ++bad;
    const double a = cfg.alphabet[uniform_index(rng, cfg.alphabet.size())];
    const double b = cfg.alphabet[uniform_index(rng, cfg.alphabet.size())];
    const double s = crossover_mod1(a, b);
    if (std::abs(s * 10.0 - std::round(s * 10.0)) > 1e-9 || s < 0.0 || s >= 1.0) ++bad;
  }
  return {example && bad == 0, fmt("(0.6+0.7) mod 1=%.6f", crossover_mod1(0.6, 0.7)) + " violations=" + std::to_string(bad)};
}

Outcome bagging_reduction() {
  Eigen::MatrixXd x;
  std::vector<int> y;
  test::blobs(60, 3, 5, 0.8, 4, x, y);
  const Trainer tree = [](const Eigen::MatrixXd& xx, const std::vector<int>& yy, int k, std::uint64_t s) -> ModelPtr {
    return std::make_shared<DecisionTree>(train_tree(xx, yy, k, {}, s));
  };
  BagParams one;
  one.n_bags = 1;
  const auto bag = bag_ensemble(tree, x, y, 3, one, 99);
  const auto rows = draw_bag(x.rows(), one.fraction, one.with_replacement, bag_draw_seed(99, 0));
  std::vector<int> yb;
  for (auto r : rows) yb.push_back(y[static_cast<std::size_t>(r)]);
  const auto base = tree(x(rows, Eigen::all), yb, 3, bag_member_seed(99, 0));
  Rng rng(6);
  int differ = 0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd v(5);
    for (Eigen::Index j = 0; j < 5; ++j) v(j) = uniform_real(rng, -0.5, 1.5);
    if (bag.predict_proba(v) != base->predict_proba(v)) ++differ;
  }
  Eigen::VectorXd a(2), b(2);
  a << 0.4, 0.6;
  b << 0.2, 0.8;
  const BaggedEnsemble soft({std::make_shared<Constant>(a), std::make_shared<Constant>(b)}, VoteMode::Soft);
  const auto p = soft.predict(Eigen::VectorXd::Zero(1));
  const bool summed = p.label == 1 && std::abs(p.probs(1) - 0.7) < 1e-12;
  return {differ == 0 && summed, "differing_inputs=" + std::to_string(differ) + fmt(" summed_p1=%.3f", p.probs(1))};
}

Outcome reflection_examples() {
  GrayImage g = GrayImage::Constant(64, 64, 100);
  g(10, 10) = 200;
  g(40, 40) = 140;
  g(10, 11) = 140;
  const auto m = detect_reflections(g);
  const bool flags = m(10, 10) == 1 && m(40, 40) == 0 && m(10, 11) == 1;
  Image img(9, 9);
  for (int yy = 0; yy < 9; ++yy) {
    for (int xx = 0; xx < 9; ++xx) img.set(xx, yy, 37, 140, 201);
  }
  img.set(4, 4, 255, 255, 255);
  ReflectionMask mask = ReflectionMask::Zero(9, 9);
  mask(4, 4) = 1;
  const auto out = remove_reflections(img, mask);
  const bool inpaint = out.at(4, 4, 0) == 37 && out.at(4, 4, 1) == 140 && out.at(4, 4, 2) == 201;
  return {flags && inpaint, std::string("flags=") + (flags ? "ok" : "wrong") + " inpaint=" + (inpaint ? "exact" : "off")};
}

Dataset counts_dataset(const std::vector<std::size_t>& counts) {
  Dataset d;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    d.class_names.push_back("c" + std::to_string(c));
    for (std::size_t i = 0; i < counts[c]; ++i) d.samples.push_back({d.class_names.back() + "/" + std::to_string(i), static_cast<int>(c)});
  }
  return d;
}

Outcome resampling_arithmetic() {
  std::vector<std::size_t> counts(23, 50);
  counts[0] = 1148;
  counts[22] = 6;
  const auto r = resample_to_ratio(counts_dataset(counts), 1.1, 3);
  bool per_class = true;
  for (auto c : r.class_counts()) per_class = per_class && c == 1263;
  return {per_class && r.samples.size() == 29049,
          "per_class=" + std::string(per_class ? "1263" : "wrong") + " total=" + std::to_string(r.samples.size())};
}

Outcome throughput() {
  Rng rng(8);
  std::vector<Image> train;
  std::vector<int> labels;
  for (int i = 0; i < 24; ++i) {
    labels.push_back(i % 3);
    train.push_back(test::synthetic_image(i % 3, 256, 256, rng));
  }
  std::vector<Image> bench;
  for (int i = 0; i < 10; ++i) bench.push_back(test::synthetic_image(i % 3, 256, 256, rng));

  ModelBundle bundle;
  bundle.spec = fit_spec(train, FeatureSpec::selected());
  const auto fm = extract_matrix(train, labels, {"a", "b", "c"}, {}, bundle.spec, 1);
  bundle.normalizer = Normalizer::fit(fm.values);
  bundle.class_names = fm.class_names;
  const auto x = bundle.normalizer.apply(fm.values);
  bundle.model = std::make_shared<RandomForest>(train_forest(x, labels, 3, ForestParams{}, 1, 1));
  const auto forest = fps_bench([&](std::size_t i) { bundle.classify(bench[i % bench.size()]); }, 55, 5);

  TreeNetParams tp;  // 3 layers x 5 forests x 50 trees
  bundle.model = std::make_shared<TreeNetModel>(treenet_train(x, labels, 3, tp, 2, 1));
  const auto treenet = fps_bench([&](std::size_t i) { bundle.classify(bench[i % bench.size()]); }, 55, 5);

  const bool ok = fm.cols() == 1883 && forest.fps >= 41.0 * 0.8 && treenet.fps >= 37.0 * 0.8;
  return {ok, fmt("dim=%.0f forest_fps=%.1f (>=32.8) ", static_cast<double>(fm.cols()), forest.fps) +
                  fmt("treenet_fps=%.1f (>=29.6)", treenet.fps)};
}

Outcome pipeline_reproducible() {
  const auto data = test::temp_dir("accept_corpus");
  test::write_corpus(data, {80, 60, 60}, 64, 12);
  PipelineConfig cfg;
  cfg.dataset = data;
  cfg.seed = 21;
  cfg.classifier.forest.n_trees = 40;
  cfg.ga_boost = true;
  const auto a = test::temp_dir("accept_run_a");
  const auto b = test::temp_dir("accept_run_b");
  cfg.output = a;
  full_pipeline(cfg);
  cfg.output = b;
  full_pipeline(cfg);
  const auto ra = read_file(a / "report.json");
  const bool same = !ra.empty() && ra == read_file(b / "report.json");
  return {same, std::string("report.json ") + (same ? "identical" : "differs") + " bytes=" + std::to_string(ra.size())};
}

struct Criterion {
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"lbp_worked_example", 1, lbp_worked_example},
      {"lbp_ltp_glcm_brute_force", 60, texture_brute_force},
      {"published_metrics", 1, published_metrics},
      {"mlp_gradient_check", 30, mlp_gradient_check},
      {"ga_boost_matches_grid", 120, ga_boost_grid},
      {"mod1_crossover", 5, crossover_closure},
      {"bagging_reduction", 30, bagging_reduction},
      {"reflection_examples", 5, reflection_examples},
      {"resampling_arithmetic", 5, resampling_arithmetic},
      {"single_thread_throughput", 120, throughput},
      {"pipeline_reproducible", 300, pipeline_reproducible},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs <= c.limit_s;
    if (!pass) ++failures;
    std::printf("%s %2zu %-26s %7.2fs (limit %.0fs) %s\n", pass ? "PASS" : "FAIL", i + 1, c.name, secs, c.limit_s,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("SKIP %2zu %-26s needs the public Kvasir v2 corpus, not bundled\n", criteria.size() + 1,
              "kvasir_v2_benchmark");
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
