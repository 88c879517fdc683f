#include "doctest.h"

#include <cmath>
#include <fstream>
#include <map>

#include "endoscan/features.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace endoscan;
using namespace endoscan::oracle;

namespace {

double value_of(const FeatureVector& v, const std::string& name) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v.names[static_cast<std::size_t>(i)] == name) return v.values(i);
  }
  FAIL("missing column " << name);
  return 0.0;
}

double triangle(double t, int k) { return std::max(0.0, 1.0 - std::abs(t * 7.0 - k)); }

Plane<double> ref_sobel_magnitude(const GrayImage& g) {
  const int h = static_cast<int>(g.rows()), w = static_cast<int>(g.cols());
  auto at = [&](int y, int x) { return static_cast<double>(g(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1))); };
  Plane<double> m(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1) - at(y - 1, x - 1) - 2 * at(y, x - 1) -
                        at(y + 1, x - 1);
      const double gy = at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1) - at(y - 1, x - 1) - 2 * at(y - 1, x) -
                        at(y - 1, x + 1);
      m(y, x) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return m;
}

double block_sum(const FeatureVector& v, const std::string& prefix) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v.names[static_cast<std::size_t>(i)].rfind(prefix, 0) == 0) s += v.values(i);
  }
  return s;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ConfigError;
}

}  // namespace

TEST_CASE("LBP worked example") {
  const auto g = test::gray_from({{15, 50, 30}, {18, 20, 40}, {35, 12, 10}});
  CHECK(lbp_code(g, 1, 1, 1) == 114);
  const auto h = lbp_histogram(g, 1);
  CHECK(h.values(114) == 1.0);
  CHECK(lbp_codes(GrayImage::Constant(5, 5, 9), 1).cast<int>().minCoeff() == 255);
}

TEST_CASE("LBP, LTP and GLCM agree with brute force on small images") {
  Rng rng(100);
  int mismatches = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int w = 3 + static_cast<int>(uniform_index(rng, 4));
    const int h = 3 + static_cast<int>(uniform_index(rng, 4));
    const auto g = test::random_gray(w, h, rng, trial % 3 == 0 ? 3 : 255);
    const int r = (w >= 5 && h >= 5 && trial % 2) ? 2 : 1;
    const int band = static_cast<int>(uniform_index(rng, 6));
    const int levels = 2 + static_cast<int>(uniform_index(rng, 3));
    if ((lbp_histogram(g, r).values - brute_lbp(g, r)).cwiseAbs().maxCoeff() > 1e-12) ++mismatches;
    if ((ltp_histograms(g, r, band).values - brute_ltp(g, r, band)).cwiseAbs().maxCoeff() > 1e-12) ++mismatches;
    const auto m = glcm(g, 1, levels);
    const auto ref = brute_glcm(g, 1, levels);
    for (int d = 0; d < 4; ++d) {
      if ((m.counts[d].cast<double>() - ref[d]).cwiseAbs().maxCoeff() != 0.0) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("LTP properties") {
  const auto flat = GrayImage::Constant(5, 5, 77);
  const auto t = ltp_histograms(flat, 1, 5);
  CHECK(t.values(0) == 1.0);
  CHECK(t.values(256) == 1.0);
  Rng rng(3);
  const auto g = test::random_gray(4, 4, rng);
  const auto strict = brute_codes(g, 1, [](int nb, int c) { return nb > c; });
  CHECK((ltp_histograms(g, 1, 0).values.head(256) - strict).cwiseAbs().maxCoeff() == 0.0);
  const auto pair = test::gray_from({{26, 20, 20}, {20, 20, 20}, {20, 20, 20}});
  const auto v = ltp_histograms(pair, 1, 5);
  CHECK(v.values(128) == 1.0);  // top-left neighbor is the most significant bit
  CHECK(v.values(256) == 1.0);
}

TEST_CASE("CLBP components") {
  const auto flat = clbp(GrayImage::Constant(6, 6, 40), 1);
  CHECK(flat.values(255) == 1.0);
  CHECK(flat.values(256) == 1.0);
  Rng rng(5);
  const auto g = test::random_gray(7, 6, rng);
  CHECK((clbp(g, 1).values.head(256) - lbp_histogram(g, 1).values).cwiseAbs().maxCoeff() == 0.0);

  // Magnitude bits mark differences above the mean absolute difference.
  GrayImage ramp(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) ramp(y, x) = static_cast<std::uint8_t>(x * 10 + y * 3);
  }
  double sum = 0.0;
  int n = 0;
  for (int y = 1; y < 3; ++y) {
    for (int x = 1; x < 3; ++x) {
      for (const auto& o : kOffsets) {
        sum += std::abs(ramp(y + o[1], x + o[0]) - ramp(y, x));
        ++n;
      }
    }
  }
  const double mean = sum / n;
  const auto ref = brute_codes(ramp, 1, [mean](int nb, int c) { return std::abs(nb - c) > mean; });
  CHECK((clbp(ramp, 1).values.tail(256) - ref).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dominant patterns") {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(256);
  f(3) = 50;
  f(7) = 30;
  f(9) = 10;
  f(11) = 5;
  f(200) = 5;
  CHECK(dominant_prefix(f, 0.8).size() == 2);
  CHECK(dominant_prefix(f, 1.0).size() == 5);
  const auto set = dlbp_fit({f / 100.0}, 0.8);
  CHECK(set.patterns == std::vector<int>{3, 7});
  Eigen::VectorXd outside = Eigen::VectorXd::Zero(256);
  outside(100) = 1.0;
  const auto p = dlbp_project(outside, set);
  CHECK(p.degenerate);
  CHECK(p.vector.values.sum() == 0.0);
  const auto q = dlbp_project(f / 100.0, set);
  CHECK(q.vector.values.sum() == doctest::Approx(1.0));
  CHECK(code_of([&] { dlbp_project(f, DominantPatterns{}); }) == ErrorCode::NotFitted);

  Eigen::VectorXd a = Eigen::VectorXd::Zero(256), b = Eigen::VectorXd::Zero(256);
  a(1) = 1.0;
  b(2) = 1.0;
  CHECK(dlbp_fit({a, b}, 0.8, DlbpMode::Union).patterns == std::vector<int>{1, 2});
}

TEST_CASE("rotation-invariant LBP") {
  CHECK(rotation_min(0b10000000) == 1);
  CHECK(rotation_min(0xFF) == 255);
  CHECK(rotation_classes().size() == 36);
  const auto flat = rilbp_histogram(GrayImage::Constant(6, 6, 12), 8, 1);
  CHECK(value_of(flat, "rilbp_p8_r1_255") == 1.0);
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = test::random_gray(9, 9, rng);
    GrayImage rot(9, 9);
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 9; ++x) rot(x, 8 - y) = g(y, x);
    }
    CHECK((rilbp_histogram(g, 8, 1).values - rilbp_histogram(rot, 8, 1).values).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("co-occurrence and Haralick statistics") {
  const auto flat = glcm(GrayImage::Constant(5, 5, 100), 1, 8);
  for (int d = 0; d < 4; ++d) {
    const auto p = flat.normalized(static_cast<GlcmDirection>(d));
    CHECK(p(3, 3) == 1.0);
    const auto s = haralick_stats(p);
    CHECK(s(0) == 1.0);
    CHECK(s(1) == 0.0);
    CHECK(s(8) == 0.0);
  }
  const auto two = glcm(test::gray_from({{0, 255}, {0, 255}}), 1, 2);
  const auto ph = two.normalized(GlcmDirection::Horizontal);
  CHECK(ph(0, 1) == 0.5);
  CHECK(ph(1, 0) == 0.5);
  CHECK_THROWS_AS(glcm(GrayImage::Constant(5, 5, 100), 1, 1), Error);

  for (int levels : {2, 4, 8}) {
    const Eigen::MatrixXd uni = Eigen::MatrixXd::Constant(levels, levels, 1.0 / (levels * levels));
    const auto s = haralick_stats(uni);
    CHECK(s(0) == doctest::Approx(1.0 / (levels * levels)));
    CHECK(s(8) == doctest::Approx(2.0 * std::log2(levels)));
  }
  const auto board = test::gray_from({{0, 255, 0, 255}, {255, 0, 255, 0}, {0, 255, 0, 255}, {255, 0, 255, 0}});
  const auto m = glcm(board, 1, 2);
  for (int d = 0; d < 4; ++d) {
    const auto p = m.normalized(static_cast<GlcmDirection>(d));
    double contrast = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) contrast += (i - j) * (i - j) * p(i, j);
    }
    CHECK(haralick_stats(p)(1) == doctest::Approx(contrast));
  }
  CHECK(code_of([] { haralick_stats(Eigen::MatrixXd::Constant(2, 2, 1.0)); }) == ErrorCode::NotNormalized);

  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = test::random_gray(8, 8, rng);
    const auto hm = glcm(g, 1, 4);
    for (int d = 0; d < 4; ++d) {
      const auto p = hm.normalized(static_cast<GlcmDirection>(d));
      CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
      const auto s = haralick_stats(p);
      CHECK(s(0) > 0.0);
      CHECK(s(0) <= 1.0);
      CHECK(s(1) >= 0.0);
      CHECK(s(8) >= 0.0);
      CHECK(s(8) <= 2.0 * std::log2(4) + 1e-12);
    }
  }
}

TEST_CASE("Tamura statistics") {
  CHECK(tamura(GrayImage::Constant(16, 16, 90)).values(1) == 0.0);
  CHECK(tamura(GrayImage::Constant(16, 16, 0)).values(1) == 0.0);
  GrayImage stripes(32, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) stripes(y, x) = (x / 2) % 2 ? 220 : 30;
  }
  Rng rng(7);
  const auto noise = test::random_gray(32, 32, rng);
  CHECK(tamura(stripes).values(2) > tamura(noise).values(2));
  CHECK(tamura(stripes).values(2) == doctest::Approx(1.0));
  CHECK(code_of([] { tamura(GrayImage::Constant(7, 7, 1)); }) == ErrorCode::ImageTooSmall);
}

TEST_CASE("edge descriptors") {
  const auto flat = edge_histogram(GrayImage::Constant(6, 6, 50), 8);
  for (Eigen::Index i = 0; i < 8; ++i) CHECK(flat.values(i) == doctest::Approx(1.0 / 8));
  GrayImage stripes(6, 6);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) stripes(y, x) = x % 2 ? 200 : 10;
  }
  const auto e = edge_histogram(stripes, 8);
  Eigen::Index peak = 0;
  e.values.maxCoeff(&peak);
  CHECK(peak == 4);  // edges run vertically
  Rng rng(8);
  const auto p = phog(test::random_gray(20, 20, rng), 2, 8);
  CHECK(p.size() == 8 * (1 + 4 + 16));
  CHECK(p.values.head(8).sum() == doctest::Approx(1.0));
  CHECK(p.values.segment(8, 32).sum() == doctest::Approx(1.0));
}

TEST_CASE("Gabor filters") {
  for (const auto& f : default_gabor_bank()) CHECK(gabor_kernel_value(f, 0, 0) == 1.0);
  GaborFilter round{2.0, 0.2, 1.0, 0.3};
  GaborFilter env = round;
  env.frequency = 0.0;
  CHECK(gabor_kernel_value(env, 1.5, 0.5) == doctest::Approx(gabor_kernel_value(env, 0.5, 1.5)));
  CHECK(gabor_kernel(default_gabor_bank()[0]).sum() == doctest::Approx(0.0).epsilon(1e-12));
  const auto flat = gabor_features(GrayImage::Constant(5, 5, 120), default_gabor_bank());
  for (Eigen::Index i = 1; i < flat.size(); i += 2) CHECK(flat.values(i) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(flat.size() == 16);
  CHECK(code_of([] { gabor_features(GrayImage::Constant(5, 5, 1), {GaborFilter{0.0, 0.2, 0.5, 0}}); }) ==
        ErrorCode::InvalidParameters);
}

TEST_CASE("color descriptors") {
  Image uniform(6, 6);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) uniform.set(x, y, 200, 40, 90);
  }
  const int own = quantize_color(200, 40, 90, 4);
  const auto acc = auto_color_correlogram(uniform, {1, 3}, 4);
  for (Eigen::Index i = 0; i < acc.size(); ++i) CHECK(acc.values(i) == (i % 64 == own ? 1.0 : 0.0));

  Image tiny(2, 2);
  tiny.set(0, 0, 255, 255, 255);
  const auto layout = color_layout(tiny, 2, 2, 2);
  CHECK(layout.size() == 4 * 8);
  CHECK(layout.values(7) == 1.0);
  CHECK(layout.values(8) == 1.0);
  CHECK(code_of([&] { color_layout(tiny, 3, 3, 2); }) == ErrorCode::GridLargerThanImage);

  const auto hist = color_histogram(uniform, ColorSpace::HSV, 4);
  CHECK(hist.values.sum() == doctest::Approx(1.0));
  CHECK(hist.values.maxCoeff() == 1.0);

  // Exhaustive pair enumeration on small images.
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    Image img(4 + trial % 3, 4 + trial % 2);
    const bool board = trial == 0;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        if (board) {
          const std::uint8_t v = (x + y) % 2 ? 255 : 0;
          img.set(x, y, v, v, v);
        } else {
          img.set(x, y, uniform_index(rng, 2) ? 250 : 10, 10, uniform_index(rng, 2) ? 250 : 10);
        }
      }
    }
    for (auto metric : {DistanceMetric::Chebyshev, DistanceMetric::Manhattan}) {
      const std::vector<int> ks{1, 2, 3};
      const auto got = auto_color_correlogram(img, ks, 2, metric);
      for (int k : ks) {
        std::map<int, std::pair<double, double>> counts;
        for (int y = 0; y < img.height; ++y) {
          for (int x = 0; x < img.width; ++x) {
            const int c = quantize_color(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2), 2);
            for (int yy = 0; yy < img.height; ++yy) {
              for (int xx = 0; xx < img.width; ++xx) {
                const int d = metric == DistanceMetric::Chebyshev ? std::max(std::abs(xx - x), std::abs(yy - y))
                                                                  : std::abs(xx - x) + std::abs(yy - y);
                if (d != k) continue;
                const int c2 = quantize_color(img.at(xx, yy, 0), img.at(xx, yy, 1), img.at(xx, yy, 2), 2);
                counts[c].second += 1;
                if (c2 == c) counts[c].first += 1;
              }
            }
          }
        }
        for (int c = 0; c < 8; ++c) {
          const auto it = counts.find(c);
          const double expected = it == counts.end() || it->second.second == 0 ? 0.0 : it->second.first / it->second.second;
          CHECK(value_of(got, "acc_k" + std::to_string(k) + "_" + std::to_string(c)) == doctest::Approx(expected));
        }
      }
    }
  }
}

TEST_CASE("composite descriptors") {
  Image red(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) red.set(x, y, 255, 0, 0);
  }
  const auto c = cedd(red);
  CHECK(value_of(c, "cedd_r_7") == 1.0);
  CHECK(value_of(c, "cedd_g_0") == 1.0);
  CHECK(block_sum(c, "cedd_edge_") == doctest::Approx(1.0));
  CHECK(value_of(c, "cedd_edge_0") == doctest::Approx(1.0 / 8));
  CHECK(jcd(red).size() == cedd(red).size() + fcth(red).size());

  for (double t = 0.0; t <= 1.0; t += 0.03) {
    const auto mu = fuzzy_memberships(t);
    double s = 0.0;
    for (int k = 0; k < 8; ++k) {
      CHECK(mu[static_cast<std::size_t>(k)] == doctest::Approx(triangle(t, k)));
      s += mu[static_cast<std::size_t>(k)];
    }
    CHECK(s == doctest::Approx(1.0));
  }

  // Hand evaluation of the grid accumulation on a 4x4 two-color image.
  Image two(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      if (x < 2) two.set(x, y, 30, 60, 200);
      else two.set(x, y, 240, 220, 10);
    }
  }
  const auto gray = to_gray(two);
  const auto mag = ref_sobel_magnitude(gray);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(8, 8);
  for (int cy = 0; cy < 2; ++cy) {
    for (int cx = 0; cx < 2; ++cx) {
      Eigen::VectorXd mc = Eigen::VectorXd::Zero(8), mt = Eigen::VectorXd::Zero(8);
      for (int y = 2 * cy; y < 2 * cy + 2; ++y) {
        for (int x = 2 * cx; x < 2 * cx + 2; ++x) {
          for (int k = 0; k < 8; ++k) {
            mc(k) += triangle(gray(y, x) / 255.0, k) / 4.0;
            mt(k) += triangle(std::min(1.0, mag(y, x) / 1020.0), k) / 4.0;
          }
        }
      }
      expected += 0.25 * mc * mt.transpose();
    }
  }
  const auto f = fcth(two, 2);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      CHECK(value_of(f, "fcth_c" + std::to_string(i) + "_t" + std::to_string(j)) ==
            doctest::Approx(expected(i, j)).epsilon(1e-6));
    }
  }
  CHECK(f.values.sum() == doctest::Approx(1.0));
}

TEST_CASE("feature specs and extraction") {
  Rng rng(13);
  const auto img = test::random_image(64, 64, rng);
  FeatureSpec only;
  only.lbp_radii = {1};
  const auto v = extract_all(img, only);
  CHECK(v.values == lbp_histogram(to_gray(img), 1).values);

  const auto sel = FeatureSpec::selected();
  CHECK(feature_dimension(sel) == 1883);
  const auto a = extract_all(img, sel);
  const auto b = extract_all(test::random_image(80, 70, rng), sel);
  CHECK(a.size() == 1883);
  CHECK(a.names == b.names);
  CHECK(a.names == feature_names(sel));
  CHECK(extract_all(img, sel).values == a.values);

  for (const auto& block : feature_schema(sel)) {
    if (block.name.rfind("lbp_r", 0) == 0 || block.name == "edge_hist") {
      CHECK(a.values.segment(block.offset, block.size).sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  auto full = FeatureSpec::full();
  CHECK(code_of([&] { extract_all(img, full); }) == ErrorCode::NotFitted);
  full = fit_spec(std::vector<Image>{img, test::random_image(64, 64, rng)}, full);
  const auto fv = extract_all(img, full);
  Eigen::Index sum = 0;
  for (const auto& block : feature_schema(full)) sum += block.size;
  CHECK(fv.size() == sum);
  CHECK(fv.size() == feature_dimension(full));

  nlohmann::json j;
  to_json(j, full);
  FeatureSpec back;
  from_json(j, back);
  CHECK(feature_names(back) == feature_names(full));
  j["bogus"] = 1;
  CHECK(code_of([&] { from_json(j, back); }) == ErrorCode::ConfigError);

  FeatureSpec bad;
  bad.lbp_radii = {0};
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidParameters);
  CHECK(code_of([] { FeatureSpec::preset("/no/such/spec.json"); }) == ErrorCode::ConfigError);
}

TEST_CASE("external feature columns") {
  const auto dir = test::temp_dir("features_external");
  Dataset d;
  d.root = dir;
  d.class_names = {"a"};
  d.samples = {{"a/x.png", 0}, {"a/y.png", 0}};
  std::ofstream(dir / "deep.csv") << "sample,d0,d1,d2\na/y.png,4,5,6\na/x.png,1,2,3\n";
  const auto cols = load_external_features(dir / "deep.csv", d);
  CHECK(cols.values.rows() == 2);
  CHECK(cols.values(0, 0) == 1.0);
  CHECK(cols.values(1, 2) == 6.0);
  CHECK(cols.names.size() == 3);

  std::ofstream(dir / "short.csv") << "sample,d0\na/x.png,1\n";
  CHECK(code_of([&] { load_external_features(dir / "short.csv", d); }) == ErrorCode::MissingSample);
  std::ofstream(dir / "ragged.csv") << "sample,d0,d1\na/x.png,1\na/y.png,1,2\n";
  CHECK(code_of([&] { load_external_features(dir / "ragged.csv", d); }) == ErrorCode::DimensionDrift);

  std::filesystem::create_directories(dir / "a");
  Rng rng(1);
  save_png(test::random_image(16, 16, rng), dir / "a/x.png");
  save_png(test::random_image(16, 16, rng), dir / "a/y.png");
  FeatureSpec spec;
  spec.lbp_radii = {1};
  const auto plain = extract_matrix(d, spec);
  spec.external = (dir / "deep.csv").string();
  const auto with = extract_matrix(d, spec);
  CHECK(with.cols() == plain.cols() + 3);
  CHECK(with.values(1, plain.cols()) == 4.0);
}

TEST_CASE("extraction is independent of the job count") {
  Rng rng(14);
  std::vector<Image> images;
  for (int i = 0; i < 6; ++i) images.push_back(test::random_image(40, 40, rng));
  const std::vector<int> labels{0, 1, 0, 1, 0, 1};
  const std::vector<std::string> ids{"0", "1", "2", "3", "4", "5"};
  const auto spec = FeatureSpec::selected();
  const auto one = extract_matrix(images, labels, {"a", "b"}, ids, spec, 1);
  const auto four = extract_matrix(images, labels, {"a", "b"}, ids, spec, 4);
  CHECK(one.values == four.values);
}
