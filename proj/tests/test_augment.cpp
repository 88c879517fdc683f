#include "doctest.h"

#include <numeric>

#include "endoscan/augment.hpp"
#include "support.hpp"

using namespace endoscan;

namespace {

Dataset synthetic_dataset(const std::vector<std::size_t>& counts) {
  Dataset d;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    d.class_names.push_back("class" + std::to_string(c));
    for (std::size_t i = 0; i < counts[c]; ++i) {
      d.samples.push_back({d.class_names.back() + "/" + std::to_string(i) + ".png", static_cast<int>(c)});
    }
  }
  return d;
}

}  // namespace

TEST_CASE("balancing plan totals") {
  const auto d = synthetic_dataset({6, 1148});
  const auto plan = plan_balancing(d, 1148);
  CHECK(plan.total_for_class(d, 0) == 1148);
  CHECK(plan.total_for_class(d, 1) == 1148);
  std::size_t minority = 0;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    if (d.samples[i].label == 0) minority += 1 + plan.copies[i];
    else CHECK(plan.copies[i] == 0);
  }
  CHECK(minority == 1148);
  CHECK_THROWS_AS(plan_balancing(d, 1000), Error);

  for (std::size_t n = 1; n <= 40; ++n) {
    for (std::size_t max : {n, n + 1, 2 * n + 3, 97 * n}) {
      const auto copies = copies_for_class(n, max, max, BalancePolicy::Default);
      CHECK(std::accumulate(copies.begin(), copies.end(), n) == max);
    }
  }
}

TEST_CASE("literal policy evaluates the copy formula") {
  // N(C) * (max - 1) / L(C), floored.
  const auto copies = copies_for_class(10, 100, 120, BalancePolicy::Literal);
  for (auto c : copies) CHECK(c == 10 * 119 / 100);
  const auto full = copies_for_class(100, 100, 100, BalancePolicy::Literal);
  CHECK(full.front() == 99);
}

TEST_CASE("geometric operations") {
  Rng rng(1);
  const auto img = test::random_image(13, 7, rng);
  CHECK(hflip(hflip(img)) == img);
  CHECK(vflip(vflip(img)) == img);
  CHECK(rotate(img, 0.0) == img);
  CHECK(apply_augmentation(img, {AugmentKind::Noise, 0.0}, 5) == img);
  CHECK(apply_augmentation(img, {AugmentKind::Rotate, std::nullopt}, 5) ==
        apply_augmentation(img, {AugmentKind::Rotate, std::nullopt}, 5));

  const auto noisy = apply_augmentation(img, {AugmentKind::Noise, 0.5}, 3);
  std::size_t changed = 0;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    if (!std::equal(img.data.begin() + 3 * p, img.data.begin() + 3 * p + 3, noisy.data.begin() + 3 * p)) ++changed;
  }
  CHECK(changed <= img.pixel_count() / 2 + 1);
  CHECK(changed > 0);

  const auto big = test::random_image(300, 280, rng);
  const auto cropped = apply_augmentation(big, {AugmentKind::Crop, std::nullopt}, 9);
  CHECK(cropped.width >= 256);
  CHECK(cropped.width <= 300);
  CHECK(cropped.height >= 256);
  const auto resized = apply_augmentation(big, {AugmentKind::Resize, std::nullopt}, 9);
  CHECK(resized.width <= 300);
  CHECK_THROWS_AS(apply_augmentation(Image(2, 2), {AugmentKind::Crop, std::nullopt}, 1), Error);
}

TEST_CASE("resampling to a ratio of the majority") {
  const auto d = synthetic_dataset({6, 1148, 300});
  const auto r = resample_to_ratio(d, 1.1, 7);
  for (auto c : r.class_counts()) CHECK(c == 1263);
  std::vector<std::size_t> counts(23, 40);
  counts[5] = 1148;
  counts[9] = 6;
  CHECK(resample_to_ratio(synthetic_dataset(counts), 1.1, 1).samples.size() == 29049);

  const auto balanced = synthetic_dataset({5, 5});
  CHECK(resample_to_ratio(balanced, 1.0, 3).samples == balanced.samples);
  CHECK(resample_to_ratio(d, 1.1, 7).samples == r.samples);
  CHECK_THROWS_AS(resample_to_ratio(Dataset{}, 1.1, 1), Error);
}

TEST_CASE("executing a plan writes a balanced corpus with provenance") {
  const auto root = test::temp_dir("augment_in");
  const auto out = test::temp_dir("augment_out");
  Rng rng(4);
  Dataset d;
  d.root = root;
  d.class_names = {"a", "b"};
  for (int c = 0; c < 2; ++c) {
    std::filesystem::create_directories(root / d.class_names[c]);
    for (int i = 0; i < (c == 0 ? 2 : 5); ++i) {
      const auto rel = d.class_names[c] + "/s" + std::to_string(i) + ".png";
      save_png(test::random_image(20, 20, rng), root / rel);
      d.samples.push_back({rel, c});
    }
  }
  const auto plan = plan_balancing(d, 5);
  const auto records = execute_plan(d, plan, out, 11);
  CHECK(records.size() == 3);
  const auto result = load_dataset(out);
  CHECK(result.class_counts() == std::vector<std::size_t>{5, 5});
  for (const auto& r : records) {
    CHECK(r.output.find("__aug") != std::string::npos);
    CHECK(r.source.rfind("a/", 0) == 0);
  }
  const auto again = test::temp_dir("augment_out2");
  execute_plan(d, plan, again, 11);
  for (const auto& r : records) CHECK(load_image(out / r.output) == load_image(again / r.output));
}
