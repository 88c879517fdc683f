#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "endoscan/core.hpp"

namespace endoscan {

enum class BalancePolicy {
  /// ceil(max / N(C)) - 1 copies per image, trimmed so each class totals max.
  Default,
  /// N(C) * (max - 1) / L(C) copies per image (floored), L(C) = largest class size.
  Literal,
};

struct AugmentPlan {
  std::size_t target_per_class = 0;
  BalancePolicy policy = BalancePolicy::Default;
  /// Copies to generate for each sample, parallel to Dataset::samples.
  std::vector<std::size_t> copies;

  std::size_t total_for_class(const Dataset& d, int label) const;
};

/// Per-image copy counts for one class of `class_size` images.
std::vector<std::size_t> copies_for_class(std::size_t class_size, std::size_t largest_class,
                                          std::size_t max_images, BalancePolicy policy);

AugmentPlan plan_balancing(const Dataset& d, std::size_t max_images,
                           BalancePolicy policy = BalancePolicy::Default);

enum class AugmentKind { Rotate, HFlip, VFlip, Crop, Resize, Noise };

struct AugmentOp {
  AugmentKind kind = AugmentKind::HFlip;
  /// Rotate: angle in degrees; Noise: replaced-pixel ratio. Drawn from the
  /// seed when absent.
  std::optional<double> param;
};

std::string to_string(const AugmentOp& op);

/// Deterministic in (img, op, seed). Rotation keeps the frame size and fills
/// uncovered corners with black; crop and resize pick a random size between
/// min(256, side) and the original side.
Image apply_augmentation(const Image& img, const AugmentOp& op, std::uint64_t seed);

Image rotate(const Image& img, double degrees);
Image hflip(const Image& img);
Image vflip(const Image& img);
Image resize_bilinear(const Image& img, int width, int height);

/// Upsamples every class with replacement to round(ratio * majority size).
/// Originals are kept; extra draws are appended after them.
Dataset resample_to_ratio(const Dataset& d, double ratio, std::uint64_t seed);

struct AugmentRecord {
  std::string output;  // relative path of the generated file
  std::string source;  // relative path of the source image
  std::string op;
  std::uint64_t seed = 0;
};

/// Writes originals and generated copies into `out_root` using the same
/// class layout; copies are named `<stem>__aug<k>.png`. Operations cycle
/// through the augmentation list with per-item seeds derived from
/// (seed, source path, k).
std::vector<AugmentRecord> execute_plan(const Dataset& d, const AugmentPlan& plan,
                                        const std::filesystem::path& out_root,
                                        std::uint64_t seed);

/// Operation used for the k-th copy of an image (cycles through every kind).
AugmentOp op_for_copy(std::size_t k);

}  // namespace endoscan
