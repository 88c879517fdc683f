#pragma once

#include <cstdint>

#include "endoscan/core.hpp"

namespace endoscan {

/// Binary reflection flags, 1 = reflection. Same shape as the source image.
using ReflectionMask = Plane<std::uint8_t>;

enum class ReflectionChannelMode {
  Luminance,   // threshold the BT.601 gray value
  AnyChannel,  // threshold the brightest of R, G, B
};

struct ReflectionParams {
  int strong = 180;
  int weak = 130;
  ReflectionChannelMode mode = ReflectionChannelMode::Luminance;
};

/// Flags pixels brighter than `strong`, then grows the region through
/// 8-connected pixels brighter than `weak` until nothing changes.
ReflectionMask detect_reflections(const GrayImage& g, int strong = 180, int weak = 130);
ReflectionMask detect_reflections(const Image& img, const ReflectionParams& params);

/// Fills flagged pixels in order of increasing distance from the unflagged
/// region. Each filled pixel is the normalized inverse-square-distance
/// weighted mean of its already-known 8-neighbors. Unflagged pixels are
/// copied unchanged.
Image remove_reflections(const Image& img, const ReflectionMask& mask);

struct CropRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  long area() const noexcept { return static_cast<long>(width) * height; }
  bool operator==(const CropRect&) const = default;
};

/// Largest axis-aligned rectangle (at least 3x3) free of flagged pixels.
/// Ties go to the topmost, then leftmost rectangle.
CropRect largest_clean_rect(const ReflectionMask& mask);
Image crop(const Image& img, const CropRect& r);
Image crop_reflection(const Image& img, const ReflectionMask& mask);

}  // namespace endoscan
