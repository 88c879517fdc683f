#include "endoscan/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>
#include <vector>

namespace endoscan {

namespace {

constexpr int kDx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
constexpr int kDy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};

ReflectionMask detect_on_plane(const Plane<std::uint8_t>& v, int strong, int weak) {
  if (!(strong > weak && weak > 0)) {
    throw Error(ErrorCode::InvalidThresholds, "reflection thresholds need strong > weak > 0");
  }
  const int h = static_cast<int>(v.rows());
  const int w = static_cast<int>(v.cols());
  ReflectionMask mask = ReflectionMask::Zero(h, w);
  std::vector<std::pair<int, int>> frontier;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (v(y, x) > strong) {
        mask(y, x) = 1;
        frontier.emplace_back(x, y);
      }
    }
  }
  // Region growing is the fixpoint of repeated whole-image weak passes and
  // does not depend on visiting order.
  while (!frontier.empty()) {
    auto [x, y] = frontier.back();
    frontier.pop_back();
    for (int k = 0; k < 8; ++k) {
      const int nx = x + kDx[k];
      const int ny = y + kDy[k];
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
      if (!mask(ny, nx) && v(ny, nx) > weak) {
        mask(ny, nx) = 1;
        frontier.emplace_back(nx, ny);
      }
    }
  }
  return mask;
}

void check_shape(const Image& img, const ReflectionMask& mask) {
  if (mask.rows() != img.height || mask.cols() != img.width) {
    throw Error(ErrorCode::DimensionMismatch, "mask and image dimensions differ");
  }
}

}  // namespace

ReflectionMask detect_reflections(const GrayImage& g, int strong, int weak) {
  return detect_on_plane(g, strong, weak);
}

ReflectionMask detect_reflections(const Image& img, const ReflectionParams& params) {
  if (params.mode == ReflectionChannelMode::Luminance) {
    return detect_on_plane(to_gray(img), params.strong, params.weak);
  }
  Plane<std::uint8_t> brightest(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      brightest(y, x) = std::max({img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)});
    }
  }
  return detect_on_plane(brightest, params.strong, params.weak);
}

Image remove_reflections(const Image& img, const ReflectionMask& mask) {
  check_shape(img, mask);
  const int h = img.height;
  const int w = img.width;
  const auto flagged = static_cast<long>(mask.cast<long>().sum());
  if (flagged == 0) return img;
  if (flagged == static_cast<long>(w) * h) {
    throw Error(ErrorCode::MaskCoversEverything, "no unflagged pixels to propagate from");
  }

  // Distance from the known region (Dijkstra over the 8-connected grid),
  // then fill in order of increasing distance.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Plane<double> dist = Plane<double>::Constant(h, w, kInf);
  using Entry = std::tuple<double, int, int>;  // distance, y, x
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x)) {
        dist(y, x) = 0.0;
        heap.emplace(0.0, y, x);
      }
    }
  }
  std::vector<Entry> order;
  order.reserve(static_cast<std::size_t>(flagged));
  while (!heap.empty()) {
    auto [d, y, x] = heap.top();
    heap.pop();
    if (d > dist(y, x)) continue;
    if (mask(y, x)) order.emplace_back(d, y, x);
    for (int k = 0; k < 8; ++k) {
      const int nx = x + kDx[k];
      const int ny = y + kDy[k];
      if (nx < 0 || ny < 0 || nx >= w || ny >= h || !mask(ny, nx)) continue;
      const double nd = d + ((kDx[k] != 0 && kDy[k] != 0) ? M_SQRT2 : 1.0);
      if (nd < dist(ny, nx)) {
        dist(ny, nx) = nd;
        heap.emplace(nd, ny, nx);
      }
    }
  }

  Image out = img;
  Plane<std::uint8_t> known = (mask.array() == 0).cast<std::uint8_t>();
  for (const auto& [d, y, x] : order) {
    double acc[3] = {0.0, 0.0, 0.0};
    double wsum = 0.0;
    for (int k = 0; k < 8; ++k) {
      const int nx = x + kDx[k];
      const int ny = y + kDy[k];
      if (nx < 0 || ny < 0 || nx >= w || ny >= h || !known(ny, nx)) continue;
      const double wt = (kDx[k] != 0 && kDy[k] != 0) ? 0.5 : 1.0;  // 1 / |offset|^2
      for (int c = 0; c < 3; ++c) acc[c] += wt * out.at(nx, ny, c);
      wsum += wt;
    }
    // Every pixel reached by the search has a settled neighbor.
    for (int c = 0; c < 3; ++c) {
      out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(acc[c] / wsum), 0L, 255L));
    }
    known(y, x) = 1;
  }
  return out;
}

CropRect largest_clean_rect(const ReflectionMask& mask) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  std::vector<int> height(static_cast<std::size_t>(w), 0);
  std::vector<int> left(w), right(w);
  std::vector<int> stack;
  CropRect best;
  auto better = [](const CropRect& a, const CropRect& b) {
    if (a.area() != b.area()) return a.area() > b.area();
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) height[x] = mask(y, x) ? 0 : height[x] + 1;
    // Nearest strictly lower bar on each side.
    stack.clear();
    for (int x = 0; x < w; ++x) {
      while (!stack.empty() && height[stack.back()] >= height[x]) stack.pop_back();
      left[x] = stack.empty() ? 0 : stack.back() + 1;
      stack.push_back(x);
    }
    stack.clear();
    for (int x = w - 1; x >= 0; --x) {
      while (!stack.empty() && height[stack.back()] >= height[x]) stack.pop_back();
      right[x] = stack.empty() ? w - 1 : stack.back() - 1;
      stack.push_back(x);
    }
    // Every maximal all-clear rectangle appears here for some (y, x).
    for (int x = 0; x < w; ++x) {
      const int bar = height[x];
      const CropRect r{left[x], y - bar + 1,
                       right[x] - left[x] + 1, bar};
      if (r.width < kMinDescriptorSide || r.height < kMinDescriptorSide) continue;
      if (best.area() == 0 || better(r, best)) best = r;
    }
  }
  if (best.area() == 0) {
    throw Error(ErrorCode::NoCleanRegion, "no reflection-free region of at least 3x3");
  }
  return best;
}

Image crop(const Image& img, const CropRect& r) {
  if (r.x < 0 || r.y < 0 || r.width <= 0 || r.height <= 0 || r.x + r.width > img.width ||
      r.y + r.height > img.height) {
    throw Error(ErrorCode::DimensionMismatch, "crop rectangle outside the image");
  }
  Image out(r.width, r.height);
  for (int y = 0; y < r.height; ++y) {
    const auto* src = &img.data[(static_cast<std::size_t>(r.y + y) * img.width + r.x) * 3];
    std::copy(src, src + static_cast<std::size_t>(r.width) * 3,
              &out.data[static_cast<std::size_t>(y) * r.width * 3]);
  }
  return out;
}

Image crop_reflection(const Image& img, const ReflectionMask& mask) {
  check_shape(img, mask);
  if ((mask.array() == 0).all()) return img;
  return crop(img, largest_clean_rect(mask));
}

}  // namespace endoscan
