#pragma once

#include <filesystem>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>
#include <string>

#include "endoscan/core.hpp"

namespace endoscan::test {

/// Code of the Error thrown by `fn`; ConfigError stands for "nothing thrown".
inline ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ConfigError;
}

inline GrayImage random_gray(int w, int h, Rng& rng, int max_value = 255) {
  GrayImage g(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) g(y, x) = static_cast<std::uint8_t>(uniform_index(rng, static_cast<std::size_t>(max_value) + 1));
  }
  return g;
}

inline Image random_image(int w, int h, Rng& rng) {
  Image img(w, h);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(uniform_index(rng, 256));
  return img;
}

inline GrayImage gray_from(std::initializer_list<std::initializer_list<int>> rows) {
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows.begin()->size());
  GrayImage g(h, w);
  int y = 0;
  for (const auto& r : rows) {
    int x = 0;
    for (int v : r) g(y, x++) = static_cast<std::uint8_t>(v);
    ++y;
  }
  return g;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("endoscan_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Separable synthetic classification data with `k` classes in `d` dimensions.
inline void blobs(int n_per_class, int k, int d, double spread, std::uint64_t seed, Eigen::MatrixXd& x,
                  std::vector<int>& y) {
  Rng rng(seed);
  x.resize(n_per_class * k, d);
  y.clear();
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      const int r = c * n_per_class + i;
      for (int j = 0; j < d; ++j) x(r, j) = (j % k == c ? 1.0 : 0.0) + uniform_real(rng, -spread, spread);
      y.push_back(c);
    }
  }
}

}  // namespace endoscan::test

namespace endoscan::test {

/// Synthetic image of class `c`: smooth shading, stripes or speckle, with a
/// small specular highlight, so classes are separable by texture.
inline Image synthetic_image(int c, int w, int h, Rng& rng) {
  Image img(w, h);
  const double base = uniform_real(rng, 60.0, 140.0);
  const double phase = uniform_real(rng, 0.0, 6.28);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = base;
      if (c % 3 == 0) v += 30.0 * static_cast<double>(x + y) / (w + h);
      if (c % 3 == 1) v += 35.0 * std::sin(phase + 0.8 * x);
      if (c % 3 == 2) v += uniform_real(rng, -40.0, 40.0);
      const auto g = static_cast<std::uint8_t>(std::clamp(v, 0.0, 250.0));
      img.set(x, y, static_cast<std::uint8_t>(std::min(255, g + 40)), g, static_cast<std::uint8_t>(g / 2 + 20 * c));
    }
  }
  const int sx = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(w - 2)));
  const int sy = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(h - 2)));
  for (int y = sy; y < sy + 2; ++y) {
    for (int x = sx; x < sx + 2; ++x) img.set(x, y, 250, 250, 250);
  }
  return img;
}

/// Writes `counts[c]` PNGs per class under root/class<c>/.
inline void write_corpus(const std::filesystem::path& root, const std::vector<int>& counts, int size,
                         std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const auto dir = root / ("class" + std::to_string(c));
    std::filesystem::create_directories(dir);
    for (int i = 0; i < counts[c]; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "img%03d.png", i);
      save_png(synthetic_image(static_cast<int>(c), size, size, rng), dir / name);
    }
  }
}

}  // namespace endoscan::test
