#include <algorithm>
#include <cmath>

#include "endoscan/features.hpp"

namespace endoscan {

int quantize_color(std::uint8_t r, std::uint8_t g, std::uint8_t b, int levels) noexcept {
  const int qr = r * levels / 256;
  const int qg = g * levels / 256;
  const int qb = b * levels / 256;
  return (qr * levels + qg) * levels + qb;
}

namespace {

void check_levels(int levels) {
  if (levels < 2 || levels > 16) throw Error(ErrorCode::InvalidParameters, "color levels must be in [2, 16]");
}

std::vector<std::uint16_t> quantized_plane(const Image& img, int levels) {
  std::vector<std::uint16_t> q(img.pixel_count());
  const auto* p = img.data.data();
  for (std::size_t i = 0; i < q.size(); ++i, p += 3) {
    q[i] = static_cast<std::uint16_t>(quantize_color(p[0], p[1], p[2], levels));
  }
  return q;
}

/// HSV bin per channel: hue over [0, 360), saturation and value over [0, 1].
int hsv_index(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8, int bins) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  double hue = 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      hue = 60.0 * std::fmod((g - b) / delta + 6.0, 6.0);
    } else if (mx == g) {
      hue = 60.0 * ((b - r) / delta + 2.0);
    } else {
      hue = 60.0 * ((r - g) / delta + 4.0);
    }
  }
  const double sat = mx > 0.0 ? delta / mx : 0.0;
  auto bin = [bins](double t) { return std::min(bins - 1, static_cast<int>(t * bins)); };
  return (bin(hue / 360.0) * bins + bin(sat)) * bins + bin(mx);
}

}  // namespace

FeatureVector color_layout(const Image& img, int grid_x, int grid_y, int levels) {
  check_levels(levels);
  if (grid_x < 1 || grid_y < 1) throw Error(ErrorCode::InvalidParameters, "grid must be at least 1x1");
  if (grid_x > img.width || grid_y > img.height) {
    throw Error(ErrorCode::GridLargerThanImage, "color layout grid exceeds the image");
  }
  const int colors = levels * levels * levels;
  const auto q = quantized_plane(img, levels);
  FeatureVector v;
  v.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid_x) * grid_y * colors);
  for (int cy = 0; cy < grid_y; ++cy) {
    const int y0 = cy * img.height / grid_y, y1 = (cy + 1) * img.height / grid_y;
    for (int cx = 0; cx < grid_x; ++cx) {
      const int x0 = cx * img.width / grid_x, x1 = (cx + 1) * img.width / grid_x;
      const Eigen::Index base = static_cast<Eigen::Index>(cy * grid_x + cx) * colors;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) v.values(base + q[static_cast<std::size_t>(y) * img.width + x]) += 1.0;
      }
      v.values.segment(base, colors) /= static_cast<double>((x1 - x0) * (y1 - y0));
      for (int c = 0; c < colors; ++c) {
        v.names.push_back("color_layout_c" + std::to_string(cy * grid_x + cx) + "_" + std::to_string(c));
      }
    }
  }
  return v;
}

FeatureVector color_histogram(const Image& img, ColorSpace space, int bins) {
  check_levels(bins);
  if (img.pixel_count() == 0) throw Error(ErrorCode::ImageTooSmall, "empty image");
  const int colors = bins * bins * bins;
  FeatureVector v;
  v.values = Eigen::VectorXd::Zero(colors);
  const auto* p = img.data.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i, p += 3) {
    const int idx = space == ColorSpace::RGB ? quantize_color(p[0], p[1], p[2], bins)
                                             : hsv_index(p[0], p[1], p[2], bins);
    v.values(idx) += 1.0;
  }
  v.values /= static_cast<double>(img.pixel_count());
  const std::string prefix = space == ColorSpace::RGB ? "color_hist_rgb_" : "color_hist_hsv_";
  for (int c = 0; c < colors; ++c) v.names.push_back(prefix + std::to_string(c));
  return v;
}

FeatureVector auto_color_correlogram(const Image& img, const std::vector<int>& distances, int levels,
                                     DistanceMetric metric) {
  check_levels(levels);
  if (distances.empty()) throw Error(ErrorCode::InvalidParameters, "correlogram needs at least one distance");
  for (int k : distances) {
    if (k < 1) throw Error(ErrorCode::InvalidParameters, "correlogram distances must be >= 1");
  }
  if (img.pixel_count() == 0) throw Error(ErrorCode::ImageTooSmall, "empty image");
  const int colors = levels * levels * levels;
  const auto q = quantized_plane(img, levels);
  const int w = img.width, h = img.height;

  // Pixels with a partner at offset o are the image minus two border strips,
  // so their color counts come from the totals.
  std::vector<std::uint32_t> total(static_cast<std::size_t>(colors));
  for (auto c : q) ++total[c];

  FeatureVector v;
  v.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(distances.size()) * colors);
  std::vector<std::uint64_t> same(static_cast<std::size_t>(colors));
  std::vector<std::uint64_t> all(static_cast<std::size_t>(colors));
  auto count_rect = [&](int x0, int x1, int y0, int y1, std::int64_t sign) {
    for (int y = y0; y < y1; ++y) {
      const std::uint16_t* row = q.data() + static_cast<std::size_t>(y) * w;
      for (int x = x0; x < x1; ++x) all[row[x]] += static_cast<std::uint64_t>(sign);
    }
  };
  for (std::size_t di = 0; di < distances.size(); ++di) {
    const int k = distances[di];
    // Half of the ring at exactly distance k; the pair (p, p + o) with equal
    // colors is also the pair (p + o, p) for the opposite offset.
    std::vector<std::pair<int, int>> half;
    for (int dy = -k; dy <= k; ++dy) {
      for (int dx = -k; dx <= k; ++dx) {
        const int dist = metric == DistanceMetric::Chebyshev ? std::max(std::abs(dx), std::abs(dy))
                                                             : std::abs(dx) + std::abs(dy);
        if (dist == k && (dy > 0 || (dy == 0 && dx > 0))) half.emplace_back(dx, dy);
      }
    }
    std::fill(same.begin(), same.end(), 0);
    std::fill(all.begin(), all.end(), 0);
    for (const auto& [dx, dy] : half) {
      const int ya = std::max(0, -dy), yb = std::min(h, h - dy);
      const int xa = std::max(0, -dx), xb = std::min(w, w - dx);
      if (ya >= yb || xa >= xb) continue;
      for (int y = ya; y < yb; ++y) {
        const std::uint16_t* row = q.data() + static_cast<std::size_t>(y) * w;
        const std::uint16_t* other = q.data() + static_cast<std::size_t>(y + dy) * w + dx;
        for (int x = xa; x < xb; ++x) same[row[x]] += (other[x] == row[x]);
      }
      for (const int s : {1, -1}) {
        const int sx = s * dx, sy = s * dy;
        const int y0 = std::max(0, -sy), y1 = std::min(h, h - sy);
        const int x0 = std::max(0, -sx), x1 = std::min(w, w - sx);
        for (int c = 0; c < colors; ++c) all[static_cast<std::size_t>(c)] += total[static_cast<std::size_t>(c)];
        count_rect(0, w, 0, y0, -1);
        count_rect(0, w, y1, h, -1);
        count_rect(0, x0, y0, y1, -1);
        count_rect(x1, w, y0, y1, -1);
      }
    }
    for (int c = 0; c < colors; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      v.values(static_cast<Eigen::Index>(di) * colors + c) =
          all[ci] > 0 ? 2.0 * static_cast<double>(same[ci]) / static_cast<double>(all[ci]) : 0.0;
      v.names.push_back("acc_k" + std::to_string(k) + "_" + std::to_string(c));
    }
  }
  return v;
}

}  // namespace endoscan
