#include <algorithm>
#include <cmath>

#include "endoscan/features.hpp"

namespace endoscan {

std::array<double, kCompositeBins> fuzzy_memberships(double t) noexcept {
  std::array<double, kCompositeBins> mu{};
  const double pos = std::clamp(t, 0.0, 1.0) * (kCompositeBins - 1);
  const int lo = std::min(kCompositeBins - 2, static_cast<int>(pos));
  const double frac = pos - lo;
  mu[static_cast<std::size_t>(lo)] = 1.0 - frac;
  mu[static_cast<std::size_t>(lo + 1)] = frac;
  return mu;
}

FeatureVector cedd(const Image& img) { return cedd(img, sobel(to_gray(img))); }

FeatureVector cedd(const Image& img, const Gradients& grad) {
  if (img.width < kMinDescriptorSide || img.height < kMinDescriptorSide) {
    throw Error(ErrorCode::ImageTooSmall, "CEDD needs at least 3x3");
  }
  FeatureVector v;
  v.values = Eigen::VectorXd::Zero(4 * kCompositeBins);
  const auto* p = img.data.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i, p += 3) {
    for (int c = 0; c < 3; ++c) v.values(c * kCompositeBins + p[c] * kCompositeBins / 256) += 1.0;
  }
  v.values.head(3 * kCompositeBins) /= static_cast<double>(img.pixel_count());
  v.values.tail(kCompositeBins) = edge_histogram(grad, kCompositeBins).values;
  for (const char* ch : {"r", "g", "b"}) {
    for (int b = 0; b < kCompositeBins; ++b) v.names.push_back(std::string("cedd_") + ch + "_" + std::to_string(b));
  }
  for (int b = 0; b < kCompositeBins; ++b) v.names.push_back("cedd_edge_" + std::to_string(b));
  return v;
}

FeatureVector fcth(const Image& img, int grid) {
  const auto gray = to_gray(img);
  return fcth(img, gray, sobel(gray), grid);
}

FeatureVector fcth(const Image& img, const GrayImage& gray, const Gradients& grad, int grid) {
  if (grid < 1) throw Error(ErrorCode::InvalidParameters, "FCTH grid must be >= 1");
  if (grid > img.width || grid > img.height) {
    throw Error(ErrorCode::GridLargerThanImage, "FCTH grid exceeds the image");
  }
  constexpr double kMaxMagnitude = 1020.0;  // Sobel response to a full 0/255 step
  const double total = static_cast<double>(img.pixel_count());
  Eigen::Matrix<double, kCompositeBins, kCompositeBins> acc =
      Eigen::Matrix<double, kCompositeBins, kCompositeBins>::Zero();
  for (int cy = 0; cy < grid; ++cy) {
    const int y0 = cy * img.height / grid, y1 = (cy + 1) * img.height / grid;
    for (int cx = 0; cx < grid; ++cx) {
      const int x0 = cx * img.width / grid, x1 = (cx + 1) * img.width / grid;
      Eigen::Matrix<double, kCompositeBins, 1> mc = Eigen::Matrix<double, kCompositeBins, 1>::Zero();
      Eigen::Matrix<double, kCompositeBins, 1> mt = Eigen::Matrix<double, kCompositeBins, 1>::Zero();
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const auto c = fuzzy_memberships(gray(y, x) / 255.0);
          const auto t = fuzzy_memberships(std::min(1.0, grad.magnitude(y, x) / kMaxMagnitude));
          for (int b = 0; b < kCompositeBins; ++b) {
            mc(b) += c[static_cast<std::size_t>(b)];
            mt(b) += t[static_cast<std::size_t>(b)];
          }
        }
      }
      const double n = static_cast<double>((x1 - x0) * (y1 - y0));
      mc /= n;
      mt /= n;
      acc += (n / total) * mc * mt.transpose();
    }
  }
  FeatureVector v;
  v.values.resize(kCompositeBins * kCompositeBins);
  for (int i = 0; i < kCompositeBins; ++i) {
    for (int j = 0; j < kCompositeBins; ++j) {
      v.values(i * kCompositeBins + j) = acc(i, j);
      v.names.push_back("fcth_c" + std::to_string(i) + "_t" + std::to_string(j));
    }
  }
  return v;
}

FeatureVector jcd(const Image& img) {
  auto v = cedd(img);
  v.append(fcth(img));
  for (auto& n : v.names) n = "jcd_" + n;
  return v;
}

}  // namespace endoscan
