#include <algorithm>
#include <cmath>
#include <complex>

#include "endoscan/features.hpp"

namespace endoscan {

namespace {

std::vector<std::string> bin_names(const std::string& prefix, int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

/// Gradient direction folded into [0, pi).
inline double axial_angle(float gx, float gy) {
  double a = std::atan2(static_cast<double>(gy), static_cast<double>(gx));
  if (a < 0.0) a += M_PI;
  if (a >= M_PI) a -= M_PI;
  return a;
}

inline int angle_bin(double a, int bins) {
  return std::min(bins - 1, static_cast<int>(a / M_PI * bins));
}

/// Summed-area table with a zero first row and column.
Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> integral(const GrayImage& g) {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> s =
      Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(g.rows() + 1, g.cols() + 1);
  for (Eigen::Index y = 0; y < g.rows(); ++y) {
    std::int64_t row = 0;
    for (Eigen::Index x = 0; x < g.cols(); ++x) {
      row += g(y, x);
      s(y + 1, x + 1) = s(y, x + 1) + row;
    }
  }
  return s;
}

}  // namespace

Gradients sobel(const GrayImage& g) {
  const int h = static_cast<int>(g.rows());
  const int w = static_cast<int>(g.cols());
  Gradients out{Plane<float>(h, w), Plane<float>(h, w), Plane<float>(h, w)};
  for (int y = 0; y < h; ++y) {
    const auto* up = g.data() + static_cast<std::ptrdiff_t>(std::max(y - 1, 0)) * w;
    const auto* mid = g.data() + static_cast<std::ptrdiff_t>(y) * w;
    const auto* dn = g.data() + static_cast<std::ptrdiff_t>(std::min(y + 1, h - 1)) * w;
    for (int x = 0; x < w; ++x) {
      const int l = std::max(x - 1, 0);
      const int r = std::min(x + 1, w - 1);
      const int gx = (up[r] + 2 * mid[r] + dn[r]) - (up[l] + 2 * mid[l] + dn[l]);
      const int gy = (dn[l] + 2 * dn[x] + dn[r]) - (up[l] + 2 * up[x] + up[r]);
      out.gx(y, x) = static_cast<float>(gx);
      out.gy(y, x) = static_cast<float>(gy);
      out.magnitude(y, x) = std::sqrt(static_cast<float>(gx * gx + gy * gy));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

FeatureVector tamura(const GrayImage& g) { return tamura(g, sobel(g)); }

FeatureVector tamura(const GrayImage& g, const Gradients& grad) {
  const int h = static_cast<int>(g.rows());
  const int w = static_cast<int>(g.cols());
  if (w < 8 || h < 8) throw Error(ErrorCode::ImageTooSmall, "Tamura features need at least 8x8");

  // Coarseness: window sizes 1..32 (those that fit twice into the image).
  const auto sat = integral(g);
  int kmax = 0;
  while (kmax < 5 && (2 << (kmax + 1)) <= std::min(w, h)) ++kmax;
  std::vector<Plane<float>> means;
  for (int k = 0; k <= kmax; ++k) {
    const int size = 1 << k;
    Plane<float> a(h, w);
    for (int y = 0; y < h; ++y) {
      const int y0 = std::clamp(y - size / 2, 0, h - 1), y1 = std::min(y0 + size, h);
      for (int x = 0; x < w; ++x) {
        const int x0 = std::clamp(x - size / 2, 0, w - 1), x1 = std::min(x0 + size, w);
        const auto sum = sat(y1, x1) - sat(y0, x1) - sat(y1, x0) + sat(y0, x0);
        a(y, x) = static_cast<float>(static_cast<double>(sum) / ((x1 - x0) * (y1 - y0)));
      }
    }
    means.push_back(std::move(a));
  }
  double best_sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float best_e = -1.0f;
      int best_size = 1;
      for (int k = 0; k <= kmax; ++k) {
        const auto& a = means[static_cast<std::size_t>(k)];
        const int o = std::max(1, (1 << k) / 2);
        const float eh = std::abs(a(y, std::min(x + o, w - 1)) - a(y, std::max(x - o, 0)));
        const float ev = std::abs(a(std::min(y + o, h - 1), x) - a(std::max(y - o, 0), x));
        const float e = std::max(eh, ev);
        if (e > best_e) {
          best_e = e;
          best_size = 1 << k;
        }
      }
      best_sum += best_size;
    }
  }
  const double coarseness = 1.0 / (best_sum / (static_cast<double>(w) * h));

  // Contrast: sigma^2 / mu over 8x8 blocks, averaged.
  double contrast = 0.0;
  int blocks = 0;
  for (int by = 0; by + 8 <= h; by += 8) {
    for (int bx = 0; bx + 8 <= w; bx += 8) {
      const auto block = g.block(by, bx, 8, 8).cast<double>();
      const double mu = block.mean();
      const double var = (block.array() - mu).square().mean();
      contrast += mu > 0.0 ? var / mu : 0.0;
      ++blocks;
    }
  }
  contrast /= blocks;

  // Directionality: resultant length of the 16-bin doubled-angle histogram.
  constexpr int kBins = 16;
  const double mean_mag = grad.magnitude.cast<double>().mean();
  std::array<double, kBins> hist{};
  for (Eigen::Index i = 0; i < grad.magnitude.size(); ++i) {
    const float m = grad.magnitude.data()[i];
    if (m <= 0.0f || m <= mean_mag) continue;
    hist[static_cast<std::size_t>(angle_bin(axial_angle(grad.gx.data()[i], grad.gy.data()[i]), kBins))] += 1.0;
  }
  double total = 0.0;
  std::complex<double> resultant{0.0, 0.0};
  for (int b = 0; b < kBins; ++b) {
    const double center = (b + 0.5) * M_PI / kBins;
    resultant += hist[static_cast<std::size_t>(b)] * std::polar(1.0, 2.0 * center);
    total += hist[static_cast<std::size_t>(b)];
  }
  const double directionality = total > 0.0 ? std::abs(resultant) / total : 0.0;

  FeatureVector v;
  v.values.resize(3);
  v.values << coarseness, contrast, directionality;
  v.names = {"tamura_coarseness", "tamura_contrast", "tamura_directionality"};
  return v;
}

// ---------------------------------------------------------------------------

FeatureVector edge_histogram(const GrayImage& g, int bins) { return edge_histogram(sobel(g), bins); }

FeatureVector edge_histogram(const Gradients& grad, int bins) {
  if (bins < 2) throw Error(ErrorCode::InvalidParameters, "edge histogram needs at least 2 bins");
  if (grad.magnitude.rows() < kMinDescriptorSide || grad.magnitude.cols() < kMinDescriptorSide) {
    throw Error(ErrorCode::ImageTooSmall, "edge histogram needs at least 3x3");
  }
  const double mean_mag = grad.magnitude.cast<double>().mean();
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(bins);
  const double width = M_PI / bins;
  for (Eigen::Index i = 0; i < grad.magnitude.size(); ++i) {
    const float m = grad.magnitude.data()[i];
    if (m <= 0.0f || m <= mean_mag) continue;
    double edge = axial_angle(grad.gx.data()[i], grad.gy.data()[i]) + M_PI / 2;
    if (edge >= M_PI) edge -= M_PI;
    const int b = static_cast<int>(std::floor(edge / width + 0.5)) % bins;
    hist(b) += 1.0;
  }
  const double total = hist.sum();
  if (total > 0.0) {
    hist /= total;
  } else {
    hist.setConstant(1.0 / bins);
  }
  return {hist, bin_names("edge_hist_", bins)};
}

FeatureVector phog(const GrayImage& g, int levels, int bins) { return phog(sobel(g), levels, bins); }

FeatureVector phog(const Gradients& grad, int levels, int bins) {
  if (levels < 0 || bins < 2) throw Error(ErrorCode::InvalidParameters, "invalid PHOG parameters");
  const int h = static_cast<int>(grad.magnitude.rows());
  const int w = static_cast<int>(grad.magnitude.cols());
  if ((1 << levels) > std::min(w, h)) {
    throw Error(ErrorCode::ImageTooSmall, "image smaller than the finest PHOG grid");
  }
  // Orientation bin per pixel, shared by every level.
  Plane<int> bin(h, w);
  for (Eigen::Index i = 0; i < grad.magnitude.size(); ++i) {
    bin.data()[i] = angle_bin(axial_angle(grad.gx.data()[i], grad.gy.data()[i]), bins);
  }
  FeatureVector v;
  for (int l = 0; l <= levels; ++l) {
    const int cells = 1 << l;
    Eigen::VectorXd level = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cells) * cells * bins);
    for (int y = 0; y < h; ++y) {
      const int cy = y * cells / h;
      for (int x = 0; x < w; ++x) {
        const int cx = x * cells / w;
        level((cy * cells + cx) * bins + bin(y, x)) += grad.magnitude(y, x);
      }
    }
    const double mass = level.sum();
    if (mass > 0.0) {
      level /= mass;
    } else {
      level.setConstant(1.0 / static_cast<double>(level.size()));
    }
    FeatureVector block{level, {}};
    for (int c = 0; c < cells * cells; ++c) {
      for (int b = 0; b < bins; ++b) {
        block.names.push_back("phog_l" + std::to_string(l) + "_c" + std::to_string(c) + "_b" + std::to_string(b));
      }
    }
    v.append(block);
  }
  return v;
}

// ---------------------------------------------------------------------------

double gabor_kernel_value(const GaborFilter& f, double x, double y) noexcept {
  const double xr = x * std::cos(f.theta) + y * std::sin(f.theta);
  const double yr = -x * std::sin(f.theta) + y * std::cos(f.theta);
  return std::exp(-(xr * xr + f.gamma * f.gamma * yr * yr) / (2.0 * f.sigma * f.sigma)) *
         std::cos(2.0 * M_PI * f.frequency * xr);
}

Plane<double> gabor_kernel(const GaborFilter& f) {
  if (!(f.sigma > 0.0) || !(f.frequency > 0.0) || !(f.gamma > 0.0)) {
    throw Error(ErrorCode::InvalidParameters, "Gabor filter needs sigma, frequency, gamma > 0");
  }
  const int r = static_cast<int>(std::ceil(3.0 * f.sigma / std::min(f.gamma, 1.0)));
  Plane<double> k(2 * r + 1, 2 * r + 1);
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) k(y + r, x + r) = gabor_kernel_value(f, x, y);
  }
  k.array() -= k.mean();
  return k;
}

std::vector<GaborFilter> default_gabor_bank() {
  std::vector<GaborFilter> bank;
  for (const auto& [sigma, freq] : {std::pair{1.0, 0.25}, std::pair{2.0, 0.125}}) {
    for (int o = 0; o < 4; ++o) bank.push_back({sigma, freq, 0.5, o * M_PI / 4.0});
  }
  return bank;
}

FeatureVector gabor_features(const GrayImage& g, const std::vector<GaborFilter>& bank, int max_side) {
  if (g.rows() == 0 || g.cols() == 0) throw Error(ErrorCode::ImageTooSmall, "empty image");
  // Integer-factor area averaging.
  const int factor = static_cast<int>(
      std::max<Eigen::Index>(1, (std::max(g.rows(), g.cols()) + max_side - 1) / max_side));
  const int h = static_cast<int>(g.rows()) / factor;
  const int w = static_cast<int>(g.cols()) / factor;
  Plane<double> img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img(y, x) = g.block(y * factor, x * factor, factor, factor).cast<double>().mean();
    }
  }

  FeatureVector v;
  v.values.resize(static_cast<Eigen::Index>(bank.size()) * 2);
  Plane<double> response(h, w);
  for (std::size_t f = 0; f < bank.size(); ++f) {
    const auto kernel = gabor_kernel(bank[f]);
    const int r = static_cast<int>(kernel.rows() / 2);
    // Replicate-padded copy keeps the inner loop free of bounds checks.
    const int pw = w + 2 * r;
    Plane<double> padded(h + 2 * r, pw);
    for (int y = 0; y < h + 2 * r; ++y) {
      const int sy = std::clamp(y - r, 0, h - 1);
      for (int x = 0; x < pw; ++x) padded(y, x) = img(sy, std::clamp(x - r, 0, w - 1));
    }
    response.setZero();
    for (int j = 0; j < 2 * r + 1; ++j) {
      for (int i = 0; i < 2 * r + 1; ++i) {
        const double kv = kernel(j, i);
        for (int y = 0; y < h; ++y) {
          const double* src = padded.data() + static_cast<std::ptrdiff_t>(y + j) * pw + i;
          double* dst = response.data() + static_cast<std::ptrdiff_t>(y) * w;
          for (int x = 0; x < w; ++x) dst[x] += kv * src[x];
        }
      }
    }
    response = response.cwiseAbs();
    const double mean = response.mean();
    const double sd = std::sqrt((response.array() - mean).square().mean());
    const auto fi = static_cast<Eigen::Index>(f);
    v.values(2 * fi) = mean;
    v.values(2 * fi + 1) = sd;
    v.names.push_back("gabor_" + std::to_string(f) + "_mean");
    v.names.push_back("gabor_" + std::to_string(f) + "_std");
  }
  return v;
}

}  // namespace endoscan
