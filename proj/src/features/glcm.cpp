#include <cmath>

#include "endoscan/features.hpp"

namespace endoscan {

std::pair<int, int> glcm_offset(GlcmDirection dir, int distance) noexcept {
  switch (dir) {
    case GlcmDirection::Horizontal: return {distance, 0};
    case GlcmDirection::Vertical: return {0, distance};
    case GlcmDirection::DiagonalUp: return {distance, -distance};
    case GlcmDirection::DiagonalDown: return {distance, distance};
  }
  return {distance, 0};
}

int quantize_level(std::uint8_t v, int levels) noexcept { return v * levels / 256; }

Glcm glcm(const GrayImage& g, int distance, int levels) {
  if (levels < 2) throw Error(ErrorCode::InvalidParameters, "GLCM needs at least 2 levels");
  if (distance < 1) throw Error(ErrorCode::InvalidParameters, "GLCM distance must be >= 1");
  const int h = static_cast<int>(g.rows());
  const int w = static_cast<int>(g.cols());
  if (w <= distance || h <= distance) {
    throw Error(ErrorCode::ImageTooSmall, "image smaller than the co-occurrence distance");
  }
  Plane<int> q(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) q(y, x) = quantize_level(g(y, x), levels);
  }

  Glcm m;
  m.levels = levels;
  m.distance = distance;
  for (int d = 0; d < 4; ++d) {
    auto& counts = m.counts[static_cast<std::size_t>(d)];
    counts = CountMatrix::Zero(levels, levels);
    const auto [dx, dy] = glcm_offset(static_cast<GlcmDirection>(d), distance);
    const int y0 = std::max(0, -dy);
    const int y1 = std::min(h, h - dy);
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < w - dx; ++x) {
        const int a = q(y, x);
        const int b = q(y + dy, x + dx);
        ++counts(a, b);
        ++counts(b, a);
      }
    }
  }
  return m;
}

Eigen::MatrixXd Glcm::normalized(GlcmDirection dir) const {
  const auto& c = counts[static_cast<std::size_t>(dir)];
  Eigen::MatrixXd p = c.cast<double>();
  const double total = p.sum();
  if (total > 0.0) p /= total;
  return p;
}

namespace {

double entropy_bits(const Eigen::Ref<const Eigen::ArrayXd>& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) h -= p(i) * std::log2(p(i));
  }
  return h;
}

}  // namespace

Eigen::Matrix<double, kHaralickStats, 1> haralick_stats(const Eigen::MatrixXd& p) {
  const Eigen::Index n = p.rows();
  if (p.cols() != n || n == 0 || std::abs(p.sum() - 1.0) > 1e-9 || (p.array() < 0.0).any()) {
    throw Error(ErrorCode::NotNormalized, "co-occurrence matrix must be a square distribution");
  }
  const Eigen::ArrayXd px = p.rowwise().sum().array();
  const Eigen::ArrayXd py = p.colwise().sum().transpose().array();
  Eigen::ArrayXd psum = Eigen::ArrayXd::Zero(2 * n - 1);
  Eigen::ArrayXd pdiff = Eigen::ArrayXd::Zero(n);
  const Eigen::ArrayXd idx = Eigen::ArrayXd::LinSpaced(n, 0, static_cast<double>(n - 1));
  const double mux = (idx * px).sum();
  const double muy = (idx * py).sum();
  const double sdx = std::sqrt(((idx - mux).square() * px).sum());
  const double sdy = std::sqrt(((idx - muy).square() * py).sum());

  double asm_ = 0, contrast = 0, cross = 0, variance = 0, idm = 0;
  double hxy1 = 0, hxy2 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = p(i, j);
      const double di = static_cast<double>(i);
      const double dj = static_cast<double>(j);
      psum(i + j) += v;
      pdiff(std::abs(i - j)) += v;
      asm_ += v * v;
      contrast += (di - dj) * (di - dj) * v;
      cross += di * dj * v;
      variance += (di - mux) * (di - mux) * v;
      idm += v / (1.0 + (di - dj) * (di - dj));
      const double pxy = px(i) * py(j);
      if (pxy > 0.0) {
        if (v > 0.0) hxy1 -= v * std::log2(pxy);
        hxy2 -= pxy * std::log2(pxy);
      }
    }
  }
  const double correlation = (sdx * sdy > 1e-15) ? (cross - mux * muy) / (sdx * sdy) : 1.0;
  const Eigen::ArrayXd sidx = Eigen::ArrayXd::LinSpaced(2 * n - 1, 0, static_cast<double>(2 * n - 2));
  const double sum_avg = (sidx * psum).sum();
  const double sum_var = ((sidx - sum_avg).square() * psum).sum();
  const double sum_ent = entropy_bits(psum);
  const Eigen::Map<const Eigen::ArrayXd> flat(p.data(), p.size());
  const double ent = entropy_bits(flat);
  const double diff_mean = (idx * pdiff).sum();
  const double diff_var = ((idx - diff_mean).square() * pdiff).sum();
  const double diff_ent = entropy_bits(pdiff);
  const double hx = entropy_bits(px);
  const double hy = entropy_bits(py);
  const double hmax = std::max(hx, hy);
  const double imc1 = hmax > 0.0 ? (ent - hxy1) / hmax : 0.0;
  const double imc2 = std::sqrt(std::max(0.0, 1.0 - std::exp(-2.0 * (hxy2 - ent))));

  Eigen::Matrix<double, kHaralickStats, 1> s;
  s << asm_, contrast, correlation, variance, idm, sum_avg, sum_var, sum_ent, ent, diff_var,
      diff_ent, imc1, imc2;
  return s;
}

FeatureVector haralick(const Glcm& m) {
  FeatureVector v;
  v.values.resize(4 * kHaralickStats);
  for (int d = 0; d < 4; ++d) {
    v.values.segment(d * kHaralickStats, kHaralickStats) =
        haralick_stats(m.normalized(static_cast<GlcmDirection>(d)));
    for (const char* name : kHaralickNames) {
      v.names.push_back(std::string("haralick_") + kGlcmDirectionNames[static_cast<std::size_t>(d)] + "_" + name);
    }
  }
  return v;
}

}  // namespace endoscan
