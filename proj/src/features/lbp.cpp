#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "endoscan/features.hpp"

namespace endoscan {

namespace {

// TL, T, TR, R, BR, B, BL, L in units of the radius.
constexpr int kOffX[kLbpNeighbors] = {-1, 0, 1, 1, 1, 0, -1, -1};
constexpr int kOffY[kLbpNeighbors] = {-1, -1, -1, 0, 1, 1, 1, 0};

void require_side(const GrayImage& g, int radius) {
  if (radius < 1) throw Error(ErrorCode::InvalidParameters, "radius must be >= 1");
  if (g.rows() < 2 * radius + 1 || g.cols() < 2 * radius + 1) {
    throw Error(ErrorCode::ImageTooSmall, "image smaller than the LBP neighborhood");
  }
}

std::vector<std::string> bin_names(const std::string& prefix, int n) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

template <typename CodeFn>
Eigen::VectorXd code_histogram(const GrayImage& g, int radius, CodeFn&& code_of) {
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(kLbpBins);
  const int h = static_cast<int>(g.rows());
  const int w = static_cast<int>(g.cols());
  for (int y = radius; y < h - radius; ++y) {
    for (int x = radius; x < w - radius; ++x) hist(code_of(x, y)) += 1.0;
  }
  hist /= static_cast<double>(h - 2 * radius) * (w - 2 * radius);
  return hist;
}

}  // namespace

std::uint8_t lbp_code(const GrayImage& g, int x, int y, int radius) {
  const auto center = g(y, x);
  unsigned code = 0;
  for (int k = 0; k < kLbpNeighbors; ++k) {
    code = (code << 1) | (g(y + kOffY[k] * radius, x + kOffX[k] * radius) >= center ? 1u : 0u);
  }
  return static_cast<std::uint8_t>(code);
}

Plane<std::uint8_t> lbp_codes(const GrayImage& g, int radius) {
  require_side(g, radius);
  const int h = static_cast<int>(g.rows());
  const int w = static_cast<int>(g.cols());
  Plane<std::uint8_t> codes(h - 2 * radius, w - 2 * radius);
  const std::uint8_t* base = g.data();
  std::ptrdiff_t off[kLbpNeighbors];
  for (int k = 0; k < kLbpNeighbors; ++k) {
    off[k] = static_cast<std::ptrdiff_t>(kOffY[k]) * radius * w + kOffX[k] * radius;
  }
  for (int y = radius; y < h - radius; ++y) {
    const std::uint8_t* row = base + static_cast<std::ptrdiff_t>(y) * w;
    std::uint8_t* out = codes.data() + static_cast<std::ptrdiff_t>(y - radius) * codes.cols();
    for (int x = radius; x < w - radius; ++x) {
      const std::uint8_t* p = row + x;
      const std::uint8_t c = *p;
      out[x - radius] = static_cast<std::uint8_t>(
          ((p[off[0]] >= c) << 7) | ((p[off[1]] >= c) << 6) | ((p[off[2]] >= c) << 5) |
          ((p[off[3]] >= c) << 4) | ((p[off[4]] >= c) << 3) | ((p[off[5]] >= c) << 2) |
          ((p[off[6]] >= c) << 1) | (p[off[7]] >= c));
    }
  }
  return codes;
}

FeatureVector lbp_histogram(const GrayImage& g, int radius, int points) {
  if (points != kLbpNeighbors) throw Error(ErrorCode::InvalidParameters, "LBP supports P = 8");
  const auto codes = lbp_codes(g, radius);
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(kLbpBins);
  for (Eigen::Index i = 0; i < codes.size(); ++i) hist(codes.data()[i]) += 1.0;
  hist /= static_cast<double>(codes.size());
  return {hist, bin_names("lbp_r" + std::to_string(radius) + "_", kLbpBins)};
}

FeatureVector ltp_histograms(const GrayImage& g, int radius, int d) {
  require_side(g, radius);
  if (d < 0) throw Error(ErrorCode::InvalidParameters, "LTP band must be >= 0");
  const auto upper = code_histogram(g, radius, [&](int x, int y) {
    const int c = g(y, x);
    unsigned code = 0;
    for (int k = 0; k < kLbpNeighbors; ++k) {
      code = (code << 1) | (g(y + kOffY[k] * radius, x + kOffX[k] * radius) > c + d ? 1u : 0u);
    }
    return code;
  });
  const auto lower = code_histogram(g, radius, [&](int x, int y) {
    const int c = g(y, x);
    unsigned code = 0;
    for (int k = 0; k < kLbpNeighbors; ++k) {
      code = (code << 1) | (g(y + kOffY[k] * radius, x + kOffX[k] * radius) < c - d ? 1u : 0u);
    }
    return code;
  });
  FeatureVector v;
  v.values.resize(2 * kLbpBins);
  v.values << upper, lower;
  const std::string prefix = "ltp_r" + std::to_string(radius) + "_";
  v.names = bin_names(prefix + "up_", kLbpBins);
  auto lo = bin_names(prefix + "lo_", kLbpBins);
  v.names.insert(v.names.end(), lo.begin(), lo.end());
  return v;
}

FeatureVector clbp(const GrayImage& g, int radius) {
  require_side(g, radius);
  const int h = static_cast<int>(g.rows());
  const int w = static_cast<int>(g.cols());
  double total = 0.0;
  for (int y = radius; y < h - radius; ++y) {
    for (int x = radius; x < w - radius; ++x) {
      for (int k = 0; k < kLbpNeighbors; ++k) {
        total += std::abs(static_cast<int>(g(y, x)) - g(y + kOffY[k] * radius, x + kOffX[k] * radius));
      }
    }
  }
  const double mean = total / (static_cast<double>(h - 2 * radius) * (w - 2 * radius) * kLbpNeighbors);
  const auto magnitude = code_histogram(g, radius, [&](int x, int y) {
    unsigned code = 0;
    for (int k = 0; k < kLbpNeighbors; ++k) {
      const int m = std::abs(static_cast<int>(g(y, x)) - g(y + kOffY[k] * radius, x + kOffX[k] * radius));
      code = (code << 1) | (m > mean ? 1u : 0u);
    }
    return code;
  });
  const auto sign = lbp_histogram(g, radius);
  FeatureVector v;
  v.values.resize(2 * kLbpBins);
  v.values << sign.values, magnitude;
  const std::string prefix = "clbp_r" + std::to_string(radius) + "_";
  v.names = bin_names(prefix + "s_", kLbpBins);
  auto m = bin_names(prefix + "m_", kLbpBins);
  v.names.insert(v.names.end(), m.begin(), m.end());
  return v;
}

// ---------------------------------------------------------------------------

std::vector<int> dominant_prefix(const Eigen::VectorXd& frequencies, double coverage) {
  if (!(coverage > 0.0 && coverage <= 1.0)) {
    throw Error(ErrorCode::InvalidParameters, "coverage must lie in (0,1]");
  }
  std::vector<int> order(static_cast<std::size_t>(frequencies.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return frequencies(a) > frequencies(b); });
  const double total = frequencies.sum();
  std::vector<int> kept;
  if (total <= 0.0) return kept;
  const double goal = coverage * total * (1.0 - 1e-12);
  double cum = 0.0;
  for (int idx : order) {
    if (frequencies(idx) <= 0.0) break;
    kept.push_back(idx);
    cum += frequencies(idx);
    if (cum >= goal) break;
  }
  return kept;
}

DominantPatterns dlbp_fit(const std::vector<Eigen::VectorXd>& histograms, double coverage,
                          DlbpMode mode) {
  if (histograms.empty()) throw Error(ErrorCode::EmptyInput, "no histograms to fit");
  std::set<int> keep;
  if (mode == DlbpMode::Pooled) {
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(histograms.front().size());
    for (const auto& h : histograms) pooled += h;
    for (int p : dominant_prefix(pooled, coverage)) keep.insert(p);
  } else {
    for (const auto& h : histograms) {
      for (int p : dominant_prefix(h, coverage)) keep.insert(p);
    }
  }
  return {coverage, std::vector<int>(keep.begin(), keep.end())};
}

DlbpProjection dlbp_project(const Eigen::VectorXd& histogram, const DominantPatterns& set) {
  if (!set.fitted()) throw Error(ErrorCode::NotFitted, "dominant pattern set is not fitted");
  DlbpProjection out;
  out.vector.values.resize(static_cast<Eigen::Index>(set.patterns.size()));
  for (std::size_t i = 0; i < set.patterns.size(); ++i) {
    out.vector.values(static_cast<Eigen::Index>(i)) = histogram(set.patterns[i]);
    out.vector.names.push_back("dlbp_" + std::to_string(set.patterns[i]));
  }
  const double mass = out.vector.values.sum();
  if (mass > 0.0) {
    out.vector.values /= mass;
  } else {
    out.degenerate = true;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::uint8_t rotation_min(std::uint8_t code) noexcept {
  std::uint8_t best = code;
  for (int i = 1; i < 8; ++i) {
    const auto r = static_cast<std::uint8_t>((code >> i) | (code << (8 - i)));
    best = std::min(best, r);
  }
  return best;
}

const std::array<std::uint8_t, 36>& rotation_classes() {
  static const std::array<std::uint8_t, 36> classes = [] {
    std::set<std::uint8_t> s;
    for (int c = 0; c < 256; ++c) s.insert(rotation_min(static_cast<std::uint8_t>(c)));
    std::array<std::uint8_t, 36> a{};
    std::copy(s.begin(), s.end(), a.begin());
    return a;
  }();
  return classes;
}

FeatureVector rilbp_histogram(const GrayImage& g, int points, int radius) {
  if (points != kLbpNeighbors) throw Error(ErrorCode::InvalidParameters, "rotation-invariant LBP supports P = 8");
  require_side(g, radius);

  // Bilinear taps per sample point. The two mixed taps are summed first so a
  // 90 degree image rotation reproduces every sample bit for bit.
  struct Tap { std::ptrdiff_t off; double weight; };
  struct SamplePoint { Tap nn, mixed_a, mixed_b, ff; };
  const int w = static_cast<int>(g.cols());
  const int h = static_cast<int>(g.rows());
  std::array<SamplePoint, kLbpNeighbors> samples;
  for (int i = 0; i < points; ++i) {
    // Start at the top-left diagonal and proceed clockwise, like lbp_code.
    const double angle = 3.0 * M_PI / 4.0 - 2.0 * M_PI * i / points;
    double dx = radius * std::cos(angle);
    double dy = -radius * std::sin(angle);
    if (std::abs(dx) < 1e-9) dx = 0.0;
    if (std::abs(dy) < 1e-9) dy = 0.0;
    const double ax = std::abs(dx);
    const double ay = std::abs(dy);
    const int sx = dx < 0 ? -1 : 1;
    const int sy = dy < 0 ? -1 : 1;
    const int ix = static_cast<int>(std::floor(ax + 1e-9));
    const int iy = static_cast<int>(std::floor(ay + 1e-9));
    const double fx = std::max(0.0, ax - ix);
    const double fy = std::max(0.0, ay - iy);
    auto off = [&](int ox, int oy) {
      return static_cast<std::ptrdiff_t>(sy * oy) * w + sx * ox;
    };
    samples[static_cast<std::size_t>(i)] = {
        {off(ix, iy), (1 - fx) * (1 - fy)},
        {off(ix + 1, iy), fx * (1 - fy)},
        {off(ix, iy + 1), (1 - fx) * fy},
        {off(ix + 1, iy + 1), fx * fy},
    };
  }

  std::array<int, 256> class_index{};
  const auto& classes = rotation_classes();
  for (int c = 0; c < 256; ++c) {
    const auto m = rotation_min(static_cast<std::uint8_t>(c));
    class_index[static_cast<std::size_t>(c)] =
        static_cast<int>(std::lower_bound(classes.begin(), classes.end(), m) - classes.begin());
  }

  Eigen::VectorXd hist = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(classes.size()));
  const std::uint8_t* base = g.data();
  for (int y = radius; y < h - radius; ++y) {
    for (int x = radius; x < w - radius; ++x) {
      const std::uint8_t* p = base + static_cast<std::ptrdiff_t>(y) * w + x;
      const double c = *p;
      unsigned code = 0;
      for (const auto& s : samples) {
        auto tap = [p](const Tap& t) { return t.weight == 0.0 ? 0.0 : t.weight * p[t.off]; };
        const double v = (tap(s.nn) + (tap(s.mixed_a) + tap(s.mixed_b))) + tap(s.ff);
        code = (code << 1) | (v >= c - 1e-9 ? 1u : 0u);
      }
      hist(class_index[code]) += 1.0;
    }
  }
  hist /= static_cast<double>(h - 2 * radius) * (w - 2 * radius);
  FeatureVector v{hist, {}};
  const std::string prefix = "rilbp_p" + std::to_string(points) + "_r" + std::to_string(radius) + "_";
  for (auto c : classes) v.names.push_back(prefix + std::to_string(c));
  return v;
}

}  // namespace endoscan
