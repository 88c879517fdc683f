#pragma once

#include <array>

#include "endoscan/core.hpp"

// Independent reference implementations shared by the unit and acceptance tests.

namespace endoscan::oracle {

inline const int kOffsets[8][2] = {{-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}};

/// Histogram of 8-bit codes where bit i (MSB first) is set by `bit(neighbor, center)`.
template <typename Bit>
inline Eigen::VectorXd brute_codes(const GrayImage& g, int r, Bit bit) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(256);
  int n = 0;
  for (int y = r; y < g.rows() - r; ++y) {
    for (int x = r; x < g.cols() - r; ++x) {
      int code = 0;
      for (const auto& o : kOffsets) code = code * 2 + (bit(g(y + o[1] * r, x + o[0] * r), g(y, x)) ? 1 : 0);
      h(code) += 1;
      ++n;
    }
  }
  return h / n;
}

inline Eigen::VectorXd brute_lbp(const GrayImage& g, int r) {
  return brute_codes(g, r, [](int nb, int c) { return nb >= c; });
}

inline Eigen::VectorXd brute_ltp(const GrayImage& g, int r, int d) {
  Eigen::VectorXd out(512);
  out << brute_codes(g, r, [d](int nb, int c) { return nb > c + d; }),
      brute_codes(g, r, [d](int nb, int c) { return nb < c - d; });
  return out;
}

/// Symmetric co-occurrence counts for 0, 90, 45 and 135 degrees.
inline std::array<Eigen::MatrixXd, 4> brute_glcm(const GrayImage& g, int dist, int levels) {
  const int offs[4][2] = {{dist, 0}, {0, -dist}, {dist, -dist}, {-dist, -dist}};
  std::array<Eigen::MatrixXd, 4> out;
  for (int d = 0; d < 4; ++d) {
    out[d] = Eigen::MatrixXd::Zero(levels, levels);
    for (int y = 0; y < g.rows(); ++y) {
      for (int x = 0; x < g.cols(); ++x) {
        const int xx = x + offs[d][0], yy = y + offs[d][1];
        if (xx < 0 || yy < 0 || xx >= g.cols() || yy >= g.rows()) continue;
        const int a = g(y, x) * levels / 256, b = g(yy, xx) * levels / 256;
        out[d](a, b) += 1;
        out[d](b, a) += 1;
      }
    }
  }
  return out;
}

}  // namespace endoscan::oracle
