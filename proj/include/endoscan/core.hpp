#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace endoscan {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorCode {
  // core
  UnreadableFile,
  UnsupportedFormat,
  ZeroDimension,
  EmptyClassDirectory,
  NoClasses,
  FractionOutOfRange,
  IoFailure,
  SchemaMismatch,
  // preprocess
  InvalidThresholds,
  DimensionMismatch,
  MaskCoversEverything,
  NoCleanRegion,
  // augment
  MaxTooSmall,
  ImageTooSmall,
  EmptyDataset,
  // features
  NotFitted,
  NotNormalized,
  GridLargerThanImage,
  InvalidParameters,
  MissingSample,
  DimensionDrift,
  // classify
  SingleClass,
  EmptyMatrix,
  NonFinite,
  ShapeMismatch,
  LengthMismatch,
  AllZeroWeights,
  ClassSetMismatch,
  MissingClassInstance,
  // genetic
  TooFewFeatures,
  DegenerateMask,
  EmptyInput,
  // eval
  SingleClassPresent,
  TooFewRuns,
  EmptyBatch,
  // cli
  ConfigError,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// ---------------------------------------------------------------------------
// Random numbers
//
// All stochastic code draws from a 64-bit Mersenne twister through these
// helpers instead of <random> distributions, whose output is
// implementation-defined. Seeds for sub-tasks are derived with splitmix64 so
// that results do not depend on execution order.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, const std::string& key) noexcept;

/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);
/// Uniform double in [0, 1).
double uniform01(Rng& rng);
/// Uniform double in [lo, hi).
double uniform_real(Rng& rng, double lo, double hi);

/// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

// ---------------------------------------------------------------------------
// Rasters
// ---------------------------------------------------------------------------

/// Single-channel raster, rows = height, cols = width.
template <typename Scalar>
using Plane = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GrayImage = Plane<std::uint8_t>;

/// Interleaved 8-bit RGB raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width) * height;
  }
  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
  bool operator==(const Image&) const = default;
};

/// Smallest side accepted on the descriptor path.
inline constexpr int kMinDescriptorSide = 3;

/// Decodes a PNG or JPEG file into 8-bit RGB.
Image load_image(const std::filesystem::path& path);
/// Writes an 8-bit RGB PNG.
void save_png(const Image& img, const std::filesystem::path& path);
void save_jpeg(const Image& img, const std::filesystem::path& path, int quality = 95);
/// Writes a 1-bit grayscale PNG; nonzero samples become white.
void save_mask_png(const Plane<std::uint8_t>& mask, const std::filesystem::path& path);

/// BT.601 luminance, rounded and clamped.
GrayImage to_gray(const Image& img);
std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;

Image gray_to_rgb(const GrayImage& g);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Sample {
  std::string path;  // relative to Dataset::root, '/' separated
  int label = 0;
  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<std::string> class_names;
  std::vector<Sample> samples;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::vector<std::size_t> class_counts() const;
  std::filesystem::path absolute(const Sample& s) const { return root / s.path; }
};

bool is_image_file(const std::filesystem::path& p);

/// Enumerates `root/<class>/<file>` with sorted class names and
/// lexicographic sample order.
Dataset load_dataset(const std::filesystem::path& root);
/// Reads `relative/path,class_name` lines; classes are the sorted distinct names.
Dataset load_manifest(const std::filesystem::path& manifest,
                      const std::filesystem::path& root);

/// Stratified split. Classes with one sample go to the training side and a
/// warning is appended to `warnings` (if given).
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction,
                                          std::uint64_t seed,
                                          std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

struct FeatureVector {
  Eigen::VectorXd values;
  std::vector<std::string> names;

  Eigen::Index size() const noexcept { return values.size(); }
  void append(const FeatureVector& other);
};

struct FeatureMatrix {
  Eigen::MatrixXd values;  // rows = samples
  std::vector<std::string> column_names;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> sample_ids;  // optional; empty or one per row

  Eigen::Index rows() const noexcept { return values.rows(); }
  Eigen::Index cols() const noexcept { return values.cols(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }

  /// Row subset in the given order.
  FeatureMatrix select_rows(const std::vector<Eigen::Index>& rows) const;
  /// Column subset in the given order.
  FeatureMatrix select_cols(const std::vector<Eigen::Index>& cols) const;
  /// Throws ShapeMismatch if the invariants are violated.
  void validate() const;
};

/// CSV: header `sample,<columns...>,label`, one row per sample, label as
/// class name. Values are written with 17 significant digits.
void save_features(const FeatureMatrix& m, const std::filesystem::path& path);
/// Appends rows to an existing file; the header must match exactly.
void append_features(const FeatureMatrix& m, const std::filesystem::path& path);
/// `class_names` pins label order; when empty the sorted distinct labels are used.
FeatureMatrix load_features(const std::filesystem::path& path,
                            const std::vector<std::string>& class_names = {});

/// Per-column min-max scaling, fitted once and clamped to [0,1] on apply.
struct Normalizer {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static Normalizer fit(const Eigen::MatrixXd& x);
  bool empty() const noexcept { return lo.size() == 0; }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// thrown stops the remaining work and is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Lowest-index argmax.
template <typename Derived>
Eigen::Index argmax(const Eigen::DenseBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

}  // namespace endoscan
