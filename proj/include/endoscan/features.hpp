#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "endoscan/core.hpp"

namespace endoscan {

// ===========================================================================
// Local binary pattern family
//
// Neighbors for radius r are the eight pixels at Chebyshev distance r along
// the compass directions, visited top-left first and then clockwise
// (TL, T, TR, R, BR, B, BL, L). The first neighbor is the most significant
// bit. A bit is set when neighbor >= center. Pixels whose neighborhood
// leaves the image are skipped.
// ===========================================================================

inline constexpr int kLbpNeighbors = 8;
inline constexpr int kLbpBins = 256;

/// Code of one pixel; (x, y) must be at least `radius` away from every border.
std::uint8_t lbp_code(const GrayImage& g, int x, int y, int radius);
/// Codes of all interior pixels, shape (h - 2r) x (w - 2r).
Plane<std::uint8_t> lbp_codes(const GrayImage& g, int radius);
/// Normalized 256-bin code histogram.
FeatureVector lbp_histogram(const GrayImage& g, int radius, int points = 8);

/// Upper (neighbor > center + d) and lower (neighbor < center - d) binary
/// patterns, two concatenated 256-bin histograms.
FeatureVector ltp_histograms(const GrayImage& g, int radius, int d);

/// Sign histogram (identical to lbp_histogram) followed by the magnitude
/// histogram, whose bits mark |center - neighbor| > the image's mean
/// absolute difference.
FeatureVector clbp(const GrayImage& g, int radius);

enum class DlbpMode {
  Pooled,  // sum histograms over the corpus, keep the top patterns of the pool
  Union,   // keep each image's top patterns and take the union
};

struct DominantPatterns {
  double coverage = 0.8;
  std::vector<int> patterns;  // ascending code order
  bool fitted() const noexcept { return !patterns.empty(); }
};

/// Minimal prefix of frequency-sorted patterns reaching `coverage` of the mass.
std::vector<int> dominant_prefix(const Eigen::VectorXd& frequencies, double coverage);
DominantPatterns dlbp_fit(const std::vector<Eigen::VectorXd>& histograms, double coverage = 0.8,
                          DlbpMode mode = DlbpMode::Pooled);

struct DlbpProjection {
  FeatureVector vector;
  bool degenerate = false;  // histogram had no mass on the dominant set
};
/// Restricts a 256-bin histogram to the dominant set and renormalizes.
DlbpProjection dlbp_project(const Eigen::VectorXd& histogram, const DominantPatterns& set);

/// Minimum over all circular bit rotations of an 8-bit code.
std::uint8_t rotation_min(std::uint8_t code) noexcept;
/// The 36 rotation-minimal 8-bit codes in ascending order.
const std::array<std::uint8_t, 36>& rotation_classes();
/// Circularly sampled (bilinear) LBP mapped to rotation classes; 36 bins.
FeatureVector rilbp_histogram(const GrayImage& g, int points, int radius);

// ===========================================================================
// Gray-level co-occurrence
// ===========================================================================

enum class GlcmDirection { Horizontal = 0, Vertical = 1, DiagonalUp = 2, DiagonalDown = 3 };
inline constexpr std::array<const char*, 4> kGlcmDirectionNames = {"0", "90", "45", "135"};

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct Glcm {
  int levels = 0;
  int distance = 1;
  std::array<CountMatrix, 4> counts;  // symmetric pair counts per direction

  Eigen::MatrixXd normalized(GlcmDirection dir) const;
};

/// Pixel offset (dx, dy) of a direction at the given distance.
std::pair<int, int> glcm_offset(GlcmDirection dir, int distance) noexcept;
/// Gray value to level index, floor(v * levels / 256).
int quantize_level(std::uint8_t v, int levels) noexcept;
Glcm glcm(const GrayImage& g, int distance = 1, int levels = 8);

inline constexpr int kHaralickStats = 13;
inline constexpr std::array<const char*, kHaralickStats> kHaralickNames = {
    "asm", "contrast", "correlation", "variance", "idm", "sum_average", "sum_variance",
    "sum_entropy", "entropy", "diff_variance", "diff_entropy", "imc1", "imc2"};

/// The 13 statistics of one normalized co-occurrence matrix (entropies in bits).
Eigen::Matrix<double, kHaralickStats, 1> haralick_stats(const Eigen::MatrixXd& p);
/// Statistics for all four directions, 52 values.
FeatureVector haralick(const Glcm& m);

// ===========================================================================
// Gradient-based descriptors
// ===========================================================================

/// Sobel responses with replicated borders.
struct Gradients {
  Plane<float> gx;
  Plane<float> gy;
  Plane<float> magnitude;
};
Gradients sobel(const GrayImage& g);

/// Coarseness (inverse mean best window size), contrast (mean local
/// variance / mean over 8x8 blocks) and directionality (mean resultant length
/// of the doubled-angle edge orientation histogram, 16 bins).
FeatureVector tamura(const GrayImage& g);
FeatureVector tamura(const GrayImage& g, const Gradients& grad);

/// Histogram of edge orientations (perpendicular to the gradient) in
/// [0, pi), `bins` bins centered on multiples of pi / bins. Edge pixels have
/// gradient magnitude above the mean; without edges the histogram is uniform.
FeatureVector edge_histogram(const GrayImage& g, int bins = 8);
FeatureVector edge_histogram(const Gradients& grad, int bins = 8);

/// Magnitude-weighted gradient orientation histograms over a spatial pyramid
/// (4^l cells at level l), each level normalized to sum 1.
FeatureVector phog(const GrayImage& g, int levels = 2, int bins = 8);
FeatureVector phog(const Gradients& grad, int levels = 2, int bins = 8);

struct GaborFilter {
  double sigma = 1.0;
  double frequency = 0.25;
  double gamma = 0.5;
  double theta = 0.0;  // radians
};

/// Kernel sample at (x, y) in the filter's rotated frame, before zero-mean
/// adjustment.
double gabor_kernel_value(const GaborFilter& f, double x, double y) noexcept;
/// Zero-mean kernel of radius ceil(3 * sigma / min(gamma, 1)), row-major.
Plane<double> gabor_kernel(const GaborFilter& f);
std::vector<GaborFilter> default_gabor_bank();
/// Mean and standard deviation of |response| per filter. Images whose
/// longer side exceeds `max_side` are area-averaged down first.
FeatureVector gabor_features(const GrayImage& g, const std::vector<GaborFilter>& bank,
                             int max_side = 64);

// ===========================================================================
// Color descriptors
// ===========================================================================

/// Uniform per-channel quantization to `levels` levels, joint index
/// r * levels^2 + g * levels + b.
int quantize_color(std::uint8_t r, std::uint8_t g, std::uint8_t b, int levels) noexcept;

enum class ColorSpace { RGB, HSV };

/// Per-cell normalized quantized-color histograms, cells in row-major order.
FeatureVector color_layout(const Image& img, int grid_x = 4, int grid_y = 4, int levels = 2);
/// Joint histogram with `bins` levels per channel.
FeatureVector color_histogram(const Image& img, ColorSpace space = ColorSpace::RGB, int bins = 4);

enum class DistanceMetric { Chebyshev, Manhattan };

/// For color c and distance k: among pixel pairs at distance k whose first
/// pixel has color c, the fraction whose second pixel also has color c.
FeatureVector auto_color_correlogram(const Image& img, const std::vector<int>& distances,
                                     int levels = 4,
                                     DistanceMetric metric = DistanceMetric::Chebyshev);

// ===========================================================================
// Composite descriptors
// ===========================================================================

inline constexpr int kCompositeBins = 8;

/// Triangular memberships of t in [0, 1] over 8 evenly spaced centers; sums to 1.
std::array<double, kCompositeBins> fuzzy_memberships(double t) noexcept;

/// Per-channel 8-bin color histograms followed by the 8-bin edge histogram.
FeatureVector cedd(const Image& img);
FeatureVector cedd(const Image& img, const Gradients& grad);

/// 8 x 8 fuzzy color (luminance) x texture (gradient magnitude) histogram,
/// accumulated over a grid: sum over cells of
///   (cell pixels / total) * mean color membership * mean texture membership.
FeatureVector fcth(const Image& img, int grid = 2);
FeatureVector fcth(const Image& img, const GrayImage& gray, const Gradients& grad, int grid = 2);

/// cedd ++ fcth.
FeatureVector jcd(const Image& img);

// ===========================================================================
// Spec and extraction
// ===========================================================================

struct FeatureSpec {
  struct Ltp { int radius = 1; int band = 5; };
  struct Dlbp { int radius = 1; double coverage = 0.8; DlbpMode mode = DlbpMode::Pooled; std::vector<int> patterns; };
  struct RiLbp { int points = 8; int radius = 1; };
  struct GlcmParams { int distance = 1; int levels = 8; };
  struct Phog { int levels = 2; int bins = 8; };
  struct ColorLayout { int grid_x = 4; int grid_y = 4; int levels = 2; };
  struct ColorHist { ColorSpace space = ColorSpace::RGB; int bins = 4; };
  struct Acc { std::vector<int> distances{1, 3, 5, 7}; int levels = 4; DistanceMetric metric = DistanceMetric::Chebyshev; };
  struct Gabor { std::vector<GaborFilter> bank = default_gabor_bank(); int max_side = 64; };
  struct Fcth { int grid = 2; };

  std::vector<int> lbp_radii;
  int lbp_points = 8;
  std::optional<Ltp> ltp;
  std::optional<int> clbp_radius;
  std::optional<Dlbp> dlbp;
  std::optional<RiLbp> rilbp;
  std::optional<GlcmParams> glcm;
  bool tamura = false;
  std::optional<int> edge_hist_bins;
  std::optional<Phog> phog;
  std::optional<ColorLayout> color_layout;
  std::optional<ColorHist> color_hist;
  std::optional<Acc> acc;
  std::optional<Gabor> gabor;
  bool cedd = false;
  std::optional<Fcth> fcth;
  bool jcd = false;
  /// Deep-feature CSV appended by extract_matrix (not by extract_all).
  std::optional<std::string> external;

  /// The descriptor selection used for real-time classification.
  static FeatureSpec selected();
  /// Every image descriptor enabled.
  static FeatureSpec full();
  /// `selected`, `default`, `full`, or a path to a JSON spec file.
  static FeatureSpec preset(const std::string& name);

  /// Throws InvalidParameters.
  void validate() const;
  /// Smallest image side accepted by every enabled descriptor.
  int min_image_side() const;
};

void to_json(nlohmann::json& j, const FeatureSpec& s);
void from_json(const nlohmann::json& j, FeatureSpec& s);

/// One contiguous block of an extracted vector.
struct FeatureBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// Blocks in extraction order (LBP radii, LTP, CLBP, DLBP, RILBP, Haralick,
/// Tamura, edge histogram, PHOG, color layout, color histogram, correlogram,
/// Gabor, CEDD, FCTH, JCD). Sizes are a pure function of the spec.
std::vector<FeatureBlock> feature_schema(const FeatureSpec& spec);
Eigen::Index feature_dimension(const FeatureSpec& spec);
std::vector<std::string> feature_names(const FeatureSpec& spec);

/// Raw (unnormalized) concatenation of every enabled image descriptor.
FeatureVector extract_all(const Image& img, const FeatureSpec& spec);
/// Extraction followed by frozen min-max scaling.
FeatureVector extract_all(const Image& img, const FeatureSpec& spec, const Normalizer& norm);

/// Columns keyed by relative sample path, in dataset order.
struct ExternalColumns {
  Eigen::MatrixXd values;
  std::vector<std::string> names;
};
/// CSV with header `sample,<names...>`; every dataset sample must be present.
ExternalColumns load_external_features(const std::filesystem::path& path, const Dataset& d);

/// Extracts every sample (optionally transformed first), appends external
/// columns and returns the raw matrix. Rows follow dataset order for any
/// number of jobs.
using ImageTransform = std::function<Image(const Image&)>;
FeatureMatrix extract_matrix(const Dataset& d, const FeatureSpec& spec, int jobs = 1,
                             const ImageTransform& transform = {});
FeatureMatrix extract_matrix(const std::vector<Image>& images, const std::vector<int>& labels,
                             const std::vector<std::string>& class_names,
                             const std::vector<std::string>& sample_ids, const FeatureSpec& spec,
                             int jobs = 1);

/// Fills the dominant-pattern set of an enabled, unfitted DLBP block from the
/// corpus; other specs are returned unchanged.
FeatureSpec fit_spec(const Dataset& d, FeatureSpec spec, int jobs = 1,
                     const ImageTransform& transform = {});
FeatureSpec fit_spec(const std::vector<Image>& images, FeatureSpec spec);

/// Block layout file written next to a feature matrix.
nlohmann::json schema_document(const FeatureSpec& spec);

}  // namespace endoscan
