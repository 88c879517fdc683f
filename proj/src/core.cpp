#include "endoscan/core.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "csv.hpp"

namespace endoscan {

namespace fs = std::filesystem;

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnreadableFile: return "UnreadableFile";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::ZeroDimension: return "ZeroDimension";
    case ErrorCode::EmptyClassDirectory: return "EmptyClassDirectory";
    case ErrorCode::NoClasses: return "NoClasses";
    case ErrorCode::FractionOutOfRange: return "FractionOutOfRange";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::InvalidThresholds: return "InvalidThresholds";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MaskCoversEverything: return "MaskCoversEverything";
    case ErrorCode::NoCleanRegion: return "NoCleanRegion";
    case ErrorCode::MaxTooSmall: return "MaxTooSmall";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NotFitted: return "NotFitted";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::GridLargerThanImage: return "GridLargerThanImage";
    case ErrorCode::InvalidParameters: return "InvalidParameters";
    case ErrorCode::MissingSample: return "MissingSample";
    case ErrorCode::DimensionDrift: return "DimensionDrift";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::ClassSetMismatch: return "ClassSetMismatch";
    case ErrorCode::MissingClassInstance: return "MissingClassInstance";
    case ErrorCode::TooFewFeatures: return "TooFewFeatures";
    case ErrorCode::DegenerateMask: return "DegenerateMask";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SingleClassPresent: return "SingleClassPresent";
    case ErrorCode::TooFewRuns: return "TooFewRuns";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL + 1));
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& key) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return derive_seed(seed, h);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  // Lemire's multiply-shift with rejection.
  const std::uint64_t range = n;
  unsigned __int128 m = static_cast<unsigned __int128>(rng()) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(rng()) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// ---------------------------------------------------------------------------

std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

GrayImage to_gray(const Image& img) {
  GrayImage g(img.height, img.width);
  const std::uint8_t* p = img.data.data();
  std::uint8_t* out = g.data();
  for (std::size_t i = 0, n = img.pixel_count(); i < n; ++i, p += 3) {
    out[i] = luminance(p[0], p[1], p[2]);
  }
  return g;
}

Image gray_to_rgb(const GrayImage& g) {
  Image img(static_cast<int>(g.cols()), static_cast<int>(g.rows()));
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const auto v = g.data()[i];
    img.data[3 * i] = img.data[3 * i + 1] = img.data[3 * i + 2] = v;
  }
  return img;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const auto& s : samples) ++counts.at(static_cast<std::size_t>(s.label));
  return counts;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Dataset load_dataset(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::IoFailure, "not a directory: " + root.string());
  }
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  if (class_dirs.empty()) {
    throw Error(ErrorCode::NoClasses, "no class subdirectories under " + root.string());
  }
  std::sort(class_dirs.begin(), class_dirs.end(),
            [](const fs::path& a, const fs::path& b) {
              return a.filename().string() < b.filename().string();
            });

  Dataset d;
  d.root = root;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    const std::string name = class_dirs[c].filename().string();
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
      if (entry.is_regular_file() && is_image_file(entry.path())) {
        files.push_back(entry.path().filename().string());
      }
    }
    if (files.empty()) {
      throw Error(ErrorCode::EmptyClassDirectory, "class directory has no images: " + name);
    }
    std::sort(files.begin(), files.end());
    d.class_names.push_back(name);
    for (const auto& f : files) d.samples.push_back({name + "/" + f, static_cast<int>(c)});
  }
  return d;
}

Dataset load_manifest(const fs::path& manifest, const fs::path& root) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open manifest " + manifest.string());
  std::vector<std::pair<std::string, std::string>> rows;
  std::vector<std::string> fields;
  while (csv::read_row(in, fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 2) {
      throw Error(ErrorCode::SchemaMismatch, "manifest rows must be `path,class`");
    }
    rows.emplace_back(fields[0], fields[1]);
  }
  std::set<std::string> names;
  for (const auto& r : rows) names.insert(r.second);
  if (names.empty()) throw Error(ErrorCode::NoClasses, "manifest lists no samples");

  Dataset d;
  d.root = root;
  d.class_names.assign(names.begin(), names.end());
  std::sort(rows.begin(), rows.end());
  for (const auto& [path, cls] : rows) {
    auto it = std::lower_bound(d.class_names.begin(), d.class_names.end(), cls);
    d.samples.push_back({path, static_cast<int>(it - d.class_names.begin())});
  }
  return d;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction,
                                          std::uint64_t seed,
                                          std::vector<std::string>* warnings) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::FractionOutOfRange, "train fraction must lie in (0,1)");
  }
  std::vector<std::vector<std::size_t>> by_class(d.num_classes());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    by_class.at(static_cast<std::size_t>(d.samples[i].label)).push_back(i);
  }

  Rng rng(seed);
  std::vector<char> in_train(d.samples.size(), 0);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    const auto n = idx.size();
    if (n == 0) continue;
    shuffle(idx, rng);
    std::size_t n_train = 1;
    if (n >= 2) {
      n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
      n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    } else if (warnings) {
      warnings->push_back("class '" + d.class_names[c] +
                          "' has a single sample; test split lacks this class");
    }
    for (std::size_t k = 0; k < n_train; ++k) in_train[idx[k]] = 1;
  }

  Dataset train{d.root, d.class_names, {}};
  Dataset test{d.root, d.class_names, {}};
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    (in_train[i] ? train : test).samples.push_back(d.samples[i]);
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------

void FeatureVector::append(const FeatureVector& other) {
  const Eigen::Index n = values.size();
  values.conservativeResize(n + other.values.size());
  values.tail(other.values.size()) = other.values;
  names.insert(names.end(), other.names.begin(), other.names.end());
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<Eigen::Index>& rows) const {
  FeatureMatrix out;
  out.column_names = column_names;
  out.class_names = class_names;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(rows[i]);
    out.labels.push_back(labels.at(static_cast<std::size_t>(rows[i])));
    if (!sample_ids.empty()) out.sample_ids.push_back(sample_ids[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

FeatureMatrix FeatureMatrix::select_cols(const std::vector<Eigen::Index>& cols) const {
  FeatureMatrix out;
  out.labels = labels;
  out.class_names = class_names;
  out.sample_ids = sample_ids;
  out.values.resize(values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.values.col(static_cast<Eigen::Index>(j)) = values.col(cols[j]);
    out.column_names.push_back(column_names.at(static_cast<std::size_t>(cols[j])));
  }
  return out;
}

void FeatureMatrix::validate() const {
  if (static_cast<Eigen::Index>(column_names.size()) != values.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "column name count differs from matrix width");
  }
  if (static_cast<Eigen::Index>(labels.size()) != values.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "label count differs from row count");
  }
  if (!sample_ids.empty() && static_cast<Eigen::Index>(sample_ids.size()) != values.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "sample id count differs from row count");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= class_names.size()) {
      throw Error(ErrorCode::ShapeMismatch, "label outside the class list");
    }
  }
}

namespace {

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> header_of(const FeatureMatrix& m) {
  std::vector<std::string> h;
  h.reserve(m.column_names.size() + 2);
  h.push_back("sample");
  h.insert(h.end(), m.column_names.begin(), m.column_names.end());
  h.push_back("label");
  return h;
}

void write_rows(std::ostream& os, const FeatureMatrix& m) {
  std::vector<std::string> row;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    row.clear();
    row.push_back(m.sample_ids.empty() ? std::string{} : m.sample_ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(format_value(m.values(i, j)));
    row.push_back(m.class_names.at(static_cast<std::size_t>(m.labels[static_cast<std::size_t>(i)])));
    csv::write_row(os, row);
  }
}

}  // namespace

void save_features(const FeatureMatrix& m, const fs::path& path) {
  m.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  csv::write_row(out, header_of(m));
  write_rows(out, m);
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

void append_features(const FeatureMatrix& m, const fs::path& path) {
  m.validate();
  if (!fs::exists(path)) {
    save_features(m, path);
    return;
  }
  {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
    std::vector<std::string> header;
    csv::read_row(in, header);
    if (header != header_of(m)) {
      throw Error(ErrorCode::SchemaMismatch, "column names differ from " + path.string());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot append to " + path.string());
  write_rows(out, m);
}

FeatureMatrix load_features(const fs::path& path, const std::vector<std::string>& class_names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::vector<std::string> header;
  if (!csv::read_row(in, header) || header.size() < 2 || header.front() != "sample" ||
      header.back() != "label") {
    throw Error(ErrorCode::SchemaMismatch, "feature file header must be sample,...,label");
  }
  FeatureMatrix m;
  m.column_names.assign(header.begin() + 1, header.end() - 1);
  const std::size_t width = m.column_names.size();

  std::vector<std::vector<double>> rows;
  std::vector<std::string> label_names;
  std::vector<std::string> fields;
  bool any_id = false;
  while (csv::read_row(in, fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != width + 2) {
      throw Error(ErrorCode::SchemaMismatch, "row width differs from header in " + path.string());
    }
    std::vector<double> row(width);
    for (std::size_t j = 0; j < width; ++j) {
      const char* s = fields[j + 1].c_str();
      char* end = nullptr;
      row[j] = std::strtod(s, &end);
      if (end == s || *end != '\0') {
        throw Error(ErrorCode::SchemaMismatch, "non-numeric value '" + fields[j + 1] + "'");
      }
    }
    any_id = any_id || !fields.front().empty();
    m.sample_ids.push_back(fields.front());
    label_names.push_back(fields.back());
    rows.push_back(std::move(row));
  }
  if (!any_id) m.sample_ids.clear();

  if (class_names.empty()) {
    std::set<std::string> distinct(label_names.begin(), label_names.end());
    m.class_names.assign(distinct.begin(), distinct.end());
  } else {
    m.class_names = class_names;
  }
  for (const auto& name : label_names) {
    auto it = std::find(m.class_names.begin(), m.class_names.end(), name);
    if (it == m.class_names.end()) {
      throw Error(ErrorCode::SchemaMismatch, "unknown class label '" + name + "'");
    }
    m.labels.push_back(static_cast<int>(it - m.class_names.begin()));
  }
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

// ---------------------------------------------------------------------------

Normalizer Normalizer::fit(const Eigen::MatrixXd& x) {
  Normalizer n;
  if (x.rows() == 0) {
    n.lo = Eigen::VectorXd::Zero(x.cols());
    n.hi = Eigen::VectorXd::Zero(x.cols());
    return n;
  }
  n.lo = x.colwise().minCoeff().transpose();
  n.hi = x.colwise().maxCoeff().transpose();
  return n;
}

Eigen::VectorXd Normalizer::apply(const Eigen::VectorXd& v) const {
  if (v.size() != lo.size()) {
    throw Error(ErrorCode::DimensionMismatch, "normalizer width differs from input");
  }
  Eigen::VectorXd out(v.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    const double span = hi(j) - lo(j);
    out(j) = span > 0.0 ? std::clamp((v(j) - lo(j)) / span, 0.0, 1.0) : 0.0;
  }
  return out;
}

Eigen::MatrixXd Normalizer::apply(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.row(i) = apply(Eigen::VectorXd(x.row(i).transpose())).transpose();
  }
  return out;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace endoscan
