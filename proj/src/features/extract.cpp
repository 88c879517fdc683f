#include <fstream>
#include <sstream>
#include <unordered_map>

#include "../csv.hpp"
#include "endoscan/features.hpp"

namespace endoscan {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Presets and validation

FeatureSpec FeatureSpec::selected() {
  FeatureSpec s;
  s.lbp_radii = {1, 2, 3, 4, 5};
  s.tamura = true;
  s.edge_hist_bins = 8;
  s.color_layout = ColorLayout{};
  s.acc = Acc{};
  s.gabor = Gabor{};
  s.cedd = true;
  s.fcth = Fcth{};
  s.jcd = true;
  return s;
}

FeatureSpec FeatureSpec::full() {
  FeatureSpec s = selected();
  s.ltp = Ltp{};
  s.clbp_radius = 1;
  s.dlbp = Dlbp{};
  s.rilbp = RiLbp{};
  s.glcm = GlcmParams{};
  s.phog = Phog{};
  s.color_hist = ColorHist{};
  return s;
}

FeatureSpec FeatureSpec::preset(const std::string& name) {
  if (name == "selected" || name == "default") return selected();
  if (name == "full") return full();
  std::ifstream in(name);
  if (!in) throw Error(ErrorCode::ConfigError, "unknown feature spec '" + name + "'");
  FeatureSpec s;
  try {
    s = json::parse(in).get<FeatureSpec>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, "bad feature spec " + name + ": " + e.what());
  }
  s.validate();
  return s;
}

void FeatureSpec::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::InvalidParameters, "feature spec: " + what);
  };
  for (int r : lbp_radii) require(r >= 1, "LBP radii must be >= 1");
  require(lbp_points == kLbpNeighbors, "LBP supports P = 8 only");
  if (ltp) require(ltp->radius >= 1 && ltp->band >= 0, "LTP needs radius >= 1 and band >= 0");
  if (clbp_radius) require(*clbp_radius >= 1, "CLBP radius must be >= 1");
  if (dlbp) {
    require(dlbp->radius >= 1, "DLBP radius must be >= 1");
    require(dlbp->coverage > 0.0 && dlbp->coverage <= 1.0, "DLBP coverage must lie in (0,1]");
    for (std::size_t i = 0; i < dlbp->patterns.size(); ++i) {
      require(dlbp->patterns[i] >= 0 && dlbp->patterns[i] < kLbpBins, "DLBP patterns must be 8-bit codes");
      require(i == 0 || dlbp->patterns[i - 1] < dlbp->patterns[i], "DLBP patterns must be strictly ascending");
    }
  }
  if (rilbp) require(rilbp->points == kLbpNeighbors && rilbp->radius >= 1, "RILBP needs P = 8 and R >= 1");
  if (glcm) require(glcm->distance >= 1 && glcm->levels >= 2 && glcm->levels <= 256, "GLCM needs distance >= 1 and 2..256 levels");
  if (edge_hist_bins) require(*edge_hist_bins >= 2, "edge histogram needs at least 2 bins");
  if (phog) require(phog->levels >= 0 && phog->levels <= 6 && phog->bins >= 2, "PHOG needs 0..6 levels and >= 2 bins");
  if (color_layout) {
    require(color_layout->grid_x >= 1 && color_layout->grid_y >= 1, "color layout grid must be >= 1");
    require(color_layout->levels >= 2 && color_layout->levels <= 16, "color layout levels must be in [2,16]");
  }
  if (color_hist) require(color_hist->bins >= 2 && color_hist->bins <= 16, "color histogram bins must be in [2,16]");
  if (acc) {
    require(!acc->distances.empty(), "correlogram needs distances");
    for (int k : acc->distances) require(k >= 1, "correlogram distances must be >= 1");
    require(acc->levels >= 2 && acc->levels <= 16, "correlogram levels must be in [2,16]");
  }
  if (gabor) {
    require(!gabor->bank.empty() && gabor->max_side >= 1, "Gabor needs a filter bank and max_side >= 1");
    for (const auto& f : gabor->bank) {
      require(f.sigma > 0.0 && f.frequency > 0.0 && f.gamma > 0.0, "Gabor needs sigma, frequency, gamma > 0");
    }
  }
  if (fcth) require(fcth->grid >= 1, "FCTH grid must be >= 1");
}

int FeatureSpec::min_image_side() const {
  int side = 1;
  auto need = [&side](int s) { side = std::max(side, s); };
  for (int r : lbp_radii) need(2 * r + 1);
  if (ltp) need(2 * ltp->radius + 1);
  if (clbp_radius) need(2 * *clbp_radius + 1);
  if (dlbp) need(2 * dlbp->radius + 1);
  if (rilbp) need(2 * rilbp->radius + 1);
  if (glcm) need(glcm->distance + 1);
  if (tamura) need(8);
  if (edge_hist_bins) need(kMinDescriptorSide);
  if (phog) need(std::max(kMinDescriptorSide, 1 << phog->levels));
  if (color_layout) need(std::max(color_layout->grid_x, color_layout->grid_y));
  if (cedd || jcd) need(kMinDescriptorSide);
  if (fcth) need(std::max(kMinDescriptorSide, fcth->grid));
  return side;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const char* to_key(DlbpMode m) { return m == DlbpMode::Pooled ? "pooled" : "union"; }
const char* to_key(ColorSpace s) { return s == ColorSpace::RGB ? "rgb" : "hsv"; }
const char* to_key(DistanceMetric m) { return m == DistanceMetric::Chebyshev ? "chebyshev" : "manhattan"; }

template <typename Enum>
Enum enum_from(const json& j, std::initializer_list<std::pair<const char*, Enum>> options) {
  const auto s = j.get<std::string>();
  for (const auto& [key, value] : options) {
    if (s == key) return value;
  }
  throw Error(ErrorCode::ConfigError, "unknown option '" + s + "'");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw Error(ErrorCode::ConfigError, "unknown feature spec key '" + key + "'");
    }
  }
}

}  // namespace

void to_json(json& j, const FeatureSpec& s) {
  j = json::object();
  j["lbp"] = {{"radii", s.lbp_radii}, {"points", s.lbp_points}};
  if (s.ltp) j["ltp"] = {{"radius", s.ltp->radius}, {"band", s.ltp->band}};
  if (s.clbp_radius) j["clbp"] = {{"radius", *s.clbp_radius}};
  if (s.dlbp) {
    j["dlbp"] = {{"radius", s.dlbp->radius}, {"coverage", s.dlbp->coverage},
                 {"mode", to_key(s.dlbp->mode)}, {"patterns", s.dlbp->patterns}};
  }
  if (s.rilbp) j["rilbp"] = {{"points", s.rilbp->points}, {"radius", s.rilbp->radius}};
  if (s.glcm) j["glcm"] = {{"distance", s.glcm->distance}, {"levels", s.glcm->levels}};
  if (s.tamura) j["tamura"] = true;
  if (s.edge_hist_bins) j["edge_hist"] = {{"bins", *s.edge_hist_bins}};
  if (s.phog) j["phog"] = {{"levels", s.phog->levels}, {"bins", s.phog->bins}};
  if (s.color_layout) {
    j["color_layout"] = {{"grid_x", s.color_layout->grid_x}, {"grid_y", s.color_layout->grid_y},
                         {"levels", s.color_layout->levels}};
  }
  if (s.color_hist) j["color_hist"] = {{"space", to_key(s.color_hist->space)}, {"bins", s.color_hist->bins}};
  if (s.acc) {
    j["acc"] = {{"distances", s.acc->distances}, {"levels", s.acc->levels}, {"metric", to_key(s.acc->metric)}};
  }
  if (s.gabor) {
    json bank = json::array();
    for (const auto& f : s.gabor->bank) {
      bank.push_back({{"sigma", f.sigma}, {"frequency", f.frequency}, {"gamma", f.gamma}, {"theta", f.theta}});
    }
    j["gabor"] = {{"bank", bank}, {"max_side", s.gabor->max_side}};
  }
  if (s.cedd) j["cedd"] = true;
  if (s.fcth) j["fcth"] = {{"grid", s.fcth->grid}};
  if (s.jcd) j["jcd"] = true;
  if (s.external) j["external"] = *s.external;
}

void from_json(const json& j, FeatureSpec& s) {
  check_keys(j, {"lbp", "ltp", "clbp", "dlbp", "rilbp", "glcm", "tamura", "edge_hist", "phog", "color_layout",
                 "color_hist", "acc", "gabor", "cedd", "fcth", "jcd", "external"});
  s = FeatureSpec{};
  if (j.contains("lbp")) {
    const auto& b = j["lbp"];
    check_keys(b, {"radii", "points"});
    s.lbp_radii = b.value("radii", std::vector<int>{});
    s.lbp_points = b.value("points", 8);
  }
  if (j.contains("ltp")) {
    const auto& b = j["ltp"];
    check_keys(b, {"radius", "band"});
    s.ltp = FeatureSpec::Ltp{b.value("radius", 1), b.value("band", 5)};
  }
  if (j.contains("clbp")) {
    check_keys(j["clbp"], {"radius"});
    s.clbp_radius = j["clbp"].value("radius", 1);
  }
  if (j.contains("dlbp")) {
    const auto& b = j["dlbp"];
    check_keys(b, {"radius", "coverage", "mode", "patterns"});
    FeatureSpec::Dlbp d;
    d.radius = b.value("radius", 1);
    d.coverage = b.value("coverage", 0.8);
    if (b.contains("mode")) d.mode = enum_from(b["mode"], {std::pair{"pooled", DlbpMode::Pooled}, std::pair{"union", DlbpMode::Union}});
    d.patterns = b.value("patterns", std::vector<int>{});
    s.dlbp = d;
  }
  if (j.contains("rilbp")) {
    const auto& b = j["rilbp"];
    check_keys(b, {"points", "radius"});
    s.rilbp = FeatureSpec::RiLbp{b.value("points", 8), b.value("radius", 1)};
  }
  if (j.contains("glcm")) {
    const auto& b = j["glcm"];
    check_keys(b, {"distance", "levels"});
    s.glcm = FeatureSpec::GlcmParams{b.value("distance", 1), b.value("levels", 8)};
  }
  s.tamura = j.value("tamura", false);
  if (j.contains("edge_hist")) {
    check_keys(j["edge_hist"], {"bins"});
    s.edge_hist_bins = j["edge_hist"].value("bins", 8);
  }
  if (j.contains("phog")) {
    const auto& b = j["phog"];
    check_keys(b, {"levels", "bins"});
    s.phog = FeatureSpec::Phog{b.value("levels", 2), b.value("bins", 8)};
  }
  if (j.contains("color_layout")) {
    const auto& b = j["color_layout"];
    check_keys(b, {"grid_x", "grid_y", "levels"});
    s.color_layout = FeatureSpec::ColorLayout{b.value("grid_x", 4), b.value("grid_y", 4), b.value("levels", 2)};
  }
  if (j.contains("color_hist")) {
    const auto& b = j["color_hist"];
    check_keys(b, {"space", "bins"});
    FeatureSpec::ColorHist c;
    if (b.contains("space")) c.space = enum_from(b["space"], {std::pair{"rgb", ColorSpace::RGB}, std::pair{"hsv", ColorSpace::HSV}});
    c.bins = b.value("bins", 4);
    s.color_hist = c;
  }
  if (j.contains("acc")) {
    const auto& b = j["acc"];
    check_keys(b, {"distances", "levels", "metric"});
    FeatureSpec::Acc a;
    a.distances = b.value("distances", a.distances);
    a.levels = b.value("levels", 4);
    if (b.contains("metric")) {
      a.metric = enum_from(b["metric"], {std::pair{"chebyshev", DistanceMetric::Chebyshev},
                                         std::pair{"manhattan", DistanceMetric::Manhattan}});
    }
    s.acc = a;
  }
  if (j.contains("gabor")) {
    const auto& b = j["gabor"];
    check_keys(b, {"bank", "max_side"});
    FeatureSpec::Gabor g;
    if (b.contains("bank")) {
      g.bank.clear();
      for (const auto& f : b["bank"]) {
        check_keys(f, {"sigma", "frequency", "gamma", "theta"});
        g.bank.push_back({f.value("sigma", 1.0), f.value("frequency", 0.25), f.value("gamma", 0.5), f.value("theta", 0.0)});
      }
    }
    g.max_side = b.value("max_side", 64);
    s.gabor = g;
  }
  s.cedd = j.value("cedd", false);
  if (j.contains("fcth")) {
    check_keys(j["fcth"], {"grid"});
    s.fcth = FeatureSpec::Fcth{j["fcth"].value("grid", 2)};
  }
  s.jcd = j.value("jcd", false);
  if (j.contains("external")) s.external = j["external"].get<std::string>();
}

// ---------------------------------------------------------------------------
// Extraction

FeatureVector extract_all(const Image& img, const FeatureSpec& spec) {
  const int side = spec.min_image_side();
  if (img.width < side || img.height < side) {
    throw Error(ErrorCode::ImageTooSmall, "image is " + std::to_string(img.width) + "x" +
                                              std::to_string(img.height) + ", spec needs " +
                                              std::to_string(side) + "x" + std::to_string(side));
  }
  if (spec.dlbp && !spec.dlbp->patterns.size()) {
    throw Error(ErrorCode::NotFitted, "DLBP block has no dominant pattern set");
  }
  const GrayImage gray = to_gray(img);
  const bool need_grad = spec.tamura || spec.edge_hist_bins || spec.phog || spec.cedd || spec.fcth || spec.jcd;
  const Gradients grad = need_grad ? sobel(gray) : Gradients{};

  FeatureVector v;
  for (int r : spec.lbp_radii) v.append(lbp_histogram(gray, r, spec.lbp_points));
  if (spec.ltp) v.append(ltp_histograms(gray, spec.ltp->radius, spec.ltp->band));
  if (spec.clbp_radius) v.append(clbp(gray, *spec.clbp_radius));
  if (spec.dlbp) {
    DominantPatterns set{spec.dlbp->coverage, spec.dlbp->patterns};
    v.append(dlbp_project(lbp_histogram(gray, spec.dlbp->radius).values, set).vector);
  }
  if (spec.rilbp) v.append(rilbp_histogram(gray, spec.rilbp->points, spec.rilbp->radius));
  if (spec.glcm) v.append(haralick(glcm(gray, spec.glcm->distance, spec.glcm->levels)));
  if (spec.tamura) v.append(tamura(gray, grad));
  if (spec.edge_hist_bins) v.append(edge_histogram(grad, *spec.edge_hist_bins));
  if (spec.phog) v.append(phog(grad, spec.phog->levels, spec.phog->bins));
  if (spec.color_layout) {
    v.append(color_layout(img, spec.color_layout->grid_x, spec.color_layout->grid_y, spec.color_layout->levels));
  }
  if (spec.color_hist) v.append(color_histogram(img, spec.color_hist->space, spec.color_hist->bins));
  if (spec.acc) v.append(auto_color_correlogram(img, spec.acc->distances, spec.acc->levels, spec.acc->metric));
  if (spec.gabor) v.append(gabor_features(gray, spec.gabor->bank, spec.gabor->max_side));
  // The composite blocks share their pieces.
  FeatureVector cedd_block, fcth_block;
  if (spec.cedd || spec.jcd) cedd_block = cedd(img, grad);
  if (spec.fcth || spec.jcd) fcth_block = fcth(img, gray, grad, spec.fcth ? spec.fcth->grid : 2);
  if (spec.cedd) v.append(cedd_block);
  if (spec.fcth) v.append(fcth_block);
  if (spec.jcd) {
    FeatureVector j = cedd_block;
    j.append(spec.fcth && spec.fcth->grid != 2 ? fcth(img, gray, grad, 2) : fcth_block);
    for (auto& n : j.names) n = "jcd_" + n;
    v.append(j);
  }
  return v;
}

FeatureVector extract_all(const Image& img, const FeatureSpec& spec, const Normalizer& norm) {
  auto v = extract_all(img, spec);
  if (!norm.empty()) v.values = norm.apply(v.values);
  return v;
}

std::vector<FeatureBlock> feature_schema(const FeatureSpec& spec) {
  std::vector<FeatureBlock> blocks;
  Eigen::Index offset = 0;
  auto add = [&](const std::string& name, Eigen::Index size) {
    blocks.push_back({name, offset, size});
    offset += size;
  };
  for (int r : spec.lbp_radii) add("lbp_r" + std::to_string(r), kLbpBins);
  if (spec.ltp) add("ltp", 2 * kLbpBins);
  if (spec.clbp_radius) add("clbp", 2 * kLbpBins);
  if (spec.dlbp) add("dlbp", static_cast<Eigen::Index>(spec.dlbp->patterns.size()));
  if (spec.rilbp) add("rilbp", static_cast<Eigen::Index>(rotation_classes().size()));
  if (spec.glcm) add("haralick", 4 * kHaralickStats);
  if (spec.tamura) add("tamura", 3);
  if (spec.edge_hist_bins) add("edge_hist", *spec.edge_hist_bins);
  if (spec.phog) {
    Eigen::Index cells = 0;
    for (int l = 0; l <= spec.phog->levels; ++l) cells += Eigen::Index{1} << (2 * l);
    add("phog", cells * spec.phog->bins);
  }
  if (spec.color_layout) {
    const auto& c = *spec.color_layout;
    add("color_layout", static_cast<Eigen::Index>(c.grid_x) * c.grid_y * c.levels * c.levels * c.levels);
  }
  if (spec.color_hist) add("color_hist", spec.color_hist->bins * spec.color_hist->bins * spec.color_hist->bins);
  if (spec.acc) {
    add("acc", static_cast<Eigen::Index>(spec.acc->distances.size()) * spec.acc->levels * spec.acc->levels *
                   spec.acc->levels);
  }
  if (spec.gabor) add("gabor", 2 * static_cast<Eigen::Index>(spec.gabor->bank.size()));
  if (spec.cedd) add("cedd", 4 * kCompositeBins);
  if (spec.fcth) add("fcth", kCompositeBins * kCompositeBins);
  if (spec.jcd) add("jcd", 4 * kCompositeBins + kCompositeBins * kCompositeBins);
  return blocks;
}

Eigen::Index feature_dimension(const FeatureSpec& spec) {
  const auto blocks = feature_schema(spec);
  return blocks.empty() ? 0 : blocks.back().offset + blocks.back().size;
}

std::vector<std::string> feature_names(const FeatureSpec& spec) {
  // Names do not depend on pixel values; extract once from a blank image.
  const int side = spec.min_image_side();
  return extract_all(Image(side, side), spec).names;
}

json schema_document(const FeatureSpec& spec) {
  json blocks = json::array();
  for (const auto& b : feature_schema(spec)) {
    blocks.push_back({{"name", b.name}, {"offset", b.offset}, {"size", b.size}});
  }
  return {{"version", 1}, {"spec", spec}, {"dimension", feature_dimension(spec)}, {"blocks", blocks}};
}

// ---------------------------------------------------------------------------
// Corpus extraction

namespace {

ExternalColumns load_external_columns(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open external features " + path.string());
  std::vector<std::string> header;
  if (!csv::read_row(in, header) || header.empty() || header[0] != "sample") {
    throw Error(ErrorCode::SchemaMismatch, "external feature file must start with a 'sample' column");
  }
  ExternalColumns out;
  out.names.assign(header.begin() + 1, header.end());
  const auto width = out.names.size();
  std::unordered_map<std::string, std::vector<double>> rows;
  std::vector<std::string> fields;
  std::size_t line = 1;
  while (csv::read_row(in, fields)) {
    ++line;
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != width + 1) {
      throw Error(ErrorCode::DimensionDrift, path.string() + " line " + std::to_string(line) + " has " +
                                                std::to_string(fields.size() - 1) + " values, expected " +
                                                std::to_string(width));
    }
    std::vector<double> values(width);
    for (std::size_t i = 0; i < width; ++i) {
      try {
        values[i] = std::stod(fields[i + 1]);
      } catch (const std::exception&) {
        throw Error(ErrorCode::SchemaMismatch, path.string() + " line " + std::to_string(line) + ": bad number");
      }
    }
    rows[fields[0]] = std::move(values);
  }
  out.values.resize(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto it = rows.find(ids[r]);
    if (it == rows.end()) throw Error(ErrorCode::MissingSample, "external features lack sample " + ids[r]);
    for (std::size_t c = 0; c < width; ++c) {
      out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = it->second[c];
    }
  }
  return out;
}

void append_external(FeatureMatrix& m, const FeatureSpec& spec, const std::vector<std::string>& ids) {
  if (!spec.external) return;
  const auto ext = load_external_columns(*spec.external, ids);
  Eigen::MatrixXd joined(m.rows(), m.cols() + ext.values.cols());
  joined << m.values, ext.values;
  m.values = std::move(joined);
  for (const auto& n : ext.names) m.column_names.push_back("ext_" + n);
}

FeatureMatrix assemble(std::vector<FeatureVector>& rows, const FeatureSpec& spec) {
  FeatureMatrix m;
  m.column_names = rows.empty() ? feature_names(spec) : rows.front().names;
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.column_names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) m.values.row(static_cast<Eigen::Index>(i)) = rows[i].values.transpose();
  return m;
}

}  // namespace

ExternalColumns load_external_features(const std::filesystem::path& path, const Dataset& d) {
  std::vector<std::string> ids;
  for (const auto& s : d.samples) ids.push_back(s.path);
  return load_external_columns(path, ids);
}

FeatureMatrix extract_matrix(const Dataset& d, const FeatureSpec& spec, int jobs, const ImageTransform& transform) {
  spec.validate();
  std::vector<FeatureVector> rows(d.samples.size());
  parallel_for(d.samples.size(), jobs, [&](std::size_t i) {
    try {
      Image img = load_image(d.absolute(d.samples[i]));
      if (transform) img = transform(img);
      rows[i] = extract_all(img, spec);
    } catch (const Error& e) {
      throw Error(e.code(), d.samples[i].path + ": " + e.what());
    }
  });
  FeatureMatrix m = assemble(rows, spec);
  m.class_names = d.class_names;
  for (const auto& s : d.samples) {
    m.labels.push_back(s.label);
    m.sample_ids.push_back(s.path);
  }
  append_external(m, spec, m.sample_ids);
  return m;
}

FeatureMatrix extract_matrix(const std::vector<Image>& images, const std::vector<int>& labels,
                             const std::vector<std::string>& class_names,
                             const std::vector<std::string>& sample_ids, const FeatureSpec& spec, int jobs) {
  if (labels.size() != images.size() || (!sample_ids.empty() && sample_ids.size() != images.size())) {
    throw Error(ErrorCode::LengthMismatch, "images, labels and sample ids differ in length");
  }
  spec.validate();
  std::vector<FeatureVector> rows(images.size());
  parallel_for(images.size(), jobs, [&](std::size_t i) { rows[i] = extract_all(images[i], spec); });
  FeatureMatrix m = assemble(rows, spec);
  m.labels = labels;
  m.class_names = class_names;
  m.sample_ids = sample_ids;
  if (spec.external && sample_ids.empty()) {
    throw Error(ErrorCode::MissingSample, "external features need sample ids");
  }
  append_external(m, spec, sample_ids);
  return m;
}

FeatureSpec fit_spec(const Dataset& d, FeatureSpec spec, int jobs, const ImageTransform& transform) {
  if (!spec.dlbp || !spec.dlbp->patterns.empty()) return spec;
  std::vector<Eigen::VectorXd> hists(d.samples.size());
  parallel_for(d.samples.size(), jobs, [&](std::size_t i) {
    Image img = load_image(d.absolute(d.samples[i]));
    if (transform) img = transform(img);
    hists[i] = lbp_histogram(to_gray(img), spec.dlbp->radius).values;
  });
  spec.dlbp->patterns = dlbp_fit(hists, spec.dlbp->coverage, spec.dlbp->mode).patterns;
  return spec;
}

FeatureSpec fit_spec(const std::vector<Image>& images, FeatureSpec spec) {
  if (!spec.dlbp || !spec.dlbp->patterns.empty()) return spec;
  std::vector<Eigen::VectorXd> hists;
  for (const auto& img : images) hists.push_back(lbp_histogram(to_gray(img), spec.dlbp->radius).values);
  spec.dlbp->patterns = dlbp_fit(hists, spec.dlbp->coverage, spec.dlbp->mode).patterns;
  return spec;
}

}  // namespace endoscan
