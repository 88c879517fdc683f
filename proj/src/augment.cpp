#include "endoscan/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace endoscan {

namespace fs = std::filesystem;

std::size_t AugmentPlan::total_for_class(const Dataset& d, int label) const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    if (d.samples[i].label == label) total += 1 + copies.at(i);
  }
  return total;
}

std::vector<std::size_t> copies_for_class(std::size_t class_size, std::size_t largest_class,
                                          std::size_t max_images, BalancePolicy policy) {
  if (max_images < largest_class) {
    throw Error(ErrorCode::MaxTooSmall, "max_images is below the largest class size");
  }
  std::vector<std::size_t> copies(class_size, 0);
  if (class_size == 0) return copies;
  if (policy == BalancePolicy::Literal) {
    const std::size_t n = class_size * (max_images - 1) / largest_class;
    std::fill(copies.begin(), copies.end(), n);
    return copies;
  }
  // ceil(max / N) - 1 copies each, with the surplus trimmed from the tail so
  // the class lands exactly on max_images.
  const std::size_t needed = max_images - class_size;
  const std::size_t base = needed / class_size;
  const std::size_t extra = needed % class_size;
  for (std::size_t i = 0; i < class_size; ++i) copies[i] = base + (i < extra ? 1 : 0);
  return copies;
}

AugmentPlan plan_balancing(const Dataset& d, std::size_t max_images, BalancePolicy policy) {
  const auto counts = d.class_counts();
  const std::size_t largest = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  if (max_images < largest) {
    throw Error(ErrorCode::MaxTooSmall, "max_images is below the largest class size");
  }
  AugmentPlan plan;
  plan.target_per_class = max_images;
  plan.policy = policy;
  plan.copies.assign(d.samples.size(), 0);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const auto per_image = copies_for_class(counts[c], largest, max_images, policy);
    std::size_t k = 0;
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
      if (d.samples[i].label == static_cast<int>(c)) plan.copies[i] = per_image[k++];
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------

std::string to_string(const AugmentOp& op) {
  std::string name;
  switch (op.kind) {
    case AugmentKind::Rotate: name = "rotate"; break;
    case AugmentKind::HFlip: name = "hflip"; break;
    case AugmentKind::VFlip: name = "vflip"; break;
    case AugmentKind::Crop: name = "crop"; break;
    case AugmentKind::Resize: name = "resize"; break;
    case AugmentKind::Noise: name = "noise"; break;
  }
  if (op.param) name += "(" + std::to_string(*op.param) + ")";
  return name;
}

Image hflip(const Image& img) {
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

Image vflip(const Image& img) {
  Image out(img.width, img.height);
  const auto row = static_cast<std::size_t>(img.width) * 3;
  for (int y = 0; y < img.height; ++y) {
    std::copy_n(&img.data[y * row], row, &out.data[(img.height - 1 - y) * row]);
  }
  return out;
}

Image rotate(const Image& img, double degrees) {
  const double rad = degrees * M_PI / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  Image out(img.width, img.height, 0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      // inverse mapping, nearest sample
      const double dx = x - cx;
      const double dy = y - cy;
      const long sx = std::lround(cs * dx + sn * dy + cx);
      const long sy = std::lround(-sn * dx + cs * dy + cy);
      if (sx < 0 || sy < 0 || sx >= img.width || sy >= img.height) continue;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(static_cast<int>(sx), static_cast<int>(sy), c);
    }
  }
  return out;
}

Image resize_bilinear(const Image& img, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::ZeroDimension, "resize to empty image");
  if (width == img.width && height == img.height) return img;
  Image out(width, height);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1 - tx) + img.at(x1, y0, c) * tx;
        const double bot = img.at(x0, y1, c) * (1 - tx) + img.at(x1, y1, c) * tx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(top * (1 - ty) + bot * ty), 0L, 255L));
      }
    }
  }
  return out;
}

namespace {

int random_side(Rng& rng, int side) {
  const int lo = std::min(256, side);
  return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(side - lo + 1)));
}

}  // namespace

Image apply_augmentation(const Image& img, const AugmentOp& op, std::uint64_t seed) {
  Rng rng(seed);
  switch (op.kind) {
    case AugmentKind::Rotate:
      return rotate(img, op.param ? *op.param : uniform_real(rng, 0.0, 360.0));
    case AugmentKind::HFlip:
      return hflip(img);
    case AugmentKind::VFlip:
      return vflip(img);
    case AugmentKind::Crop: {
      if (img.width < kMinDescriptorSide || img.height < kMinDescriptorSide) {
        throw Error(ErrorCode::ImageTooSmall, "crop needs at least a 3x3 image");
      }
      const int w = random_side(rng, img.width);
      const int h = random_side(rng, img.height);
      const int x = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(img.width - w + 1)));
      const int y = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(img.height - h + 1)));
      Image out(w, h);
      for (int r = 0; r < h; ++r) {
        std::copy_n(&img.data[(static_cast<std::size_t>(y + r) * img.width + x) * 3],
                    static_cast<std::size_t>(w) * 3, &out.data[static_cast<std::size_t>(r) * w * 3]);
      }
      return out;
    }
    case AugmentKind::Resize: {
      const int w = random_side(rng, img.width);
      const int h = random_side(rng, img.height);
      return resize_bilinear(img, w, h);
    }
    case AugmentKind::Noise: {
      const double ratio = op.param ? *op.param : uniform_real(rng, 0.01, 0.10);
      if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw Error(ErrorCode::InvalidParameters, "noise ratio must lie in [0,1]");
      }
      Image out = img;
      const std::size_t n = img.pixel_count();
      const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t i = 0; i < count; ++i) {
        std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
        for (int c = 0; c < 3; ++c) {
          out.data[idx[i] * 3 + c] = static_cast<std::uint8_t>(uniform_index(rng, 256));
        }
      }
      return out;
    }
  }
  return img;
}

AugmentOp op_for_copy(std::size_t k) {
  static constexpr AugmentKind kCycle[] = {AugmentKind::Rotate, AugmentKind::HFlip,
                                           AugmentKind::VFlip,  AugmentKind::Crop,
                                           AugmentKind::Resize, AugmentKind::Noise};
  return {kCycle[k % std::size(kCycle)], std::nullopt};
}

// ---------------------------------------------------------------------------

Dataset resample_to_ratio(const Dataset& d, double ratio, std::uint64_t seed) {
  if (d.samples.empty()) throw Error(ErrorCode::EmptyDataset, "cannot resample an empty dataset");
  if (!(ratio >= 1.0)) throw Error(ErrorCode::InvalidParameters, "resampling ratio must be >= 1");
  const auto counts = d.class_counts();
  const std::size_t majority = *std::max_element(counts.begin(), counts.end());
  const auto target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(majority)));

  Dataset out{d.root, d.class_names, {}};
  Rng rng(seed);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::vector<Sample> members;
    for (const auto& s : d.samples) {
      if (s.label == static_cast<int>(c)) members.push_back(s);
    }
    out.samples.insert(out.samples.end(), members.begin(), members.end());
    if (members.empty()) continue;
    for (std::size_t k = members.size(); k < target; ++k) {
      out.samples.push_back(members[uniform_index(rng, members.size())]);
    }
  }
  return out;
}

std::vector<AugmentRecord> execute_plan(const Dataset& d, const AugmentPlan& plan,
                                        const fs::path& out_root, std::uint64_t seed) {
  if (plan.copies.size() != d.samples.size()) {
    throw Error(ErrorCode::LengthMismatch, "plan does not match the dataset");
  }
  std::vector<AugmentRecord> records;
  for (const auto& name : d.class_names) fs::create_directories(out_root / name);
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& s = d.samples[i];
    const fs::path src_rel(s.path);
    fs::copy_file(d.absolute(s), out_root / src_rel, fs::copy_options::overwrite_existing);
    if (plan.copies[i] == 0) continue;
    const Image img = load_image(d.absolute(s));
    const std::string stem = src_rel.stem().string();
    const std::string cls = d.class_names[static_cast<std::size_t>(s.label)];
    for (std::size_t k = 0; k < plan.copies[i]; ++k) {
      const std::uint64_t item_seed = derive_seed(derive_seed(seed, s.path), k);
      const AugmentOp op = op_for_copy(k);
      const std::string rel = cls + "/" + stem + "__aug" + std::to_string(k) + ".png";
      save_png(apply_augmentation(img, op, item_seed), out_root / rel);
      records.push_back({rel, s.path, to_string(op), item_seed});
    }
  }
  return records;
}

}  // namespace endoscan
