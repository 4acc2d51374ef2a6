#include "resfcn/data.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "resfcn/errors.hpp"

namespace resfcn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Synthetic EM-like data

std::size_t synthetic_site_count(std::size_t size) {
  return std::max<std::size_t>(4, size * size / 180);
}

namespace {

Sample synth_one(std::uint64_t seed, std::size_t index, std::size_t size) {
  Rng rng(derive_seed(seed, {0x5e17, index}));
  const std::size_t sites = synthetic_site_count(size);
  std::uniform_real_distribution<double> pos(0.0, static_cast<double>(size));
  std::vector<double> sy(sites), sx(sites), shade(sites);
  for (std::size_t k = 0; k < sites; ++k) {
    sy[k] = pos(rng);
    sx[k] = pos(rng);
    shade[k] = 0.55 + 0.35 * uniform01(rng);
  }

  const std::size_t n = size * size;
  std::vector<std::size_t> cell(n);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      double best = 1e300;
      std::size_t arg = 0;
      for (std::size_t k = 0; k < sites; ++k) {
        const double d = (i + 0.5 - sy[k]) * (i + 0.5 - sy[k]) + (j + 0.5 - sx[k]) * (j + 0.5 - sx[k]);
        if (d < best) {
          best = d;
          arg = k;
        }
      }
      cell[i * size + j] = arg;
    }
  }

  // Thin bands mark only the lower/right side of a boundary (1 px); thick
  // bands mark both sides (2 px).
  const bool thick = uniform01(rng) < 0.5;
  std::vector<double> mask(n, 1.0);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const std::size_t p = i * size + j;
      bool edge = (i + 1 < size && cell[p + size] != cell[p]) || (j + 1 < size && cell[p + 1] != cell[p]);
      if (thick) edge = edge || (i > 0 && cell[p - size] != cell[p]) || (j > 0 && cell[p - 1] != cell[p]);
      if (edge) mask[p] = 0.0;
    }
  }

  std::vector<double> raw(n);
  for (std::size_t p = 0; p < n; ++p) raw[p] = mask[p] > 0.0 ? shade[cell[p]] : 0.12;
  std::vector<double> image(n);
  const double fy = 0.5 + uniform01(rng), fx = 0.5 + uniform01(rng), phase = 6.283185307179586 * uniform01(rng);
  std::normal_distribution<double> noise(0.0, 0.06);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      double s = 0.0;
      int count = 0;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
          if (ii < 0 || jj < 0 || ii >= static_cast<long>(size) || jj >= static_cast<long>(size)) continue;
          s += raw[ii * size + jj];
          ++count;
        }
      }
      const double texture =
          0.06 * std::sin(fy * 0.4 * static_cast<double>(i) + fx * 0.4 * static_cast<double>(j) + phase);
      image[i * size + j] = std::clamp(s / count + texture + noise(rng), 0.0, 1.0);
    }
  }
  return Sample{Tensor(Shape{1, size, size}, std::move(image)), Tensor(Shape{1, size, size}, std::move(mask))};
}

}  // namespace

std::vector<Sample> generate_synthetic_em(std::uint64_t seed, std::size_t count, std::size_t size) {
  if (size < 16 || (size & (size - 1)) != 0) {
    throw ConfigError("synthetic sample size must be a power of two >= 16, got " + std::to_string(size));
  }
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(synth_one(seed, k, size));
  return out;
}

// ---------------------------------------------------------------------------
// PGM

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string ignored;
        std::getline(in, ignored);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t += c;
    }
    return t;
  };
  if (token() != "P5") throw IoError(path + ": not a binary PGM (P5) file");
  GrayImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    const unsigned long maxval = std::stoul(token());
    if (maxval != 255) throw IoError(path + ": only 8-bit PGM (maxval 255) is supported");
  } catch (const std::logic_error&) {
    throw IoError(path + ": malformed PGM header");
  }
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw IoError(path + ": truncated PGM pixel data");
  }
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path);
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing image " + path);
}

std::vector<Sample> load_image_stack(const std::string& dir, const std::string& pattern) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir);
  const fs::path images = fs::path(dir) / "images";
  const fs::path masks = fs::path(dir) / "masks";
  std::vector<std::string> names;
  if (fs::is_directory(images)) {
    for (const auto& entry : fs::directory_iterator(images)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      if (::fnmatch(pattern.c_str(), name.c_str(), 0) == 0) names.push_back(name);
    }
  }
  std::sort(names.begin(), names.end());

  std::vector<Sample> out;
  for (const std::string& name : names) {
    const fs::path mask_path = masks / name;
    if (!fs::exists(mask_path)) {
      throw IoError("image " + (images / name).string() + " has no mask at " + mask_path.string());
    }
    const GrayImage img = read_pgm((images / name).string());
    const GrayImage msk = read_pgm(mask_path.string());
    if (img.height != msk.height || img.width != msk.width) {
      throw IoError("size mismatch between " + (images / name).string() + " and " + mask_path.string());
    }
    std::vector<double> iv(img.pixels.size()), mv(msk.pixels.size());
    for (std::size_t i = 0; i < iv.size(); ++i) {
      iv[i] = img.pixels[i] / 255.0;
      mv[i] = msk.pixels[i] / 255.0 >= 0.5 ? 1.0 : 0.0;
    }
    out.push_back(Sample{Tensor(Shape{1, img.height, img.width}, std::move(iv)),
                         Tensor(Shape{1, msk.height, msk.width}, std::move(mv))});
  }
  return out;
}

void write_image_stack(const std::string& dir, const std::vector<Sample>& samples) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  fs::create_directories(fs::path(dir) / "masks", ec);
  if (ec) throw IoError("cannot create dataset directory " + dir + ": " + ec.message());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04zu.pgm", k);
    const Sample& s = samples[k];
    GrayImage img{s.height(), s.width(), {}}, msk{s.height(), s.width(), {}};
    for (double v : s.image.data()) {
      img.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
    for (double v : s.mask.data()) msk.pixels.push_back(v >= 0.5 ? 255 : 0);
    write_pgm((fs::path(dir) / "images" / name).string(), img);
    write_pgm((fs::path(dir) / "masks" / name).string(), msk);
  }
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

struct Plane {
  std::size_t h, w;
  const double* v;

  double at(long i, long j) const {
    i = std::clamp<long>(i, 0, static_cast<long>(h) - 1);
    j = std::clamp<long>(j, 0, static_cast<long>(w) - 1);
    return v[i * static_cast<long>(w) + j];
  }
  double sample(double y, double x, Interp interp) const {
    if (interp == Interp::kNearest) return at(std::lround(y), std::lround(x));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const long i0 = static_cast<long>(std::floor(y)), j0 = static_cast<long>(std::floor(x));
    const double ty = y - i0, tx = x - j0;
    return (1 - ty) * ((1 - tx) * at(i0, j0) + tx * at(i0, j0 + 1)) +
           ty * ((1 - tx) * at(i0 + 1, j0) + tx * at(i0 + 1, j0 + 1));
  }
};

// Smooth displacement at pixel (i, j) from a grid x grid control lattice.
double lattice(const std::vector<double>& d, std::size_t grid, double fy, double fx) {
  const double gy = fy * (grid - 1), gx = fx * (grid - 1);
  const std::size_t i0 = std::min<std::size_t>(static_cast<std::size_t>(gy), grid - 2);
  const std::size_t j0 = std::min<std::size_t>(static_cast<std::size_t>(gx), grid - 2);
  const double ty = gy - i0, tx = gx - j0;
  return (1 - ty) * ((1 - tx) * d[i0 * grid + j0] + tx * d[i0 * grid + j0 + 1]) +
         ty * ((1 - tx) * d[(i0 + 1) * grid + j0] + tx * d[(i0 + 1) * grid + j0 + 1]);
}

Tensor apply_warp(const Tensor& t, const Warp& warp, Interp interp) {
  if (t.ndim() != 3 || t.dim(0) != 1) {
    throw DimensionError("augmentation expects a 1 x H x W plane, got " + shape_string(t.shape()));
  }
  const std::size_t h = t.dim(1), w = t.dim(2);
  const Plane src{h, w, t.data().data()};
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  std::vector<double> out(h * w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double y = static_cast<double>(i), x = static_cast<double>(j);
      double sy = y, sx = x;
      switch (warp.kind) {
        case Warp::Kind::kFlipH: sx = (w - 1) - x; break;
        case Warp::Kind::kFlipV: sy = (h - 1) - y; break;
        case Warp::Kind::kRot90:
          for (int q = 0; q < warp.quarter_turns; ++q) {
            // one counter-clockwise quarter turn of the source grid (square planes)
            const double ny = sx, nx = (w - 1) - sy;
            sy = ny;
            sx = nx;
          }
          break;
        case Warp::Kind::kRotate: {
          const double c = std::cos(warp.amount), s = std::sin(warp.amount);
          sy = cy + c * (y - cy) - s * (x - cx);
          sx = cx + s * (y - cy) + c * (x - cx);
          break;
        }
        case Warp::Kind::kShearX: sx = x + warp.amount * (y - cy); break;
        case Warp::Kind::kShearY: sy = y + warp.amount * (x - cx); break;
        case Warp::Kind::kElastic: {
          const double fy = h > 1 ? y / (h - 1) : 0.0, fx = w > 1 ? x / (w - 1) : 0.0;
          sy = y + lattice(warp.dy, warp.grid, fy, fx);
          sx = x + lattice(warp.dx, warp.grid, fy, fx);
          break;
        }
      }
      out[i * w + j] = src.sample(sy, sx, interp);
    }
  }
  return Tensor(t.shape(), std::move(out));
}

}  // namespace

std::vector<Warp> draw_warps(Rng& rng, const AugmentFlags& flags, std::size_t height, std::size_t width) {
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  std::vector<Warp> warps;
  auto coin = [&] { return uniform01(rng) < 0.5; };
  auto make = [](Warp::Kind kind, int turns = 0, double amount = 0.0) {
    Warp w;
    w.kind = kind;
    w.quarter_turns = turns;
    w.amount = amount;
    return w;
  };
  if (flags.flip) {
    if (coin()) warps.push_back(make(Warp::Kind::kFlipH));
    if (coin()) warps.push_back(make(Warp::Kind::kFlipV));
  }
  if (flags.rotate90 && coin()) {
    const int turns = 1 + static_cast<int>(uniform01(rng) * 3.0);
    // odd turns would swap the sides of a non-square plane
    warps.push_back(make(Warp::Kind::kRot90, height == width ? std::min(turns, 3) : 2));
  }
  if (flags.rotate_small && coin()) {
    warps.push_back(make(Warp::Kind::kRotate, 0, (uniform01(rng) * 30.0 - 15.0) * kDeg));
  }
  if (flags.shear && coin()) {
    const double tangent = std::tan((uniform01(rng) * 20.0 - 10.0) * kDeg);
    warps.push_back(make(coin() ? Warp::Kind::kShearX : Warp::Kind::kShearY, 0, tangent));
  }
  if (flags.elastic && coin()) {
    Warp e = make(Warp::Kind::kElastic);
    e.grid = 4;
    const double sigma = 0.03 * static_cast<double>(std::min(height, width));
    std::normal_distribution<double> d(0.0, sigma);
    e.dy.resize(e.grid * e.grid);
    e.dx.resize(e.grid * e.grid);
    for (auto& v : e.dy) v = d(rng);
    for (auto& v : e.dx) v = d(rng);
    warps.push_back(std::move(e));
  }
  return warps;
}

Tensor apply_warps(const Tensor& plane, const std::vector<Warp>& warps, Interp interp) {
  Tensor t = plane;
  for (const Warp& w : warps) t = apply_warp(t, w, interp);
  return t;
}

Sample augment_sample(const Sample& s, Rng& rng, const AugmentFlags& flags) {
  if (!flags.any()) return s;
  const auto warps = draw_warps(rng, flags, s.height(), s.width());
  if (warps.empty()) return s;
  return Sample{apply_warps(s.image, warps, Interp::kBilinear), apply_warps(s.mask, warps, Interp::kNearest)};
}

DatasetSplit split_train_val(const std::vector<Sample>& samples, double train_ratio, std::uint64_t seed) {
  if (samples.size() < 2) throw ConfigError("split_train_val needs at least two samples");
  const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * samples.size()));
  if (n_train == 0 || n_train >= samples.size()) {
    throw ConfigError("train ratio " + std::to_string(train_ratio) + " leaves one side of a " +
                      std::to_string(samples.size()) + "-sample split empty");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0x5b17}));
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_train ? split.train : split.val).push_back(samples[order[k]]);
  }
  return split;
}

std::pair<Tensor, Tensor> stack_batch(const std::vector<Sample>& samples,
                                      const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DimensionError("stack_batch: empty batch");
  const std::size_t h = samples.at(indices[0]).height(), w = samples[indices[0]].width();
  std::vector<double> images, masks;
  images.reserve(indices.size() * h * w);
  masks.reserve(indices.size() * h * w);
  for (std::size_t idx : indices) {
    const Sample& s = samples.at(idx);
    if (s.height() != h || s.width() != w) throw DimensionError("stack_batch: samples differ in size");
    images.insert(images.end(), s.image.data().begin(), s.image.data().end());
    masks.insert(masks.end(), s.mask.data().begin(), s.mask.data().end());
  }
  return {Tensor(Shape{indices.size(), 1, h, w}, std::move(images)),
          Tensor(Shape{indices.size(), 1, h, w}, std::move(masks))};
}

}  // namespace resfcn
