#include "resfcn/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "resfcn/errors.hpp"

namespace resfcn {

namespace {

using Color = std::array<std::uint8_t, 3>;
constexpr Color kGrey{200, 200, 200};
constexpr Color kBlack{0, 0, 0};
constexpr Color kBlue{31, 119, 180};
constexpr Color kOrange{255, 127, 14};

RgbImage blank(std::size_t h, std::size_t w) {
  RgbImage img;
  img.height = h;
  img.width = w;
  img.rgb.assign(h * w * 3, 255);
  return img;
}

void put(RgbImage& img, long y, long x, Color c) {
  if (y < 0 || x < 0 || y >= static_cast<long>(img.height) || x >= static_cast<long>(img.width)) return;
  std::uint8_t* p = &img.rgb[(static_cast<std::size_t>(y) * img.width + static_cast<std::size_t>(x)) * 3];
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

void line(RgbImage& img, long y0, long x0, long y1, long x1, Color c) {
  const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  for (;;) {
    put(img, y0, x0, c);
    put(img, y0 + 1, x0, c);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) { err += dy; x0 += sx; }
    if (e2 <= dx) { err += dx; y0 += sy; }
  }
}

struct Panel {
  long top, left, bottom, right;
  double lo, hi;
  int epochs;

  long px(int epoch) const {
    if (epochs <= 1) return left;
    return left + static_cast<long>(std::lround(static_cast<double>(epoch - 1) / (epochs - 1) * (right - left)));
  }
  long py(double v) const {
    const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    return bottom - static_cast<long>(std::lround(std::clamp(t, 0.0, 1.0) * static_cast<double>(bottom - top)));
  }
};

void frame(RgbImage& img, const Panel& p) {
  for (int k = 1; k < 4; ++k) {
    const long y = p.top + (p.bottom - p.top) * k / 4;
    for (long x = p.left; x <= p.right; ++x) put(img, y, x, kGrey);
  }
  line(img, p.top, p.left, p.bottom, p.left, kBlack);
  line(img, p.bottom, p.left, p.bottom, p.right, kBlack);
}

template <typename Get>
void curve(RgbImage& img, const Panel& p, const std::vector<EpochRecord>& h, Get get, Color c) {
  for (std::size_t i = 0; i < h.size(); ++i) {
    const long x = p.px(h[i].epoch), y = p.py(get(h[i]));
    if (i == 0) put(img, y, x, c);
    else line(img, p.py(get(h[i - 1])), p.px(h[i - 1].epoch), y, x, c);
  }
}

// Dark blue through teal to yellow.
Color ramp(double t) {
  static constexpr std::array<Color, 5> stops{
      {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  Color out;
  for (int k = 0; k < 3; ++k) {
    out[k] = static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  }
  return out;
}

}  // namespace

void write_ppm(const std::string& path, const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw IoError("failed writing image " + path);
}

RgbImage render_history_plot(const std::vector<EpochRecord>& history, std::size_t width, std::size_t height) {
  if (width < 64 || height < 64) throw ConfigError("plot must be at least 64x64 pixels");
  RgbImage img = blank(height, width);
  const int epochs = history.empty() ? 1 : history.back().epoch;
  const long margin = 20, w = static_cast<long>(width), h = static_cast<long>(height);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const EpochRecord& r : history) {
    lo = std::min({lo, r.train_loss, r.val_loss});
    hi = std::max({hi, r.train_loss, r.val_loss});
  }
  if (history.empty()) lo = 0.0, hi = 1.0;
  const Panel loss{margin, margin, h / 2 - margin / 2, w - margin, std::min(lo, 0.0), hi, epochs};
  const Panel acc{h / 2 + margin / 2, margin, h - margin, w - margin, 0.0, 1.0, epochs};
  frame(img, loss);
  frame(img, acc);
  curve(img, loss, history, [](const EpochRecord& r) { return r.train_loss; }, kBlue);
  curve(img, loss, history, [](const EpochRecord& r) { return r.val_loss; }, kOrange);
  curve(img, acc, history, [](const EpochRecord& r) { return r.train_acc; }, kBlue);
  curve(img, acc, history, [](const EpochRecord& r) { return r.val_acc; }, kOrange);
  return img;
}

RgbImage render_update_heatmap(const std::vector<UpdateRecord>& records, std::size_t cell) {
  if (cell == 0) throw ConfigError("heatmap cell size must be positive");
  std::map<int, std::size_t> depth_row, epoch_col;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const UpdateRecord& r : records) {
    depth_row.emplace(r.depth_index, 0);
    epoch_col.emplace(r.epoch, 0);
    if (r.mean_abs_update > 0.0) {
      const double v = std::log10(r.mean_abs_update);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::size_t k = 0;
  for (auto& [d, row] : depth_row) row = k++;
  k = 0;
  for (auto& [e, col] : epoch_col) col = k++;
  RgbImage img = blank(std::max<std::size_t>(1, depth_row.size()) * cell,
                       std::max<std::size_t>(1, epoch_col.size()) * cell);
  for (const UpdateRecord& r : records) {
    const double t = r.mean_abs_update > 0.0 && hi > lo ? (std::log10(r.mean_abs_update) - lo) / (hi - lo)
                     : r.mean_abs_update > 0.0         ? 1.0
                                                       : 0.0;
    const Color c = ramp(t);
    const std::size_t y0 = depth_row[r.depth_index] * cell, x0 = epoch_col[r.epoch] * cell;
    for (std::size_t y = 0; y < cell; ++y) {
      for (std::size_t x = 0; x < cell; ++x) put(img, static_cast<long>(y0 + y), static_cast<long>(x0 + x), c);
    }
  }
  return img;
}

}  // namespace resfcn
