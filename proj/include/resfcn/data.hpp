#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resfcn/rng.hpp"
#include "resfcn/tensor.hpp"

namespace resfcn {

/// Image in [0,1] and binary mask (1 = cell interior, 0 = membrane), both 1 x H x W.
struct Sample {
  Tensor image;
  Tensor mask;

  std::size_t height() const { return image.dim(1); }
  std::size_t width() const { return image.dim(2); }
};

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::uint64_t seed = 0;
};

/// Voronoi-style cell tessellation with 1-2 px membrane bands, blurred,
/// textured and noised. Fully determined by (seed, index, size).
std::vector<Sample> generate_synthetic_em(std::uint64_t seed, std::size_t count, std::size_t size);
/// Number of Voronoi sites used for one synthetic sample of this size.
std::size_t synthetic_site_count(std::size_t size);

// Binary PGM (P5, maxval 255) single-channel I/O.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& image);

/// Loads DIR/images/<name> with its mask DIR/masks/<name> for every image
/// file matching the glob `pattern`, in lexicographic order. Pixel values
/// are scaled by 1/255; masks are binarized at 0.5.
std::vector<Sample> load_image_stack(const std::string& dir, const std::string& pattern = "*.pgm");
/// Writes samples in the layout load_image_stack reads (sample_0000.pgm, ...).
void write_image_stack(const std::string& dir, const std::vector<Sample>& samples);

struct AugmentFlags {
  bool flip = false;
  bool rotate90 = false;
  bool rotate_small = false;  // arbitrary angle in [-15, 15] degrees
  bool shear = false;         // up to 10 degrees
  bool elastic = false;

  static AugmentFlags all_standard() { return {true, true, false, true, true}; }
  bool any() const { return flip || rotate90 || rotate_small || shear || elastic; }
};

enum class Interp { kNearest, kBilinear };

/// A geometric transform drawn once and applied identically to image and mask.
struct Warp {
  enum class Kind { kFlipH, kFlipV, kRot90, kRotate, kShearX, kShearY, kElastic } kind;
  int quarter_turns = 0;
  double amount = 0.0;                      // angle (radians) or shear tangent
  std::size_t grid = 0;                     // elastic control grid side
  std::vector<double> dy, dx;               // elastic control displacements (pixels)
};

/// Draws the transforms `augment_sample` would apply, each enabled kind with
/// probability 0.5.
std::vector<Warp> draw_warps(Rng& rng, const AugmentFlags& flags, std::size_t height, std::size_t width);
/// Applies the warps in order to a 1 x H x W plane.
Tensor apply_warps(const Tensor& plane, const std::vector<Warp>& warps, Interp interp);

/// Image resampled bilinearly (clamped at borders), mask by nearest neighbour.
Sample augment_sample(const Sample& s, Rng& rng, const AugmentFlags& flags);

/// Seeded shuffle, then the first round(ratio * n) samples train.
DatasetSplit split_train_val(const std::vector<Sample>& samples, double train_ratio, std::uint64_t seed);

/// Stacks samples into N x 1 x H x W image and mask batches.
std::pair<Tensor, Tensor> stack_batch(const std::vector<Sample>& samples,
                                      const std::vector<std::size_t>& indices);

}  // namespace resfcn
