#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "diffmatte/tensor.hpp"

namespace diffmatte {

/// All planes are N=1 tensors: colour images [1, 3, S, S], mattes and trimaps [1, 1, S, S].
struct SyntheticSample {
  Tensor<float> foreground;
  Tensor<float> background;
  Tensor<float> alpha;
  Tensor<float> image;
  Tensor<float> trimap;
};

/// I = alpha * F + (1 - alpha) * B per pixel and channel, clamped to [0, 1].
Tensor<float> composite(const Tensor<float>& fg, const Tensor<float>& bg, const Tensor<float>& alpha);

struct ForegroundLayer {
  Tensor<float> color;
  Tensor<float> alpha;
};

/// Procedural foreground: 1-4 feathered super-ellipses plus thin soft strands.
/// Alpha always contains exact 0, exact 1, and fractional pixels.
ForegroundLayer gen_foreground(Rng& rng, int size);

/// Smooth procedural background: a two-colour gradient modulated by value noise.
Tensor<float> gen_background(Rng& rng, int size);

struct TrimapResult {
  Tensor<float> trimap;
  bool degenerate = false;  // no unknown pixels; callers should regenerate
};

/// Foreground = erode(alpha == 1, r), background = erode(alpha == 0, r), the rest unknown.
/// Erosion uses a (2r+1)^2 square restricted to the image.
TrimapResult make_trimap(const Tensor<float>& alpha, int radius);

/// Square-element binary erosion (separable), exposed for testing.
std::vector<bool> erode(const std::vector<bool>& mask, int h, int w, int radius);

struct TrimapRadiusRange {
  int lo = 1;
  int hi = 8;
};

/// A complete composited training sample with a non-degenerate trimap.
SyntheticSample gen_sample(Rng& rng, int size, TrimapRadiusRange radii = {});

/// Axis-aligned crop containing at least one unknown pixel (up to 10 tries, then the
/// centre crop), followed by a horizontal flip with probability 1/2.
SyntheticSample random_crop_flip(const SyntheticSample& sample, int crop, Rng& rng);

/// Crop of one plane set at a fixed offset; flips horizontally when asked.
Tensor<float> crop_plane(const Tensor<float>& t, int top, int left, int size, bool flip);

/// On-disk dataset entry: image_NNNN.ppm, alpha_NNNN.pgm16, trimap_NNNN.pgm.
struct DatasetItem {
  std::string name;  // the NNNN part
  Tensor<float> image;
  Tensor<float> alpha;
  Tensor<float> trimap;
};

std::string dataset_index_name(int index);
void save_dataset_item(const std::filesystem::path& dir, int index, const SyntheticSample& sample);
/// Loads every image_*.ppm with its alpha and trimap, sorted by name.
std::vector<DatasetItem> load_dataset(const std::filesystem::path& dir);

SyntheticSample to_sample(const DatasetItem& item);

}  // namespace diffmatte
