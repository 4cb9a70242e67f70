#pragma once

#include <filesystem>

#include "diffmatte/tensor.hpp"

namespace diffmatte {

// Binary Netpbm I/O. Samples are scaled linearly between [0, maxval] and [0, 1];
// maxval > 255 means two big-endian bytes per sample.

/// P6 -> [1, 3, H, W]
Tensor<float> read_ppm(const std::filesystem::path& path);
/// P5 -> [1, 1, H, W]
Tensor<float> read_pgm(const std::filesystem::path& path);

void write_ppm(const std::filesystem::path& path, const Tensor<float>& rgb, int maxval = 255);
void write_pgm(const std::filesystem::path& path, const Tensor<float>& gray, int maxval = 255);

/// In-memory forms of the above, for tests and pipes.
Tensor<float> decode_pnm(const std::string& bytes, int expected_channels);
std::string encode_pnm(const Tensor<float>& image, int maxval);

}  // namespace diffmatte
