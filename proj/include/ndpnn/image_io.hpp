#pragma once

#include <filesystem>

#include "ndpnn/tensor.hpp"

namespace ndpnn {

/// Decodes an 8-bit grayscale or RGB PNG into a (C, H, W) tensor with
/// samples normalized to [0, 1]. Palette and 16-bit images are converted;
/// alpha channels are stripped.
Tensor<float> read_png(const std::filesystem::path& path);

/// Encodes a (C, H, W) tensor with samples in [0, 1] as an 8-bit grayscale
/// (C = 1) or RGB (C = 3) PNG. Deterministic: identical tensors produce
/// identical files.
void write_png(const Tensor<float>& image, const std::filesystem::path& path);

} // namespace ndpnn
