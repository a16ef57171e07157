// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "forge/tensor.hpp"

namespace forge {

/// Reads an 8-bit PNG (gray, gray+alpha, RGB or RGBA) into an RGB image in [0, 1].
Image load_png(const std::filesystem::path& path);

/// Writes an RGB image as 8-bit PNG. Values are clamped to [0, 1] and rounded.
void save_png(const Image& image, const std::filesystem::path& path);

/// In-memory PNG encoding, same quantization as save_png.
std::string encode_png(const Image& image);

/// Single-channel visualization of a binary mask (0 -> black, 1 -> white).
Image mask_to_image(const MaskGrid& mask);

Image resize_nearest(const Image& image, Eigen::Index rows, Eigen::Index cols);

/// Rec. 601 luma.
Grid<double> to_gray(const Image& image);

Eigen::VectorXd channel_means(const Image& image);

/// Mean absolute difference over all channels and pixels.
double mean_abs_diff(const Image& a, const Image& b);

/// Binary edge map: Sobel gradient magnitude of the luma above `threshold`.
/// Border pixels use replicated edges.
MaskGrid edge_map(const Image& image, double threshold = 0.1);

/// Variance of the 4-neighbour Laplacian of the luma; low values indicate blur.
double laplacian_variance(const Image& image);

/// out = inside where mask==1, outside elsewhere. Mask must match the image grid.
Image composite(const Image& inside, const Image& outside, const MaskGrid& mask);

} // namespace forge
