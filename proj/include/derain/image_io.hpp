#pragma once

#include <filesystem>

#include "derain/decomposition.hpp"

namespace derain {

/// Decodes an 8-bit PNG/JPEG to [0,1] RGB (channels = 3) or grayscale (channels = 1).
ImageTensor load_image(const std::filesystem::path& path, int channels = 3);

/// Encodes with round(v * 255). The format follows the file extension.
void save_image(const std::filesystem::path& path, const ImageTensor& image);
void save_mask(const std::filesystem::path& path, const TransparencyMask& mask);

/// Black -> red -> yellow ramp: v in [0, 0.5] ramps red, (0.5, 1] ramps green.
ImageTensor mask_heatmap(const TransparencyMask& mask);
/// Horizontal colorbar of the heatmap ramp, 0 on the left.
ImageTensor heatmap_colorbar(int width = 256, int height = 16);

bool is_image_file(const std::filesystem::path& path);

} // namespace derain
