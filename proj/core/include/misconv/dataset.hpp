#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "misconv/conv.hpp"
#include "misconv/mfa.hpp"

namespace misconv {

/// Labelled images with a common geometry.
struct Dataset {
  ImageShape shape;
  std::vector<MaskedImage> images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return images.size(); }
};

/// Reads an IDX image file (magic 0x00000803, u8 pixels) and its label file
/// (magic 0x00000801). Pixels are scaled to [0, 1] by /255 and every mask is
/// all-observed. `limit` keeps only the first images.
/// Throws FormatError on bad magic, truncation or a count mismatch.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::optional<std::size_t> limit = std::nullopt);

/// Writes IDX files; pixels are clamped to [0, 1] and rounded to u8.
void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const Dataset& data);

/// Pixels of `images` as columns of an n x N matrix.
Matrix pixel_matrix(const std::vector<MaskedImage>& images);

}  // namespace misconv
