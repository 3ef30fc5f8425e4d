#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "ostf/image.hpp"

namespace ostf::img {

Image load_png(const std::filesystem::path& path);
void save_png(const Image& im, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_jpeg(const Image& im, int quality);
Image decode_jpeg(const std::vector<std::uint8_t>& bytes);

Image load_image(const std::filesystem::path& path);  // sniffs PNG or JPEG
void save_image(const Image& im, const std::filesystem::path& path);

// Reads (width, height) from the file header without decoding pixel data.
std::pair<int, int> read_image_size(const std::filesystem::path& path);

}  // namespace ostf::img
