#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cxrtutor {

// 8-bit RGB raster.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

    std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
};

struct PngInfo {
    int width = 0;
    int height = 0;
};

PngInfo read_png_info(const std::filesystem::path& path);

// Any PNG colour type is converted to 8-bit RGB.
RgbImage read_png_rgb(const std::filesystem::path& path);

// Reads the raw 8-bit sample indices of a palette or grayscale PNG, without
// palette expansion.
std::vector<std::uint8_t> read_png_indices(const std::filesystem::path& path, int& width,
                                           int& height);

void write_png_rgb(const RgbImage& image, const std::filesystem::path& path);

// Palette-indexed PNG; palette colours are generated deterministically.
void write_png_indexed(const std::vector<std::uint8_t>& indices, int width, int height,
                       const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace cxrtutor
