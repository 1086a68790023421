// netpbm.hpp
//
// Binary PPM (P6) for RGB images and PGM (P5) for masks and attention maps.
// Readers accept any whitespace/comment layout in the header; writers always
// emit "P6\n<w> <h>\n255\n" (or P5) so outputs are byte-stable.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "agm/image.hpp"

namespace agm::io
{

/// 8-bit single-channel raster, row-major.
struct GrayImage
{
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

std::string encode_ppm(const Image& image);
Image decode_ppm(std::string_view bytes);
void save_ppm(const Image& image, const std::filesystem::path& path);
Image load_ppm(const std::filesystem::path& path);

std::string encode_pgm(const GrayImage& image);
GrayImage decode_pgm(std::string_view bytes);
void save_pgm(const GrayImage& image, const std::filesystem::path& path);
GrayImage load_pgm(const std::filesystem::path& path);

/// Masks travel as 0 (background) / 255 (object); loading thresholds at 128.
GrayImage mask_to_gray(const Mask& mask);
Mask gray_to_mask(const GrayImage& gray);
void save_mask(const Mask& mask, const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace agm::io
