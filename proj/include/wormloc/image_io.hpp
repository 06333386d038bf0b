#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wormloc/image.hpp"

namespace wormloc::io {

// 8-bit grayscale PNG or binary PGM (P5). The format is picked from the
// file signature on read and from the extension on write; intensities map
// to [0, 1] by v / maxval.
GrayImage read_image(const std::filesystem::path& path);
void write_image(const GrayImage& img, const std::filesystem::path& path);

GrayImage decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const GrayImage& img);

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

std::uint8_t quantize(float v);

}  // namespace wormloc::io
