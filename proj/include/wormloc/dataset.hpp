#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wormloc/image.hpp"
#include "wormloc/imaging.hpp"
#include "wormloc/rng.hpp"

namespace wormloc::data {

// CSV header: image,head_x,head_y,tail_x,tail_y
struct ManifestRow {
  std::string image;             // as written in the file
  std::filesystem::path resolved;  // relative paths resolved against the manifest directory
  PixelPoint head;
  PixelPoint tail;
};

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path);
std::vector<ManifestRow> parse_manifest(const std::string& text, const std::filesystem::path& base_dir);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows);
std::string format_manifest(std::span<const ManifestRow> rows);

struct Sample {
  GrayImage image;  // out_size x out_size crop
  PixelPoint head;  // crop coordinates
  PixelPoint tail;
};

struct RowFailure {
  std::size_t row = 0;  // 0-based data row
  std::string message;
};

struct PreprocessResult {
  std::vector<Sample> samples;
  std::vector<std::size_t> kept_rows;
  std::size_t dropped = 0;  // label fell outside the crop
  std::vector<RowFailure> failures;
};

/// threshold -> largest component -> padded crop -> label transfer.
/// Returns nullopt when a label leaves the crop.
std::optional<Sample> preprocess_one(const GrayImage& img, const PixelPoint& head, const PixelPoint& tail,
                                     const imaging::ImagingConfig& cfg);

PreprocessResult preprocess_all(std::span<const ManifestRow> rows, const imaging::ImagingConfig& cfg);

/// Loads an already-preprocessed manifest (every image out_size square).
std::vector<Sample> load_samples(const std::filesystem::path& manifest, int out_size = 150);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Seeded uniform shuffle, then the first round(ratio * n) go to training.
Split split_dataset(std::size_t n, double ratio, std::uint64_t seed);

/// One epoch worth of batches. The order is reshuffled from `rng`; with
/// `augment` each sample gets a brightness jitter and then a random
/// multiple-of-90 rotation. The last batch may be short.
std::vector<std::vector<Sample>> epoch_batches(std::span<const Sample> samples, std::span<const std::size_t> indices,
                                               std::size_t batch, SeededRng& rng, bool augment,
                                               double brightness = 0.125);

}  // namespace wormloc::data
