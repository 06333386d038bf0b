#include "wormloc/dataset.hpp"

#include <charconv>
#include <cmath>
#include <string_view>

#include "wormloc/error.hpp"
#include "wormloc/image_io.hpp"

namespace wormloc::data {

namespace {

constexpr std::string_view kHeader = "image,head_x,head_y,tail_x,tail_y";

std::string line_error(std::size_t line, const std::string& msg) { return "line " + std::to_string(line) + ": " + msg; }

double parse_number(std::string_view field, std::size_t line, const char* column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || field.empty() || !std::isfinite(v))
    fail(Errc::format, line_error(line, std::string("non-numeric ") + column + " '" + std::string(field) + "'"));
  return v;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<ManifestRow> parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  std::vector<ManifestRow> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kHeader) fail(Errc::format, line_error(line_no, "expected header '" + std::string(kHeader) + "'"));
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string_view::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (fields.size() != 5)
      fail(Errc::format, line_error(line_no, "expected 5 fields, got " + std::to_string(fields.size())));
    if (fields[0].empty()) fail(Errc::format, line_error(line_no, "empty image path"));
    ManifestRow row;
    row.image = std::string(fields[0]);
    const std::filesystem::path img(row.image);
    row.resolved = img.is_absolute() ? img : base_dir / img;
    row.head = {parse_number(fields[1], line_no, "head_x"), parse_number(fields[2], line_no, "head_y")};
    row.tail = {parse_number(fields[3], line_no, "tail_x"), parse_number(fields[4], line_no, "tail_y")};
    rows.push_back(std::move(row));
  }
  if (!header_seen) fail(Errc::format, "manifest is empty (missing header)");
  return rows;
}

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  auto rows = parse_manifest(text, path.parent_path());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(rows[i].resolved, ec))
      fail(Errc::io, path.string() + ": row " + std::to_string(i + 1) + ": missing image file " +
                         rows[i].resolved.string());
  }
  return rows;
}

std::string format_manifest(std::span<const ManifestRow> rows) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.image;
    for (double v : {r.head.x, r.head.y, r.tail.x, r.tail.y}) {
      out += ',';
      out += format_number(v);
    }
    out += '\n';
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows) {
  io::write_text(path, format_manifest(rows));
}

std::optional<Sample> preprocess_one(const GrayImage& img, const PixelPoint& head, const PixelPoint& tail,
                                     const imaging::ImagingConfig& cfg) {
  imaging::validate(cfg);
  const BinaryMask mask = imaging::adaptive_threshold(img, cfg.block, cfg.offset, cfg.polarity);
  const imaging::Component comp = imaging::largest_component(mask, cfg.connectivity);
  const BoundingBox box = imaging::pad_box(comp.box, cfg.pad_fraction, img.width(), img.height());
  imaging::Crop crop = imaging::crop_resize(img, box, cfg.out_size);
  const auto h = imaging::transfer_label(head, crop.forward, cfg.out_size);
  const auto t = imaging::transfer_label(tail, crop.forward, cfg.out_size);
  if (!h || !t) return std::nullopt;
  return Sample{std::move(crop.image), *h, *t};
}

PreprocessResult preprocess_all(std::span<const ManifestRow> rows, const imaging::ImagingConfig& cfg) {
  imaging::validate(cfg);
  PreprocessResult out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      const GrayImage img = io::read_image(rows[i].resolved);
      auto sample = preprocess_one(img, rows[i].head, rows[i].tail, cfg);
      if (!sample) {
        ++out.dropped;
        continue;
      }
      out.samples.push_back(std::move(*sample));
      out.kept_rows.push_back(i);
    } catch (const Error& e) {
      out.failures.push_back({i, e.what()});
    }
  }
  return out;
}

std::vector<Sample> load_samples(const std::filesystem::path& manifest, int out_size) {
  const auto rows = load_manifest(manifest);
  std::vector<Sample> samples;
  samples.reserve(rows.size());
  const double lo = -0.5;
  const double hi = out_size - 0.5;
  auto inside = [&](const PixelPoint& p) { return p.x >= lo && p.x <= hi && p.y >= lo && p.y <= hi; };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    GrayImage img = io::read_image(rows[i].resolved);
    if (img.width() != out_size || img.height() != out_size)
      fail(Errc::format, rows[i].resolved.string() + ": expected a " + std::to_string(out_size) + "x" +
                             std::to_string(out_size) + " preprocessed crop");
    if (!inside(rows[i].head) || !inside(rows[i].tail))
      fail(Errc::format, manifest.string() + ": row " + std::to_string(i + 1) + ": label outside the crop");
    samples.push_back({std::move(img), rows[i].head, rows[i].tail});
  }
  return samples;
}

Split split_dataset(std::size_t n, double ratio, std::uint64_t seed) {
  require(n >= 2, "split needs at least 2 samples");
  require(ratio > 0.0 && ratio < 1.0, "train fraction must be in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  require(n_train >= 1 && n_train < n, "train fraction leaves an empty train or validation set");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SeededRng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

std::vector<std::vector<Sample>> epoch_batches(std::span<const Sample> samples, std::span<const std::size_t> indices,
                                               std::size_t batch, SeededRng& rng, bool augment, double brightness) {
  require(batch >= 1, "batch size must be >= 1");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<Sample>> out;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t stop = std::min(order.size(), start + batch);
    std::vector<Sample> b;
    b.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i) {
      require(order[i] < samples.size(), "sample index out of range");
      const Sample& src = samples[order[i]];
      if (!augment) {
        b.push_back(src);
        continue;
      }
      GrayImage bright = imaging::augment_brightness(src.image, rng, brightness);
      const int k = static_cast<int>(rng.below(4));
      auto [rot, labels] = imaging::augment_rotate(bright, {src.head, src.tail}, k);
      b.push_back({std::move(rot), labels.head, labels.tail});
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace wormloc::data
