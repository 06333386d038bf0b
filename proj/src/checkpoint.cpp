#include <bit>
#include <cstring>
#include <string>

#include "wormloc/error.hpp"
#include "wormloc/image_io.hpp"
#include "wormloc/train.hpp"

namespace wormloc::train {

namespace {

constexpr char kMagic[4] = {'W', 'P', 'K', 'T'};
constexpr std::uint32_t kMaxStages = 64;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint8_t u8() { return need(1), b_[pos_++]; }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return b_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) fail(Errc::corrupt_file, "checkpoint truncated at byte " + std::to_string(pos_));
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void write_block(Writer& w, const nn::ConvBlock<float>& b) {
  w.u32(static_cast<std::uint32_t>(b.out_ch));
  w.u32(static_cast<std::uint32_t>(b.in_ch));
  w.u32(3);
  w.u32(3);
  for (float v : b.weight) w.f32(v);
  for (float v : b.bias) w.f32(v);
}

void read_block(Reader& r, nn::ConvBlock<float>& b, std::size_t index) {
  const std::uint32_t out = r.u32();
  const std::uint32_t in = r.u32();
  const std::uint32_t kh = r.u32();
  const std::uint32_t kw = r.u32();
  if (out != static_cast<std::uint32_t>(b.out_ch) || in != static_cast<std::uint32_t>(b.in_ch) || kh != 3 || kw != 3)
    fail(Errc::shape_mismatch, "checkpoint block " + std::to_string(index) + " is " + std::to_string(out) + "x" +
                                   std::to_string(in) + "x" + std::to_string(kh) + "x" + std::to_string(kw) +
                                   ", architecture expects " + std::to_string(b.out_ch) + "x" +
                                   std::to_string(b.in_ch) + "x3x3");
  r.need((b.weight.size() + b.bias.size()) * 4);
  for (float& v : b.weight) v = r.f32();
  for (float& v : b.bias) v = r.f32();
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(Checkpoint::kVersion);

  const nn::ArchConfig& a = ck.params.arch;
  w.i32(a.input_size);
  w.i32(a.in_channels);
  w.i32(a.heatmap_size);
  w.u32(static_cast<std::uint32_t>(a.trunk.size()));
  for (int c : a.trunk) w.i32(c);

  const TrainConfig& c = ck.config;
  for (double v : {c.lr, c.beta1, c.beta2, c.eps, c.lambda_js, c.sigma_hm, c.train_fraction, c.brightness}) w.f64(v);
  w.u32(c.epochs);
  w.u32(c.batch);
  w.u32(c.runs);
  w.u64(c.seed);
  w.u8(c.augment ? 1 : 0);

  w.u32(ck.epoch);
  w.u64(ck.rng_digest);

  w.u32(static_cast<std::uint32_t>(ck.params.trunk.size() + 2));
  for (const auto& b : ck.params.trunk) write_block(w, b);
  write_block(w, ck.params.head);
  write_block(w, ck.params.tail);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail(Errc::bad_magic, "not a checkpoint (bad magic)");
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    fail(Errc::unknown_version, "unsupported checkpoint version " + std::to_string(version));

  nn::ArchConfig arch;
  arch.input_size = r.i32();
  arch.in_channels = r.i32();
  arch.heatmap_size = r.i32();
  const std::uint32_t stages = r.u32();
  if (stages > kMaxStages) fail(Errc::corrupt_file, "checkpoint declares " + std::to_string(stages) + " trunk stages");
  arch.trunk.resize(stages);
  for (auto& ch : arch.trunk) ch = r.i32();
  try {
    nn::validate(arch);
  } catch (const Error& e) {
    fail(Errc::shape_mismatch, std::string("checkpoint architecture is inconsistent: ") + e.what());
  }

  Checkpoint ck;
  TrainConfig& c = ck.config;
  for (double* v : {&c.lr, &c.beta1, &c.beta2, &c.eps, &c.lambda_js, &c.sigma_hm, &c.train_fraction, &c.brightness})
    *v = r.f64();
  c.epochs = r.u32();
  c.batch = r.u32();
  c.runs = r.u32();
  c.seed = r.u64();
  c.augment = r.u8() != 0;

  ck.epoch = r.u32();
  ck.rng_digest = r.u64();

  const std::uint32_t blocks = r.u32();
  if (blocks != arch.trunk.size() + 2)
    fail(Errc::shape_mismatch, "checkpoint has " + std::to_string(blocks) + " blocks, architecture needs " +
                                   std::to_string(arch.trunk.size() + 2));
  ck.params = nn::zero_params<float>(arch);
  std::size_t index = 0;
  for (auto& b : ck.params.trunk) read_block(r, b, index++);
  read_block(r, ck.params.head, index++);
  read_block(r, ck.params.tail, index++);
  if (r.remaining() != 0) fail(Errc::corrupt_file, "trailing bytes after checkpoint data");
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  try {
    return deserialize_checkpoint(bytes);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace wormloc::train
