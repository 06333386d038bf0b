#include "wormloc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wormloc::nn {

namespace {

template <typename T>
void check_conv(const Tensor3<T>& x, const ConvBlock<T>& k) {
  if (x.channels != k.in_ch)
    fail(Errc::shape_mismatch, "conv2d: input has " + std::to_string(x.channels) + " channels, kernel expects " +
                                   std::to_string(k.in_ch));
  if (k.weight.size() != static_cast<std::size_t>(k.out_ch) * k.in_ch * 9 ||
      k.bias.size() != static_cast<std::size_t>(k.out_ch))
    fail(Errc::shape_mismatch, "conv2d: kernel buffers do not match declared shape");
}

// Planes are stored with a one-pixel zero border and a row stride of
// w + 2. Output position p = y * (w + 2) + x then reads tap (ky, kx) at
// p + ky * (w + 2) + kx, so each tap is a contiguous run and the two
// junk columns per row are dropped on the way out.
constexpr int kTile = 32;

struct PadLayout {
  int h, w, stride;
  std::size_t positions;  // h * stride rounded up to a whole tile
  std::size_t plane;      // padded plane plus slack for tile over-reads
};

PadLayout pad_layout(int h, int w) {
  PadLayout l{h, w, w + 2, 0, 0};
  const std::size_t p = static_cast<std::size_t>(h) * l.stride;
  l.positions = (p + kTile - 1) / kTile * kTile;
  l.plane = l.positions + 2 * static_cast<std::size_t>(l.stride) + 2;
  return l;
}

template <typename T>
std::vector<T> pad_planes(const Tensor3<T>& x, const PadLayout& l) {
  std::vector<T> out(static_cast<std::size_t>(x.channels) * l.plane, T(0));
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < l.h; ++y)
      std::copy_n(x.data.data() + c * x.plane() + static_cast<std::size_t>(y) * l.w, l.w,
                  out.data() + c * l.plane + static_cast<std::size_t>(y + 1) * l.stride + 1);
  return out;
}

// y[o] = bias[o] + sum over inputs and taps, reading padded planes `xp`.
template <typename T>
void conv_tiles(const std::vector<T>& xp, int in_ch, const T* weight, const T* bias, int out_ch, const PadLayout& l,
                Tensor3<T>& y) {
  std::size_t offs[9];
  for (int t = 0; t < 9; ++t) offs[t] = static_cast<std::size_t>(t / 3) * l.stride + t % 3;
  std::vector<T> out(l.positions);
  for (int o = 0; o < out_ch; ++o) {
    const T* wo = weight + static_cast<std::size_t>(o) * in_ch * 9;
    for (std::size_t p0 = 0; p0 < l.positions; p0 += kTile) {
      T tile[kTile];
      for (T& v : tile) v = bias ? bias[o] : T(0);
      for (int i = 0; i < in_ch; ++i) {
        const T* xi = xp.data() + i * l.plane + p0;
        for (int t = 0; t < 9; ++t) {
          const T wv = wo[i * 9 + t];
          if (wv == T(0)) continue;
          const T* src = xi + offs[t];
          for (int j = 0; j < kTile; ++j) tile[j] += wv * src[j];
        }
      }
      std::copy_n(tile, kTile, out.data() + p0);
    }
    T* yo = y.data.data() + o * y.plane();
    for (int yy = 0; yy < l.h; ++yy)
      std::copy_n(out.data() + static_cast<std::size_t>(yy) * l.stride, l.w, yo + static_cast<std::size_t>(yy) * l.w);
  }
}

}  // namespace

template <typename T>
Tensor3<T> conv2d(const Tensor3<T>& x, const ConvBlock<T>& k) {
  check_conv(x, k);
  const PadLayout l = pad_layout(x.height, x.width);
  Tensor3<T> y(k.out_ch, x.height, x.width);
  conv_tiles(pad_planes(x, l), k.in_ch, k.weight.data(), k.bias.data(), k.out_ch, l, y);
  return y;
}

template <typename T>
Tensor3<T> conv2d_backward(const Tensor3<T>& x, const ConvBlock<T>& k, const Tensor3<T>& dy, ConvBlock<T>& grad) {
  check_conv(x, k);
  if (dy.channels != k.out_ch || dy.height != x.height || dy.width != x.width)
    fail(Errc::shape_mismatch, "conv2d_backward: output gradient shape mismatch");
  if (grad.out_ch != k.out_ch || grad.in_ch != k.in_ch || grad.weight.size() != k.weight.size() ||
      grad.bias.size() != k.bias.size())
    fail(Errc::shape_mismatch, "conv2d_backward: gradient block shape mismatch");
  const PadLayout l = pad_layout(x.height, x.width);
  const std::size_t plane = x.plane();

  // Input gradient: same-padded correlation of dy with the flipped,
  // channel-transposed kernel.
  std::vector<T> flipped(k.weight.size());
  for (int o = 0; o < k.out_ch; ++o)
    for (int i = 0; i < k.in_ch; ++i)
      for (int t = 0; t < 9; ++t)
        flipped[(static_cast<std::size_t>(i) * k.out_ch + o) * 9 + (8 - t)] =
            k.weight[(static_cast<std::size_t>(o) * k.in_ch + i) * 9 + t];
  const std::vector<T> dyp = pad_planes(dy, l);
  Tensor3<T> dx(x.channels, x.height, x.width);
  conv_tiles(dyp, k.out_ch, flipped.data(), static_cast<const T*>(nullptr), k.in_ch, l, dx);

  // Weight gradient: dy in the unpadded-stride output layout (junk columns
  // zero) against shifted padded inputs.
  const std::vector<T> xp = pad_planes(x, l);
  std::vector<T> dyl(l.positions, T(0));
  std::size_t offs[9];
  for (int t = 0; t < 9; ++t) offs[t] = static_cast<std::size_t>(t / 3) * l.stride + t % 3;
  constexpr int kLanes = 16;
  for (int o = 0; o < k.out_ch; ++o) {
    const T* dyo = dy.data.data() + o * plane;
    T db = 0;
    for (std::size_t j = 0; j < plane; ++j) db += dyo[j];
    grad.bias[o] += db;
    for (int y = 0; y < l.h; ++y)
      std::copy_n(dyo + static_cast<std::size_t>(y) * l.w, l.w, dyl.data() + static_cast<std::size_t>(y) * l.stride);
    for (int i = 0; i < k.in_ch; ++i) {
      const T* xi = xp.data() + i * l.plane;
      T acc[9][kLanes] = {};
      for (std::size_t p0 = 0; p0 < l.positions; p0 += kLanes) {
        const T* d = dyl.data() + p0;
        for (int t = 0; t < 9; ++t) {
          const T* src = xi + p0 + offs[t];
          for (int j = 0; j < kLanes; ++j) acc[t][j] += d[j] * src[j];
        }
      }
      T* gw = grad.weight.data() + (static_cast<std::size_t>(o) * k.in_ch + i) * 9;
      for (int t = 0; t < 9; ++t) {
        T s = 0;
        for (int j = 0; j < kLanes; ++j) s += acc[t][j];
        gw[t] += s;
      }
    }
  }
  return dx;
}

template <typename T>
Tensor3<T> relu(const Tensor3<T>& x) {
  Tensor3<T> y = x;
  for (T& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor3<T> relu_backward(const Tensor3<T>& x, const Tensor3<T>& dy) {
  if (!x.same_shape(dy)) fail(Errc::shape_mismatch, "relu_backward: shape mismatch");
  Tensor3<T> dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (!(x.data[i] > T(0))) dx.data[i] = T(0);
  return dx;
}

template <typename T>
Pooled<T> maxpool2_ceil(const Tensor3<T>& x) {
  const int oh = ceil_half(x.height);
  const int ow = ceil_half(x.width);
  Pooled<T> p{Tensor3<T>(x.channels, oh, ow), {}};
  p.argmax.resize(p.out.data.size());
  const std::size_t plane = x.plane();
  std::size_t k = 0;
  for (int c = 0; c < x.channels; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      const int y1 = std::min(x.height, 2 * oy + 2);
      for (int ox = 0; ox < ow; ++ox, ++k) {
        const int x1 = std::min(x.width, 2 * ox + 2);
        std::size_t best = c * plane + static_cast<std::size_t>(2 * oy) * x.width + 2 * ox;
        for (int yy = 2 * oy; yy < y1; ++yy)
          for (int xx = 2 * ox; xx < x1; ++xx) {
            const std::size_t idx = c * plane + static_cast<std::size_t>(yy) * x.width + xx;
            if (x.data[idx] > x.data[best]) best = idx;
          }
        p.out.data[k] = x.data[best];
        p.argmax[k] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return p;
}

template <typename T>
Tensor3<T> maxpool2_ceil_backward(const Tensor3<T>& x_shape_like, const Pooled<T>& pooled, const Tensor3<T>& dy) {
  if (!pooled.out.same_shape(dy)) fail(Errc::shape_mismatch, "maxpool backward: gradient shape mismatch");
  Tensor3<T> dx(x_shape_like.channels, x_shape_like.height, x_shape_like.width);
  for (std::size_t k = 0; k < dy.data.size(); ++k) dx.data[pooled.argmax[k]] += dy.data[k];
  return dx;
}

void validate(const ArchConfig& arch) {
  require(arch.input_size >= 1, "input size must be >= 1");
  require(arch.in_channels >= 1, "input channels must be >= 1");
  require(!arch.trunk.empty(), "trunk needs at least one stage");
  for (int c : arch.trunk) require(c >= 1, "trunk channel counts must be >= 1");
  int side = arch.input_size;
  for (std::size_t i = 0; i < arch.trunk.size(); ++i) side = ceil_half(side);
  require(side == arch.heatmap_size, "input size " + std::to_string(arch.input_size) + " pooled " +
                                         std::to_string(arch.trunk.size()) + " times gives " + std::to_string(side) +
                                         ", not heatmap size " + std::to_string(arch.heatmap_size));
}

template <typename T>
std::vector<std::span<T>> NetworkParams<T>::buffers() {
  std::vector<std::span<T>> out;
  for (auto& b : trunk) {
    out.emplace_back(b.weight);
    out.emplace_back(b.bias);
  }
  out.emplace_back(head.weight);
  out.emplace_back(head.bias);
  out.emplace_back(tail.weight);
  out.emplace_back(tail.bias);
  return out;
}

template <typename T>
std::vector<std::span<const T>> NetworkParams<T>::buffers() const {
  std::vector<std::span<const T>> out;
  for (const auto& b : trunk) {
    out.emplace_back(b.weight);
    out.emplace_back(b.bias);
  }
  out.emplace_back(head.weight);
  out.emplace_back(head.bias);
  out.emplace_back(tail.weight);
  out.emplace_back(tail.bias);
  return out;
}

template <typename T>
std::size_t NetworkParams<T>::count() const {
  std::size_t n = 0;
  for (const auto& b : buffers()) n += b.size();
  return n;
}

template <typename T>
NetworkParams<T> zero_params(const ArchConfig& arch) {
  validate(arch);
  NetworkParams<T> p;
  p.arch = arch;
  int prev = arch.in_channels;
  for (int c : arch.trunk) {
    p.trunk.emplace_back(c, prev);
    prev = c;
  }
  p.head = ConvBlock<T>(1, prev);
  p.tail = ConvBlock<T>(1, prev);
  return p;
}

NetworkParams<float> init_params(const ArchConfig& arch, SeededRng& rng) {
  NetworkParams<float> p = zero_params<float>(arch);
  auto fill = [&](ConvBlock<float>& b) {
    const double stddev = std::sqrt(2.0 / (9.0 * b.in_ch));
    for (float& v : b.weight) v = static_cast<float>(rng.normal(0.0, stddev));
  };
  for (auto& b : p.trunk) fill(b);
  fill(p.head);
  fill(p.tail);
  return p;
}

template <typename T>
Tensor3<T> image_to_input(const GrayImage& img) {
  Tensor3<T> t(1, img.height(), img.width());
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<T>(img.data()[i]) - T(0.5);
  return t;
}

template <typename T>
ForwardTrace<T> forward(const NetworkParams<T>& params, const Tensor3<T>& input) {
  const ArchConfig& arch = params.arch;
  if (input.channels != arch.in_channels || input.height != arch.input_size || input.width != arch.input_size)
    fail(Errc::shape_mismatch, "forward: input is " + std::to_string(input.channels) + "x" +
                                   std::to_string(input.height) + "x" + std::to_string(input.width) +
                                   ", network expects " + std::to_string(arch.in_channels) + "x" +
                                   std::to_string(arch.input_size) + "x" + std::to_string(arch.input_size));
  if (params.trunk.size() != arch.trunk.size()) fail(Errc::shape_mismatch, "forward: trunk depth mismatch");
  ForwardTrace<T> t;
  Tensor3<T> x = input;
  for (const auto& block : params.trunk) {
    Tensor3<T> z = conv2d(x, block);
    t.conv_in.push_back(std::move(x));
    t.pooled.push_back(maxpool2_ceil(relu(z)));
    t.conv_out.push_back(std::move(z));
    x = t.pooled.back().out;
  }
  t.z_head = conv2d(x, params.head);
  t.z_tail = conv2d(x, params.tail);
  t.features = std::move(x);
  return t;
}

template <typename T>
NetworkParams<T> backward(const NetworkParams<T>& params, const ForwardTrace<T>& trace, const Tensor3<T>& dz_head,
                          const Tensor3<T>& dz_tail) {
  NetworkParams<T> g = zero_params<T>(params.arch);
  Tensor3<T> df = conv2d_backward(trace.features, params.head, dz_head, g.head);
  const Tensor3<T> df_tail = conv2d_backward(trace.features, params.tail, dz_tail, g.tail);
  for (std::size_t i = 0; i < df.data.size(); ++i) df.data[i] += df_tail.data[i];
  for (std::size_t s = params.trunk.size(); s-- > 0;) {
    const Tensor3<T> da = maxpool2_ceil_backward(trace.conv_out[s], trace.pooled[s], df);
    const Tensor3<T> dz = relu_backward(trace.conv_out[s], da);
    df = conv2d_backward(trace.conv_in[s], params.trunk[s], dz, g.trunk[s]);
  }
  return g;
}

#define WORMLOC_NN_INSTANTIATE(T)                                                                                \
  template Tensor3<T> conv2d(const Tensor3<T>&, const ConvBlock<T>&);                                          \
  template Tensor3<T> conv2d_backward(const Tensor3<T>&, const ConvBlock<T>&, const Tensor3<T>&, ConvBlock<T>&); \
  template Tensor3<T> relu(const Tensor3<T>&);                                                                 \
  template Tensor3<T> relu_backward(const Tensor3<T>&, const Tensor3<T>&);                                     \
  template Pooled<T> maxpool2_ceil(const Tensor3<T>&);                                                         \
  template Tensor3<T> maxpool2_ceil_backward(const Tensor3<T>&, const Pooled<T>&, const Tensor3<T>&);          \
  template struct NetworkParams<T>;                                                                            \
  template NetworkParams<T> zero_params(const ArchConfig&);                                                    \
  template Tensor3<T> image_to_input(const GrayImage&);                                                        \
  template ForwardTrace<T> forward(const NetworkParams<T>&, const Tensor3<T>&);                                \
  template NetworkParams<T> backward(const NetworkParams<T>&, const ForwardTrace<T>&, const Tensor3<T>&,       \
                                     const Tensor3<T>&);

WORMLOC_NN_INSTANTIATE(float)
WORMLOC_NN_INSTANTIATE(double)

}  // namespace wormloc::nn
