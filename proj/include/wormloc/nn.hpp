#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wormloc/error.hpp"
#include "wormloc/image.hpp"
#include "wormloc/rng.hpp"

namespace wormloc::nn {

template <typename T>
struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor3() = default;
  Tensor3(int c, int h, int w, T fill = T(0))
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  T& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  T at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const Tensor3& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

// 3x3 kernel, stride 1, zero "same" padding. Weights are laid out
// [out][in][ky][kx].
template <typename T>
struct ConvBlock {
  int out_ch = 0;
  int in_ch = 0;
  std::vector<T> weight;
  std::vector<T> bias;

  ConvBlock() = default;
  ConvBlock(int out, int in) : out_ch(out), in_ch(in), weight(static_cast<std::size_t>(out) * in * 9), bias(out) {}

  T& w(int o, int i, int ky, int kx) { return weight[((static_cast<std::size_t>(o) * in_ch + i) * 3 + ky) * 3 + kx]; }
  T w(int o, int i, int ky, int kx) const {
    return weight[((static_cast<std::size_t>(o) * in_ch + i) * 3 + ky) * 3 + kx];
  }
};

template <typename T>
Tensor3<T> conv2d(const Tensor3<T>& x, const ConvBlock<T>& k);

/// Returns dL/dx and accumulates dL/dW, dL/db into `grad`.
template <typename T>
Tensor3<T> conv2d_backward(const Tensor3<T>& x, const ConvBlock<T>& k, const Tensor3<T>& dy, ConvBlock<T>& grad);

template <typename T>
Tensor3<T> relu(const Tensor3<T>& x);

/// Gradient is passed where the forward input was strictly positive.
template <typename T>
Tensor3<T> relu_backward(const Tensor3<T>& x, const Tensor3<T>& dy);

template <typename T>
struct Pooled {
  Tensor3<T> out;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2 max pooling, stride 2, ceiling mode. Ties keep the first index in
/// row-major window order.
template <typename T>
Pooled<T> maxpool2_ceil(const Tensor3<T>& x);

template <typename T>
Tensor3<T> maxpool2_ceil_backward(const Tensor3<T>& x_shape_like, const Pooled<T>& pooled, const Tensor3<T>& dy);

inline int ceil_half(int n) { return (n + 1) / 2; }

struct ArchConfig {
  int input_size = 150;
  int in_channels = 1;
  std::vector<int> trunk{8, 16, 32, 32, 32};
  int heatmap_size = 5;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Each trunk stage halves the side (ceiling); the result must equal
/// heatmap_size.
void validate(const ArchConfig& arch);

template <typename T>
struct NetworkParams {
  ArchConfig arch;
  std::vector<ConvBlock<T>> trunk;
  ConvBlock<T> head;
  ConvBlock<T> tail;

  /// Parameter buffers in serialization order: trunk blocks (weight, bias),
  /// then head, then tail.
  std::vector<std::span<T>> buffers();
  std::vector<std::span<const T>> buffers() const;
  std::size_t count() const;

  template <typename U>
  NetworkParams<U> cast() const;
};

/// Parameters with the right shapes for `arch`, all zero.
template <typename T>
NetworkParams<T> zero_params(const ArchConfig& arch);

/// He initialization: kernels ~ Normal(0, sqrt(2 / fan_in)), biases 0.
NetworkParams<float> init_params(const ArchConfig& arch, SeededRng& rng);

template <typename T>
struct ForwardTrace {
  std::vector<Tensor3<T>> conv_in;  // input of each trunk conv
  std::vector<Tensor3<T>> conv_out;  // pre-activation
  std::vector<Pooled<T>> pooled;
  Tensor3<T> features;  // shared map fed to both final convs
  Tensor3<T> z_head;    // 1 x K x K
  Tensor3<T> z_tail;
};

/// Image to network input; intensities are shifted to [-0.5, 0.5].
template <typename T>
Tensor3<T> image_to_input(const GrayImage& img);

template <typename T>
ForwardTrace<T> forward(const NetworkParams<T>& params, const Tensor3<T>& input);

/// Gradients with respect to every parameter given dL/dZ_head, dL/dZ_tail.
template <typename T>
NetworkParams<T> backward(const NetworkParams<T>& params, const ForwardTrace<T>& trace, const Tensor3<T>& dz_head,
                          const Tensor3<T>& dz_tail);

template <typename T>
template <typename U>
NetworkParams<U> NetworkParams<T>::cast() const {
  auto conv = [](const ConvBlock<T>& b) {
    ConvBlock<U> r(b.out_ch, b.in_ch);
    for (std::size_t i = 0; i < b.weight.size(); ++i) r.weight[i] = static_cast<U>(b.weight[i]);
    for (std::size_t i = 0; i < b.bias.size(); ++i) r.bias[i] = static_cast<U>(b.bias[i]);
    return r;
  };
  NetworkParams<U> out;
  out.arch = arch;
  for (const auto& b : trunk) out.trunk.push_back(conv(b));
  out.head = conv(head);
  out.tail = conv(tail);
  return out;
}

}  // namespace wormloc::nn
