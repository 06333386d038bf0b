#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wormloc/dataset.hpp"
#include "wormloc/nn.hpp"

namespace wormloc::train {

struct TrainConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint32_t epochs = 60;
  std::uint32_t batch = 64;
  double lambda_js = 1.0;
  double sigma_hm = 0.5;
  std::uint64_t seed = 1;
  std::uint32_t runs = 10;
  double train_fraction = 0.7;
  double brightness = 0.125;
  bool augment = true;
  std::uint32_t threads = 0;  // 0 = hardware concurrency; never affects results

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& cfg);

/// Adam moments for one flat parameter buffer.
template <typename T>
struct AdamMoments {
  std::vector<T> m;
  std::vector<T> v;
};

template <typename T>
struct AdamState {
  std::vector<AdamMoments<T>> moments;  // mirrors NetworkParams::buffers()
  std::uint64_t step = 0;
};

template <typename T>
AdamState<T> make_adam_state(const nn::NetworkParams<T>& params);

/// Bias-corrected Adam update of a single buffer at timestep `t` (1-based):
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, AdamMoments<T>& moments, std::uint64_t t,
                 const TrainConfig& cfg);

/// Advances the timestep and updates every buffer.
template <typename T>
void adam_step(nn::NetworkParams<T>& params, const nn::NetworkParams<T>& grads, AdamState<T>& state,
               const TrainConfig& cfg);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nn::NetworkParams<float> params;
  TrainConfig config;
  std::uint32_t epoch = 0;
  std::uint64_t rng_digest = 0;
};

/// Binary layout, little-endian: "WPKT", u32 version, arch, train config,
/// epoch, rng digest, then per conv block a shape header and raw f32 data.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct MetricsRow {
  std::uint32_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_pck15 = 0.0;  // percent, head/tail average
};

std::string format_metrics_csv(std::span<const MetricsRow> rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

struct Sums {
  double loss = 0.0;
  std::size_t count = 0;
};

/// Loss and gradients of one batch. Per-sample work may run on several
/// threads; gradients are reduced in sample order, so the result does not
/// depend on the thread count.
struct BatchResult {
  nn::NetworkParams<float> grads;  // mean over the batch
  double mean_loss = 0.0;
};

BatchResult batch_gradients(const nn::NetworkParams<float>& params, std::span<const data::Sample> batch,
                            const TrainConfig& cfg);

/// Mean total loss without gradients.
double mean_loss(const nn::NetworkParams<float>& params, std::span<const data::Sample> samples,
                 std::span<const std::size_t> indices, const TrainConfig& cfg);

struct RunResult {
  Checkpoint best;   // highest val PCK@15, earliest epoch on ties
  Checkpoint final;
  std::vector<MetricsRow> metrics;
};

using EpochCallback = std::function<void(const MetricsRow&)>;

/// One training run seeded by cfg.seed. Throws Errc::numeric on a
/// non-finite batch loss.
RunResult train_run(std::span<const data::Sample> samples, const data::Split& split, const TrainConfig& cfg,
                    const nn::ArchConfig& arch = {}, const EpochCallback& on_epoch = {});

}  // namespace wormloc::train
