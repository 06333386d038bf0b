#include "wormloc/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <thread>

#include "wormloc/dsnt.hpp"
#include "wormloc/error.hpp"
#include "wormloc/eval.hpp"

namespace wormloc::train {

void validate(const TrainConfig& cfg) {
  require(cfg.lr > 0.0, "learning rate must be > 0");
  require(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0, "Adam betas must be in [0, 1)");
  require(cfg.eps > 0.0, "Adam eps must be > 0");
  require(cfg.epochs >= 1 && cfg.batch >= 1, "epochs and batch must be >= 1");
  require(cfg.lambda_js >= 0.0, "lambda_js must be >= 0");
  require(cfg.sigma_hm > 0.0, "sigma_hm must be > 0");
  require(cfg.runs >= 1, "runs must be >= 1");
  require(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0, "train fraction must be in (0, 1)");
  require(cfg.brightness >= 0.0 && cfg.brightness <= 1.0, "brightness jitter must be in [0, 1]");
}

template <typename T>
AdamState<T> make_adam_state(const nn::NetworkParams<T>& params) {
  AdamState<T> s;
  for (const auto& b : params.buffers()) s.moments.push_back({std::vector<T>(b.size(), T(0)), std::vector<T>(b.size(), T(0))});
  return s;
}

template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, AdamMoments<T>& mo, std::uint64_t t,
                 const TrainConfig& cfg) {
  if (params.size() != grads.size() || mo.m.size() != params.size() || mo.v.size() != params.size())
    fail(Errc::shape_mismatch, "adam: parameter, gradient and moment sizes differ");
  require(t >= 1, "adam timestep must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = cfg.beta1 * mo.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * mo.v[i] + (1.0 - cfg.beta2) * g * g;
    mo.m[i] = static_cast<T>(m);
    mo.v[i] = static_cast<T>(v);
    params[i] = static_cast<T>(params[i] - cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
  }
}

template <typename T>
void adam_step(nn::NetworkParams<T>& params, const nn::NetworkParams<T>& grads, AdamState<T>& state,
               const TrainConfig& cfg) {
  auto pb = params.buffers();
  const auto gb = grads.buffers();
  if (pb.size() != gb.size() || pb.size() != state.moments.size())
    fail(Errc::shape_mismatch, "adam: parameter and gradient layouts differ");
  ++state.step;
  for (std::size_t i = 0; i < pb.size(); ++i) adam_update<T>(pb[i], gb[i], state.moments[i], state.step, cfg);
}

template AdamState<float> make_adam_state(const nn::NetworkParams<float>&);
template AdamState<double> make_adam_state(const nn::NetworkParams<double>&);
template void adam_update(std::span<float>, std::span<const float>, AdamMoments<float>&, std::uint64_t, const TrainConfig&);
template void adam_update(std::span<double>, std::span<const double>, AdamMoments<double>&, std::uint64_t,
                          const TrainConfig&);
template void adam_step(nn::NetworkParams<float>&, const nn::NetworkParams<float>&, AdamState<float>&, const TrainConfig&);
template void adam_step(nn::NetworkParams<double>&, const nn::NetworkParams<double>&, AdamState<double>&,
                        const TrainConfig&);

namespace {

dsnt::Heatmap to_heatmap(const nn::Tensor3<float>& z) {
  dsnt::Heatmap h(z.height);
  for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] = z.data[i];
  return h;
}

dsnt::NormKeypoints normalized_labels(const data::Sample& s) {
  const int w = s.image.width();
  return {eval::pixels_to_norm(s.head, w), eval::pixels_to_norm(s.tail, w)};
}

struct SampleGrad {
  nn::NetworkParams<float> grads;
  double loss = 0.0;
};

SampleGrad sample_gradient(const nn::NetworkParams<float>& params, const data::Sample& s, const TrainConfig& cfg) {
  const auto trace = nn::forward(params, nn::image_to_input<float>(s.image));
  const auto lt = dsnt::total_loss(to_heatmap(trace.z_head), to_heatmap(trace.z_tail), normalized_labels(s),
                                   cfg.lambda_js, cfg.sigma_hm);
  nn::Tensor3<float> dzh(1, trace.z_head.height, trace.z_head.width);
  nn::Tensor3<float> dzt(1, trace.z_tail.height, trace.z_tail.width);
  for (std::size_t i = 0; i < dzh.data.size(); ++i) {
    dzh.data[i] = static_cast<float>(lt.grad_head[i]);
    dzt.data[i] = static_cast<float>(lt.grad_tail[i]);
  }
  return {nn::backward(params, trace, dzh, dzt), lt.total};
}

unsigned worker_count(const TrainConfig& cfg, std::size_t jobs) {
  unsigned n = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, jobs));
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; results are stored by
// index so the caller's reduction order is fixed.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

BatchResult batch_gradients(const nn::NetworkParams<float>& params, std::span<const data::Sample> batch,
                            const TrainConfig& cfg) {
  require(!batch.empty(), "empty batch");
  std::vector<SampleGrad> per(batch.size());
  parallel_for(batch.size(), worker_count(cfg, batch.size()),
               [&](std::size_t i) { per[i] = sample_gradient(params, batch[i], cfg); });

  const auto shape = params.buffers();
  std::vector<std::vector<double>> acc;
  for (const auto& b : shape) acc.emplace_back(b.size(), 0.0);
  double loss = 0.0;
  for (const auto& sg : per) {
    loss += sg.loss;
    const auto gb = sg.grads.buffers();
    for (std::size_t k = 0; k < gb.size(); ++k)
      for (std::size_t j = 0; j < gb[k].size(); ++j) acc[k][j] += gb[k][j];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  BatchResult out{nn::zero_params<float>(params.arch), loss * inv};
  auto ob = out.grads.buffers();
  for (std::size_t k = 0; k < ob.size(); ++k)
    for (std::size_t j = 0; j < ob[k].size(); ++j) ob[k][j] = static_cast<float>(acc[k][j] * inv);
  return out;
}

namespace {

struct SplitScore {
  double loss = 0.0;
  double pck15 = 0.0;
};

SplitScore score_split(const nn::NetworkParams<float>& params, std::span<const data::Sample> samples,
                       std::span<const std::size_t> indices, const TrainConfig& cfg) {
  std::vector<double> losses(indices.size());
  std::vector<KeypointPair> preds(indices.size());
  std::vector<KeypointPair> gts(indices.size());
  parallel_for(indices.size(), worker_count(cfg, indices.size()), [&](std::size_t i) {
    const data::Sample& s = samples[indices[i]];
    const auto trace = nn::forward(params, nn::image_to_input<float>(s.image));
    const auto lt = dsnt::total_loss(to_heatmap(trace.z_head), to_heatmap(trace.z_tail), normalized_labels(s),
                                     cfg.lambda_js, cfg.sigma_hm, false);
    losses[i] = lt.total;
    const int w = s.image.width();
    preds[i] = {eval::norm_to_pixels(lt.pred.head, w), eval::norm_to_pixels(lt.pred.tail, w)};
    gts[i] = {s.head, s.tail};
  });
  SplitScore sc;
  for (double l : losses) sc.loss += l;
  sc.loss /= static_cast<double>(indices.size());
  sc.pck15 = 100.0 * eval::pck(preds, gts, 15.0).average();
  return sc;
}

}  // namespace

double mean_loss(const nn::NetworkParams<float>& params, std::span<const data::Sample> samples,
                 std::span<const std::size_t> indices, const TrainConfig& cfg) {
  require(!indices.empty(), "mean_loss needs at least one sample");
  return score_split(params, samples, indices, cfg).loss;
}

RunResult train_run(std::span<const data::Sample> samples, const data::Split& split, const TrainConfig& cfg,
                    const nn::ArchConfig& arch, const EpochCallback& on_epoch) {
  validate(cfg);
  nn::validate(arch);
  require(!split.train.empty() && !split.val.empty(), "training needs non-empty train and validation sets");
  for (const auto& s : samples)
    if (s.image.width() != arch.input_size || s.image.height() != arch.input_size)
      fail(Errc::shape_mismatch, "sample size does not match the network input size");

  SeededRng rng(cfg.seed);
  nn::NetworkParams<float> params = nn::init_params(arch, rng);
  AdamState<float> state = make_adam_state(params);
  RunResult result;
  double best_pck = -1.0;
  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = data::epoch_batches(samples, split.train, cfg.batch, rng, cfg.augment, cfg.brightness);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      BatchResult br = batch_gradients(params, batches[b], cfg);
      if (!std::isfinite(br.mean_loss))
        fail(Errc::numeric, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1));
      loss_sum += br.mean_loss * static_cast<double>(batches[b].size());
      seen += batches[b].size();
      adam_step(params, br.grads, state, cfg);
    }
    const SplitScore val = score_split(params, samples, split.val, cfg);
    const MetricsRow row{epoch, loss_sum / static_cast<double>(seen), val.loss, val.pck15};
    result.metrics.push_back(row);
    if (on_epoch) on_epoch(row);

    Checkpoint ck{params, cfg, epoch, rng.digest()};
    if (val.pck15 > best_pck) {
      best_pck = val.pck15;
      result.best = ck;
    }
    if (epoch == cfg.epochs) result.final = std::move(ck);
  }
  return result;
}

std::string format_metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = "epoch,train_loss,val_loss,val_pck15\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%u,%.10g,%.10g,%.6f\n", r.epoch, r.train_loss, r.val_loss, r.val_pck15);
    out += line;
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::vector<MetricsRow> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "epoch,train_loss,val_loss,val_pck15") fail(Errc::format, "metrics: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    MetricsRow r;
    if (std::sscanf(line.c_str(), "%u,%lf,%lf,%lf", &r.epoch, &r.train_loss, &r.val_loss, &r.val_pck15) != 4)
      fail(Errc::format, "metrics: line " + std::to_string(line_no) + " is malformed");
    rows.push_back(r);
  }
  if (line_no == 0) fail(Errc::format, "metrics: empty file");
  return rows;
}

}  // namespace wormloc::train
