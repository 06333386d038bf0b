#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "wormloc/error.hpp"
#include "wormloc/image_io.hpp"
#include "wormloc/synthgen.hpp"
#include "wormloc/train.hpp"

using namespace wormloc;
using namespace wormloc::train;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::invalid_argument;
}

const nn::ArchConfig kSmall{30, 1, {4, 4}, 8};

// Dark blob on a light background, labels at its two ends.
std::vector<data::Sample> blob_samples(std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<data::Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    GrayImage img(30, 30, 0.8f);
    const int y = 5 + static_cast<int>(rng.below(20));
    const int x0 = 3 + static_cast<int>(rng.below(8));
    const int x1 = x0 + 8 + static_cast<int>(rng.below(10));
    for (int x = x0; x <= x1; ++x)
      for (int dy = -1; dy <= 1; ++dy) img.at(x, y + dy) = 0.2f;
    img.at(x0, y) = 0.05f;
    out.push_back({img, {double(x0), double(y)}, {double(x1), double(y)}});
  }
  return out;
}

TrainConfig small_cfg(std::uint32_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch = 4;
  c.lr = 3e-3;
  return c;
}

}  // namespace

TEST_CASE("Adam matches a direct implementation") {
  SeededRng rng(1);
  for (int inst = 0; inst < 5; ++inst) {
    const std::size_t n = 20;
    TrainConfig cfg;
    cfg.lr = rng.uniform(1e-4, 1e-2);
    std::vector<double> p(n), q;
    for (double& v : p) v = rng.uniform(-1, 1);
    q = p;
    AdamMoments<double> mom{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    support::DirectAdam ref(n, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    for (std::uint64_t t = 1; t <= 50; ++t) {
      std::vector<double> g(n);
      for (double& v : g) v = rng.normal(0.0, 2.0);
      adam_update(std::span<double>(p), std::span<const double>(g), mom, t, cfg);
      ref.step(q, g);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-12);
    }
  }
}

TEST_CASE("Adam edge cases") {
  TrainConfig cfg;
  std::vector<double> p{0.5, -0.5, 1.0};
  AdamMoments<double> mom{std::vector<double>(3, 0.0), std::vector<double>(3, 0.0)};
  const std::vector<double> zero(3, 0.0);
  adam_update(std::span<double>(p), std::span<const double>(zero), mom, 1, cfg);
  CHECK(p == std::vector<double>{0.5, -0.5, 1.0});

  const std::vector<double> g{3.0, -0.2, 1e-3};
  adam_update(std::span<double>(p), std::span<const double>(g), mom, 1, cfg);
  CHECK(p[0] == doctest::Approx(0.5 - cfg.lr).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-0.5 + cfg.lr).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(1.0 - cfg.lr).epsilon(1e-6));

  SeededRng rng(3);
  auto params = support::random_params(kSmall, rng);
  auto state = make_adam_state(params);
  auto grads = nn::zero_params<double>(kSmall);
  adam_step(params, grads, state, cfg);
  CHECK(state.step == 1);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c));
  c.lr = 0.0;
  CHECK_THROWS_AS(validate(c), Error);
  c = {};
  c.train_fraction = 1.0;
  CHECK_THROWS_AS(validate(c), Error);
  c = {};
  c.sigma_hm = -1.0;
  CHECK_THROWS_AS(validate(c), Error);
  c = {};
  c.batch = 0;
  CHECK_THROWS_AS(validate(c), Error);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  SeededRng rng(4);
  Checkpoint ck{nn::init_params(kSmall, rng), small_cfg(3), 3, rng.digest()};
  ck.config.seed = 77;
  const auto bytes = serialize_checkpoint(ck);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.config == ck.config);
  CHECK(back.epoch == 3);
  CHECK(back.rng_digest == ck.rng_digest);
  CHECK(back.params.arch == ck.params.arch);
  CHECK(back.params.trunk[1].weight == ck.params.trunk[1].weight);
  CHECK(back.params.tail.bias == ck.params.tail.bias);
  CHECK(serialize_checkpoint(back) == bytes);

  const auto dir = support::scratch_dir("ckpt");
  save_checkpoint(ck, dir / "a.wpkt");
  save_checkpoint(load_checkpoint(dir / "a.wpkt"), dir / "b.wpkt");
  CHECK(io::read_file(dir / "a.wpkt") == io::read_file(dir / "b.wpkt"));
}

TEST_CASE("checkpoint corruption is detected") {
  SeededRng rng(5);
  const Checkpoint ck{nn::init_params(kSmall, rng), {}, 1, 0};
  const auto bytes = serialize_checkpoint(ck);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK(code_of([&] { deserialize_checkpoint(bad); }) == Errc::bad_magic);
  CHECK(code_of([&] { deserialize_checkpoint(std::vector<std::uint8_t>{'W', 'P'}); }) == Errc::bad_magic);

  bad = bytes;
  bad[4] = 9;
  CHECK(code_of([&] { deserialize_checkpoint(bad); }) == Errc::unknown_version);

  for (std::size_t cut : {std::size_t{6}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK(code_of([&] { deserialize_checkpoint(t); }) == Errc::corrupt_file);
  }
  auto extra = bytes;
  extra.push_back(0);
  CHECK(code_of([&] { deserialize_checkpoint(extra); }) == Errc::corrupt_file);

  // Declared architecture and stored block shapes disagree.
  nn::ArchConfig other = kSmall;
  other.trunk = {4, 5};
  SeededRng r2(6);
  auto mixed = ck;
  mixed.params.trunk[1] = nn::init_params(other, r2).trunk[1];
  CHECK(code_of([&] { deserialize_checkpoint(serialize_checkpoint(mixed)); }) == Errc::shape_mismatch);

  CHECK(code_of([&] { load_checkpoint(support::scratch_dir("ckpt_missing") / "none.wpkt"); }) == Errc::io);
}

TEST_CASE("metrics CSV round trip") {
  const std::vector<MetricsRow> rows{{1, 0.5, 0.25, 12.5}, {2, 0.125, 0.0625, 100.0}};
  const auto text = format_metrics_csv(rows);
  CHECK(text.rfind("epoch,train_loss,val_loss,val_pck15\n", 0) == 0);
  const auto back = parse_metrics_csv(text);
  REQUIRE(back.size() == 2);
  CHECK(back[1].epoch == 2);
  CHECK(back[1].val_loss == 0.0625);
  CHECK(back[0].val_pck15 == 12.5);
  CHECK(code_of([] { parse_metrics_csv("a,b\n1,2\n"); }) == Errc::format);
  CHECK(code_of([] { parse_metrics_csv("epoch,train_loss,val_loss,val_pck15\n1,x,2,3\n"); }) == Errc::format);
  CHECK(code_of([] { parse_metrics_csv(""); }) == Errc::format);
}

TEST_CASE("batch gradients do not depend on the thread count") {
  const auto samples = blob_samples(6, 1);
  SeededRng rng(2);
  const auto params = nn::init_params(kSmall, rng);
  auto c1 = small_cfg(1), c4 = small_cfg(1);
  c1.threads = 1;
  c4.threads = 4;
  const auto a = batch_gradients(params, samples, c1);
  const auto b = batch_gradients(params, samples, c4);
  CHECK(a.mean_loss == b.mean_loss);
  CHECK(a.grads.trunk[0].weight == b.grads.trunk[0].weight);
  CHECK(a.grads.head.weight == b.grads.head.weight);
}

TEST_CASE("batch gradient matches finite differences of the mean loss") {
  const auto samples = blob_samples(3, 3);
  SeededRng rng(4);
  auto params = nn::init_params(kSmall, rng);
  const auto cfg = small_cfg(1);
  const auto br = batch_gradients(params, samples, cfg);
  std::vector<std::size_t> all{0, 1, 2};
  CHECK(br.mean_loss == doctest::Approx(mean_loss(params, samples, all, cfg)).epsilon(1e-6));
  // Float network: loose check on a few head-branch weights.
  for (std::size_t i : {std::size_t{0}, std::size_t{5}, std::size_t{17}}) {
    float& w = params.head.weight[i];
    const float orig = w;
    const float h = 1e-2f;
    w = orig + h;
    const double up = mean_loss(params, samples, all, cfg);
    w = orig - h;
    const double dn = mean_loss(params, samples, all, cfg);
    w = orig;
    const double fd = (up - dn) / (2.0 * h);
    CHECK(br.grads.head.weight[i] == doctest::Approx(fd).epsilon(2e-2).scale(1e-3));
  }
}

TEST_CASE("a short run learns and is deterministic") {
  const auto samples = blob_samples(24, 5);
  const auto split = data::split_dataset(samples.size(), 0.75, 1);
  std::vector<double> losses;
  const auto r1 = train_run(samples, split, small_cfg(12), kSmall, [&](const MetricsRow& r) { losses.push_back(r.train_loss); });
  REQUIRE(r1.metrics.size() == 12);
  CHECK(losses.back() < losses.front());
  CHECK(r1.final.epoch == 12);
  CHECK(r1.best.epoch >= 1);
  double best = -1.0;
  std::uint32_t best_epoch = 0;
  for (const auto& m : r1.metrics)
    if (m.val_pck15 > best) best = m.val_pck15, best_epoch = m.epoch;
  CHECK(r1.best.epoch == best_epoch);

  const auto r2 = train_run(samples, split, small_cfg(12), kSmall);
  CHECK(format_metrics_csv(r1.metrics) == format_metrics_csv(r2.metrics));
  CHECK(serialize_checkpoint(r1.final) == serialize_checkpoint(r2.final));
  CHECK(serialize_checkpoint(r1.best) == serialize_checkpoint(r2.best));
}

TEST_CASE("train_run input checks") {
  const auto samples = blob_samples(4, 6);
  data::Split empty_val{{0, 1, 2, 3}, {}};
  CHECK(code_of([&] { train_run(samples, empty_val, small_cfg(1), kSmall); }) == Errc::invalid_argument);
  const auto split = data::split_dataset(4, 0.5, 1);
  CHECK(code_of([&] { train_run(samples, split, small_cfg(1), nn::ArchConfig{}); }) == Errc::shape_mismatch);
  auto huge = small_cfg(2);
  huge.lr = 1e30;
  huge.lambda_js = 1e30;
  CHECK(code_of([&] { train_run(samples, split, huge, kSmall); }) == Errc::numeric);
}
