// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "support.hpp"
#include "wormloc/baseline.hpp"
#include "wormloc/dataset.hpp"
#include "wormloc/dsnt.hpp"
#include "wormloc/eval.hpp"
#include "wormloc/imaging.hpp"
#include "wormloc/nn.hpp"
#include "wormloc/render.hpp"
#include "wormloc/synthgen.hpp"
#include "wormloc/train.hpp"

using namespace wormloc;
using support::central_diff;
using support::rel_err;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s  %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---- gradients ---------------------------------------------------------

struct GradStat {
  int instances = 0;
  double worst = 0.0;
  void add(double analytic, double numeric) { worst = std::max(worst, rel_err(analytic, numeric)); }
};

dsnt::Heatmap random_logits(SeededRng& rng, int k, double scale = 2.0) {
  dsnt::Heatmap z(k);
  for (double& v : z.values) v = rng.uniform(-scale, scale);
  return z;
}

std::vector<std::pair<std::string, GradStat>> gradient_suite() {
  std::vector<std::pair<std::string, GradStat>> out;
  constexpr int kInstances = 20;

  {
    GradStat s;
    SeededRng rng(101);
    for (; s.instances < kInstances; ++s.instances) {
      const int ci = 1 + static_cast<int>(rng.below(3)), co = 1 + static_cast<int>(rng.below(3));
      const int h = 1 + static_cast<int>(rng.below(6)), w = 1 + static_cast<int>(rng.below(6));
      auto x = support::random_tensor(rng, ci, h, w);
      nn::ConvBlock<double> k(co, ci);
      for (double& v : k.weight) v = rng.uniform(-1, 1);
      for (double& v : k.bias) v = rng.uniform(-1, 1);
      const auto r = support::random_tensor(rng, co, h, w);
      auto f = [&] { return support::dot(nn::conv2d(x, k).data, r.data); };
      nn::ConvBlock<double> g(co, ci);
      const auto dx = nn::conv2d_backward(x, k, r, g);
      for (std::size_t i = 0; i < x.data.size(); ++i) s.add(dx.data[i], central_diff(f, x.data[i]));
      for (std::size_t i = 0; i < k.weight.size(); ++i) s.add(g.weight[i], central_diff(f, k.weight[i]));
      for (std::size_t i = 0; i < k.bias.size(); ++i) s.add(g.bias[i], central_diff(f, k.bias[i]));
    }
    out.emplace_back("conv2d", s);
  }
  {
    GradStat s;
    SeededRng rng(102);
    for (; s.instances < kInstances; ++s.instances) {
      auto x = support::away_from_zero(rng, 2, 3, 4);
      const auto r = support::random_tensor(rng, 2, 3, 4);
      auto f = [&] { return support::dot(nn::relu(x).data, r.data); };
      const auto dx = nn::relu_backward(x, r);
      for (std::size_t i = 0; i < x.data.size(); ++i) s.add(dx.data[i], central_diff(f, x.data[i]));
    }
    out.emplace_back("relu", s);
  }
  {
    GradStat s;
    SeededRng rng(103);
    for (; s.instances < kInstances; ++s.instances) {
      const int h = 1 + static_cast<int>(rng.below(7)), w = 1 + static_cast<int>(rng.below(7));
      auto x = support::distinct_tensor(rng, 2, h, w);
      const auto p = nn::maxpool2_ceil(x);
      const auto r = support::random_tensor(rng, 2, p.out.height, p.out.width);
      auto f = [&] { return support::dot(nn::maxpool2_ceil(x).out.data, r.data); };
      const auto dx = nn::maxpool2_ceil_backward(x, p, r);
      for (std::size_t i = 0; i < x.data.size(); ++i) s.add(dx.data[i], central_diff(f, x.data[i]));
    }
    out.emplace_back("maxpool2_ceil", s);
  }
  {
    GradStat s;
    SeededRng rng(104);
    for (; s.instances < kInstances; ++s.instances) {
      const int k = 1 + static_cast<int>(rng.below(6));
      auto z = random_logits(rng, k);
      std::vector<double> r(z.values.size());
      for (double& v : r) v = rng.uniform(-1, 1);
      auto f = [&] { return support::dot(dsnt::softmax2d(z).values, r); };
      const auto dz = dsnt::softmax2d_backward(dsnt::softmax2d(z), r);
      for (std::size_t i = 0; i < dz.size(); ++i) s.add(dz[i], central_diff(f, z.values[i]));
    }
    out.emplace_back("softmax2d", s);
  }
  {
    GradStat s;
    SeededRng rng(105);
    for (; s.instances < kInstances; ++s.instances) {
      const int k = 1 + static_cast<int>(rng.below(6));
      auto p = support::random_distribution(rng, k);
      const auto g = dsnt::coord_grids(k);
      const double rx = rng.uniform(-1, 1), ry = rng.uniform(-1, 1);
      auto f = [&] {
        const auto c = dsnt::dsnt(p, g);
        return rx * c.x + ry * c.y;
      };
      const auto dp = dsnt::dsnt_backward(g, rx, ry);
      for (std::size_t i = 0; i < dp.size(); ++i) s.add(dp[i], central_diff(f, p.values[i], 1e-7));
    }
    out.emplace_back("dsnt", s);
  }
  {
    GradStat s;
    SeededRng rng(106);
    for (; s.instances < kInstances; ++s.instances) {
      dsnt::NormKeypoints pred{{rng.uniform(-1, 1), rng.uniform(-1, 1)}, {rng.uniform(-1, 1), rng.uniform(-1, 1)}};
      const dsnt::NormKeypoints gt{{rng.uniform(-1, 1), rng.uniform(-1, 1)}, {rng.uniform(-1, 1), rng.uniform(-1, 1)}};
      dsnt::NormKeypoints g;
      dsnt::mse_coord_loss(pred, gt, &g);
      auto f = [&] { return dsnt::mse_coord_loss(pred, gt); };
      s.add(g.head.x, central_diff(f, pred.head.x));
      s.add(g.head.y, central_diff(f, pred.head.y));
      s.add(g.tail.x, central_diff(f, pred.tail.x));
      s.add(g.tail.y, central_diff(f, pred.tail.y));
    }
    out.emplace_back("mse_coord_loss", s);
  }
  {
    GradStat s;
    SeededRng rng(107);
    for (; s.instances < kInstances; ++s.instances) {
      const int k = 2 + static_cast<int>(rng.below(5));
      auto p = support::random_distribution(rng, k);
      const auto q = support::random_distribution(rng, k);
      std::vector<double> g;
      dsnt::js_divergence(p, q, &g);
      auto f = [&] { return dsnt::js_divergence(p, q); };
      for (std::size_t i = 0; i < g.size(); ++i) s.add(g[i], central_diff(f, p.values[i], 1e-7));
    }
    out.emplace_back("js_divergence", s);
  }
  {
    GradStat s;
    SeededRng rng(108);
    for (; s.instances < kInstances; ++s.instances) {
      auto zh = random_logits(rng, 5), zt = random_logits(rng, 5);
      const dsnt::NormKeypoints gt{{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)},
                                   {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)}};
      const double lambda = s.instances % 4 == 0 ? 0.0 : rng.uniform(0.1, 2.0);
      const double sigma = rng.uniform(0.3, 2.0);
      const auto lt = dsnt::total_loss(zh, zt, gt, lambda, sigma);
      auto f = [&] { return dsnt::total_loss(zh, zt, gt, lambda, sigma, false).total; };
      for (std::size_t i = 0; i < zh.values.size(); ++i) {
        s.add(lt.grad_head[i], central_diff(f, zh.values[i]));
        s.add(lt.grad_tail[i], central_diff(f, zt.values[i]));
      }
    }
    out.emplace_back("total_loss", s);
  }
  {
    GradStat s;
    const nn::ArchConfig a{30, 1, {3, 4, 4}, 4};
    SeededRng rng(109);
    while (s.instances < kInstances) {
      auto p = support::random_params(a, rng);
      const auto x = support::random_tensor(rng, 1, 30, 30, -0.5, 0.5);
      const dsnt::NormKeypoints gt{{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)},
                                   {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)}};
      const double sigma = rng.uniform(0.5, 1.5);
      const auto tr = nn::forward(p, x);
      // A relu or pooling kink inside the stencil makes the difference quotient meaningless.
      if (support::kink_margin(tr) < 1e-4) continue;
      ++s.instances;
      dsnt::Heatmap zh(4), zt(4);
      zh.values.assign(tr.z_head.data.begin(), tr.z_head.data.end());
      zt.values.assign(tr.z_tail.data.begin(), tr.z_tail.data.end());
      const auto lt = dsnt::total_loss(zh, zt, gt, 1.0, sigma);
      nn::Tensor3<double> dzh(1, 4, 4), dzt(1, 4, 4);
      dzh.data = lt.grad_head;
      dzt.data = lt.grad_tail;
      const auto g = nn::backward(p, tr, dzh, dzt);
      auto f = [&] { return support::network_loss(p, x, gt, 1.0, sigma); };
      auto pb = p.buffers();
      const auto gb = g.buffers();
      for (std::size_t b = 0; b < pb.size(); ++b)
        for (std::size_t i = 0; i < pb[b].size(); ++i) s.add(gb[b][i], central_diff(f, pb[b][i]));
    }
    out.emplace_back("full network", s);
  }
  return out;
}

void check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto stats = gradient_suite();
  const double secs = seconds_since(t0);
  bool ok = secs < 60.0;
  std::string detail;
  for (const auto& [name, s] : stats) {
    ok = ok && s.instances >= 20 && s.worst <= 1e-4;
    detail += fmt("%s %d x %.1e; ", name.c_str(), s.instances, s.worst);
  }
  report(ok, "gradient suite", detail + fmt("%.1f s", secs));
}

// ---- dsnt and losses ---------------------------------------------------

void check_dsnt_exactness() {
  double worst_delta = 0.0, worst_uniform = 0.0;
  for (int k = 1; k <= 12; ++k) {
    const auto g = dsnt::coord_grids(k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        dsnt::Heatmap h(k);
        h.at(i, j) = 1.0;
        h.normalized = true;
        const auto c = dsnt::dsnt(h, g);
        worst_delta = std::max({worst_delta, std::abs(c.x - g.x[i * k + j]), std::abs(c.y - g.y[i * k + j])});
      }
    dsnt::Heatmap u(k, 1.0 / (k * k));
    u.normalized = true;
    const auto c = dsnt::dsnt(u, g);
    worst_uniform = std::max({worst_uniform, std::abs(c.x), std::abs(c.y)});
  }
  const auto g5 = dsnt::coord_grids(5);
  const std::vector<double> row(g5.x.begin(), g5.x.begin() + 5);
  const bool exact = row == std::vector<double>{-0.8, -0.4, 0.0, 0.4, 0.8};
  report(worst_delta <= 1e-12 && worst_uniform <= 1e-12 && exact, "DSNT exactness",
         fmt("delta %.1e, uniform %.1e, K=5 row %s", worst_delta, worst_uniform, exact ? "exact" : "differs"));
}

void check_loss_properties() {
  SeededRng rng(201);
  double js_lo = 1.0, js_hi = 0.0, asym = 0.0, self = 0.0, sum_err = 0.0, shift_err = 0.0;
  for (int inst = 0; inst < 500; ++inst) {
    const int k = 1 + static_cast<int>(rng.below(8));
    const auto p = support::random_distribution(rng, k);
    const auto q = support::random_distribution(rng, k);
    const double a = dsnt::js_divergence(p, q), b = dsnt::js_divergence(q, p);
    js_lo = std::min(js_lo, a);
    js_hi = std::max(js_hi, a);
    asym = std::max(asym, std::abs(a - b));
    self = std::max(self, std::abs(dsnt::js_divergence(p, p)));

    const auto z = random_logits(rng, k, rng.uniform(0.1, 50.0));
    const auto s = dsnt::softmax2d(z);
    double total = 0.0;
    for (double v : s.values) total += v;
    sum_err = std::max(sum_err, std::abs(total - 1.0));
    auto shifted = z;
    const double c = rng.uniform(-1000, 1000);
    for (double& v : shifted.values) v += c;
    const auto s2 = dsnt::softmax2d(shifted);
    for (std::size_t i = 0; i < s.values.size(); ++i) shift_err = std::max(shift_err, std::abs(s.values[i] - s2.values[i]));
  }
  // Disjoint supports reach the upper bound.
  dsnt::Heatmap d1(3), d2(3);
  d1.at(0, 0) = 1.0;
  d2.at(2, 2) = 1.0;
  d1.normalized = d2.normalized = true;
  js_hi = std::max(js_hi, dsnt::js_divergence(d1, d2));
  const bool ok = js_lo >= 0.0 && js_hi <= std::log(2.0) && asym <= 1e-12 && self <= 1e-12 && sum_err <= 1e-9 &&
                  shift_err <= 1e-9;
  report(ok, "loss properties",
         fmt("JS in [%.3g, %.6f] (ln2 %.6f), asym %.1e, JS(p,p) %.1e, softmax sum %.1e, shift %.1e", js_lo, js_hi,
             std::log(2.0), asym, self, sum_err, shift_err));
}

// ---- oracles -----------------------------------------------------------

void check_oracles() {
  int cc_bad = 0, masks = 0;
  SeededRng rng(301);
  while (masks < 200) {
    BinaryMask m(16, 16);
    const double density = rng.uniform(0.2, 0.6);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) m.set(x, y, rng.uniform() < density);
    if (m.count() == 0) continue;
    ++masks;
    for (int conn : {4, 8}) {
      const auto comps = support::flood_fill_components(m, conn);
      auto box_of = [](const std::vector<int>& c) {
        int x0 = 16, y0 = 16, x1 = -1, y1 = -1;
        for (int i : c) {
          x0 = std::min(x0, i % 16);
          x1 = std::max(x1, i % 16);
          y0 = std::min(y0, i / 16);
          y1 = std::max(y1, i / 16);
        }
        return BoundingBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
      };
      std::size_t best = 0;
      for (std::size_t i = 1; i < comps.size(); ++i) {
        const auto bi = box_of(comps[i]), bb = box_of(comps[best]);
        if (comps[i].size() > comps[best].size() ||
            (comps[i].size() == comps[best].size() && std::tie(bi.y0, bi.x0) < std::tie(bb.y0, bb.x0)))
          best = i;
      }
      BinaryMask expect(16, 16);
      for (int i : comps[best]) expect.set(i % 16, i / 16, true);
      const auto got = imaging::largest_component(m, conn);
      if (!(got.mask == expect) || got.pixels != comps[best].size()) ++cc_bad;
    }
  }
  report(cc_bad == 0, "oracle largest_component", fmt("%d masks x {4,8}-connectivity, %d mismatches", masks, cc_bad));

  int pck_bad = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<KeypointPair> pred(n), gt(n);
    for (std::size_t i = 0; i < n; ++i) {
      gt[i] = {{rng.uniform(0, 150), rng.uniform(0, 150)}, {rng.uniform(0, 150), rng.uniform(0, 150)}};
      pred[i] = {{gt[i].head.x + rng.normal(0, 10), gt[i].head.y + rng.normal(0, 10)},
                 {gt[i].tail.x + rng.normal(0, 10), gt[i].tail.y + rng.normal(0, 10)}};
    }
    const double p = rng.uniform(0, 30);
    const auto [bh, bt] = support::brute_pck(pred, gt, p);
    const auto f = eval::pck(pred, gt, p);
    if (f.head != bh || f.tail != bt) ++pck_bad;
  }
  report(pck_bad == 0, "oracle pck", fmt("100 instances, %d mismatches", pck_bad));

  double adam_err = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t n = 32;
    train::TrainConfig cfg;
    cfg.lr = rng.uniform(1e-4, 1e-2);
    std::vector<double> p(n);
    for (double& v : p) v = rng.uniform(-1, 1);
    auto q = p;
    train::AdamMoments<double> mom{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    support::DirectAdam ref(n, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    for (std::uint64_t t = 1; t <= 100; ++t) {
      std::vector<double> g(n);
      for (double& v : g) v = rng.normal(0.0, 2.0);
      train::adam_update(std::span<double>(p), std::span<const double>(g), mom, t, cfg);
      ref.step(q, g);
      for (std::size_t i = 0; i < n; ++i) adam_err = std::max(adam_err, std::abs(p[i] - q[i]));
    }
  }
  report(adam_err <= 1e-12, "oracle adam", fmt("10 instances x 100 steps, max abs diff %.1e", adam_err));
}

// ---- end to end --------------------------------------------------------

struct E2E {
  std::vector<eval::AccuracyTable> tables;
  std::vector<std::vector<train::MetricsRow>> metrics;
  std::vector<double> random_pck7;
  std::size_t samples = 0;
  double seconds = 0.0;
  double cpu_seconds = 0.0;
};

E2E run_e2e(const fs::path& dir) {
  E2E e;
  const auto t0 = std::chrono::steady_clock::now();
  const std::clock_t c0 = std::clock();
  const auto rows = data::load_manifest(synth::gen_dataset(280, 2024, dir / "raw"));
  const auto pre = data::preprocess_all(rows, {});
  e.samples = pre.samples.size();
  const std::vector<double> th{7, 15, 30};
  for (std::uint64_t seed : {1, 2, 3}) {
    train::TrainConfig cfg;
    cfg.seed = seed;
    const auto split = data::split_dataset(pre.samples.size(), cfg.train_fraction, seed);
    const auto res = train::train_run(pre.samples, split, cfg);
    std::vector<data::Sample> val;
    for (auto i : split.val) val.push_back(pre.samples[i]);
    const auto ev = eval::evaluate(res.final.params, val, th);
    e.tables.push_back(ev.table);
    e.metrics.push_back(res.metrics);

    // Uniform random guesses anywhere in the crop.
    SeededRng rng(1000 + seed);
    std::vector<KeypointPair> guess(val.size()), gt(val.size());
    const double side = pre.samples.front().image.width();
    for (std::size_t i = 0; i < val.size(); ++i) {
      guess[i] = {{rng.uniform(-0.5, side - 0.5), rng.uniform(-0.5, side - 0.5)},
                  {rng.uniform(-0.5, side - 0.5), rng.uniform(-0.5, side - 0.5)}};
      gt[i] = {val[i].head, val[i].tail};
    }
    e.random_pck7.push_back(100.0 * eval::pck(guess, gt, 7).average());
    std::printf("      seed %llu: PCK@7 %.2f  PCK@15 %.2f  PCK@30 %.2f  (random PCK@7 %.2f, %.0f s)\n",
                static_cast<unsigned long long>(seed), ev.table.average[0], ev.table.average[1], ev.table.average[2],
                e.random_pck7.back(), seconds_since(t0));
    std::fflush(stdout);
  }
  e.seconds = seconds_since(t0);
  e.cpu_seconds = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
  return e;
}

void check_e2e(const E2E& e) {
  double p7 = 0.0, p15 = 0.0, p30 = 0.0, r7 = 0.0;
  bool monotone = true;
  for (std::size_t i = 0; i < e.tables.size(); ++i) {
    const auto& a = e.tables[i].average;
    p7 += a[0];
    p15 += a[1];
    p30 += a[2];
    r7 += e.random_pck7[i];
    monotone = monotone && a[0] <= a[1] && a[1] <= a[2];
  }
  const double n = static_cast<double>(e.tables.size());
  p7 /= n;
  p15 /= n;
  p30 /= n;
  r7 /= n;
  report(p15 >= 90.0 && p30 >= 95.0, "E2E accuracy",
         fmt("%zu samples, mean over 3 seeds PCK@15 %.2f (>= 90), PCK@30 %.2f (>= 95)", e.samples, p15, p30));
  report(e.seconds <= 900.0, "E2E runtime", fmt("%.0f s wall, %.0f s CPU (<= 900)", e.seconds, e.cpu_seconds));
  report(p7 - r7 >= 40.0, "E2E above random", fmt("PCK@7 %.2f vs random %.2f, margin %.2f (>= 40)", p7, r7, p7 - r7));
  report(monotone, "E2E monotone", "PCK@7 <= PCK@15 <= PCK@30 on every run");
}

// ---- protocol ----------------------------------------------------------

void check_protocol(const E2E& e, const fs::path& dir) {
  std::ostringstream man;
  man << "image,head_x,head_y,tail_x,tail_y\n";
  for (int i = 0; i < 596; ++i) man << "img_" << i << ".png,10,20,30,40\n";
  const auto rows = data::parse_manifest(man.str(), dir);
  const auto split = data::split_dataset(rows.size(), 0.7, 1);
  report(rows.size() == 596 && split.train.size() == 417 && split.val.size() == 179, "protocol split",
         fmt("%zu rows -> %zu train / %zu val", rows.size(), split.train.size(), split.val.size()));

  const auto rep = eval::aggregate_runs(e.tables);
  const auto text = eval::format_report_text(rep);
  int rows_pm = 0;
  for (std::size_t pos = 0; (pos = text.find("\xC2\xB1", pos)) != std::string::npos; ++pos) ++rows_pm;
  std::printf("%s", text.c_str());
  report(rep.rows() == 9 && rows_pm == 9 && rep.runs == e.tables.size(), "protocol report",
         fmt("%zu rows, %d with mean \xC2\xB1 std over %zu runs", rep.rows(), rows_pm, rep.runs));

  fs::create_directories(dir);
  std::vector<std::vector<train::MetricsRow>> parsed;
  for (std::size_t i = 0; i < e.metrics.size(); ++i) {
    const auto path = dir / ("metrics_" + std::to_string(i) + ".csv");
    std::ofstream(path, std::ios::binary) << train::format_metrics_csv(e.metrics[i]);
    parsed.push_back(train::parse_metrics_csv(slurp(path)));
  }
  const auto svg = render::metrics_svg(parsed);
  std::ofstream(dir / "curves.svg", std::ios::binary) << svg;
  std::size_t lines = 0;
  for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) ++lines;
  const bool same = parsed.size() == e.metrics.size() && parsed.front().size() == e.metrics.front().size();
  report(same && lines == 3 && svg.rfind("<svg", 0) == 0, "protocol plot",
         fmt("%zu metrics CSVs of %zu epochs -> SVG with %zu curves", parsed.size(), parsed.front().size(), lines));
}

// ---- baseline ----------------------------------------------------------

std::optional<baseline::Proposals> propose(const synth::Worm& w) {
  const auto mask = imaging::adaptive_threshold(w.image, 51, 0.02, imaging::Polarity::dark_foreground);
  const auto comp = imaging::largest_component(mask, 8);
  return baseline::endpoint_proposals(baseline::trace_contour(comp.mask));
}

bool localized(const baseline::Proposals& p, const synth::Worm& w, double tol) {
  const bool same = distance(p.head, w.head) <= tol && distance(p.tail, w.tail) <= tol;
  const bool swapped = distance(p.head, w.tail) <= tol && distance(p.tail, w.head) <= tol;
  return same || swapped;
}

void check_baseline() {
  synth::WormParams p;
  p.curvature = 0.0;
  const double tol = p.body_width / 2 + 2;
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SeededRng rng(seed);
    const auto w = synth::gen_worm(rng, p);
    const auto prop = propose(w);
    if (prop && localized(*prop, w, tol)) ++hits;
  }
  report(hits >= 45, "baseline straight worms", fmt("%d/50 within %.1f px", hits, tol));

  synth::WormParams bent;
  bent.noise_std = 0.0;
  std::vector<PixelPoint> line;
  const std::vector<PixelPoint> knots{{20, 40}, {120, 75}, {20, 110}};
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const int n = static_cast<int>(std::ceil(distance(knots[i], knots[i + 1]) / bent.segment_length));
    for (int s = 0; s < n; ++s) {
      const double t = static_cast<double>(s) / n;
      line.push_back({knots[i].x + t * (knots[i + 1].x - knots[i].x), knots[i].y + t * (knots[i + 1].y - knots[i].y)});
    }
  }
  line.push_back(knots.back());
  SeededRng rng(3);
  const auto w = synth::render_worm(line, bent, rng);
  const auto prop = propose(w);
  const bool miss = !prop || !localized(*prop, w, bent.body_width / 2 + 2);
  std::string detail = "V-shaped worm: ";
  if (prop)
    detail += fmt("proposals (%.0f,%.0f) (%.0f,%.0f), true ends (%.0f,%.0f) (%.0f,%.0f)", prop->head.x, prop->head.y,
                  prop->tail.x, prop->tail.y, w.head.x, w.head.y, w.tail.x, w.tail.y);
  else
    detail += "no proposals";
  report(miss, "baseline mislocalization", detail);
}

// ---- determinism -------------------------------------------------------

struct Artifacts {
  std::vector<std::string> files;
};

Artifacts short_pipeline(const fs::path& dir) {
  Artifacts a;
  const auto manifest = synth::gen_dataset(16, 77, dir / "raw");
  a.files.push_back(slurp(manifest));
  a.files.push_back(slurp(dir / "raw" / "img_00003.png"));
  imaging::ImagingConfig ic;
  ic.out_size = 30;
  const auto pre = data::preprocess_all(data::load_manifest(manifest), ic);
  train::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 4;
  cfg.seed = 5;
  const nn::ArchConfig arch{30, 1, {4, 4}, 8};
  const auto split = data::split_dataset(pre.samples.size(), cfg.train_fraction, cfg.seed);
  const auto res = train::train_run(pre.samples, split, cfg, arch);
  a.files.push_back(train::format_metrics_csv(res.metrics));
  const auto ck = train::serialize_checkpoint(res.final);
  const auto best = train::serialize_checkpoint(res.best);
  a.files.emplace_back(ck.begin(), ck.end());
  a.files.emplace_back(best.begin(), best.end());
  const auto& s = pre.samples.front();
  const auto pr = eval::predict(res.final.params, s.image);
  a.files.push_back(render::prediction_svg(s.image, pr.pixels, KeypointPair{s.head, s.tail}, pr.p_head));
  std::vector<std::vector<train::MetricsRow>> runs{res.metrics};
  a.files.push_back(render::metrics_svg(runs));
  SeededRng rng(9);
  const auto w = synth::gen_worm(rng, {});
  const auto mask = imaging::adaptive_threshold(w.image, 51, 0.02, imaging::Polarity::dark_foreground);
  const auto contour = baseline::trace_contour(imaging::largest_component(mask, 8).mask);
  a.files.push_back(render::baseline_svg(w.image, contour, baseline::endpoint_proposals(contour)));
  return a;
}

void check_determinism(const fs::path& dir) {
  const auto a = short_pipeline(dir / "a");
  const auto b = short_pipeline(dir / "b");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.files.size(); ++i) same += a.files[i] == b.files[i] && !a.files[i].empty();
  report(same == a.files.size(), "determinism",
         fmt("%zu/%zu artifacts byte-identical (manifest, image, metrics CSV, 2 checkpoints, 3 SVGs)", same,
             a.files.size()));
}

}  // namespace

int main() {
  const auto dir = support::scratch_dir("acceptance");
  try {
    check_gradients();
    check_dsnt_exactness();
    check_loss_properties();
    check_oracles();
    check_baseline();
    check_determinism(dir / "det");
    const auto e = run_e2e(dir / "e2e");
    check_e2e(e);
    check_protocol(e, dir / "protocol");
  } catch (const std::exception& ex) {
    std::printf("FAIL  aborted: %s\n", ex.what());
    return 1;
  }
  std::printf("%d failing criteria\n", failures);
  return failures == 0 ? 0 : 1;
}
