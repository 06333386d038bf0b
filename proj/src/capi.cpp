#include "wormloc/wormloc.h"

#include <cstdio>
#include <filesystem>
#include <new>
#include <string>

#include "wormloc/baseline.hpp"
#include "wormloc/dataset.hpp"
#include "wormloc/error.hpp"
#include "wormloc/eval.hpp"
#include "wormloc/image_io.hpp"
#include "wormloc/imaging.hpp"
#include "wormloc/render.hpp"
#include "wormloc/synthgen.hpp"
#include "wormloc/train.hpp"

using namespace wormloc;

struct wl_image {
  GrayImage img;
};

struct wl_model {
  train::Checkpoint ckpt;
};

struct wl_dataset {
  std::vector<data::Sample> samples;
};

struct wl_report {
  std::vector<double> thresholds;
  std::vector<eval::AccuracyTable> tables;
  std::string rendered;
};

namespace {

thread_local std::string g_last_error;

wl_status to_status(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return WL_ERR_INVALID_ARGUMENT;
    case Errc::io: return WL_ERR_IO;
    case Errc::format: return WL_ERR_FORMAT;
    case Errc::bad_magic: return WL_ERR_BAD_MAGIC;
    case Errc::unknown_version: return WL_ERR_UNKNOWN_VERSION;
    case Errc::shape_mismatch: return WL_ERR_SHAPE_MISMATCH;
    case Errc::corrupt_file: return WL_ERR_CORRUPT_FILE;
    case Errc::empty_mask: return WL_ERR_EMPTY_MASK;
    case Errc::numeric: return WL_ERR_NUMERIC;
  }
  return WL_ERR_INTERNAL;
}

template <typename Fn>
wl_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return WL_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return WL_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return WL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return WL_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) fail(Errc::invalid_argument, std::string(what) + " must not be NULL");
}

imaging::ImagingConfig to_cpp(const wl_imaging_config* c) {
  imaging::ImagingConfig out;
  if (!c) return out;
  out.block = c->block;
  out.offset = c->offset;
  require(c->polarity == WL_POLARITY_DARK || c->polarity == WL_POLARITY_BRIGHT, "polarity must be dark or bright");
  out.polarity = c->polarity == WL_POLARITY_BRIGHT ? imaging::Polarity::bright_foreground
                                                   : imaging::Polarity::dark_foreground;
  out.connectivity = c->connectivity;
  out.pad_fraction = c->pad_fraction;
  out.out_size = c->out_size;
  imaging::validate(out);
  return out;
}

synth::WormParams to_cpp(const wl_worm_params* p) {
  synth::WormParams out;
  if (!p) return out;
  out.length_min = p->length_min;
  out.length_max = p->length_max;
  out.body_width = p->body_width;
  out.tail_taper = p->tail_taper;
  out.segment_length = p->segment_length;
  out.curvature = p->curvature;
  out.head_brightness_boost = p->head_brightness_boost;
  out.noise_std = p->noise_std;
  out.background = p->background;
  out.body_intensity = p->body_intensity;
  out.canvas = p->canvas;
  out.margin = p->margin;
  return out;
}

train::TrainConfig to_cpp(const wl_train_config& c) {
  train::TrainConfig out;
  out.lr = c.lr;
  out.beta1 = c.beta1;
  out.beta2 = c.beta2;
  out.eps = c.eps;
  out.epochs = c.epochs;
  out.batch = c.batch;
  out.lambda_js = c.lambda_js;
  out.sigma_hm = c.sigma_hm;
  out.seed = c.seed;
  out.runs = c.runs;
  out.train_fraction = c.train_fraction;
  out.brightness = c.brightness;
  out.augment = c.augment != 0;
  out.threads = c.threads;
  train::validate(out);
  return out;
}

nn::ArchConfig arch_of(const wl_train_config& c) {
  require(c.n_trunk >= 1 && c.n_trunk <= WL_MAX_TRUNK, "trunk must have 1.." + std::to_string(WL_MAX_TRUNK) + " stages");
  nn::ArchConfig a;
  a.input_size = c.input_size;
  a.heatmap_size = c.heatmap_size;
  a.trunk.assign(c.trunk, c.trunk + c.n_trunk);
  nn::validate(a);
  return a;
}

void from_cpp(const train::TrainConfig& t, const nn::ArchConfig& a, wl_train_config* c) {
  wl_train_config_default(c);
  c->lr = t.lr;
  c->beta1 = t.beta1;
  c->beta2 = t.beta2;
  c->eps = t.eps;
  c->epochs = t.epochs;
  c->batch = t.batch;
  c->lambda_js = t.lambda_js;
  c->sigma_hm = t.sigma_hm;
  c->seed = t.seed;
  c->runs = t.runs;
  c->train_fraction = t.train_fraction;
  c->brightness = t.brightness;
  c->augment = t.augment ? 1 : 0;
  c->threads = t.threads;
  c->input_size = a.input_size;
  c->heatmap_size = a.heatmap_size;
  c->n_trunk = static_cast<int>(std::min<std::size_t>(a.trunk.size(), WL_MAX_TRUNK));
  for (int i = 0; i < c->n_trunk; ++i) c->trunk[i] = a.trunk[i];
}

void make_dirs(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

extern "C" {

const char* wl_version(void) { return "0.1.0"; }

const char* wl_last_error(void) { return g_last_error.c_str(); }

const char* wl_status_name(wl_status status) {
  switch (status) {
    case WL_OK: return "ok";
    case WL_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case WL_ERR_IO: return "io";
    case WL_ERR_FORMAT: return "format";
    case WL_ERR_BAD_MAGIC: return "bad_magic";
    case WL_ERR_UNKNOWN_VERSION: return "unknown_version";
    case WL_ERR_SHAPE_MISMATCH: return "shape_mismatch";
    case WL_ERR_CORRUPT_FILE: return "corrupt_file";
    case WL_ERR_EMPTY_MASK: return "empty_mask";
    case WL_ERR_NUMERIC: return "numeric";
    case WL_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void wl_imaging_config_default(wl_imaging_config* cfg) {
  if (!cfg) return;
  const imaging::ImagingConfig d;
  cfg->block = d.block;
  cfg->offset = d.offset;
  cfg->polarity = WL_POLARITY_DARK;
  cfg->connectivity = d.connectivity;
  cfg->pad_fraction = d.pad_fraction;
  cfg->out_size = d.out_size;
}

void wl_worm_params_default(wl_worm_params* p) {
  if (!p) return;
  const synth::WormParams d;
  p->length_min = d.length_min;
  p->length_max = d.length_max;
  p->body_width = d.body_width;
  p->tail_taper = d.tail_taper;
  p->segment_length = d.segment_length;
  p->curvature = d.curvature;
  p->head_brightness_boost = d.head_brightness_boost;
  p->noise_std = d.noise_std;
  p->background = d.background;
  p->body_intensity = d.body_intensity;
  p->canvas = d.canvas;
  p->margin = d.margin;
}

void wl_train_config_default(wl_train_config* c) {
  if (!c) return;
  const train::TrainConfig t;
  const nn::ArchConfig a;
  *c = wl_train_config{};
  c->lr = t.lr;
  c->beta1 = t.beta1;
  c->beta2 = t.beta2;
  c->eps = t.eps;
  c->epochs = t.epochs;
  c->batch = t.batch;
  c->lambda_js = t.lambda_js;
  c->sigma_hm = t.sigma_hm;
  c->seed = t.seed;
  c->runs = t.runs;
  c->train_fraction = t.train_fraction;
  c->brightness = t.brightness;
  c->augment = t.augment ? 1 : 0;
  c->threads = t.threads;
  c->input_size = a.input_size;
  c->heatmap_size = a.heatmap_size;
  c->n_trunk = static_cast<int>(a.trunk.size());
  for (int i = 0; i < c->n_trunk; ++i) c->trunk[i] = a.trunk[i];
}

wl_status wl_image_load(const char* path, wl_image** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new wl_image{io::read_image(path)};
  });
}

wl_status wl_image_save(const wl_image* img, const char* path) {
  return guarded([&] {
    need(img, "image");
    need(path, "path");
    io::write_image(img->img, path);
  });
}

int wl_image_width(const wl_image* img) { return img ? img->img.width() : 0; }
int wl_image_height(const wl_image* img) { return img ? img->img.height() : 0; }
void wl_image_free(wl_image* img) { delete img; }

wl_status wl_crop_image(const wl_image* img, const wl_imaging_config* cfg, wl_image** crop, double transform[4]) {
  return guarded([&] {
    need(img, "image");
    need(crop, "crop");
    *crop = nullptr;
    const auto c = to_cpp(cfg);
    const BinaryMask mask = imaging::adaptive_threshold(img->img, c.block, c.offset, c.polarity);
    const auto comp = imaging::largest_component(mask, c.connectivity);
    const auto box = imaging::pad_box(comp.box, c.pad_fraction, img->img.width(), img->img.height());
    auto result = imaging::crop_resize(img->img, box, c.out_size);
    if (transform) {
      transform[0] = result.forward.sx;
      transform[1] = result.forward.sy;
      transform[2] = result.forward.tx;
      transform[3] = result.forward.ty;
    }
    *crop = new wl_image{std::move(result.image)};
  });
}

wl_status wl_synth_dataset(size_t n, uint64_t seed, const char* out_dir, const wl_worm_params* params) {
  return guarded([&] {
    need(out_dir, "out_dir");
    synth::gen_dataset(n, seed, out_dir, to_cpp(params));
  });
}

wl_status wl_preprocess(const char* manifest, const char* out_dir, const wl_imaging_config* cfg,
                        wl_preprocess_stats* stats) {
  return guarded([&] {
    need(manifest, "manifest");
    need(out_dir, "out_dir");
    const auto c = to_cpp(cfg);
    const auto rows = data::load_manifest(manifest);
    const std::filesystem::path dir(out_dir);
    make_dirs(dir);
    const auto out_manifest = dir / "manifest.csv";
    std::error_code ec;
    if (std::filesystem::equivalent(manifest, out_manifest, ec))
      fail(Errc::invalid_argument, "output directory would overwrite the input manifest");
    const auto res = data::preprocess_all(rows, c);
    std::vector<data::ManifestRow> out_rows;
    for (std::size_t i = 0; i < res.samples.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "crop_%05zu.png", res.kept_rows[i]);
      io::write_image(res.samples[i].image, dir / name);
      out_rows.push_back({name, dir / name, res.samples[i].head, res.samples[i].tail});
    }
    data::write_manifest(out_manifest, out_rows);
    if (stats) *stats = {rows.size(), res.samples.size(), res.dropped, res.failures.size()};
  });
}

wl_status wl_dataset_load(const char* manifest, int out_size, wl_dataset** out) {
  return guarded([&] {
    need(manifest, "manifest");
    need(out, "out");
    *out = nullptr;
    *out = new wl_dataset{data::load_samples(manifest, out_size)};
  });
}

size_t wl_dataset_size(const wl_dataset* ds) { return ds ? ds->samples.size() : 0; }
void wl_dataset_free(wl_dataset* ds) { delete ds; }

wl_status wl_train(const wl_dataset* ds, const wl_train_config* cfg, const char* out_dir, wl_epoch_callback on_epoch,
                   void* user) {
  return guarded([&] {
    need(ds, "dataset");
    need(cfg, "config");
    need(out_dir, "out_dir");
    const train::TrainConfig base = to_cpp(*cfg);
    const nn::ArchConfig arch = arch_of(*cfg);
    for (std::uint32_t r = 0; r < base.runs; ++r) {
      train::TrainConfig rc = base;
      rc.seed = base.seed + r;
      const auto split = data::split_dataset(ds->samples.size(), rc.train_fraction, rc.seed);
      const auto result = train::train_run(ds->samples, split, rc, arch, [&](const train::MetricsRow& row) {
        if (!on_epoch) return;
        const wl_epoch_metrics m{r, row.epoch, row.train_loss, row.val_loss, row.val_pck15};
        on_epoch(&m, user);
      });
      char name[32];
      std::snprintf(name, sizeof name, "run_%02u", r);
      const auto dir = std::filesystem::path(out_dir) / name;
      make_dirs(dir);
      io::write_text(dir / "metrics.csv", train::format_metrics_csv(result.metrics));
      train::save_checkpoint(result.best, dir / "best.wpkt");
      train::save_checkpoint(result.final, dir / "final.wpkt");
    }
  });
}

wl_status wl_model_load(const char* path, wl_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new wl_model{train::load_checkpoint(path)};
  });
}

wl_status wl_model_save(const wl_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    train::save_checkpoint(model->ckpt, path);
  });
}

wl_status wl_model_train_config(const wl_model* model, wl_train_config* cfg) {
  return guarded([&] {
    need(model, "model");
    need(cfg, "config");
    from_cpp(model->ckpt.config, model->ckpt.params.arch, cfg);
  });
}

uint32_t wl_model_epoch(const wl_model* model) { return model ? model->ckpt.epoch : 0; }
void wl_model_free(wl_model* model) { delete model; }

wl_status wl_predict(const wl_model* model, const wl_image* crop, wl_keypoints* out, double* head_heatmap,
                     size_t heatmap_len) {
  return guarded([&] {
    need(model, "model");
    need(crop, "image");
    need(out, "out");
    const auto p = eval::predict(model->ckpt.params, crop->img);
    *out = {{p.pixels.head.x, p.pixels.head.y}, {p.pixels.tail.x, p.pixels.tail.y}};
    if (head_heatmap) {
      require(heatmap_len >= p.p_head.values.size(), "heatmap buffer too small");
      std::copy(p.p_head.values.begin(), p.p_head.values.end(), head_heatmap);
    }
  });
}

wl_status wl_render_prediction(const wl_model* model, const wl_image* crop, const wl_keypoints* gt,
                               const char* svg_path) {
  return guarded([&] {
    need(model, "model");
    need(crop, "image");
    need(svg_path, "svg_path");
    const auto p = eval::predict(model->ckpt.params, crop->img);
    std::optional<KeypointPair> truth;
    if (gt) truth = KeypointPair{{gt->head.x, gt->head.y}, {gt->tail.x, gt->tail.y}};
    io::write_text(svg_path, render::prediction_svg(crop->img, p.pixels, truth, p.p_head));
  });
}

wl_status wl_report_new(const double* thresholds, size_t n, wl_report** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    need(thresholds, "thresholds");
    require(n >= 1, "at least one threshold is needed");
    for (size_t i = 0; i < n; ++i) require(thresholds[i] >= 0.0, "thresholds must be >= 0");
    *out = new wl_report{std::vector<double>(thresholds, thresholds + n), {}, {}};
  });
}

wl_status wl_report_add_run(wl_report* report, const wl_model* model, const wl_dataset* ds, int use_all) {
  return guarded([&] {
    need(report, "report");
    need(model, "model");
    need(ds, "dataset");
    const auto& cfg = model->ckpt.config;
    std::vector<data::Sample> subset;
    if (use_all) {
      subset = ds->samples;
    } else {
      const auto split = data::split_dataset(ds->samples.size(), cfg.train_fraction, cfg.seed);
      for (std::size_t i : split.val) subset.push_back(ds->samples[i]);
    }
    report->tables.push_back(eval::evaluate(model->ckpt.params, subset, report->thresholds).table);
  });
}

size_t wl_report_runs(const wl_report* report) { return report ? report->tables.size() : 0; }

wl_status wl_report_cell(const wl_report* report, int keypoint, size_t threshold_index, double* mean, double* stddev) {
  return guarded([&] {
    need(report, "report");
    require(keypoint >= 0 && keypoint <= 2, "keypoint must be 0 (head), 1 (tail) or 2 (average)");
    require(threshold_index < report->thresholds.size(), "threshold index out of range");
    const auto agg = eval::aggregate_runs(report->tables);
    const auto& col = keypoint == 0 ? agg.head : keypoint == 1 ? agg.tail : agg.average;
    if (mean) *mean = col[threshold_index].mean;
    if (stddev) *stddev = col[threshold_index].stddev;
  });
}

const char* wl_report_text(wl_report* report) {
  if (!report) return nullptr;
  const wl_status st = guarded([&] { report->rendered = eval::format_report_text(eval::aggregate_runs(report->tables)); });
  return st == WL_OK ? report->rendered.c_str() : nullptr;
}

const char* wl_report_csv(wl_report* report) {
  if (!report) return nullptr;
  const wl_status st = guarded([&] { report->rendered = eval::format_report_csv(eval::aggregate_runs(report->tables)); });
  return st == WL_OK ? report->rendered.c_str() : nullptr;
}

void wl_report_free(wl_report* report) { delete report; }

wl_status wl_baseline(const wl_image* img, const wl_imaging_config* cfg, size_t k, double theta_max,
                      wl_baseline_result* out, const char* svg_path) {
  return guarded([&] {
    need(img, "image");
    need(out, "out");
    const auto c = to_cpp(cfg);
    const BinaryMask mask = imaging::adaptive_threshold(img->img, c.block, c.offset, c.polarity);
    const auto comp = imaging::largest_component(mask, 8);
    const auto contour = baseline::trace_contour(comp.mask);
    const auto props = baseline::endpoint_proposals(contour, k, theta_max);
    *out = wl_baseline_result{};
    out->contour_points = contour.size();
    if (props) {
      out->found = 1;
      out->tail = {props->tail.x, props->tail.y};
      out->head = {props->head.x, props->head.y};
      out->tail_angle = props->tail_corner.angle;
      out->head_angle = props->head_corner.angle;
    }
    if (svg_path) io::write_text(svg_path, render::baseline_svg(img->img, contour, props));
  });
}

wl_status wl_plot_metrics(const char* const* metrics_paths, size_t n, const char* svg_path) {
  return guarded([&] {
    need(metrics_paths, "metrics_paths");
    need(svg_path, "svg_path");
    require(n >= 1, "at least one metrics file is needed");
    std::vector<std::vector<train::MetricsRow>> runs;
    for (size_t i = 0; i < n; ++i) {
      need(metrics_paths[i], "metrics path");
      const auto bytes = io::read_file(metrics_paths[i]);
      try {
        runs.push_back(train::parse_metrics_csv(std::string(bytes.begin(), bytes.end())));
      } catch (const Error& e) {
        fail(e.code(), std::string(metrics_paths[i]) + ": " + e.what());
      }
    }
    io::write_text(svg_path, render::metrics_svg(runs));
  });
}

}  // extern "C"
