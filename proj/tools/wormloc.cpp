// wormloc command-line front end. Everything goes through the C API.
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wormloc/wormloc.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kFormat = 4, kNumeric = 5 };

struct CliError {
  int exit;
  std::string kind;
  std::string message;
};

int exit_for(wl_status st) {
  switch (st) {
    case WL_OK: return kOk;
    case WL_ERR_INVALID_ARGUMENT: return kUsage;
    case WL_ERR_IO: return kIo;
    case WL_ERR_NUMERIC: return kNumeric;
    case WL_ERR_INTERNAL: return kInternal;
    default: return kFormat;
  }
}

void check(wl_status st) {
  if (st != WL_OK) throw CliError{exit_for(st), wl_status_name(st), wl_last_error()};
}

[[noreturn]] void usage(const std::string& msg) { throw CliError{kUsage, "usage", msg}; }

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

void require_file(const std::string& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw CliError{kIo, "io", "no such file: " + path};
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw CliError{kFormat, "format", "bad value for " + key + ": '" + text + "'"};
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw CliError{kFormat, "format", "bad boolean for " + key + ": '" + text + "'"};
}

// key=value settings: config file first, then flags.
class Settings {
 public:
  using Setter = std::function<void(const std::string&)>;
  using Getter = std::function<json()>;

  void add(CLI::App* app, const std::string& key, Setter set, Getter get, const std::string& help) {
    std::string flag = "--" + key;
    for (char& c : flag)
      if (c == '_') c = '-';
    app->add_option(flag, flags_[key], help);
    entries_[key] = {std::move(set), std::move(get)};
  }

  void apply(const std::string& config_path) {
    if (!config_path.empty()) load_file(config_path);
    for (auto& [key, value] : flags_)
      if (value) entries_.at(key).set(*value);
  }

  json snapshot() const {
    json j = json::object();
    for (auto& [key, e] : entries_) j[key] = e.get();
    return j;
  }

 private:
  struct Entry {
    Setter set;
    Getter get;
  };

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  void load_file(const std::string& path) {
    require_file(path);
    std::ifstream in(path);
    if (!in) throw CliError{kIo, "io", "cannot read " + path};
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty() || line.front() == '[') continue;
      const auto eq = line.find('=');
      const std::string where = path + ":" + std::to_string(n);
      if (eq == std::string::npos) throw CliError{kFormat, "format", where + ": expected key = value"};
      const std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
      auto it = entries_.find(key);
      if (it == entries_.end()) throw CliError{kFormat, "format", where + ": unknown key '" + key + "'"};
      try {
        it->second.set(value);
      } catch (CliError& e) {
        e.message = where + ": " + e.message;
        throw;
      }
    }
  }

  std::map<std::string, std::optional<std::string>> flags_;
  std::map<std::string, Entry> entries_;
};

template <typename T>
void bind_number(Settings& s, CLI::App* app, const std::string& key, T& target, const std::string& help) {
  s.add(app, key, [&target, key](const std::string& v) { target = parse_number<T>(key, v); },
        [&target] { return json(target); }, help);
}

void bind_imaging(Settings& s, CLI::App* app, wl_imaging_config& c) {
  bind_number(s, app, "block", c.block, "adaptive threshold window (odd)");
  bind_number(s, app, "offset", c.offset, "threshold offset below/above the local mean");
  s.add(app, "polarity",
        [&c](const std::string& v) {
          if (v == "dark") c.polarity = WL_POLARITY_DARK;
          else if (v == "bright") c.polarity = WL_POLARITY_BRIGHT;
          else throw CliError{kFormat, "format", "polarity must be dark or bright, got '" + v + "'"};
        },
        [&c] { return json(c.polarity == WL_POLARITY_BRIGHT ? "bright" : "dark"); }, "dark or bright foreground");
  bind_number(s, app, "connectivity", c.connectivity, "4 or 8");
  bind_number(s, app, "pad_fraction", c.pad_fraction, "bounding box growth");
  bind_number(s, app, "out_size", c.out_size, "crop side in pixels");
}

void bind_worm(Settings& s, CLI::App* app, wl_worm_params& p) {
  bind_number(s, app, "length_min", p.length_min, "shortest centerline");
  bind_number(s, app, "length_max", p.length_max, "longest centerline");
  bind_number(s, app, "body_width", p.body_width, "body width at the head end");
  bind_number(s, app, "tail_taper", p.tail_taper, "tail radius as a fraction of head radius");
  bind_number(s, app, "segment_length", p.segment_length, "centerline step");
  bind_number(s, app, "curvature", p.curvature, "turning angle spread per segment (rad)");
  bind_number(s, app, "head_brightness_boost", p.head_brightness_boost, "extra intensity near the head");
  bind_number(s, app, "noise_std", p.noise_std, "pixel noise");
  bind_number(s, app, "background", p.background, "background intensity");
  bind_number(s, app, "body_intensity", p.body_intensity, "body intensity");
  bind_number(s, app, "canvas", p.canvas, "image side");
  bind_number(s, app, "margin", p.margin, "minimum distance from the border");
}

std::string join_ints(const int* v, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

void bind_train(Settings& s, CLI::App* app, wl_train_config& c) {
  bind_number(s, app, "lr", c.lr, "Adam step size");
  bind_number(s, app, "beta1", c.beta1, "Adam first moment decay");
  bind_number(s, app, "beta2", c.beta2, "Adam second moment decay");
  bind_number(s, app, "eps", c.eps, "Adam epsilon");
  bind_number(s, app, "epochs", c.epochs, "epochs per run");
  bind_number(s, app, "batch", c.batch, "batch size");
  bind_number(s, app, "lambda_js", c.lambda_js, "JS regularizer weight");
  bind_number(s, app, "sigma_hm", c.sigma_hm, "target Gaussian sigma, heatmap cells");
  bind_number(s, app, "seed", c.seed, "seed of run 0");
  bind_number(s, app, "runs", c.runs, "independent runs");
  bind_number(s, app, "train_fraction", c.train_fraction, "training share of the split");
  bind_number(s, app, "brightness", c.brightness, "brightness augmentation range");
  s.add(app, "augment", [&c](const std::string& v) { c.augment = parse_bool("augment", v) ? 1 : 0; },
        [&c] { return json(c.augment != 0); }, "rotation and brightness augmentation");
  bind_number(s, app, "threads", c.threads, "worker threads, 0 = all cores");
  bind_number(s, app, "input_size", c.input_size, "network input side");
  bind_number(s, app, "heatmap_size", c.heatmap_size, "heatmap side");
  s.add(app, "trunk",
        [&c](const std::string& v) {
          std::vector<int> ch;
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(' ');
            const auto e = item.find_last_not_of(' ');
            if (b == std::string::npos) throw CliError{kFormat, "format", "empty trunk entry"};
            ch.push_back(parse_number<int>("trunk", item.substr(b, e - b + 1)));
          }
          if (ch.empty() || ch.size() > WL_MAX_TRUNK)
            throw CliError{kFormat, "format", "trunk needs 1.." + std::to_string(WL_MAX_TRUNK) + " channel counts"};
          c.n_trunk = static_cast<int>(ch.size());
          for (std::size_t i = 0; i < ch.size(); ++i) c.trunk[i] = ch[i];
        },
        [&c] { return json(join_ints(c.trunk, c.n_trunk)); }, "trunk channel counts, comma separated");
}

void write_manifest(const fs::path& path, const std::string& command, const std::vector<std::string>& argv,
                    const json& config, const json& seeds, const json& outputs) {
  json j;
  j["command"] = command;
  j["argv"] = argv;
  j["config"] = config;
  j["seeds"] = seeds;
  j["outputs"] = outputs;
  j["tool_version"] = wl_version();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError{kIo, "io", "cannot write " + path.string()};
  out << j.dump(2) << '\n';
  if (!out) throw CliError{kIo, "io", "cannot write " + path.string()};
}

fs::path manifest_beside(const std::string& file) { return fs::path(file + ".run.json"); }

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError{kIo, "io", "cannot create " + dir + ": " + ec.message()};
}

struct ImageHandle {
  wl_image* p = nullptr;
  ~ImageHandle() { wl_image_free(p); }
};

struct ModelHandle {
  wl_model* p = nullptr;
  ~ModelHandle() { wl_model_free(p); }
};

struct DatasetHandle {
  wl_dataset* p = nullptr;
  ~DatasetHandle() { wl_dataset_free(p); }
};

struct ReportHandle {
  wl_report* p = nullptr;
  ~ReportHandle() { wl_report_free(p); }
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>("list", item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  CLI::App app{"Head/tail keypoint localization for worm micrographs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", wl_version());

  // synth
  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic dataset");
  std::size_t synth_n = 0;
  std::uint64_t synth_seed = 1;
  std::string synth_out, synth_config;
  wl_worm_params worm;
  wl_worm_params_default(&worm);
  Settings synth_settings;
  synth->add_option("--n", synth_n, "number of images")->required();
  synth->add_option("--seed", synth_seed, "dataset seed");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--config", synth_config, "key = value file");
  bind_worm(synth_settings, synth, worm);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "threshold, crop and relabel a manifest");
  std::string pre_manifest, pre_out, pre_config;
  wl_imaging_config pre_img;
  wl_imaging_config_default(&pre_img);
  Settings pre_settings;
  pre->add_option("--manifest", pre_manifest, "input manifest.csv")->required();
  pre->add_option("--out", pre_out, "output directory")->required();
  pre->add_option("--config", pre_config, "key = value file");
  bind_imaging(pre_settings, pre, pre_img);

  // train
  auto* train = app.add_subcommand("train", "train one or more runs");
  std::string train_data, train_out, train_config;
  wl_train_config tcfg;
  wl_train_config_default(&tcfg);
  Settings train_settings;
  train->add_option("--data", train_data, "preprocessed manifest.csv")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--config", train_config, "key = value file");
  bind_train(train_settings, train, tcfg);

  // eval
  auto* ev = app.add_subcommand("eval", "PCK report over checkpoints");
  std::vector<std::string> eval_ckpts;
  std::string eval_data, eval_thresholds = "7,15,30", eval_out, eval_csv;
  bool eval_all = false;
  ev->add_option("--ckpt", eval_ckpts, "checkpoint, one per run")->required();
  ev->add_option("--data", eval_data, "preprocessed manifest.csv")->required();
  ev->add_option("--thresholds", eval_thresholds, "pixel thresholds, comma separated");
  ev->add_flag("--all", eval_all, "score every sample instead of each run's validation split");
  ev->add_option("--out", eval_out, "write the text report here too");
  ev->add_option("--csv", eval_csv, "write keypoint,threshold,mean,std,runs rows");

  // predict
  auto* pr = app.add_subcommand("predict", "annotated prediction render");
  std::string pred_ckpt, pred_image, pred_svg, pred_gt, pred_config;
  bool pred_crop = false;
  wl_imaging_config pred_img;
  wl_imaging_config_default(&pred_img);
  Settings pred_settings;
  pr->add_option("--ckpt", pred_ckpt, "checkpoint")->required();
  pr->add_option("--image", pred_image, "image (crops of the model input size are used as is)")->required();
  pr->add_option("--out-svg", pred_svg, "output SVG")->required();
  pr->add_option("--gt", pred_gt, "ground truth head_x,head_y,tail_x,tail_y in image pixels");
  pr->add_flag("--crop", pred_crop, "always threshold and crop first");
  pr->add_option("--config", pred_config, "key = value imaging file");
  bind_imaging(pred_settings, pr, pred_img);

  // baseline
  auto* bl = app.add_subcommand("baseline", "contour convex-angle head/tail proposals");
  std::string bl_image, bl_svg, bl_config;
  std::size_t bl_k = 10;
  double bl_theta = 2.0;
  wl_imaging_config bl_img;
  wl_imaging_config_default(&bl_img);
  Settings bl_settings;
  bl->add_option("--image", bl_image, "image")->required();
  bl->add_option("--k", bl_k, "contour offset for the angle");
  bl->add_option("--theta-max", bl_theta, "largest accepted corner angle (rad)");
  bl->add_option("--out-svg", bl_svg, "output SVG")->required();
  bl->add_option("--config", bl_config, "key = value imaging file");
  bind_imaging(bl_settings, bl, bl_img);

  // plot
  auto* pl = app.add_subcommand("plot", "loss and PCK curves from metrics.csv files");
  std::vector<std::string> plot_metrics;
  std::string plot_svg;
  pl->add_option("--metrics", plot_metrics, "metrics.csv, one per run")->required();
  pl->add_option("--out-svg", plot_svg, "output SVG")->required();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      usage(e.what());
    }

    if (synth->parsed()) {
      synth_settings.apply(synth_config);
      make_dir(synth_out);
      write_manifest(fs::path(synth_out) / "run_manifest.json", "synth", args, synth_settings.snapshot(),
                     {synth_seed}, {(fs::path(synth_out) / "manifest.csv").string()});
      check(wl_synth_dataset(synth_n, synth_seed, synth_out.c_str(), &worm));
      std::printf("wrote %zu images to %s\n", synth_n, synth_out.c_str());
    } else if (pre->parsed()) {
      require_file(pre_manifest);
      pre_settings.apply(pre_config);
      make_dir(pre_out);
      write_manifest(fs::path(pre_out) / "run_manifest.json", "preprocess", args, pre_settings.snapshot(),
                     json::array(), {(fs::path(pre_out) / "manifest.csv").string()});
      wl_preprocess_stats stats{};
      check(wl_preprocess(pre_manifest.c_str(), pre_out.c_str(), &pre_img, &stats));
      std::printf("rows=%zu kept=%zu dropped=%zu failed=%zu\n", stats.rows, stats.kept, stats.dropped, stats.failed);
    } else if (train->parsed()) {
      require_file(train_data);
      train_settings.apply(train_config);
      DatasetHandle ds;
      check(wl_dataset_load(train_data.c_str(), tcfg.input_size, &ds.p));
      make_dir(train_out);
      json seeds = json::array();
      json outputs = json::array();
      for (std::uint32_t r = 0; r < tcfg.runs; ++r) {
        seeds.push_back(tcfg.seed + r);
        char name[32];
        std::snprintf(name, sizeof name, "run_%02u", r);
        for (const char* f : {"metrics.csv", "best.wpkt", "final.wpkt"})
          outputs.push_back((fs::path(train_out) / name / f).string());
      }
      write_manifest(fs::path(train_out) / "run_manifest.json", "train", args, train_settings.snapshot(), seeds,
                     outputs);
      auto progress = [](const wl_epoch_metrics* m, void*) {
        std::printf("run %u epoch %u train_loss %.6f val_loss %.6f val_pck15 %.2f\n", m->run, m->epoch, m->train_loss,
                    m->val_loss, m->val_pck15);
        std::fflush(stdout);
      };
      check(wl_train(ds.p, &tcfg, train_out.c_str(), progress, nullptr));
    } else if (ev->parsed()) {
      for (const auto& c : eval_ckpts) require_file(c);
      require_file(eval_data);
      const auto thresholds = parse_list(eval_thresholds);
      if (thresholds.empty()) usage("--thresholds needs at least one value");
      if (!eval_out.empty())
        write_manifest(manifest_beside(eval_out), "eval", args,
                       {{"checkpoints", eval_ckpts}, {"data", eval_data}, {"thresholds", thresholds}, {"all", eval_all}},
                       json::array(), {eval_out});
      ReportHandle report;
      check(wl_report_new(thresholds.data(), thresholds.size(), &report.p));
      int input_size = 0;
      for (const auto& c : eval_ckpts) {
        ModelHandle m;
        check(wl_model_load(c.c_str(), &m.p));
        wl_train_config mc;
        check(wl_model_train_config(m.p, &mc));
        if (input_size != 0 && mc.input_size != input_size)
          throw CliError{kFormat, "shape_mismatch", "checkpoints disagree on input size"};
        input_size = mc.input_size;
        DatasetHandle ds;
        check(wl_dataset_load(eval_data.c_str(), input_size, &ds.p));
        check(wl_report_add_run(report.p, m.p, ds.p, eval_all ? 1 : 0));
      }
      if (!eval_csv.empty()) {
        const char* csv = wl_report_csv(report.p);
        if (!csv) check(WL_ERR_INTERNAL);
        std::ofstream(eval_csv, std::ios::binary) << csv;
      }
      const char* text = wl_report_text(report.p);
      if (!text) check(WL_ERR_INTERNAL);
      if (!eval_out.empty()) {
        std::ofstream out(eval_out, std::ios::binary);
        out << text;
        if (!out) throw CliError{kIo, "io", "cannot write " + eval_out};
      }
      std::fputs(text, stdout);
    } else if (pr->parsed()) {
      require_file(pred_ckpt);
      require_file(pred_image);
      pred_settings.apply(pred_config);
      std::optional<wl_keypoints> gt;
      if (!pred_gt.empty()) {
        const auto v = parse_list(pred_gt);
        if (v.size() != 4) usage("--gt needs head_x,head_y,tail_x,tail_y");
        gt = wl_keypoints{{v[0], v[1]}, {v[2], v[3]}};
      }
      write_manifest(manifest_beside(pred_svg), "predict", args, pred_settings.snapshot(), json::array(), {pred_svg});
      ModelHandle m;
      check(wl_model_load(pred_ckpt.c_str(), &m.p));
      wl_train_config mc;
      check(wl_model_train_config(m.p, &mc));
      ImageHandle img;
      check(wl_image_load(pred_image.c_str(), &img.p));
      ImageHandle crop;
      double t[4] = {1, 1, 0, 0};
      const bool is_crop = wl_image_width(img.p) == mc.input_size && wl_image_height(img.p) == mc.input_size;
      if (pred_crop || !is_crop) {
        pred_img.out_size = mc.input_size;
        check(wl_crop_image(img.p, &pred_img, &crop.p, t));
      }
      const wl_image* input = crop.p ? crop.p : img.p;
      if (gt) {
        gt->head = {t[0] * gt->head.x + t[2], t[1] * gt->head.y + t[3]};
        gt->tail = {t[0] * gt->tail.x + t[2], t[1] * gt->tail.y + t[3]};
      }
      wl_keypoints kp;
      check(wl_predict(m.p, input, &kp, nullptr, 0));
      check(wl_render_prediction(m.p, input, gt ? &*gt : nullptr, pred_svg.c_str()));
      auto back = [&](wl_point p) { return wl_point{(p.x - t[2]) / t[0], (p.y - t[3]) / t[1]}; };
      const wl_point h = back(kp.head), tl = back(kp.tail);
      std::printf("head %.3f %.3f tail %.3f %.3f\n", h.x, h.y, tl.x, tl.y);
    } else if (bl->parsed()) {
      require_file(bl_image);
      bl_settings.apply(bl_config);
      json cfg = bl_settings.snapshot();
      cfg["k"] = bl_k;
      cfg["theta_max"] = bl_theta;
      write_manifest(manifest_beside(bl_svg), "baseline", args, cfg, json::array(), {bl_svg});
      ImageHandle img;
      check(wl_image_load(bl_image.c_str(), &img.p));
      wl_baseline_result res;
      check(wl_baseline(img.p, &bl_img, bl_k, bl_theta, &res, bl_svg.c_str()));
      if (res.found)
        std::printf("tail %.1f %.1f angle %.4f head %.1f %.1f angle %.4f\n", res.tail.x, res.tail.y, res.tail_angle,
                    res.head.x, res.head.y, res.head_angle);
      else
        std::printf("no proposals (%zu contour points)\n", res.contour_points);
    } else if (pl->parsed()) {
      for (const auto& m : plot_metrics) require_file(m);
      write_manifest(manifest_beside(plot_svg), "plot", args, {{"metrics", plot_metrics}}, json::array(), {plot_svg});
      std::vector<const char*> paths;
      for (const auto& m : plot_metrics) paths.push_back(m.c_str());
      check(wl_plot_metrics(paths.data(), paths.size(), plot_svg.c_str()));
    }
  } catch (const CliError& e) {
    std::fprintf(stderr, "error code=%d kind=%s message=%s\n", e.exit, e.kind.c_str(), quoted(e.message).c_str());
    return e.exit;
  }
  return kOk;
}
