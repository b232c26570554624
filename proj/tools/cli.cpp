// SPDX-License-Identifier: Apache-2.0
// mvdet command line: ingest | window | cluster-windows | phantom-gen |
// train | eval | gradcheck. Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvdet/checkpoint.hpp"
#include "mvdet/config.hpp"
#include "mvdet/dataset.hpp"
#include "mvdet/froc.hpp"
#include "mvdet/gradcheck.hpp"
#include "mvdet/kmeans.hpp"
#include "mvdet/model.hpp"
#include "mvdet/phantom.hpp"
#include "mvdet/tape.hpp"
#include "mvdet/trainer.hpp"
#include "mvdet/volume.hpp"
#include "mvdet/windowing.hpp"

namespace fs = std::filesystem;
using namespace mvdet;

namespace {

// ---------------------------------------------------------------- helpers --

WindowSpec parse_window_pair(const std::string& s) {
  size_t colon = s.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= s.size())
    fail(Errc::bad_argument, "window must be level:width, got '" + s + "'");
  auto num = [&](const std::string& part) {
    char* end = nullptr;
    double v = std::strtod(part.c_str(), &end);
    if (end == part.c_str() || *end != '\0')
      fail(Errc::bad_argument, "bad window number '" + part + "'");
    return v;
  };
  WindowSpec w{num(s.substr(0, colon)), num(s.substr(colon + 1))};
  check_window(w);
  return w;
}

ViewSet parse_windows_arg(const std::string& arg) {
  ViewSet views;
  std::string item;
  std::istringstream in(arg);
  while (std::getline(in, item, ',')) views.windows.push_back(parse_window_pair(item));
  if (views.windows.empty()) fail(Errc::bad_argument, "empty window list");
  return views;
}

std::string window_pair_text(const WindowSpec& w) {
  return format_double(w.level) + ":" + format_double(w.width);
}

std::string windows_text(const ViewSet& views) {
  std::string s;
  for (size_t i = 0; i < views.windows.size(); ++i) {
    if (i) s += ",";
    s += window_pair_text(views.windows[i]);
  }
  return s;
}

// Portable float-image container: text header, then little-endian f32,
// image-major then row-major. Mirrors the volume format.
void write_fimg(const std::string& path, const std::vector<Image2D>& images,
                const std::string& windows) {
  if (images.empty()) fail(Errc::bad_argument, "no images to write");
  std::string head = "FIMG 1\ndims " + std::to_string(images.size()) + " " +
                     std::to_string(images[0].rows) + " " + std::to_string(images[0].cols) +
                     "\nwindows " + windows + "\n\n";
  std::vector<uint8_t> payload;
  payload.reserve(images.size() * static_cast<size_t>(images[0].rows * images[0].cols) * 4);
  for (const Image2D& img : images) {
    if (img.rows != images[0].rows || img.cols != images[0].cols)
      fail(Errc::size_mismatch, "image planes disagree on size");
    for (double d : img.v) {
      float f = static_cast<float>(d);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int i = 0; i < 4; ++i) payload.push_back(static_cast<uint8_t>(bits >> (8 * i)));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot open for writing: " + path);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) fail(Errc::io_failure, "write failed: " + path);
}

void echo_config(const std::string& dir, const std::vector<std::pair<std::string, std::string>>& kv) {
  fs::create_directories(dir);
  write_text_file((fs::path(dir) / "config.txt").string(), render_config(kv));
}

// ----------------------------------------------------------------- ingest --

int cmd_ingest(const std::string& in, const std::string& out, double z_spacing) {
  HuVolume vol = load_volume(in);
  for (const std::string& w : vol.validate()) std::cerr << "warning: " << w << "\n";
  if (z_spacing > 0.0) vol = resample_z(vol, z_spacing);
  save_volume(vol, out);
  std::cout << "wrote " << out << " dims " << vol.nz << " " << vol.ny << " " << vol.nx
            << " spacing " << format_double(vol.spacing_mm[0]) << " "
            << format_double(vol.spacing_mm[1]) << " " << format_double(vol.spacing_mm[2]) << "\n";
  return 0;
}

// ----------------------------------------------------------------- window --

int cmd_window(const std::string& in, int slice, const std::string& windows_arg,
               const std::string& out) {
  HuVolume vol = load_volume(in);
  if (slice < 0 || slice >= vol.nz)
    fail(Errc::bad_argument, "slice " + std::to_string(slice) + " out of range (nz=" +
                                 std::to_string(vol.nz) + ")");
  ViewSet views = parse_windows_arg(windows_arg);
  Image2D hu = vol.slice_hu(slice);
  std::vector<Image2D> rendered;
  for (const WindowSpec& w : views.windows) rendered.push_back(apply_window(hu, w));
  write_fimg(out, rendered, windows_text(views));
  std::cout << "wrote " << out << " planes " << rendered.size() << " size " << hu.rows << "x"
            << hu.cols << "\n";
  return 0;
}

// -------------------------------------------------------- cluster-windows --

int cmd_cluster(const std::string& in, int k, uint64_t seed, const std::string& out) {
  std::vector<WindowSample> samples;
  std::string text = read_text_file(in);
  std::istringstream stream(text);
  std::string line;
  int lineno = 0;
  while (std::getline(stream, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    if (blank) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    WindowSample s;
    if (!(fields >> s.level >> s.width))
      fail(Errc::bad_data, in + ":" + std::to_string(lineno) + ": expected 'level,width'");
    std::string extra;
    if (fields >> extra)
      fail(Errc::bad_data, in + ":" + std::to_string(lineno) + ": trailing fields");
    samples.push_back(s);
  }
  KMeansResult res = cluster_windows(samples, k, seed);
  std::vector<WindowSpec> sorted = res.centroids;
  std::sort(sorted.begin(), sorted.end(),
            [](const WindowSpec& a, const WindowSpec& b) { return a.level < b.level; });
  std::string text_out;
  for (const WindowSpec& c : sorted) text_out += window_pair_text(c) + "\n";
  std::cout << text_out;
  if (!out.empty()) write_text_file(out, text_out);
  return 0;
}

// ------------------------------------------------------------ phantom-gen --

PhantomSpec phantom_spec_from_config(const Config& cfg) {
  PhantomSpec s;
  s.n_volumes = static_cast<int>(cfg.get_int("n_volumes", s.n_volumes));
  s.slices_per_volume = static_cast<int>(cfg.get_int("slices_per_volume", s.slices_per_volume));
  s.image_size = static_cast<int>(cfg.get_int("image_size", s.image_size));
  s.z_spacing_mm = cfg.get_double("z_spacing_mm", s.z_spacing_mm);
  s.xy_spacing_mm = cfg.get_double("xy_spacing_mm", s.xy_spacing_mm);
  s.lung_hu = cfg.get_double("lung_hu", s.lung_hu);
  s.soft_hu = cfg.get_double("soft_hu", s.soft_hu);
  s.pelvis_hu = cfg.get_double("pelvis_hu", s.pelvis_hu);
  s.bone_hu = cfg.get_double("bone_hu", s.bone_hu);
  s.noise_sigma = cfg.get_double("noise_sigma", s.noise_sigma);
  s.bone_blobs = static_cast<int>(cfg.get_int("bone_blobs", s.bone_blobs));
  s.bone_radius = cfg.get_double("bone_radius", s.bone_radius);
  s.lesions_min = static_cast<int>(cfg.get_int("lesions_min", s.lesions_min));
  s.lesions_max = static_cast<int>(cfg.get_int("lesions_max", s.lesions_max));
  s.radius_min = cfg.get_double("radius_min", s.radius_min);
  s.radius_max = cfg.get_double("radius_max", s.radius_max);
  s.chest_delta = cfg.get_double("chest_delta", s.chest_delta);
  s.abdomen_delta = cfg.get_double("abdomen_delta", s.abdomen_delta);
  s.pelvis_delta = cfg.get_double("pelvis_delta", s.pelvis_delta);
  s.max_retries = static_cast<int>(cfg.get_int("max_retries", s.max_retries));
  cfg.check_all_consumed();
  return s;
}

std::vector<std::pair<std::string, std::string>> phantom_spec_echo(const PhantomSpec& s,
                                                                   uint64_t seed) {
  return {
      {"n_volumes", std::to_string(s.n_volumes)},
      {"slices_per_volume", std::to_string(s.slices_per_volume)},
      {"image_size", std::to_string(s.image_size)},
      {"z_spacing_mm", format_double(s.z_spacing_mm)},
      {"xy_spacing_mm", format_double(s.xy_spacing_mm)},
      {"lung_hu", format_double(s.lung_hu)},
      {"soft_hu", format_double(s.soft_hu)},
      {"pelvis_hu", format_double(s.pelvis_hu)},
      {"bone_hu", format_double(s.bone_hu)},
      {"noise_sigma", format_double(s.noise_sigma)},
      {"bone_blobs", std::to_string(s.bone_blobs)},
      {"bone_radius", format_double(s.bone_radius)},
      {"lesions_min", std::to_string(s.lesions_min)},
      {"lesions_max", std::to_string(s.lesions_max)},
      {"radius_min", format_double(s.radius_min)},
      {"radius_max", format_double(s.radius_max)},
      {"chest_delta", format_double(s.chest_delta)},
      {"abdomen_delta", format_double(s.abdomen_delta)},
      {"pelvis_delta", format_double(s.pelvis_delta)},
      {"max_retries", std::to_string(s.max_retries)},
      {"seed", std::to_string(seed)},
  };
}

int cmd_phantom(const std::string& spec_file, uint64_t seed, const std::string& out) {
  PhantomSpec spec;
  if (!spec_file.empty()) spec = phantom_spec_from_config(Config::parse_file(spec_file));
  check_phantom_spec(spec);
  PhantomDataset data = generate_phantom(spec, seed);
  write_dataset_dir(out, data);
  echo_config(out, phantom_spec_echo(spec, seed));
  std::cout << "wrote " << data.volumes.size() << " volumes, " << data.lesions.size()
            << " lesions to " << out << "\n";
  return 0;
}

// ------------------------------------------------------------------ train --

struct TrainSettings {
  std::vector<double> stage_channels{8, 16, 32};
  int pyramid_channels = 32;
  int pyramid_levels = 2;
  int attention_reduction = 4;
  int head_hidden = 16;
  std::vector<double> anchor_scales{16, 32, 64, 128, 256};
  std::vector<double> aspect_ratios{0.5, 1.0, 2.0};
  double score_thresh = 0.05;
  double nms_iou = 0.5;
  double positive_iou = 0.5;
  double negative_iou = 0.3;
  int n_ctx = 3;
  std::string views = "multi";        // single | multi
  std::string attention = "cbam";     // concat | cbam
  bool position = true;
  int epochs = 13;
  double lr = 0.002;
  double momentum = 0.9;
  std::vector<double> decay_epochs{10, 12};
  double decay_factor = 0.1;
  double lambda_reg = 1.0;
  double lambda_pos = 1.0;
  bool flip_augment = true;
  int resize_to = 0;  // 0 keeps native resolution
  std::string precision = "float";  // float | double
  uint64_t seed = 0;
};

std::string list_text(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += format_double(v[i]);
  }
  return s;
}

TrainSettings settings_from_config(const Config& cfg) {
  TrainSettings s;
  s.stage_channels = cfg.get_list("stage_channels", s.stage_channels);
  s.pyramid_channels = static_cast<int>(cfg.get_int("pyramid_channels", s.pyramid_channels));
  s.pyramid_levels = static_cast<int>(cfg.get_int("pyramid_levels", s.pyramid_levels));
  s.attention_reduction =
      static_cast<int>(cfg.get_int("attention_reduction", s.attention_reduction));
  s.head_hidden = static_cast<int>(cfg.get_int("head_hidden", s.head_hidden));
  s.anchor_scales = cfg.get_list("anchor_scales", s.anchor_scales);
  s.aspect_ratios = cfg.get_list("aspect_ratios", s.aspect_ratios);
  s.score_thresh = cfg.get_double("score_thresh", s.score_thresh);
  s.nms_iou = cfg.get_double("nms_iou", s.nms_iou);
  s.positive_iou = cfg.get_double("positive_iou", s.positive_iou);
  s.negative_iou = cfg.get_double("negative_iou", s.negative_iou);
  s.n_ctx = static_cast<int>(cfg.get_int("n_ctx", s.n_ctx));
  s.views = cfg.get_string("views", s.views);
  s.attention = cfg.get_string("attention", s.attention);
  s.position = cfg.get_bool("position", s.position);
  s.epochs = static_cast<int>(cfg.get_int("epochs", s.epochs));
  s.lr = cfg.get_double("lr", s.lr);
  s.momentum = cfg.get_double("momentum", s.momentum);
  s.decay_epochs = cfg.get_list("decay_epochs", s.decay_epochs);
  s.decay_factor = cfg.get_double("decay_factor", s.decay_factor);
  s.lambda_reg = cfg.get_double("lambda_reg", s.lambda_reg);
  s.lambda_pos = cfg.get_double("lambda_pos", s.lambda_pos);
  s.flip_augment = cfg.get_bool("flip_augment", s.flip_augment);
  s.resize_to = static_cast<int>(cfg.get_int("resize_to", s.resize_to));
  s.precision = cfg.get_string("precision", s.precision);
  s.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<long long>(s.seed)));
  cfg.check_all_consumed();
  return s;
}

std::vector<std::pair<std::string, std::string>> settings_echo(const TrainSettings& s) {
  return {
      {"stage_channels", list_text(s.stage_channels)},
      {"pyramid_channels", std::to_string(s.pyramid_channels)},
      {"pyramid_levels", std::to_string(s.pyramid_levels)},
      {"attention_reduction", std::to_string(s.attention_reduction)},
      {"head_hidden", std::to_string(s.head_hidden)},
      {"anchor_scales", list_text(s.anchor_scales)},
      {"aspect_ratios", list_text(s.aspect_ratios)},
      {"score_thresh", format_double(s.score_thresh)},
      {"nms_iou", format_double(s.nms_iou)},
      {"positive_iou", format_double(s.positive_iou)},
      {"negative_iou", format_double(s.negative_iou)},
      {"n_ctx", std::to_string(s.n_ctx)},
      {"views", s.views},
      {"attention", s.attention},
      {"position", s.position ? "on" : "off"},
      {"epochs", std::to_string(s.epochs)},
      {"lr", format_double(s.lr)},
      {"momentum", format_double(s.momentum)},
      {"decay_epochs", list_text(s.decay_epochs)},
      {"decay_factor", format_double(s.decay_factor)},
      {"lambda_reg", format_double(s.lambda_reg)},
      {"lambda_pos", format_double(s.lambda_pos)},
      {"flip_augment", s.flip_augment ? "true" : "false"},
      {"resize_to", std::to_string(s.resize_to)},
      {"precision", s.precision},
      {"seed", std::to_string(s.seed)},
  };
}

std::vector<int> int_list(const std::vector<double>& v, const std::string& what) {
  std::vector<int> out;
  for (double d : v) {
    if (d != static_cast<int>(d) || d < 0) fail(Errc::bad_argument, what + " must be non-negative integers");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

ModelConfig model_config_from(const TrainSettings& s) {
  if (s.views != "single" && s.views != "multi")
    fail(Errc::bad_argument, "views must be 'single' or 'multi'");
  if (s.attention != "concat" && s.attention != "cbam")
    fail(Errc::bad_argument, "attention must be 'concat' or 'cbam'");
  ModelConfig mc;
  mc.n_ctx = s.n_ctx;
  mc.n_views = s.views == "multi" ? 3 : 1;
  mc.backbone.channels = int_list(s.stage_channels, "stage_channels");
  mc.backbone.pyramid_channels = s.pyramid_channels;
  mc.backbone.pyramid_levels = s.pyramid_levels;
  mc.fusion = s.attention == "cbam" ? FusionMode::channel_attention : FusionMode::concat;
  mc.attention_reduction = s.attention_reduction;
  mc.position_head = s.position;
  mc.head_hidden = s.head_hidden;
  mc.anchors.scales = s.anchor_scales;
  mc.anchors.aspect_ratios = s.aspect_ratios;
  mc.positive_iou = s.positive_iou;
  mc.negative_iou = s.negative_iou;
  mc.score_thresh = s.score_thresh;
  mc.nms_iou = s.nms_iou;
  return mc;
}

ViewSet view_set_from(const TrainSettings& s) {
  if (s.views == "multi") return default_views();
  ViewSet v;
  v.windows.push_back(kWideWindow);
  return v;
}

template <class T>
int run_train(const TrainSettings& s, const std::string& data_dir, const std::string& test_dir,
              const std::string& out_dir) {
  ModelConfig mc = model_config_from(s);
  ViewSet views = view_set_from(s);
  RawDataset raw = load_dataset_dir(data_dir);
  DatasetT<T> train_set = make_samples<T>(raw, views, s.n_ctx, s.resize_to);

  TrainConfig tc;
  tc.sgd.learning_rate = s.lr;
  tc.sgd.momentum = s.momentum;
  tc.sgd.decay_epochs = int_list(s.decay_epochs, "decay_epochs");
  tc.sgd.decay_factor = s.decay_factor;
  tc.weights.lambda_reg = s.lambda_reg;
  tc.weights.lambda_pos = s.lambda_pos;
  tc.epochs = s.epochs;
  tc.flip_augment = s.flip_augment;
  tc.seed = s.seed;

  DetectorT<T> model(mc, s.seed);
  std::vector<EpochStats> log = train(model, train_set, tc);
  for (const EpochStats& e : log)
    std::cout << "epoch " << (e.epoch + 1) << "/" << s.epochs << " lr " << format_double(e.lr)
              << " loss " << format_double(e.mean_loss) << "\n";

  fs::create_directories(out_dir);
  echo_config(out_dir, settings_echo(s));
  std::string log_text;
  for (const EpochStats& e : log)
    log_text += "epoch " + std::to_string(e.epoch) + " lr " + format_double(e.lr) + " loss " +
                format_double(e.mean_loss) + "\n";
  write_text_file((fs::path(out_dir) / "train_log.txt").string(), log_text);

  Checkpoint ckpt;
  ckpt.config_text = render_config(settings_echo(s));
  ckpt.entries = pack_params(model.params());
  save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), ckpt);

  if (!test_dir.empty()) {
    RawDataset raw_test = load_dataset_dir(test_dir);
    DatasetT<T> test_set = make_samples<T>(raw_test, views, s.n_ctx, s.resize_to);
    std::vector<EvalCase> cases = predict_dataset(model, test_set);
    GtTable gt;
    std::vector<std::vector<Detection>> dets;
    for (const EvalCase& c : cases) {
      gt.ids.push_back(c.image_id);
      gt.boxes.push_back(c.gt_boxes);
      dets.push_back(c.detections);
    }
    save_gt((fs::path(out_dir) / "eval_gt.txt").string(), gt);
    save_detections((fs::path(out_dir) / "detections.txt").string(), gt.ids, dets);
    std::cout << "wrote detections for " << cases.size() << " test images\n";
  }
  std::cout << "wrote " << (fs::path(out_dir) / "model.ckpt").string() << "\n";
  return 0;
}

// ------------------------------------------------------------------- eval --

int cmd_eval(const std::string& gt_path, const std::string& det_path, double iou_arg,
             const std::string& rates_arg, const std::string& method, const std::string& out_dir,
             const std::string& csv_path) {
  GtTable gt = load_gt(gt_path);
  std::vector<std::vector<Detection>> dets = load_detections(det_path, gt);
  std::vector<double> rates;
  {
    std::string item;
    std::istringstream in(rates_arg);
    while (std::getline(in, item, ',')) {
      char* end = nullptr;
      double r = std::strtod(item.c_str(), &end);
      if (end == item.c_str() || *end != '\0' || !(r > 0))
        fail(Errc::bad_argument, "bad rate '" + item + "'");
      rates.push_back(r);
    }
    if (rates.empty()) fail(Errc::bad_argument, "empty rate list");
  }
  FrocCurve curve = froc(to_eval_cases(gt, dets), rates, iou_arg);
  std::string table = froc_report({{method, curve}});
  std::cout << table;

  std::string csv = "threshold,fps_per_image,sensitivity\n";
  for (const FrocPoint& p : curve.points)
    csv += format_double(p.threshold) + "," + format_double(p.fps_per_image) + "," +
           format_double(p.sensitivity) + "\n";
  if (!csv_path.empty()) write_text_file(csv_path, csv);
  if (!out_dir.empty()) {
    echo_config(out_dir, {{"iou", format_double(iou_arg)},
                          {"rates", rates_arg},
                          {"method", method}});
    write_text_file((fs::path(out_dir) / "froc.txt").string(), table);
    write_text_file((fs::path(out_dir) / "curve.csv").string(), csv);
  }
  return 0;
}

// --------------------------------------------------------------- gradcheck --

ParamT<double>& add_uniform(ParamStoreT<double>& ps, const std::string& name,
                            std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorT<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return ps.add(name, std::move(t));
}

struct OpCheck {
  std::string name;
  double tol;
  GradCheckResult result;
};

using GraphFn = std::function<TapeT<double>::Val(TapeT<double>&, ParamStoreT<double>&)>;

GradCheckResult check_graph(ParamStoreT<double>& ps, const GraphFn& build, uint64_t seed,
                            int coords = 100) {
  auto loss_fn = [&](bool with_grad) {
    TapeT<double> tape(with_grad);
    TapeT<double>::Val loss = build(tape, ps);
    double v = tape.value(loss)[0];
    if (with_grad) tape.backward(loss);
    return v;
  };
  Rng rng(seed);
  return gradient_check(loss_fn, ps, rng, 1e-5, coords);
}

int cmd_gradcheck(uint64_t seed) {
  std::vector<OpCheck> rows;
  Rng init(seed);

  auto pval = [](ParamStoreT<double>& ps, TapeT<double>& t, const std::string& n) {
    return t.param(*ps.find(n));
  };

  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {2, 3, 7, 7}, init);
    add_uniform(ps, "w", {4, 3, 3, 3}, init);
    add_uniform(ps, "b", {4}, init);
    rows.push_back({"conv2d_s1p1", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.sum(t.conv2d(pval(p, t, "x"), pval(p, t, "w"), pval(p, t, "b"), 1, 1));
                    }, seed + 1)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {1, 2, 9, 9}, init);
    add_uniform(ps, "w", {3, 2, 3, 3}, init);
    add_uniform(ps, "b", {3}, init);
    rows.push_back({"conv2d_s2p1", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.sum(t.conv2d(pval(p, t, "x"), pval(p, t, "w"), pval(p, t, "b"), 2, 1));
                    }, seed + 2)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {1, 4, 5, 5}, init);
    add_uniform(ps, "w", {6, 4, 1, 1}, init);
    add_uniform(ps, "b", {6}, init);
    rows.push_back({"conv2d_1x1", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.sum(t.conv2d(pval(p, t, "x"), pval(p, t, "w"), pval(p, t, "b"), 1, 0));
                    }, seed + 3)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {3, 10}, init);
    add_uniform(ps, "w", {4, 10}, init);
    add_uniform(ps, "b", {4}, init);
    rows.push_back({"fully_connected", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.sum(t.fully_connected(pval(p, t, "x"), pval(p, t, "w"), pval(p, t, "b")));
                    }, seed + 4)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {2, 3, 6, 6}, init);
    rows.push_back({"relu", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.sum(t.relu(pval(p, t, "x")));
                    }, seed + 5)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {2, 8}, init, -3.0, 3.0);
    rows.push_back({"sigmoid", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.sum(t.sigmoid(pval(p, t, "x")));
                    }, seed + 6)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {2, 3, 8, 8}, init);
    rows.push_back({"max_pool2d", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.sum(t.max_pool2d(pval(p, t, "x"), 2, 2));
                    }, seed + 7)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {2, 5, 6, 6}, init);
    rows.push_back({"global_avg_pool", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.sum(t.global_avg_pool(pval(p, t, "x")));
                    }, seed + 8)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {2, 5, 6, 6}, init);
    rows.push_back({"global_max_pool", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.sum(t.global_max_pool(pval(p, t, "x")));
                    }, seed + 9)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {1, 3, 4, 4}, init);
    rows.push_back({"upsample_nearest", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.sum(t.upsample_nearest(pval(p, t, "x"), 2));
                    }, seed + 10)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "a", {1, 2, 4, 4}, init);
    add_uniform(ps, "b", {1, 3, 4, 4}, init);
    rows.push_back({"concat_axis1", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      std::vector<TapeT<double>::Val> xs{pval(p, t, "a"), pval(p, t, "b")};
                      return t.sum(t.concat(xs, 1));
                    }, seed + 11)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "x", {1, 8, 6, 6}, init);
    add_uniform(ps, "w1", {4, 8}, init);
    add_uniform(ps, "b1", {4}, init);
    add_uniform(ps, "w2", {8, 4}, init);
    add_uniform(ps, "b2", {8}, init);
    rows.push_back({"attention_chain", 1e-4,
                    check_graph(ps, [&](TapeT<double>& t, ParamStoreT<double>& p) {
                      auto x = pval(p, t, "x");
                      auto pooled = t.add(t.global_avg_pool(x), t.global_max_pool(x));
                      auto h = t.relu(t.fully_connected(pooled, pval(p, t, "w1"), pval(p, t, "b1")));
                      auto wgt = t.sigmoid(t.fully_connected(h, pval(p, t, "w2"), pval(p, t, "b2")));
                      return t.sum(t.mul_channel(x, wgt));
                    }, seed + 12)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "logits", {4, 3}, init, -2.0, 2.0);
    TensorT<double> target({4, 3});
    Rng trng(seed + 100);
    for (int r = 0; r < 4; ++r) {
      double s = 0;
      for (int c = 0; c < 3; ++c) {
        target.at2(r, c) = trng.uniform(0.1, 1.0);
        s += target.at2(r, c);
      }
      for (int c = 0; c < 3; ++c) target.at2(r, c) /= s;
    }
    rows.push_back({"softmax_cross_entropy", 1e-4,
                    check_graph(ps, [&, target](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.softmax_cross_entropy(pval(p, t, "logits"), target);
                    }, seed + 13)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "pred", {3, 4}, init);
    TensorT<double> target({3, 4});
    Rng trng(seed + 101);
    for (int64_t i = 0; i < target.numel(); ++i) target[i] = trng.uniform(-1.0, 1.0);
    rows.push_back({"mse", 1e-4,
                    check_graph(ps, [&, target](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.mse(pval(p, t, "pred"), target);
                    }, seed + 14)});
  }
  {
    ParamStoreT<double> ps;
    add_uniform(ps, "logits", {20}, init, -2.0, 2.0);
    TensorT<double> labels({20}), mask({20});
    Rng trng(seed + 102);
    for (int i = 0; i < 20; ++i) {
      labels[i] = trng.bernoulli(0.5) ? 1.0 : 0.0;
      mask[i] = trng.bernoulli(0.7) ? 1.0 : 0.0;
    }
    mask[0] = 1.0;
    rows.push_back({"bce_with_logits", 1e-4,
                    check_graph(ps, [&, labels, mask](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.bce_with_logits_masked(pval(p, t, "logits"), labels, mask);
                    }, seed + 15)});
  }
  {
    // Residuals kept inside (-1, 1), away from the transition point.
    ParamStoreT<double> ps;
    add_uniform(ps, "pred", {12, 4}, init, -0.4, 0.4);
    TensorT<double> target({12, 4}), mask({12});
    Rng trng(seed + 103);
    for (int64_t i = 0; i < target.numel(); ++i) target[i] = trng.uniform(-0.4, 0.4);
    for (int i = 0; i < 12; ++i) mask[i] = trng.bernoulli(0.5) ? 1.0 : 0.0;
    mask[0] = 1.0;
    rows.push_back({"smooth_l1", 1e-4,
                    check_graph(ps, [&, target, mask](TapeT<double>& t, ParamStoreT<double>& p) {
                      return t.smooth_l1_masked(pval(p, t, "pred"), target, mask);
                    }, seed + 16)});
  }
  {
    ModelConfig mc;
    mc.n_ctx = 3;
    mc.n_views = 2;
    mc.backbone.channels = {4, 8};
    mc.backbone.pyramid_channels = 6;
    mc.backbone.pyramid_levels = 2;
    mc.fusion = FusionMode::channel_attention;
    mc.attention_reduction = 4;
    mc.position_head = true;
    mc.head_hidden = 6;
    mc.anchors.scales = {6, 12};
    DetectorT<double> model(mc, seed + 200);
    SampleT<double> sample;
    Rng srng(seed + 201);
    for (int v = 0; v < 2; ++v) {
      TensorT<double> t({1, 3, 16, 16});
      for (int64_t i = 0; i < t.numel(); ++i) t[i] = srng.uniform(0.0, 1.0);
      sample.views.push_back(std::move(t));
    }
    sample.gt_boxes.push_back(Box{2, 2, 14, 14});
    sample.label = PositionLabel{1, 0.5};
    LossWeights weights;
    auto loss_fn = [&](bool with_grad) {
      TapeT<double> tape(with_grad);
      auto losses = model.loss(tape, sample, weights);
      double v = tape.value(losses.total)[0];
      if (with_grad) tape.backward(losses.total);
      return v;
    };
    // Smaller step than the per-op checks: the composed graph has thousands
    // of relu/max kinks, and a 1e-5 probe occasionally straddles one.
    Rng rng(seed + 17);
    GradCheckResult r = gradient_check(loss_fn, model.params(), rng, 1e-6, 20);
    rows.push_back({"detector_loss", 1e-3, r});
  }

  std::printf("%-24s %-12s %-8s %s\n", "op", "max_rel_err", "coords", "status");
  bool all_ok = true;
  for (const OpCheck& r : rows) {
    bool ok = r.result.max_rel_err < r.tol;
    all_ok = all_ok && ok;
    std::printf("%-24s %-12.3e %-8d %s\n", r.name.c_str(), r.result.max_rel_err,
                r.result.coords_checked, ok ? "ok" : "FAIL");
    if (!ok)
      std::printf("  worst: %s[%lld]\n", r.result.worst_param.c_str(),
                  static_cast<long long>(r.result.worst_coord));
  }
  if (!all_ok) fail(Errc::numeric_failure, "gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-window CT lesion detection toolkit"};
  app.require_subcommand(1);

  // ingest
  std::string ing_in, ing_out;
  double ing_z = 2.0;
  CLI::App* ing = app.add_subcommand("ingest", "validate a volume and resample z spacing");
  ing->add_option("--in", ing_in, "input .huv volume")->required();
  ing->add_option("--out", ing_out, "output .huv volume")->required();
  ing->add_option("--z-spacing", ing_z, "target z spacing in mm, 0 keeps the source spacing")
      ->capture_default_str();

  // window
  std::string win_in, win_out;
  std::string win_windows = "50:449,-505:1980,446:1960";
  int win_slice = 0;
  CLI::App* win = app.add_subcommand("window", "render one slice under a window list");
  win->add_option("--in", win_in, "input .huv volume")->required();
  win->add_option("--slice", win_slice, "slice index")->required();
  win->add_option("--windows", win_windows, "comma-separated level:width list")
      ->capture_default_str();
  win->add_option("--out", win_out, "output float-image file")->required();

  // cluster-windows
  std::string clu_in, clu_out;
  int clu_k = 3;
  uint64_t clu_seed = 0;
  CLI::App* clu = app.add_subcommand("cluster-windows", "k-means over recorded window settings");
  clu->add_option("--in", clu_in, "text file, one 'level,width' per line")->required();
  clu->add_option("--k", clu_k, "number of clusters")->capture_default_str();
  clu->add_option("--seed", clu_seed, "rng seed")->capture_default_str();
  clu->add_option("--out", clu_out, "also write centroids to this file");

  // phantom-gen
  std::string ph_spec, ph_out;
  uint64_t ph_seed = 0;
  CLI::App* ph = app.add_subcommand("phantom-gen", "generate a synthetic labeled dataset");
  ph->add_option("--spec", ph_spec, "key = value spec file (defaults when omitted)");
  ph->add_option("--seed", ph_seed, "rng seed")->capture_default_str();
  ph->add_option("--out", ph_out, "output dataset directory")->required();

  // train
  std::string tr_data, tr_test, tr_out, tr_config;
  std::string tr_views, tr_attention, tr_position;
  int tr_epochs = -1, tr_nctx = -1;
  uint64_t tr_seed = 0;
  CLI::App* tr = app.add_subcommand("train", "train a detector on a dataset directory");
  tr->add_option("--data", tr_data, "training dataset directory")->required();
  tr->add_option("--test-data", tr_test, "optional test dataset; writes detections + gt");
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--config", tr_config, "key = value run configuration");
  tr->add_option("--seed", tr_seed, "rng seed (model init, shuffling, augmentation)");
  tr->add_option("--epochs", tr_epochs, "override epoch count");
  tr->add_option("--views", tr_views, "single | multi")
      ->check(CLI::IsMember({"single", "multi"}));
  tr->add_option("--attention", tr_attention, "concat | cbam")
      ->check(CLI::IsMember({"concat", "cbam"}));
  tr->add_option("--position", tr_position, "on | off")->check(CLI::IsMember({"on", "off"}));
  tr->add_option("--n-ctx", tr_nctx, "context slices per view")
      ->check(CLI::IsMember({3, 9}));

  // eval
  std::string ev_gt, ev_dets, ev_out, ev_csv, ev_method = "model";
  std::string ev_rates = "0.5,1,2,3,4";
  double ev_iou = 0.5;
  CLI::App* ev = app.add_subcommand("eval", "sensitivity at FP-per-image rates");
  ev->add_option("--gt", ev_gt, "ground truth file")->required();
  ev->add_option("--dets", ev_dets, "detections file")->required();
  ev->add_option("--iou", ev_iou, "match threshold")->capture_default_str();
  ev->add_option("--rates", ev_rates, "comma-separated FP rates")->capture_default_str();
  ev->add_option("--method", ev_method, "row label in the table")->capture_default_str();
  ev->add_option("--out", ev_out, "output directory for table + curve");
  ev->add_option("--csv", ev_csv, "write the full curve as CSV");

  // gradcheck
  uint64_t gc_seed = 0;
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference check of every op");
  gc->add_option("--seed", gc_seed, "rng seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (*ing) return cmd_ingest(ing_in, ing_out, ing_z);
    if (*win) return cmd_window(win_in, win_slice, win_windows, win_out);
    if (*clu) return cmd_cluster(clu_in, clu_k, clu_seed, clu_out);
    if (*ph) return cmd_phantom(ph_spec, ph_seed, ph_out);
    if (*tr) {
      TrainSettings s;
      if (!tr_config.empty()) s = settings_from_config(Config::parse_file(tr_config));
      if (tr->count("--seed")) s.seed = tr_seed;
      if (tr_epochs > 0) s.epochs = tr_epochs;
      if (!tr_views.empty()) s.views = tr_views;
      if (!tr_attention.empty()) s.attention = tr_attention;
      if (!tr_position.empty()) s.position = tr_position == "on";
      if (tr_nctx > 0) s.n_ctx = tr_nctx;
      if (s.precision == "float") return run_train<float>(s, tr_data, tr_test, tr_out);
      if (s.precision == "double") return run_train<double>(s, tr_data, tr_test, tr_out);
      fail(Errc::bad_argument, "precision must be 'float' or 'double'");
    }
    if (*ev) return cmd_eval(ev_gt, ev_dets, ev_iou, ev_rates, ev_method, ev_out, ev_csv);
    if (*gc) return cmd_gradcheck(gc_seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
