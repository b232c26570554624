// SPDX-License-Identifier: Apache-2.0
#include "mvdet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include "mvdet/config.hpp"

namespace fs = std::filesystem;

namespace mvdet {

namespace {

std::string vol_stem(int v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "vol%03d", v);
  return buf;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double parse_num(const std::string& s, const std::string& where) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
    fail(Errc::bad_data, where + ": bad number '" + s + "'");
  return v;
}

// Split "<stem>_s<slice>" into its parts.
void parse_image_id(const std::string& id, std::string* stem, int* slice,
                    const std::string& where) {
  size_t pos = id.rfind("_s");
  if (pos == std::string::npos || pos + 2 >= id.size())
    fail(Errc::bad_data, where + ": image id '" + id + "' is not <stem>_s<slice>");
  *stem = id.substr(0, pos);
  std::string tail = id.substr(pos + 2);
  char* end = nullptr;
  long k = std::strtol(tail.c_str(), &end, 10);
  if (end == tail.c_str() || *end != '\0' || k < 0)
    fail(Errc::bad_data, where + ": image id '" + id + "' has a bad slice index");
  *slice = static_cast<int>(k);
}

}  // namespace

std::string image_id(const std::string& stem, int slice) {
  return stem + "_s" + std::to_string(slice);
}

void write_dataset_dir(const std::string& dir, const PhantomDataset& data) {
  fs::create_directories(dir);
  std::string gt_text, label_text;
  for (size_t v = 0; v < data.volumes.size(); ++v) {
    std::string stem = vol_stem(static_cast<int>(v));
    save_volume(data.volumes[v], fs::path(dir) / (stem + ".huv"));
    for (size_t k = 0; k < data.gt[v].size(); ++k) {
      std::string id = image_id(stem, static_cast<int>(k));
      const std::vector<Box>& boxes = data.gt[v][k];
      if (boxes.empty()) {
        gt_text += id + "\n";
      } else {
        for (const Box& b : boxes)
          gt_text += id + " " + format_double(b.x1) + " " + format_double(b.y1) + " " +
                     format_double(b.x2) + " " + format_double(b.y2) + "\n";
      }
      const PositionLabel& lab = data.labels[v][k];
      label_text += id + " " + std::to_string(lab.cls) + " " + format_double(lab.p) + "\n";
    }
  }
  write_text_file((fs::path(dir) / "gt.txt").string(), gt_text);
  write_text_file((fs::path(dir) / "labels.txt").string(), label_text);
}

RawDataset to_raw(const PhantomDataset& data) {
  RawDataset raw;
  raw.volumes = data.volumes;
  raw.gt = data.gt;
  raw.labels = data.labels;
  for (size_t v = 0; v < data.volumes.size(); ++v) raw.stems.push_back(vol_stem(static_cast<int>(v)));
  return raw;
}

RawDataset load_dataset_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) fail(Errc::missing_file, "not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& ent : fs::directory_iterator(dir)) {
    if (ent.path().extension() == ".huv") names.push_back(ent.path().filename().string());
  }
  if (names.empty()) fail(Errc::bad_data, dir + ": no .huv volumes");
  std::sort(names.begin(), names.end());

  RawDataset raw;
  std::map<std::string, int> vol_of;
  for (const std::string& name : names) {
    raw.volumes.push_back(load_volume((fs::path(dir) / name).string()));
    std::string stem = name.substr(0, name.size() - 4);
    vol_of[stem] = static_cast<int>(raw.stems.size());
    raw.stems.push_back(stem);
  }
  raw.gt.resize(raw.volumes.size());
  raw.labels.resize(raw.volumes.size());
  for (size_t v = 0; v < raw.volumes.size(); ++v) {
    raw.gt[v].resize(static_cast<size_t>(raw.volumes[v].nz));
    raw.labels[v].assign(static_cast<size_t>(raw.volumes[v].nz), PositionLabel{-1, -1.0});
  }

  auto locate = [&](const std::string& id, const std::string& where) {
    std::string stem;
    int slice = 0;
    parse_image_id(id, &stem, &slice, where);
    auto it = vol_of.find(stem);
    if (it == vol_of.end()) fail(Errc::bad_data, where + ": id '" + id + "' names no volume");
    if (slice >= raw.volumes[static_cast<size_t>(it->second)].nz)
      fail(Errc::bad_data, where + ": id '" + id + "' slice out of range");
    return std::pair<int, int>(it->second, slice);
  };

  std::string gt_path = (fs::path(dir) / "gt.txt").string();
  GtTable gt = load_gt(gt_path);
  std::vector<std::vector<char>> seen(raw.volumes.size());
  for (size_t v = 0; v < raw.volumes.size(); ++v)
    seen[v].assign(static_cast<size_t>(raw.volumes[v].nz), 0);
  for (size_t i = 0; i < gt.ids.size(); ++i) {
    auto [v, k] = locate(gt.ids[i], gt_path);
    raw.gt[static_cast<size_t>(v)][static_cast<size_t>(k)] = gt.boxes[i];
    seen[static_cast<size_t>(v)][static_cast<size_t>(k)] = 1;
  }
  for (size_t v = 0; v < seen.size(); ++v)
    for (size_t k = 0; k < seen[v].size(); ++k)
      if (!seen[v][k])
        fail(Errc::bad_data, gt_path + ": no entry for " + image_id(raw.stems[v], static_cast<int>(k)));

  std::string lab_path = (fs::path(dir) / "labels.txt").string();
  std::string text = read_text_file(lab_path);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3) fail(Errc::bad_data, lab_path + ": expected 'image_id cls p'");
    auto [v, k] = locate(tok[0], lab_path);
    PositionLabel& lab = raw.labels[static_cast<size_t>(v)][static_cast<size_t>(k)];
    if (lab.cls >= 0) fail(Errc::bad_data, lab_path + ": duplicate label for '" + tok[0] + "'");
    double cls = parse_num(tok[1], lab_path);
    double p = parse_num(tok[2], lab_path);
    if (cls != 0 && cls != 1 && cls != 2)
      fail(Errc::bad_data, lab_path + ": class must be 0, 1, or 2");
    if (!(p >= 0.0 && p <= 1.0)) fail(Errc::bad_data, lab_path + ": p must lie in [0,1]");
    lab.cls = static_cast<int>(cls);
    lab.p = p;
  }
  for (size_t v = 0; v < raw.labels.size(); ++v)
    for (size_t k = 0; k < raw.labels[v].size(); ++k)
      if (raw.labels[v][k].cls < 0)
        fail(Errc::bad_data, lab_path + ": no label for " + image_id(raw.stems[v], static_cast<int>(k)));
  return raw;
}

int GtTable::index_of(const std::string& id) const {
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return static_cast<int>(i);
  return -1;
}

GtTable load_gt(const std::string& path) {
  std::string text = read_text_file(path);
  GtTable gt;
  std::map<std::string, int> index;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 1 && tok.size() != 5)
      fail(Errc::bad_data, path + ": expected 'image_id [x1 y1 x2 y2]', got " +
                               std::to_string(tok.size()) + " fields");
    auto it = index.find(tok[0]);
    int at;
    if (it == index.end()) {
      at = static_cast<int>(gt.ids.size());
      index[tok[0]] = at;
      gt.ids.push_back(tok[0]);
      gt.boxes.emplace_back();
    } else {
      at = it->second;
    }
    if (tok.size() == 5) {
      Box b{parse_num(tok[1], path), parse_num(tok[2], path), parse_num(tok[3], path),
            parse_num(tok[4], path)};
      if (!(b.x2 >= b.x1 && b.y2 >= b.y1))
        fail(Errc::bad_data, path + ": inverted box for '" + tok[0] + "'");
      gt.boxes[static_cast<size_t>(at)].push_back(b);
    }
  }
  if (gt.ids.empty()) fail(Errc::bad_data, path + ": no images");
  return gt;
}

void save_gt(const std::string& path, const GtTable& gt) {
  std::string text;
  for (size_t i = 0; i < gt.ids.size(); ++i) {
    if (gt.boxes[i].empty()) {
      text += gt.ids[i] + "\n";
    } else {
      for (const Box& b : gt.boxes[i])
        text += gt.ids[i] + " " + format_double(b.x1) + " " + format_double(b.y1) + " " +
                format_double(b.x2) + " " + format_double(b.y2) + "\n";
    }
  }
  write_text_file(path, text);
}

std::vector<std::vector<Detection>> load_detections(const std::string& path, const GtTable& gt) {
  std::map<std::string, int> index;
  for (size_t i = 0; i < gt.ids.size(); ++i) index[gt.ids[i]] = static_cast<int>(i);
  std::vector<std::vector<Detection>> dets(gt.ids.size());
  std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 6)
      fail(Errc::bad_data, path + ": expected 'image_id score x1 y1 x2 y2'");
    auto it = index.find(tok[0]);
    if (it == index.end())
      fail(Errc::bad_data, path + ": detection for unknown image '" + tok[0] + "'");
    Detection d;
    d.score = parse_num(tok[1], path);
    d.box = Box{parse_num(tok[2], path), parse_num(tok[3], path), parse_num(tok[4], path),
                parse_num(tok[5], path)};
    if (!(d.box.x2 >= d.box.x1 && d.box.y2 >= d.box.y1))
      fail(Errc::bad_data, path + ": inverted box for '" + tok[0] + "'");
    dets[static_cast<size_t>(it->second)].push_back(d);
  }
  return dets;
}

void save_detections(const std::string& path, const std::vector<std::string>& ids,
                     const std::vector<std::vector<Detection>>& dets) {
  if (ids.size() != dets.size()) fail(Errc::bad_argument, "ids/detections length mismatch");
  std::string text;
  for (size_t i = 0; i < ids.size(); ++i) {
    for (const Detection& d : dets[i])
      text += ids[i] + " " + format_double(d.score) + " " + format_double(d.box.x1) + " " +
              format_double(d.box.y1) + " " + format_double(d.box.x2) + " " +
              format_double(d.box.y2) + "\n";
  }
  write_text_file(path, text);
}

std::vector<PositionLabel> load_labels(const std::string& path, const GtTable& gt) {
  std::map<std::string, int> index;
  for (size_t i = 0; i < gt.ids.size(); ++i) index[gt.ids[i]] = static_cast<int>(i);
  std::vector<PositionLabel> labels(gt.ids.size(), PositionLabel{-1, -1.0});
  std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3) fail(Errc::bad_data, path + ": expected 'image_id cls p'");
    auto it = index.find(tok[0]);
    if (it == index.end()) fail(Errc::bad_data, path + ": label for unknown image '" + tok[0] + "'");
    PositionLabel& lab = labels[static_cast<size_t>(it->second)];
    if (lab.cls >= 0) fail(Errc::bad_data, path + ": duplicate label for '" + tok[0] + "'");
    double cls = parse_num(tok[1], path);
    lab.p = parse_num(tok[2], path);
    if (cls != 0 && cls != 1 && cls != 2) fail(Errc::bad_data, path + ": class must be 0, 1, or 2");
    if (!(lab.p >= 0.0 && lab.p <= 1.0)) fail(Errc::bad_data, path + ": p must lie in [0,1]");
    lab.cls = static_cast<int>(cls);
  }
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i].cls < 0) fail(Errc::bad_data, path + ": no label for '" + gt.ids[i] + "'");
  return labels;
}

template <class T>
DatasetT<T> make_samples(const RawDataset& raw, const ViewSet& views, int n_ctx, int resize_to) {
  if (views.windows.empty()) fail(Errc::bad_argument, "no rendering windows");
  if (n_ctx < 1 || n_ctx % 2 == 0) fail(Errc::bad_argument, "n_ctx must be odd");
  DatasetT<T> out;
  int half = n_ctx / 2;
  for (size_t v = 0; v < raw.volumes.size(); ++v) {
    const HuVolume& vol = raw.volumes[v];
    // Render every (slice, view) once; slabs then pick slices by clamped
    // index, matching extract_slab's edge-repeat rule.
    double scale = 1.0;
    std::vector<std::vector<Image2D>> rendered(static_cast<size_t>(vol.nz));
    for (int z = 0; z < vol.nz; ++z) {
      Image2D hu = vol.slice_hu(z);
      if (resize_to > 0) {
        ResizeResult r = resize_xy(hu, resize_to);
        hu = std::move(r.image);
        scale = r.scale;
      }
      rendered[static_cast<size_t>(z)].reserve(views.windows.size());
      for (const WindowSpec& w : views.windows)
        rendered[static_cast<size_t>(z)].push_back(apply_window(hu, w));
    }
    int rows = rendered[0][0].rows, cols = rendered[0][0].cols;
    for (int k = 0; k < vol.nz; ++k) {
      SampleT<T> s;
      for (size_t w = 0; w < views.windows.size(); ++w) {
        TensorT<T> t({1, n_ctx, rows, cols});
        for (int c = 0; c < n_ctx; ++c) {
          int z = std::clamp(k - half + c, 0, vol.nz - 1);
          const Image2D& img = rendered[static_cast<size_t>(z)][w];
          for (int i = 0; i < rows * cols; ++i)
            t[static_cast<int64_t>(c) * rows * cols + i] = static_cast<T>(img.v[static_cast<size_t>(i)]);
        }
        s.views.push_back(std::move(t));
      }
      for (const Box& b : raw.gt[v][static_cast<size_t>(k)])
        s.gt_boxes.push_back(Box{b.x1 * scale, b.y1 * scale, b.x2 * scale, b.y2 * scale});
      s.label = raw.labels[v][static_cast<size_t>(k)];
      out.samples.push_back(std::move(s));
      out.ids.push_back(image_id(raw.stems[v], k));
    }
  }
  return out;
}

std::vector<EvalCase> to_eval_cases(const GtTable& gt,
                                    const std::vector<std::vector<Detection>>& dets) {
  if (gt.ids.size() != dets.size()) fail(Errc::bad_argument, "gt/detections length mismatch");
  std::vector<EvalCase> cases;
  for (size_t i = 0; i < gt.ids.size(); ++i) cases.push_back({gt.ids[i], gt.boxes[i], dets[i]});
  return cases;
}

template DatasetT<float> make_samples<float>(const RawDataset&, const ViewSet&, int, int);
template DatasetT<double> make_samples<double>(const RawDataset&, const ViewSet&, int, int);

}  // namespace mvdet
