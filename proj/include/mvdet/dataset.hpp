// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mvdet/boxes.hpp"
#include "mvdet/froc.hpp"
#include "mvdet/model.hpp"
#include "mvdet/phantom.hpp"
#include "mvdet/volume.hpp"
#include "mvdet/windowing.hpp"

namespace mvdet {

// On-disk dataset directory:
//   vol000.huv, vol001.huv, ...   volumes (any *.huv, read in sorted order)
//   gt.txt                        "image_id x1 y1 x2 y2" per box; a line with
//                                 only an image_id registers a lesion-free
//                                 image (it still counts for FP rates)
//   labels.txt                    "image_id cls p" per image (cls 0 chest,
//                                 1 abdomen, 2 pelvis; p in [0,1])
// Image ids are "<volume stem>_s<slice>", e.g. vol003_s2.
//
// Detection files share the id vocabulary: "image_id score x1 y1 x2 y2".

struct RawDataset {
  std::vector<HuVolume> volumes;
  std::vector<std::string> stems;
  std::vector<std::vector<std::vector<Box>>> gt;  // [volume][slice] -> boxes
  std::vector<std::vector<PositionLabel>> labels;  // [volume][slice]
};

std::string image_id(const std::string& stem, int slice);

void write_dataset_dir(const std::string& dir, const PhantomDataset& data);
RawDataset load_dataset_dir(const std::string& dir);
RawDataset to_raw(const PhantomDataset& data);  // in-memory adapter, stems vol%03d

// Ground truth / detection text files, keyed by image id.
struct GtTable {
  std::vector<std::string> ids;            // file order
  std::vector<std::vector<Box>> boxes;     // per id
  int index_of(const std::string& id) const;  // -1 when absent
};
GtTable load_gt(const std::string& path);
void save_gt(const std::string& path, const GtTable& gt);

std::vector<std::vector<Detection>> load_detections(const std::string& path, const GtTable& gt);
void save_detections(const std::string& path, const std::vector<std::string>& ids,
                     const std::vector<std::vector<Detection>>& dets);

// Position labels keyed by image id, aligned with GtTable order on load.
std::vector<PositionLabel> load_labels(const std::string& path, const GtTable& gt);

// Model-ready samples: per slice, each view is the windowed n_ctx slab.
// resize_to > 0 resizes the longer image side first (boxes scale along).
template <class T>
struct DatasetT {
  std::vector<SampleT<T>> samples;
  std::vector<std::string> ids;  // parallel to samples
};

template <class T>
DatasetT<T> make_samples(const RawDataset& raw, const ViewSet& views, int n_ctx,
                         int resize_to = 0);

std::vector<EvalCase> to_eval_cases(const GtTable& gt,
                                    const std::vector<std::vector<Detection>>& dets);

}  // namespace mvdet
