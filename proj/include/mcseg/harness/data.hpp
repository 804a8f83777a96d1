#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "mcseg/datapipe/patches.hpp"
#include "mcseg/datapipe/preprocess.hpp"
#include "mcseg/datapipe/split.hpp"
#include "mcseg/volumes/container.hpp"

namespace mcseg {

inline std::string volume_filename(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "vol%04d", id);
  return std::string(buf);
}

inline std::string image_path(const std::string& dir, int id) {
  return dir + "/" + volume_filename(id) + ".img.mcv";
}

inline std::string label_path(const std::string& dir, int id) {
  return dir + "/" + volume_filename(id) + ".lab.mcv";
}

struct ValidationCase {
  int id = 0;
  Volume vol;
  LabelMask mask;
};

struct LoadedDataset {
  DatasetSplit split;
  std::vector<PreparedVolume> pool;       // labeled + unlabeled training volumes
  std::vector<ValidationCase> validation;
};

// Loads and preprocesses a dataset directory produced by `synth-data` (or
// hand-assembled in the same layout). Labels are read only for labeled and
// validation ids; unlabeled volumes get a central crop of the median labeled
// extent since no mask is available to crop around.
inline LoadedDataset load_dataset(const std::string& dir, int crop_margin) {
  LoadedDataset ds;
  ds.split = read_split_manifest(dir + "/split.txt");

  std::vector<int> ex, ey, ez;
  for (int id : ds.split.labeled) {
    const Volume v = read_volume(image_path(dir, id));
    const LabelMask m = read_mask(label_path(dir, id));
    auto [cv, cm] = preprocess(v, m, crop_margin);
    ex.push_back(cv.dims.x);
    ey.push_back(cv.dims.y);
    ez.push_back(cv.dims.z);
    PreparedVolume pv;
    pv.id = id;
    pv.vol = std::move(cv);
    pv.mask = std::move(cm);
    pv.has_label = true;
    ds.pool.push_back(std::move(pv));
  }

  auto median = [](std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const Dim3 extent{median(ex), median(ey), median(ez)};

  for (int id : ds.split.unlabeled) {
    const Volume v = read_volume(image_path(dir, id));
    PreparedVolume pv;
    pv.id = id;
    pv.vol = preprocess_unlabeled(v, extent);
    pv.has_label = false;
    ds.pool.push_back(std::move(pv));
  }

  for (int id : ds.split.validation) {
    const Volume v = read_volume(image_path(dir, id));
    const LabelMask m = read_mask(label_path(dir, id));
    auto [cv, cm] = preprocess(v, m, crop_margin);
    ds.validation.push_back({id, std::move(cv), std::move(cm)});
  }
  return ds;
}

}  // namespace mcseg
