#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mcseg/core/rng.hpp"
#include "mcseg/core/tensor.hpp"
#include "mcseg/volumes/types.hpp"

namespace mcseg {

struct PatchSpec {
  Dim3 shape = {48, 48, 32};
  bool rot90_inplane = true;
  bool flips = true;

  void validate() const {
    check_dims_positive(shape);
    if (rot90_inplane)
      require(shape.x == shape.y, "in-plane rotations need a square in-plane patch, got ",
              shape.x, "x", shape.y);
  }
};

// ---------------------------------------------------------------------------
// Patch extraction at a uniformly random corner; labels cut at the same spot.

template <typename T>
Grid3<T> cut_patch(const Grid3<T>& g, Dim3 corner, Dim3 shape) {
  Grid3<T> out(shape, g.spacing);
  for (int z = 0; z < shape.z; ++z)
    for (int y = 0; y < shape.y; ++y) {
      const T* src = &g.at(corner.x, corner.y + y, corner.z + z);
      T* dst = &out.at(0, y, z);
      for (int x = 0; x < shape.x; ++x) dst[x] = src[x];
    }
  return out;
}

inline Dim3 sample_patch_corner(Dim3 volume, Dim3 patch, Rng& rng) {
  require(patch.x <= volume.x && patch.y <= volume.y && patch.z <= volume.z,
          "patch ", patch.x, "x", patch.y, "x", patch.z, " larger than volume ",
          volume.x, "x", volume.y, "x", volume.z);
  return {static_cast<int>(uniform_int(rng, 0, volume.x - patch.x)),
          static_cast<int>(uniform_int(rng, 0, volume.y - patch.y)),
          static_cast<int>(uniform_int(rng, 0, volume.z - patch.z))};
}

inline std::pair<Volume, std::optional<LabelMask>> sample_patch(
    const Volume& v, const LabelMask* mask, const PatchSpec& spec, Rng& rng) {
  spec.validate();
  if (mask) check_pair_shapes(v, *mask);
  const Dim3 corner = sample_patch_corner(v.dims, spec.shape, rng);
  Volume pv;
  static_cast<Grid3<float>&>(pv) = cut_patch(static_cast<const Grid3<float>&>(v), corner, spec.shape);
  std::optional<LabelMask> pm;
  if (mask) {
    LabelMask lm;
    static_cast<Grid3<std::uint8_t>&>(lm) =
        cut_patch(static_cast<const Grid3<std::uint8_t>&>(*mask), corner, spec.shape);
    pm = std::move(lm);
  }
  return {std::move(pv), std::move(pm)};
}

// ---------------------------------------------------------------------------
// Augmentation: k*90-degree rotation in the x/y plane plus independent
// mirror flips along x and y. The transforms permute voxels, so the same
// call applied to volume and mask keeps them aligned.

// one quarter turn: (x, y) -> (y, X-1-x), z untouched
template <typename T>
Grid3<T> rotate90_xy(const Grid3<T>& g) {
  Grid3<T> out(Dim3{g.dims.y, g.dims.x, g.dims.z}, g.spacing);
  for (int z = 0; z < g.dims.z; ++z)
    for (int y = 0; y < g.dims.y; ++y)
      for (int x = 0; x < g.dims.x; ++x)
        out.at(y, g.dims.x - 1 - x, z) = g.at(x, y, z);
  return out;
}

// k quarter turns in a single pass
template <typename T>
Grid3<T> rotate90_xy_k(const Grid3<T>& g, int k) {
  k &= 3;
  if (k == 0) return g;
  const int X = g.dims.x, Y = g.dims.y;
  const Dim3 od = (k == 2) ? g.dims : Dim3{Y, X, g.dims.z};
  Grid3<T> out(od, g.spacing);
  for (int z = 0; z < g.dims.z; ++z)
    for (int y = 0; y < Y; ++y)
      for (int x = 0; x < X; ++x) {
        const T v = g.at(x, y, z);
        if (k == 1) out.at(y, X - 1 - x, z) = v;
        else if (k == 2) out.at(X - 1 - x, Y - 1 - y, z) = v;
        else out.at(Y - 1 - y, x, z) = v;
      }
  return out;
}

template <typename T>
void flip_axis_inplace(Grid3<T>& g, int axis) {
  const Dim3 d = g.dims;
  if (axis == 0) {
    for (int z = 0; z < d.z; ++z)
      for (int y = 0; y < d.y; ++y)
        for (int x = 0; x < d.x / 2; ++x) std::swap(g.at(x, y, z), g.at(d.x - 1 - x, y, z));
  } else if (axis == 1) {
    for (int z = 0; z < d.z; ++z)
      for (int y = 0; y < d.y / 2; ++y)
        for (int x = 0; x < d.x; ++x) std::swap(g.at(x, y, z), g.at(x, d.y - 1 - y, z));
  } else {
    for (int z = 0; z < d.z / 2; ++z)
      for (int y = 0; y < d.y; ++y)
        for (int x = 0; x < d.x; ++x) std::swap(g.at(x, y, z), g.at(x, y, d.z - 1 - z));
  }
}

struct AugmentDraw {
  int rot_k = 0;
  bool flip_x = false;
  bool flip_y = false;
};

inline AugmentDraw draw_augmentation(const PatchSpec& spec, Rng& rng) {
  AugmentDraw d;
  if (spec.rot90_inplane) d.rot_k = static_cast<int>(uniform_int(rng, 0, 3));
  if (spec.flips) {
    d.flip_x = uniform_int(rng, 0, 1) == 1;
    d.flip_y = uniform_int(rng, 0, 1) == 1;
  }
  return d;
}

template <typename T>
void apply_augmentation(Grid3<T>& g, const AugmentDraw& d) {
  if (d.rot_k) g = rotate90_xy_k(g, d.rot_k);
  if (d.flip_x) flip_axis_inplace(g, 0);
  if (d.flip_y) flip_axis_inplace(g, 1);
}

inline void augment(Volume& patch, LabelMask* label, const PatchSpec& spec, Rng& rng) {
  const AugmentDraw d = draw_augmentation(spec, rng);
  apply_augmentation(static_cast<Grid3<float>&>(patch), d);
  if (label) apply_augmentation(static_cast<Grid3<std::uint8_t>&>(*label), d);
}

// ---------------------------------------------------------------------------
// Batch composition: fixed 2-labeled + 2-unlabeled batches, drawing volume
// ids without replacement within an epoch over each pool.

struct TrainingBatch {
  Tensor<float> input;            // [n][1][z][y][x]
  Tensor<float> labels;           // zeros on unlabeled items
  std::vector<std::uint8_t> labeled_selector;
  std::vector<int> item_ids;      // source volume ids, for diagnostics
};

class EpochSampler {
 public:
  explicit EpochSampler(std::vector<int> ids) : ids_(std::move(ids)) {}

  int next(Rng& rng) {
    require(!ids_.empty(), "cannot sample from an empty pool");
    if (queue_.empty()) {
      queue_ = ids_;
      for (std::size_t i = queue_.size(); i > 1; --i)
        std::swap(queue_[i - 1], queue_[uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1)]);
    }
    const int id = queue_.back();
    queue_.pop_back();
    return id;
  }

  // epoch-queue state, exposed so a training checkpoint can resume mid-epoch
  const std::vector<int>& pending() const { return queue_; }
  void restore_pending(std::vector<int> queue) { queue_ = std::move(queue); }

 private:
  std::vector<int> ids_;
  std::vector<int> queue_;
};

struct PreparedVolume {
  int id = 0;
  Volume vol;
  LabelMask mask;   // empty data when unlabeled
  bool has_label = false;
};

class BatchComposer {
 public:
  BatchComposer(const std::vector<PreparedVolume>* pool, std::vector<int> labeled_ids,
                std::vector<int> unlabeled_ids, PatchSpec spec, int labeled_per_batch,
                int unlabeled_per_batch)
      : pool_(pool),
        labeled_(std::move(labeled_ids)),
        unlabeled_(std::move(unlabeled_ids)),
        spec_(spec),
        n_labeled_(labeled_per_batch),
        n_unlabeled_(unlabeled_per_batch) {
    require(n_labeled_ >= 1, "batches need at least one labeled patch");
    require(n_unlabeled_ >= 0, "negative unlabeled count");
    spec_.validate();
  }

  TrainingBatch next(Rng& rng) {
    const int n = n_labeled_ + n_unlabeled_;
    TrainingBatch batch;
    batch.input = Tensor<float>(n, 1, spec_.shape.z, spec_.shape.y, spec_.shape.x);
    batch.labels = Tensor<float>(n, 1, spec_.shape.z, spec_.shape.y, spec_.shape.x);
    batch.labels.fill(0.0f);  // unlabeled items keep all-zero targets
    batch.labeled_selector.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      const bool labeled = i < n_labeled_;
      const int id = labeled ? labeled_.next(rng) : unlabeled_.next(rng);
      const PreparedVolume& pv = find(id);
      auto [patch, mask] = sample_patch(pv.vol, labeled ? &pv.mask : nullptr, spec_, rng);
      if (labeled) {
        augment(patch, &*mask, spec_, rng);
        for (std::int64_t j = 0; j < patch.dims.voxels(); ++j)
          batch.labels.chan(i, 0)[j] = static_cast<float>(mask->data[j]);
        batch.labeled_selector[i] = 1;
      } else {
        augment(patch, nullptr, spec_, rng);
      }
      std::copy(patch.data.begin(), patch.data.end(), batch.input.chan(i, 0));
      batch.item_ids.push_back(id);
    }
    return batch;
  }

  EpochSampler& labeled_sampler() { return labeled_; }
  EpochSampler& unlabeled_sampler() { return unlabeled_; }

 private:
  const PreparedVolume& find(int id) const {
    for (const auto& pv : *pool_)
      if (pv.id == id) return pv;
    fail("volume id ", id, " not found in the prepared pool");
  }

  const std::vector<PreparedVolume>* pool_;
  EpochSampler labeled_, unlabeled_;
  PatchSpec spec_;
  int n_labeled_, n_unlabeled_;
};

}  // namespace mcseg
