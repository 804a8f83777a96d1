#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mcseg/core/common.hpp"
#include "mcseg/core/tensor.hpp"
#include "mcseg/volumes/types.hpp"

namespace mcseg {

// Sliding-window tiling of a volume: per axis the corners are {0, s, 2s, ...}
// plus the end-aligned corner dim - win, so every voxel is covered even when
// the stride does not tile exactly.
struct WindowPlan {
  Dim3 volume;
  Dim3 window;
  Dim3 stride;
  std::vector<int> xs, ys, zs;

  std::int64_t count() const {
    return static_cast<std::int64_t>(xs.size()) * ys.size() * zs.size();
  }

  // corner of flat window index i, x fastest
  Dim3 corner(std::int64_t i) const {
    const std::int64_t nx = static_cast<std::int64_t>(xs.size());
    const std::int64_t ny = static_cast<std::int64_t>(ys.size());
    return {xs[i % nx], ys[(i / nx) % ny], zs[i / (nx * ny)]};
  }
};

namespace detail {

inline std::vector<int> axis_corners(int dim, int win, int stride) {
  std::vector<int> out;
  for (int c = 0; c + win <= dim; c += stride) out.push_back(c);
  if (out.empty() || out.back() != dim - win) out.push_back(dim - win);
  return out;
}

}  // namespace detail

inline WindowPlan plan_windows(Dim3 volume, Dim3 window, Dim3 stride) {
  check_dims_positive(volume);
  check_dims_positive(window);
  require(stride.x >= 1 && stride.y >= 1 && stride.z >= 1, "window stride must be >= 1");
  require(stride.x <= window.x && stride.y <= window.y && stride.z <= window.z,
          "stride must not exceed the window, or coverage breaks");
  require(window.x <= volume.x && window.y <= volume.y && window.z <= volume.z,
          "window ", window.x, "x", window.y, "x", window.z, " exceeds volume ",
          volume.x, "x", volume.y, "x", volume.z);
  WindowPlan plan;
  plan.volume = volume;
  plan.window = window;
  plan.stride = stride;
  plan.xs = detail::axis_corners(volume.x, window.x, stride.x);
  plan.ys = detail::axis_corners(volume.y, window.y, stride.y);
  plan.zs = detail::axis_corners(volume.z, window.z, stride.z);
  return plan;
}

// Copy the window at `corner` into a dense [1][1][wz][wy][wx] tensor.
template <typename T, typename S>
void cut_window(const Grid3<T>& vol, Dim3 corner, Dim3 window, Tensor<S>& out, int item = 0) {
  for (int z = 0; z < window.z; ++z)
    for (int y = 0; y < window.y; ++y) {
      const T* src = &vol.at(corner.x, corner.y + y, corner.z + z);
      S* dst = &out.at(item, 0, z, y, 0);
      for (int x = 0; x < window.x; ++x) dst[x] = static_cast<S>(src[x]);
    }
}

// Overlap-averaging accumulator: each voxel becomes the arithmetic mean of
// every window prediction covering it.
class WindowAccumulator {
 public:
  explicit WindowAccumulator(const WindowPlan& plan)
      : plan_(plan), sum_(plan.volume.voxels(), 0.0), count_(plan.volume.voxels(), 0) {}

  template <typename S>
  void add_window(std::int64_t index, const Tensor<S>& pred, int item = 0, int channel = 0) {
    require(pred.x == plan_.window.x && pred.y == plan_.window.y && pred.z == plan_.window.z,
            "window prediction shape mismatch");
    const Dim3 c = plan_.corner(index);
    for (int z = 0; z < plan_.window.z; ++z)
      for (int y = 0; y < plan_.window.y; ++y) {
        const S* src = &pred.at(item, channel, z, y, 0);
        const std::int64_t base =
            c.x + static_cast<std::int64_t>(plan_.volume.x) *
                      ((c.y + y) + static_cast<std::int64_t>(plan_.volume.y) * (c.z + z));
        for (int x = 0; x < plan_.window.x; ++x) {
          sum_[base + x] += static_cast<double>(src[x]);
          count_[base + x] += 1;
        }
      }
    ++added_;
  }

  std::int64_t added() const { return added_; }

  ProbabilityMap finalize(MapRole role = MapRole::ensemble, Spacing3 spacing = {}) const {
    require(added_ == plan_.count(), "recompose got ", added_, " windows, plan has ",
            plan_.count());
    ProbabilityMap out(plan_.volume, role, spacing);
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      require(count_[i] > 0, "coverage hole at voxel ", i);
      out.data[i] = static_cast<float>(sum_[i] / count_[i]);
    }
    return out;
  }

 private:
  WindowPlan plan_;
  std::vector<double> sum_;
  std::vector<std::int32_t> count_;
  std::int64_t added_ = 0;
};

// Recompose a full map from per-window predictions (one per plan window).
template <typename S>
ProbabilityMap recompose(const WindowPlan& plan, const std::vector<Tensor<S>>& windows,
                         MapRole role = MapRole::ensemble, Spacing3 spacing = {}) {
  require(static_cast<std::int64_t>(windows.size()) == plan.count(),
          "recompose needs ", plan.count(), " windows, got ", windows.size());
  WindowAccumulator acc(plan);
  for (std::int64_t i = 0; i < plan.count(); ++i) acc.add_window(i, windows[i]);
  return acc.finalize(role, spacing);
}

// Full-volume segmentation: run `model` on every window, average overlaps,
// threshold the recomposed probability map. `model` maps a [1][1][wz][wy][wx]
// input tensor to a same-shaped probability tensor (already the caller's
// choice of decoder output or ensemble).
template <typename Model>
std::pair<ProbabilityMap, LabelMask> segment_volume(Model&& model, const Volume& vol,
                                                    const WindowPlan& plan,
                                                    float threshold = 0.5f) {
  require(plan.volume == vol.dims, "window plan was built for a different volume shape");
  WindowAccumulator acc(plan);
  Tensor<float> input(1, 1, plan.window.z, plan.window.y, plan.window.x);
  for (std::int64_t i = 0; i < plan.count(); ++i) {
    cut_window(vol, plan.corner(i), plan.window, input);
    const Tensor<float> prob = model(input);
    acc.add_window(i, prob);
  }
  ProbabilityMap pmap = acc.finalize(MapRole::ensemble, vol.spacing);
  LabelMask mask = threshold_map(pmap, threshold);
  return {std::move(pmap), std::move(mask)};
}

}  // namespace mcseg
