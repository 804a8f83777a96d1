#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

#include "mcseg/core/common.hpp"
#include "mcseg/volumes/types.hpp"

namespace mcseg {

struct BoundingBox {
  Dim3 lo, hi;  // inclusive
};

inline BoundingBox foreground_bbox(const LabelMask& m) {
  BoundingBox bb{{m.dims.x, m.dims.y, m.dims.z}, {-1, -1, -1}};
  for (int z = 0; z < m.dims.z; ++z)
    for (int y = 0; y < m.dims.y; ++y)
      for (int x = 0; x < m.dims.x; ++x)
        if (m.at(x, y, z)) {
          bb.lo.x = std::min(bb.lo.x, x);
          bb.lo.y = std::min(bb.lo.y, y);
          bb.lo.z = std::min(bb.lo.z, z);
          bb.hi.x = std::max(bb.hi.x, x);
          bb.hi.y = std::max(bb.hi.y, y);
          bb.hi.z = std::max(bb.hi.z, z);
        }
  require(bb.hi.x >= 0, "cannot take the bounding box of an empty mask");
  return bb;
}

template <typename T>
Grid3<T> crop(const Grid3<T>& g, Dim3 lo, Dim3 hi) {
  Grid3<T> out({hi.x - lo.x + 1, hi.y - lo.y + 1, hi.z - lo.z + 1}, g.spacing);
  for (int z = 0; z < out.dims.z; ++z)
    for (int y = 0; y < out.dims.y; ++y) {
      const T* src = &g.at(lo.x, lo.y + y, lo.z + z);
      T* dst = &out.at(0, y, z);
      for (int x = 0; x < out.dims.x; ++x) dst[x] = src[x];
    }
  return out;
}

// Linear intensity transform to sample mean 0 / population variance 1.
// A (near-)constant volume maps to all zeros instead of dividing by ~0.
inline void normalize_intensity(Volume& v) {
  double sum = 0.0;
  for (float f : v.data) sum += f;
  const double mean = sum / static_cast<double>(v.data.size());
  double var = 0.0;
  for (float f : v.data) {
    const double d = f - mean;
    var += d * d;
  }
  var /= static_cast<double>(v.data.size());
  if (var < 1e-12) {
    for (auto& f : v.data) f = 0.0f;
    return;
  }
  const float m = static_cast<float>(mean);
  const float inv = static_cast<float>(1.0 / std::sqrt(var));
  for (auto& f : v.data) f = (f - m) * inv;
}

// Crop to the foreground bounding box enlarged by `margin` voxels per side
// (clamped to the volume), then normalize intensities.
inline std::pair<Volume, LabelMask> preprocess(const Volume& v, const LabelMask& m, int margin) {
  check_pair_shapes(v, m);
  require(margin >= 0, "crop margin must be >= 0");
  require(m.foreground_count() > 0, "preprocess requires a nonempty mask");
  BoundingBox bb = foreground_bbox(m);
  const Dim3 lo{std::max(0, bb.lo.x - margin), std::max(0, bb.lo.y - margin),
                std::max(0, bb.lo.z - margin)};
  const Dim3 hi{std::min(v.dims.x - 1, bb.hi.x + margin), std::min(v.dims.y - 1, bb.hi.y + margin),
                std::min(v.dims.z - 1, bb.hi.z + margin)};
  Volume cv;
  static_cast<Grid3<float>&>(cv) = crop(static_cast<const Grid3<float>&>(v), lo, hi);
  LabelMask cm;
  static_cast<Grid3<std::uint8_t>&>(cm) = crop(static_cast<const Grid3<std::uint8_t>&>(m), lo, hi);
  normalize_intensity(cv);
  return {std::move(cv), std::move(cm)};
}

// Mask-free variant for unlabeled volumes: central crop to the requested
// extent (clamped), then normalize.
inline Volume preprocess_unlabeled(const Volume& v, Dim3 extent) {
  check_dims_positive(extent);
  const Dim3 e{std::min(extent.x, v.dims.x), std::min(extent.y, v.dims.y),
               std::min(extent.z, v.dims.z)};
  const Dim3 lo{(v.dims.x - e.x) / 2, (v.dims.y - e.y) / 2, (v.dims.z - e.z) / 2};
  const Dim3 hi{lo.x + e.x - 1, lo.y + e.y - 1, lo.z + e.z - 1};
  Volume cv;
  static_cast<Grid3<float>&>(cv) = crop(static_cast<const Grid3<float>&>(v), lo, hi);
  normalize_intensity(cv);
  return cv;
}

}  // namespace mcseg
