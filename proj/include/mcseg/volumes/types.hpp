#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "mcseg/core/common.hpp"
#include "mcseg/core/grid.hpp"

namespace mcseg {

// 3D scalar intensity image, the network input.
struct Volume : Grid3<float> {
  Volume() = default;
  explicit Volume(Dim3 d, Spacing3 s = {}) : Grid3<float>(d, s) {}

  void validate() const {
    check_dims_positive(dims);
    check_spacing_positive(spacing);
    require(static_cast<std::int64_t>(data.size()) == dims.voxels(),
            "volume payload size ", data.size(), " does not match shape ", dims.voxels());
    for (float v : data)
      require(std::isfinite(v), "volume contains a non-finite voxel value");
  }
};

// Binary ground-truth mask paired with a Volume of identical shape.
struct LabelMask : Grid3<std::uint8_t> {
  LabelMask() = default;
  explicit LabelMask(Dim3 d, Spacing3 s = {}) : Grid3<std::uint8_t>(d, s) {}

  void validate() const {
    check_dims_positive(dims);
    check_spacing_positive(spacing);
    require(static_cast<std::int64_t>(data.size()) == dims.voxels(),
            "mask payload size ", data.size(), " does not match shape ", dims.voxels());
    for (auto v : data)
      require(v == 0 || v == 1, "label mask holds a value other than 0/1: ", int(v));
  }

  std::int64_t foreground_count() const {
    std::int64_t k = 0;
    for (auto v : data) k += v;
    return k;
  }
};

enum class MapRole { decoder_a, decoder_b, soft_pseudo_label, ensemble };

inline const char* map_role_name(MapRole r) {
  switch (r) {
    case MapRole::decoder_a: return "decoder_A";
    case MapRole::decoder_b: return "decoder_B";
    case MapRole::soft_pseudo_label: return "soft_pseudo_label";
    case MapRole::ensemble: return "ensemble";
  }
  return "?";
}

// Per-voxel foreground probability in [0, 1].
struct ProbabilityMap : Grid3<float> {
  MapRole role = MapRole::ensemble;

  ProbabilityMap() = default;
  explicit ProbabilityMap(Dim3 d, MapRole r = MapRole::ensemble, Spacing3 s = {})
      : Grid3<float>(d, s), role(r) {}

  void validate() const {
    check_dims_positive(dims);
    require(static_cast<std::int64_t>(data.size()) == dims.voxels(),
            "probability map payload size mismatch");
    for (float v : data)
      require(v >= 0.0f && v <= 1.0f, "probability value outside [0,1]: ", v);
  }
};

inline void check_pair_shapes(const Volume& v, const LabelMask& m) {
  require(v.dims == m.dims, "volume shape ", v.dims.x, "x", v.dims.y, "x", v.dims.z,
          " does not match mask shape ", m.dims.x, "x", m.dims.y, "x", m.dims.z);
}

// Binarize a probability map at the given threshold.
inline LabelMask threshold_map(const ProbabilityMap& p, float threshold) {
  LabelMask m(p.dims, p.spacing);
  for (std::size_t i = 0; i < p.data.size(); ++i)
    m.data[i] = p.data[i] > threshold ? 1 : 0;
  return m;
}

}  // namespace mcseg
