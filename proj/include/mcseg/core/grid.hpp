#pragma once

#include <cstdint>
#include <vector>

#include "mcseg/core/common.hpp"

namespace mcseg {

// Integer extents of a 3D grid, (x, y, z) with x the fastest-varying axis
// in memory: linear index = x + dx * (y + dy * z).
struct Dim3 {
  int x = 0, y = 0, z = 0;

  bool operator==(const Dim3&) const = default;

  std::int64_t voxels() const {
    return static_cast<std::int64_t>(x) * y * z;
  }
  int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
};

// Per-axis physical voxel size in mm.
struct Spacing3 {
  double x = 1.0, y = 1.0, z = 1.0;

  bool operator==(const Spacing3&) const = default;

  double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  bool is_unit() const { return x == 1.0 && y == 1.0 && z == 1.0; }
};

template <typename T>
struct Grid3 {
  Dim3 dims;
  Spacing3 spacing;
  std::vector<T> data;

  Grid3() = default;
  Grid3(Dim3 d, Spacing3 s = {}) : dims(d), spacing(s), data(d.voxels(), T{}) {}

  std::int64_t index(int x, int y, int z) const {
    return x + static_cast<std::int64_t>(dims.x) * (y + static_cast<std::int64_t>(dims.y) * z);
  }
  T& at(int x, int y, int z) { return data[index(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data[index(x, y, z)]; }

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims.x && y >= 0 && y < dims.y && z >= 0 && z < dims.z;
  }
};

inline void check_dims_positive(const Dim3& d) {
  require(d.x >= 1 && d.y >= 1 && d.z >= 1, "grid dimensions must all be >= 1, got ",
          d.x, "x", d.y, "x", d.z);
}

inline void check_spacing_positive(const Spacing3& s) {
  require(s.x > 0 && s.y > 0 && s.z > 0, "grid spacing must be positive, got ",
          s.x, " ", s.y, " ", s.z);
}

}  // namespace mcseg
