#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mcseg/core/rng.hpp"
#include "mcseg/volumes/types.hpp"

namespace mcseg {

// Seeded synthetic stand-in for a gated anatomy database: each sample is a
// randomly oriented ellipsoid with a few smaller lobes attached to its
// surface (thin branches and bumpy edges are exactly the regions that stay
// hard at low label counts). Intensity is the blurred mask plus noise.
struct SyntheticSpec {
  Dim3 shape = {64, 64, 64};
  int count = 40;
  int max_lobes = 3;  // k drawn uniformly from 1..max_lobes
  double blur_sigma = 1.5;
  double noise_sigma = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    check_dims_positive(shape);
    require(count >= 1, "synthetic spec needs count >= 1");
    require(max_lobes >= 1, "synthetic spec needs max_lobes >= 1");
    require(blur_sigma >= 0.0 && noise_sigma >= 0.0, "synthetic sigmas must be >= 0");
    const int min_dim = std::min({shape.x, shape.y, shape.z});
    require(min_dim * 0.18 >= 2.0, "volume too small: ellipsoid radius would fall below 2 voxels");
  }
};

namespace detail {

struct Ellipsoid {
  double cx, cy, cz;
  double rx, ry, rz;
  std::array<double, 9> rot;  // row-major rotation matrix

  bool contains(double x, double y, double z) const {
    const double dx = x - cx, dy = y - cy, dz = z - cz;
    // rotate into the ellipsoid frame (R^T * d)
    const double ex = rot[0] * dx + rot[3] * dy + rot[6] * dz;
    const double ey = rot[1] * dx + rot[4] * dy + rot[7] * dz;
    const double ez = rot[2] * dx + rot[5] * dy + rot[8] * dz;
    const double s = (ex / rx) * (ex / rx) + (ey / ry) * (ey / ry) + (ez / rz) * (ez / rz);
    return s <= 1.0;
  }
};

inline std::array<double, 9> random_rotation(Rng& rng) {
  // uniform quaternion -> rotation matrix
  double q[4];
  double norm = 0.0;
  for (int i = 0; i < 4; ++i) {
    q[i] = normal_sample(rng);
    norm += q[i] * q[i];
  }
  norm = std::sqrt(norm);
  for (double& v : q) v /= norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
          2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
}

inline void gaussian_blur_inplace(std::vector<float>& data, Dim3 dims, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    ksum += kernel[i + radius];
  }
  for (auto& k : kernel) k = static_cast<float>(k / ksum);

  std::vector<float> tmp(data.size());
  auto idx = [&](int x, int y, int z) {
    return x + static_cast<std::int64_t>(dims.x) * (y + static_cast<std::int64_t>(dims.y) * z);
  };
  // three separable passes with clamp-to-edge borders
  for (int z = 0; z < dims.z; ++z)
    for (int y = 0; y < dims.y; ++y)
      for (int x = 0; x < dims.x; ++x) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * data[idx(std::clamp(x + k, 0, dims.x - 1), y, z)];
        tmp[idx(x, y, z)] = acc;
      }
  for (int z = 0; z < dims.z; ++z)
    for (int y = 0; y < dims.y; ++y)
      for (int x = 0; x < dims.x; ++x) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * tmp[idx(x, std::clamp(y + k, 0, dims.y - 1), z)];
        data[idx(x, y, z)] = acc;
      }
  for (int z = 0; z < dims.z; ++z)
    for (int y = 0; y < dims.y; ++y)
      for (int x = 0; x < dims.x; ++x) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * data[idx(x, y, std::clamp(z + k, 0, dims.z - 1))];
        tmp[idx(x, y, z)] = acc;
      }
  data.swap(tmp);
}

}  // namespace detail

// Generate sample `index` of the spec. Deterministic in (spec.seed, index)
// alone, so samples can be produced in any order.
inline std::pair<Volume, LabelMask> generate_synthetic_sample(const SyntheticSpec& spec,
                                                              int index) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(index)));
  const Dim3 d = spec.shape;

  std::vector<detail::Ellipsoid> parts;
  detail::Ellipsoid main;
  main.cx = d.x * (0.5 + 0.1 * (uniform_unit(rng) * 2.0 - 1.0));
  main.cy = d.y * (0.5 + 0.1 * (uniform_unit(rng) * 2.0 - 1.0));
  main.cz = d.z * (0.5 + 0.1 * (uniform_unit(rng) * 2.0 - 1.0));
  main.rx = d.x * uniform_range(rng, 0.18, 0.30);
  main.ry = d.y * uniform_range(rng, 0.18, 0.30);
  main.rz = d.z * uniform_range(rng, 0.18, 0.30);
  main.rot = detail::random_rotation(rng);
  parts.push_back(main);

  const int lobes = static_cast<int>(uniform_int(rng, 1, spec.max_lobes));
  for (int l = 0; l < lobes; ++l) {
    // unit direction in the ellipsoid frame -> surface anchor in world space
    double ux = normal_sample(rng), uy = normal_sample(rng), uz = normal_sample(rng);
    const double un = std::sqrt(ux * ux + uy * uy + uz * uz) + 1e-12;
    ux /= un;
    uy /= un;
    uz /= un;
    const double lx = main.rx * ux, ly = main.ry * uy, lz = main.rz * uz;
    detail::Ellipsoid lobe;
    lobe.cx = main.cx + main.rot[0] * lx + main.rot[1] * ly + main.rot[2] * lz;
    lobe.cy = main.cy + main.rot[3] * lx + main.rot[4] * ly + main.rot[5] * lz;
    lobe.cz = main.cz + main.rot[6] * lx + main.rot[7] * ly + main.rot[8] * lz;
    lobe.rx = main.rx * uniform_range(rng, 0.25, 0.45);
    lobe.ry = main.ry * uniform_range(rng, 0.25, 0.45);
    lobe.rz = main.rz * uniform_range(rng, 0.25, 0.45);
    lobe.rot = detail::random_rotation(rng);
    parts.push_back(lobe);
  }

  LabelMask mask(d);
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x)
        for (const auto& e : parts)
          if (e.contains(x, y, z)) {
            mask.at(x, y, z) = 1;
            break;
          }

  const std::int64_t fg = mask.foreground_count();
  require(fg > 0, "synthetic sample ", index, " came out empty");
  require(fg < d.voxels(), "synthetic sample ", index, " filled the whole volume");

  Volume vol(d);
  for (std::int64_t i = 0; i < d.voxels(); ++i) vol.data[i] = static_cast<float>(mask.data[i]);
  detail::gaussian_blur_inplace(vol.data, d, spec.blur_sigma);
  if (spec.noise_sigma > 0.0)
    for (auto& v : vol.data)
      v += static_cast<float>(spec.noise_sigma * normal_sample(rng));
  return {std::move(vol), std::move(mask)};
}

inline std::vector<std::pair<Volume, LabelMask>> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::pair<Volume, LabelMask>> out;
  out.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) out.push_back(generate_synthetic_sample(spec, i));
  return out;
}

}  // namespace mcseg
