#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "mcseg/core/common.hpp"
#include "mcseg/volumes/types.hpp"

namespace mcseg {

struct MetricReport {
  double dice = 0.0;     // percent
  double jaccard = 0.0;  // percent
  double hd95 = 0.0;     // voxel units, or mm when spacing is applied
  double asd = 0.0;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Overlap metrics. Two empty masks count as perfect agreement (100/100).

inline std::pair<double, double> overlap_metrics(const LabelMask& pred, const LabelMask& gt) {
  require(pred.dims == gt.dims, "overlap_metrics: mask shapes differ");
  std::int64_t inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += pred.data[i] & gt.data[i];
    np += pred.data[i];
    ng += gt.data[i];
  }
  if (np + ng == 0) return {100.0, 100.0};
  const double dice = 200.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
  const std::int64_t uni = np + ng - inter;
  const double jaccard = uni == 0 ? 100.0 : 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
  return {dice, jaccard};
}

// ---------------------------------------------------------------------------
// Percentile with linear interpolation on the sorted sample.

inline double percentile(std::vector<double> values, double q) {
  require(!values.empty(), "percentile of an empty sample is undefined");
  require(q >= 0.0 && q <= 100.0, "percentile rank must lie in [0, 100], got ", q);
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

// ---------------------------------------------------------------------------
// Surface voxels: foreground voxels with at least one background 6-neighbor,
// where the volume border counts as background.

inline std::vector<Dim3> extract_surface(const LabelMask& m) {
  std::vector<Dim3> pts;
  for (int z = 0; z < m.dims.z; ++z)
    for (int y = 0; y < m.dims.y; ++y)
      for (int x = 0; x < m.dims.x; ++x) {
        if (!m.at(x, y, z)) continue;
        const bool boundary =
            x == 0 || x == m.dims.x - 1 || y == 0 || y == m.dims.y - 1 || z == 0 ||
            z == m.dims.z - 1 || !m.at(x - 1, y, z) || !m.at(x + 1, y, z) ||
            !m.at(x, y - 1, z) || !m.at(x, y + 1, z) || !m.at(x, y, z - 1) || !m.at(x, y, z + 1);
        if (boundary) pts.push_back({x, y, z});
      }
  return pts;
}

namespace detail {

// Felzenszwalb-Huttenlocher 1D squared distance transform over parabolas
// rooted at sample positions j*step. Rows untouched by any seed stay at
// infinity and are skipped when building the lower envelope.
inline void edt_1d(const double* f, double* out, int n, double step,
                   std::vector<int>& v, std::vector<double>& zb) {
  const double inf = std::numeric_limits<double>::infinity();
  v.resize(n);
  zb.resize(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    const double pq = step * q;
    double s = 0.0;
    while (k >= 0) {
      const int p = v[k];
      const double pp = step * p;
      s = ((f[q] + pq * pq) - (f[p] + pp * pp)) / (2.0 * (pq - pp));
      if (s <= zb[k]) {
        --k;
        continue;
      }
      break;
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      zb[0] = -inf;
      zb[1] = inf;
    } else {
      ++k;
      v[k] = q;
      zb[k] = s;
      zb[k + 1] = inf;
    }
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q] = inf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double pq = step * q;
    while (zb[j + 1] < pq) ++j;
    const double d = pq - step * v[j];
    out[q] = d * d + f[v[j]];
  }
}

// Exact anisotropic Euclidean squared distance to the nearest seed voxel.
inline std::vector<double> edt_squared(const std::vector<Dim3>& seeds, Dim3 dims,
                                       Spacing3 spacing) {
  const std::int64_t vox = dims.voxels();
  std::vector<double> d(vox, std::numeric_limits<double>::infinity());
  for (const auto& p : seeds)
    d[p.x + static_cast<std::int64_t>(dims.x) * (p.y + static_cast<std::int64_t>(dims.y) * p.z)] = 0.0;

  std::vector<int> v;
  std::vector<double> zb, f, g;
  const int nmax = std::max({dims.x, dims.y, dims.z});
  f.resize(nmax);
  g.resize(nmax);

  // x pass
  for (int z = 0; z < dims.z; ++z)
    for (int y = 0; y < dims.y; ++y) {
      double* row = d.data() + static_cast<std::int64_t>(dims.x) * (y + static_cast<std::int64_t>(dims.y) * z);
      edt_1d(row, g.data(), dims.x, spacing.x, v, zb);
      std::copy(g.begin(), g.begin() + dims.x, row);
    }
  // y pass
  for (int z = 0; z < dims.z; ++z)
    for (int x = 0; x < dims.x; ++x) {
      for (int y = 0; y < dims.y; ++y)
        f[y] = d[x + static_cast<std::int64_t>(dims.x) * (y + static_cast<std::int64_t>(dims.y) * z)];
      edt_1d(f.data(), g.data(), dims.y, spacing.y, v, zb);
      for (int y = 0; y < dims.y; ++y)
        d[x + static_cast<std::int64_t>(dims.x) * (y + static_cast<std::int64_t>(dims.y) * z)] = g[y];
    }
  // z pass
  for (int y = 0; y < dims.y; ++y)
    for (int x = 0; x < dims.x; ++x) {
      for (int z = 0; z < dims.z; ++z)
        f[z] = d[x + static_cast<std::int64_t>(dims.x) * (y + static_cast<std::int64_t>(dims.y) * z)];
      edt_1d(f.data(), g.data(), dims.z, spacing.z, v, zb);
      for (int z = 0; z < dims.z; ++z)
        d[x + static_cast<std::int64_t>(dims.x) * (y + static_cast<std::int64_t>(dims.y) * z)] = g[z];
    }
  return d;
}

}  // namespace detail

// Symmetric surface distances via exact Euclidean distance transforms:
// pooled distances from each pred-surface voxel to the gt surface and vice
// versa. hd95 is the 95th percentile of the pooled set, asd its mean.
inline std::pair<double, double> surface_distances(const LabelMask& pred, const LabelMask& gt,
                                                   Spacing3 spacing = {}) {
  require(pred.dims == gt.dims, "surface_distances: mask shapes differ");
  check_spacing_positive(spacing);
  const auto sp = extract_surface(pred);
  const auto sg = extract_surface(gt);
  if (sp.empty() || sg.empty())
    throw UndefinedMetricError(sp.empty() && sg.empty()
                                   ? "surface distance undefined: both masks empty"
                                   : (sp.empty() ? "surface distance undefined: empty prediction"
                                                 : "surface distance undefined: empty ground truth"));

  const auto d_to_gt = detail::edt_squared(sg, pred.dims, spacing);
  const auto d_to_pred = detail::edt_squared(sp, pred.dims, spacing);
  std::vector<double> pooled;
  pooled.reserve(sp.size() + sg.size());
  auto flat = [&](const Dim3& p) {
    return p.x + static_cast<std::int64_t>(pred.dims.x) *
                     (p.y + static_cast<std::int64_t>(pred.dims.y) * p.z);
  };
  for (const auto& p : sp) pooled.push_back(std::sqrt(d_to_gt[flat(p)]));
  for (const auto& p : sg) pooled.push_back(std::sqrt(d_to_pred[flat(p)]));

  // sorted reduction keeps hd95/asd exactly invariant under pred/gt swap
  std::sort(pooled.begin(), pooled.end());
  double sum = 0.0;
  for (double v : pooled) sum += v;
  const double asd = sum / static_cast<double>(pooled.size());
  return {percentile(pooled, 95.0), asd};
}

inline MetricReport evaluate_masks(const LabelMask& pred, const LabelMask& gt,
                                   Spacing3 spacing = {}) {
  MetricReport r;
  std::tie(r.dice, r.jaccard) = overlap_metrics(pred, gt);
  std::tie(r.hd95, r.asd) = surface_distances(pred, gt, spacing);
  return r;
}

}  // namespace mcseg
