#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mcseg/core/common.hpp"
#include "mcseg/core/rng.hpp"
#include "mcseg/volumes/types.hpp"

namespace mcseg {

enum class UncertaintyMethod { mc_dropout, decoder_discrepancy };

inline const char* uncertainty_method_name(UncertaintyMethod m) {
  return m == UncertaintyMethod::mc_dropout ? "mc_dropout" : "decoder_discrepancy";
}

// Voxelwise nonnegative uncertainty. mc_dropout values lie in [0, ln 2]
// for the binary case; decoder_discrepancy values lie in [0, 1]. Held at
// double precision so entropy identities survive to ~1e-12.
struct UncertaintyMap : Grid3<double> {
  UncertaintyMethod method = UncertaintyMethod::decoder_discrepancy;
  int n_passes = 0;

  UncertaintyMap() = default;
  UncertaintyMap(Dim3 d, UncertaintyMethod m, Spacing3 s = {})
      : Grid3<double>(d, s), method(m) {}
};

// Binary predictive entropy of a mean foreground probability, with the
// 0*log(0) = 0 continuity convention. Natural logarithm, so the bound is ln 2.
inline double binary_entropy(double mu) {
  double u = 0.0;
  if (mu > 0.0) u -= mu * std::log(mu);
  if (mu < 1.0) u -= (1.0 - mu) * std::log(1.0 - mu);
  return u;
}

// Entropy of the voxelwise mean over a set of stochastic forward passes.
inline UncertaintyMap entropy_of_passes(const std::vector<ProbabilityMap>& passes) {
  require(passes.size() >= 2, "need at least 2 stochastic passes, got ", passes.size());
  const Dim3 dims = passes.front().dims;
  for (const auto& p : passes)
    require(p.dims == dims, "stochastic passes disagree on shape");
  UncertaintyMap u(dims, UncertaintyMethod::mc_dropout, passes.front().spacing);
  u.n_passes = static_cast<int>(passes.size());
  const double inv = 1.0 / static_cast<double>(passes.size());
  for (std::int64_t i = 0; i < dims.voxels(); ++i) {
    double mu = 0.0;
    for (const auto& p : passes) mu += p.data[i];
    u.data[i] = binary_entropy(mu * inv);
  }
  return u;
}

// Monte Carlo dropout uncertainty. `stochastic_pass` maps a per-pass seed to
// the model's full-volume probability output with dropout active; pass seeds
// derive deterministically from (seed, pass index).
template <typename PassFn>
UncertaintyMap mc_dropout_uncertainty(PassFn&& stochastic_pass, int n_passes,
                                      std::uint64_t seed) {
  require(n_passes >= 2, "mc_dropout_uncertainty needs n_passes >= 2, got ", n_passes);
  std::vector<ProbabilityMap> passes;
  passes.reserve(n_passes);
  for (int n = 0; n < n_passes; ++n)
    passes.push_back(stochastic_pass(mix_seed(seed, static_cast<std::uint64_t>(n))));
  return entropy_of_passes(passes);
}

// The cheap surrogate: voxelwise |P_A - P_B| of the two decoder outputs.
inline UncertaintyMap decoder_discrepancy(const ProbabilityMap& pa, const ProbabilityMap& pb) {
  require(pa.dims == pb.dims, "decoder outputs disagree on shape");
  UncertaintyMap u(pa.dims, UncertaintyMethod::decoder_discrepancy, pa.spacing);
  for (std::size_t i = 0; i < pa.data.size(); ++i)
    u.data[i] = std::fabs(static_cast<double>(pa.data[i]) - pb.data[i]);
  return u;
}

struct UncertaintySummary {
  double mean = 0.0;
  double max = 0.0;
  double fraction_above = 0.0;
  double threshold = 0.0;
};

inline UncertaintySummary summarize_uncertainty(const UncertaintyMap& u, double threshold) {
  UncertaintySummary s;
  s.threshold = threshold;
  if (u.data.empty()) return s;
  double sum = 0.0;
  std::int64_t above = 0;
  for (double v : u.data) {
    sum += v;
    s.max = std::max(s.max, v);
    if (v > threshold) ++above;
  }
  s.mean = sum / static_cast<double>(u.data.size());
  s.fraction_above = static_cast<double>(above) / static_cast<double>(u.data.size());
  return s;
}

}  // namespace mcseg
