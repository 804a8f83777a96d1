#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mcseg/core/common.hpp"
#include "mcseg/core/tensor.hpp"
#include "mcseg/volumes/types.hpp"

namespace mcseg {

struct SharpeningConfig {
  double temperature = 0.1;
};

// Gaussian warm-up of the consistency weight: lambda(0) = lambda_max*e^-5,
// rising to lambda_max at ramp_iterations and clamped there.
struct RampUpSchedule {
  double lambda_max = 0.1;
  std::int64_t ramp_iterations = 2000;
};

struct LossReport {
  double l_seg = 0.0;
  double l_c = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

enum class ConsistencyMode { none, spl, cpl };

inline const char* consistency_mode_name(ConsistencyMode m) {
  switch (m) {
    case ConsistencyMode::none: return "none";
    case ConsistencyMode::spl: return "sPL";
    case ConsistencyMode::cpl: return "CPL";
  }
  return "?";
}

inline ConsistencyMode consistency_mode_from_name(const std::string& s) {
  if (s == "none") return ConsistencyMode::none;
  if (s == "sPL" || s == "spl") return ConsistencyMode::spl;
  if (s == "CPL" || s == "cpl") return ConsistencyMode::cpl;
  fail("unknown consistency mode '", s, "' (expected none, sPL or CPL)");
}

// ---------------------------------------------------------------------------
// Sharpening: sPL = P^(1/T) / (P^(1/T) + (1-P)^(1/T)).
// Evaluated through the odds ratio so extreme temperatures underflow
// gracefully toward the exact fixed points {0, 1} instead of producing 0/0.

namespace detail {

template <typename S>
S pow_int(S base, int e) {
  S r = S(1);
  while (e > 0) {
    if (e & 1) r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

// ratio^(1/T); repeated squaring when 1/T is a small integer (T = 0.1 makes
// this the hot path of the consistency loss)
template <typename S>
S pow_sharpness(S ratio, S temperature) {
  const S a = S(1) / temperature;
  const int ai = static_cast<int>(a + S(0.5));
  if (ai >= 1 && ai <= 64 && std::fabs(a - static_cast<S>(ai)) <= a * S(1e-6))
    return pow_int(ratio, ai);
  return std::pow(ratio, a);
}

}  // namespace detail

template <typename S>
S sharpen_value(S p, S temperature) {
  if (p <= S(0)) return S(0);
  if (p >= S(1)) return S(1);
  if (p >= S(0.5)) {
    const S r = detail::pow_sharpness((S(1) - p) / p, temperature);
    return S(1) / (S(1) + r);
  }
  const S q = detail::pow_sharpness(p / (S(1) - p), temperature);
  return q / (q + S(1));
}

// d sharpen / dP = (1/T) * s(1-s) / (P(1-P)); 0 at the saturated endpoints.
template <typename S>
S sharpen_derivative(S p, S temperature) {
  if (p <= S(0) || p >= S(1)) return S(0);
  const S s = sharpen_value(p, temperature);
  const S num = s * (S(1) - s);
  if (num == S(0)) return S(0);
  return num / (temperature * p * (S(1) - p));
}

template <typename S>
Tensor<S> sharpen(const Tensor<S>& p, S temperature) {
  require(temperature > S(0), "sharpening temperature must be positive");
  Tensor<S> out(p.n, p.c, p.z, p.y, p.x);
  for (std::int64_t i = 0; i < p.numel(); ++i) out.v[i] = sharpen_value(p.v[i], temperature);
  return out;
}

// Volume-level variant: emits the soft pseudo label for a probability map.
inline ProbabilityMap sharpen(const ProbabilityMap& p, double temperature) {
  require(temperature > 0.0, "sharpening temperature must be positive");
  ProbabilityMap out(p.dims, MapRole::soft_pseudo_label, p.spacing);
  for (std::size_t i = 0; i < p.data.size(); ++i)
    out.data[i] = sharpen_value(p.data[i], static_cast<float>(temperature));
  return out;
}

// ---------------------------------------------------------------------------
// Soft Dice loss pooled over an entire stack: 1 - (2*sum(py)+eps)/(sum(p)+sum(y)+eps).

template <typename S>
double dice_loss(const Tensor<S>& p, const Tensor<S>& y, double eps, Tensor<S>* dp = nullptr) {
  check_same_shape(p, y, "dice_loss");
  double sum_py = 0.0, sum_p = 0.0, sum_y = 0.0;
  for (std::int64_t i = 0; i < p.numel(); ++i) {
    sum_py += static_cast<double>(p.v[i]) * y.v[i];
    sum_p += p.v[i];
    sum_y += y.v[i];
  }
  const double num = 2.0 * sum_py + eps;
  const double den = sum_p + sum_y + eps;
  if (dp) {
    // dL/dp_i = (num - 2*y_i*den) / den^2
    const double den2 = den * den;
    for (std::int64_t i = 0; i < p.numel(); ++i)
      dp->v[i] = static_cast<S>((num - 2.0 * static_cast<double>(y.v[i]) * den) / den2);
  }
  return 1.0 - num / den;
}

namespace detail {

template <typename S>
Tensor<S> gather_items(const Tensor<S>& t, const std::vector<int>& items) {
  Tensor<S> out(static_cast<int>(items.size()), t.c, t.z, t.y, t.x);
  const std::int64_t stride = t.numel() / t.n;
  for (std::size_t k = 0; k < items.size(); ++k)
    std::copy(t.v.begin() + items[k] * stride, t.v.begin() + (items[k] + 1) * stride,
              out.v.begin() + static_cast<std::int64_t>(k) * stride);
  return out;
}

}  // namespace detail

// Dice over the labeled batch items only; gradients scatter back to the
// full-stack layout when dp is given (zero on unlabeled items).
template <typename S>
double dice_loss_labeled(const Tensor<S>& p, const Tensor<S>& y,
                         const std::vector<std::uint8_t>& labeled, double eps,
                         Tensor<S>* dp = nullptr) {
  require(static_cast<int>(labeled.size()) == p.n, "labeled selector length mismatch");
  std::vector<int> items;
  for (int n = 0; n < p.n; ++n)
    if (labeled[n]) items.push_back(n);
  require(!items.empty(), "batch carries no labeled items");
  Tensor<S> ps = detail::gather_items(p, items);
  Tensor<S> ys = detail::gather_items(y, items);
  Tensor<S> dps;
  if (dp) dps = Tensor<S>(ps.n, ps.c, ps.z, ps.y, ps.x);
  const double loss = dice_loss(ps, ys, eps, dp ? &dps : nullptr);
  if (dp) {
    dp->fill(S(0));
    const std::int64_t stride = p.numel() / p.n;
    for (std::size_t k = 0; k < items.size(); ++k)
      std::copy(dps.v.begin() + static_cast<std::int64_t>(k) * stride,
                dps.v.begin() + static_cast<std::int64_t>(k + 1) * stride,
                dp->v.begin() + items[k] * stride);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Cycled pseudo-label consistency (Eq.-style cross supervision):
//   L_c = mean((P_A - sPL_B)^2) + mean((P_B - sPL_A)^2)
// The sharpened maps are supervision targets: no gradient flows through them,
// so dP_A sees only the first term and dP_B only the second.

template <typename S>
double consistency_loss_cpl(const Tensor<S>& pa, const Tensor<S>& pb, S temperature,
                            Tensor<S>* dpa = nullptr, Tensor<S>* dpb = nullptr) {
  check_same_shape(pa, pb, "consistency_loss");
  const std::int64_t n = pa.numel();
  const double inv = 1.0 / static_cast<double>(n);
  double term_a = 0.0, term_b = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const S spl_a = sharpen_value(pa.v[i], temperature);
    const S spl_b = sharpen_value(pb.v[i], temperature);
    const double da = static_cast<double>(pa.v[i]) - spl_b;
    const double db = static_cast<double>(pb.v[i]) - spl_a;
    term_a += da * da;
    term_b += db * db;
    if (dpa) dpa->v[i] = static_cast<S>(2.0 * da * inv);
    if (dpb) dpb->v[i] = static_cast<S>(2.0 * db * inv);
  }
  return (term_a + term_b) * inv;
}

// Ablation variant: symmetric MSE between the two sharpened maps with
// gradient flowing through both sharpening paths.
template <typename S>
double consistency_loss_spl(const Tensor<S>& pa, const Tensor<S>& pb, S temperature,
                            Tensor<S>* dpa = nullptr, Tensor<S>* dpb = nullptr) {
  check_same_shape(pa, pb, "consistency_loss");
  const std::int64_t n = pa.numel();
  const double inv = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const S spl_a = sharpen_value(pa.v[i], temperature);
    const S spl_b = sharpen_value(pb.v[i], temperature);
    const double d = static_cast<double>(spl_a) - spl_b;
    total += d * d;
    if (dpa) dpa->v[i] = static_cast<S>(2.0 * d * inv * sharpen_derivative(pa.v[i], temperature));
    if (dpb) dpb->v[i] = static_cast<S>(-2.0 * d * inv * sharpen_derivative(pb.v[i], temperature));
  }
  return total * inv;
}

// ---------------------------------------------------------------------------

inline double ramp_weight(std::int64_t t, const RampUpSchedule& sched) {
  require(t >= 0, "ramp_weight expects t >= 0");
  if (sched.ramp_iterations <= 0) return sched.lambda_max;
  const double phase =
      std::min<double>(static_cast<double>(t), static_cast<double>(sched.ramp_iterations)) /
      static_cast<double>(sched.ramp_iterations);
  return sched.lambda_max * std::exp(-5.0 * (1.0 - phase) * (1.0 - phase));
}

struct TotalLossConfig {
  SharpeningConfig sharpening;
  RampUpSchedule ramp;
  double dice_epsilon = 1e-5;
  ConsistencyMode mode = ConsistencyMode::cpl;
};

// Total training objective: L_seg (labeled Dice on both heads) plus the
// ramped consistency term over every batch item, labeled or not.
template <typename S>
LossReport total_loss(const Tensor<S>& pa, const Tensor<S>& pb, const Tensor<S>& y,
                      const std::vector<std::uint8_t>& labeled, std::int64_t t,
                      const TotalLossConfig& cfg,
                      Tensor<S>* dpa = nullptr, Tensor<S>* dpb = nullptr) {
  check_same_shape(pa, pb, "total_loss");
  LossReport rep;
  Tensor<S> dseg_a, dseg_b;
  if (dpa) {
    dseg_a = Tensor<S>(pa.n, pa.c, pa.z, pa.y, pa.x);
    dseg_b = Tensor<S>(pb.n, pb.c, pb.z, pb.y, pb.x);
  }
  rep.l_seg = dice_loss_labeled(pa, y, labeled, cfg.dice_epsilon, dpa ? &dseg_a : nullptr) +
              dice_loss_labeled(pb, y, labeled, cfg.dice_epsilon, dpa ? &dseg_b : nullptr);

  rep.lambda = cfg.mode == ConsistencyMode::none ? 0.0 : ramp_weight(t, cfg.ramp);
  Tensor<S> dc_a, dc_b;
  if (dpa && cfg.mode != ConsistencyMode::none) {
    dc_a = Tensor<S>(pa.n, pa.c, pa.z, pa.y, pa.x);
    dc_b = Tensor<S>(pb.n, pb.c, pb.z, pb.y, pb.x);
  }
  const S temp = static_cast<S>(cfg.sharpening.temperature);
  switch (cfg.mode) {
    case ConsistencyMode::none:
      // still reported for the log; carries no gradient and zero weight
      rep.l_c = consistency_loss_cpl<S>(pa, pb, temp, nullptr, nullptr);
      break;
    case ConsistencyMode::spl:
      rep.l_c = consistency_loss_spl(pa, pb, temp, dpa ? &dc_a : nullptr, dpa ? &dc_b : nullptr);
      break;
    case ConsistencyMode::cpl:
      rep.l_c = consistency_loss_cpl(pa, pb, temp, dpa ? &dc_a : nullptr, dpa ? &dc_b : nullptr);
      break;
  }
  rep.total = rep.l_seg + rep.lambda * rep.l_c;

  if (dpa) {
    const S lam = static_cast<S>(rep.lambda);
    for (std::int64_t i = 0; i < pa.numel(); ++i) {
      dpa->v[i] = dseg_a.v[i] + (dc_a.numel() ? lam * dc_a.v[i] : S(0));
      dpb->v[i] = dseg_b.v[i] + (dc_b.numel() ? lam * dc_b.v[i] : S(0));
    }
  }
  require(std::isfinite(rep.total), "non-finite training loss (l_seg=", rep.l_seg,
          ", l_c=", rep.l_c, ")");
  return rep;
}

}  // namespace mcseg
