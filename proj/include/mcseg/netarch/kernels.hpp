#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <type_traits>
#include <vector>

#include "mcseg/core/tensor.hpp"

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

// Low-level spatial kernels for the segmentation network. Activations are
// [n][c][z][y][x] with x contiguous; each function here works on one batch
// item. Every kernel has a scalar reference implementation usable at any
// precision; the float path is specialized with AVX-512 register-blocked
// loops where it pays off (the 3x3x3 convolutions carry ~95% of the flops).

namespace mcseg::nn {

constexpr double kNormEps = 1e-5;

// ---------------------------------------------------------------------------
// 3x3x3 convolution, stride 1, zero padding 1. w[co][ci][kz][ky][kx], b[co].

template <typename S>
void conv3_forward_ref(const S* in, S* out, const S* w, const S* b,
                       int cin, int cout, int X, int Y, int Z) {
  const std::int64_t plane = static_cast<std::int64_t>(X) * Y;
  const std::int64_t vol = plane * Z;
  for (int co = 0; co < cout; ++co) {
    S* o = out + co * vol;
    for (std::int64_t i = 0; i < vol; ++i) o[i] = b ? b[co] : S(0);
    for (int ci = 0; ci < cin; ++ci) {
      const S* x = in + ci * vol;
      const S* wk = w + (static_cast<std::int64_t>(co) * cin + ci) * 27;
      for (int kz = -1; kz <= 1; ++kz)
        for (int ky = -1; ky <= 1; ++ky)
          for (int kx = -1; kx <= 1; ++kx) {
            const S wv = wk[(kz + 1) * 9 + (ky + 1) * 3 + (kx + 1)];
            if (wv == S(0)) continue;
            for (int z = std::max(0, -kz); z < Z - std::max(0, kz); ++z)
              for (int y = std::max(0, -ky); y < Y - std::max(0, ky); ++y) {
                S* orow = o + z * plane + static_cast<std::int64_t>(y) * X;
                const S* irow = x + (z + kz) * plane + static_cast<std::int64_t>(y + ky) * X + kx;
                for (int px = std::max(0, -kx); px < X - std::max(0, kx); ++px)
                  orow[px] += wv * irow[px];
              }
          }
    }
  }
}

#if defined(__AVX512F__)

namespace detail {

// One output row tile: CO_TILE channels x 16 x-lanes held in registers
// across the full (ci, kz, ky, kx) reduction.
template <int CO_TILE>
inline void conv3_row_avx512(const float* __restrict in, float* __restrict out,
                             const float* __restrict w, const float* __restrict b,
                             int cin, int co0, int X, int Y, int Z,
                             std::int64_t vol, int z, int y) {
  const std::int64_t plane = static_cast<std::int64_t>(X) * Y;
  for (int xt = 0; xt < X; xt += 16) {
    const int rem = X - xt;
    const __mmask16 m = (rem >= 16) ? __mmask16(0xFFFF) : __mmask16((1u << rem) - 1);
    const __mmask16 ml = __mmask16(m & ((xt == 0) ? 0xFFFE : 0xFFFF));
    const __mmask16 mr = (rem > 16) ? __mmask16(0xFFFF) : __mmask16(m >> 1);
    __m512 acc[CO_TILE];
    for (int c = 0; c < CO_TILE; ++c)
      acc[c] = _mm512_set1_ps(b ? b[co0 + c] : 0.0f);
    for (int kz = -1; kz <= 1; ++kz) {
      const int zz = z + kz;
      if (zz < 0 || zz >= Z) continue;
      for (int ky = -1; ky <= 1; ++ky) {
        const int yy = y + ky;
        if (yy < 0 || yy >= Y) continue;
        for (int ci = 0; ci < cin; ++ci) {
          const float* irow = in + ci * vol + zz * plane + static_cast<std::int64_t>(yy) * X + xt;
          const __m512 vm = _mm512_maskz_loadu_ps(ml, irow - 1);
          const __m512 v0 = _mm512_maskz_loadu_ps(m, irow);
          const __m512 vp = _mm512_maskz_loadu_ps(mr, irow + 1);
          const float* wp =
              w + ((static_cast<std::int64_t>(co0) * cin + ci) * 9 + (kz + 1) * 3 + (ky + 1)) * 3;
          for (int c = 0; c < CO_TILE; ++c) {
            const float* wc = wp + static_cast<std::int64_t>(c) * cin * 27;
            acc[c] = _mm512_fmadd_ps(_mm512_set1_ps(wc[0]), vm, acc[c]);
            acc[c] = _mm512_fmadd_ps(_mm512_set1_ps(wc[1]), v0, acc[c]);
            acc[c] = _mm512_fmadd_ps(_mm512_set1_ps(wc[2]), vp, acc[c]);
          }
        }
      }
    }
    float* orow = out + co0 * vol + z * plane + static_cast<std::int64_t>(y) * X + xt;
    for (int c = 0; c < CO_TILE; ++c)
      _mm512_mask_storeu_ps(orow + c * vol, m, acc[c]);
  }
}

inline void conv3_forward_avx512(const float* in, float* out, const float* w, const float* b,
                                 int cin, int cout, int X, int Y, int Z) {
  const std::int64_t vol = static_cast<std::int64_t>(X) * Y * Z;
  int co = 0;
  for (; co + 8 <= cout; co += 8)
    for (int z = 0; z < Z; ++z)
      for (int y = 0; y < Y; ++y)
        conv3_row_avx512<8>(in, out, w, b, cin, co, X, Y, Z, vol, z, y);
  for (; co + 4 <= cout; co += 4)
    for (int z = 0; z < Z; ++z)
      for (int y = 0; y < Y; ++y)
        conv3_row_avx512<4>(in, out, w, b, cin, co, X, Y, Z, vol, z, y);
}

// Weight gradient. Loop (ci, kz, ky) outermost with a 4-wide tile of output
// channels: the three shifted input vectors are loaded once and feed 12 FMAs,
// keeping the kernel FMA-bound instead of load-bound.
template <int CO_TILE>
inline void conv3_bww_tile_avx512(const float* x, const float* dout, float* dw,
                                  int cin, int cout, int ci, int co0,
                                  int X, int Y, int Z) {
  const std::int64_t plane = static_cast<std::int64_t>(X) * Y;
  const std::int64_t vol = plane * Z;
  for (int kz = 0; kz < 3; ++kz) {
    for (int ky = 0; ky < 3; ++ky) {
      __m512 acc[CO_TILE][3];
      for (int c = 0; c < CO_TILE; ++c)
        for (int k = 0; k < 3; ++k) acc[c][k] = _mm512_setzero_ps();
      const int z0 = std::max(0, 1 - kz), z1 = std::min(Z, Z + 1 - kz);
      const int y0 = std::max(0, 1 - ky), y1 = std::min(Y, Y + 1 - ky);
      for (int z = z0; z < z1; ++z) {
        const std::int64_t zoff = z * plane;
        const std::int64_t xoff = (z + kz - 1) * plane;
        for (int y = y0; y < y1; ++y) {
          const float* xrow = x + xoff + static_cast<std::int64_t>(y + ky - 1) * X;
          const float* dyrow = dout + zoff + static_cast<std::int64_t>(y) * X;
          for (int xt = 0; xt < X; xt += 16) {
            const int rem = X - xt;
            const __mmask16 m = (rem >= 16) ? __mmask16(0xFFFF) : __mmask16((1u << rem) - 1);
            const __mmask16 ml = __mmask16(m & ((xt == 0) ? 0xFFFE : 0xFFFF));
            const __mmask16 mr = (rem > 16) ? __mmask16(0xFFFF) : __mmask16(m >> 1);
            const __m512 vm = _mm512_maskz_loadu_ps(ml, xrow + xt - 1);
            const __m512 v0 = _mm512_maskz_loadu_ps(m, xrow + xt);
            const __m512 vp = _mm512_maskz_loadu_ps(mr, xrow + xt + 1);
            for (int c = 0; c < CO_TILE; ++c) {
              const __m512 dyv = _mm512_maskz_loadu_ps(m, dyrow + (co0 + c) * vol + xt);
              acc[c][0] = _mm512_fmadd_ps(dyv, vm, acc[c][0]);
              acc[c][1] = _mm512_fmadd_ps(dyv, v0, acc[c][1]);
              acc[c][2] = _mm512_fmadd_ps(dyv, vp, acc[c][2]);
            }
          }
        }
      }
      for (int c = 0; c < CO_TILE; ++c) {
        float* dwk = dw + (static_cast<std::int64_t>(co0 + c) * cin + ci) * 27 + kz * 9 + ky * 3;
        for (int k = 0; k < 3; ++k) dwk[k] += _mm512_reduce_add_ps(acc[c][k]);
      }
    }
  }
}

inline void conv3_backward_weights_avx512(const float* in, const float* dout,
                                          float* dw, int cin, int cout,
                                          int X, int Y, int Z) {
  const std::int64_t vol = static_cast<std::int64_t>(X) * Y * Z;
  for (int ci = 0; ci < cin; ++ci) {
    const float* x = in + ci * vol;
    int co = 0;
    for (; co + 4 <= cout; co += 4)
      conv3_bww_tile_avx512<4>(x, dout, dw, cin, cout, ci, co, X, Y, Z);
    for (; co + 2 <= cout; co += 2)
      conv3_bww_tile_avx512<2>(x, dout, dw, cin, cout, ci, co, X, Y, Z);
    for (; co < cout; ++co)
      conv3_bww_tile_avx512<1>(x, dout, dw, cin, cout, ci, co, X, Y, Z);
  }
}

}  // namespace detail

#endif  // __AVX512F__

template <typename S>
void conv3_forward(const S* in, S* out, const S* w, const S* b,
                   int cin, int cout, int X, int Y, int Z) {
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<S, float>) {
    if (cout % 4 == 0) {
      detail::conv3_forward_avx512(in, out, w, b, cin, cout, X, Y, Z);
      return;
    }
  }
#endif
  conv3_forward_ref(in, out, w, b, cin, cout, X, Y, Z);
}

// dX via convolution of dY with the channel-swapped, axis-flipped kernel.
// wt must hold cin*cout*27 values; it is overwritten.
template <typename S>
void conv3_transpose_weights(const S* w, S* wt, int cin, int cout) {
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int k = 0; k < 27; ++k) {
        const int kz = k / 9, ky = (k / 3) % 3, kx = k % 3;
        const int kf = (2 - kz) * 9 + (2 - ky) * 3 + (2 - kx);
        wt[(static_cast<std::int64_t>(ci) * cout + co) * 27 + kf] =
            w[(static_cast<std::int64_t>(co) * cin + ci) * 27 + k];
      }
}

template <typename S>
void conv3_backward_data(const S* dout, S* din, const S* wt,
                         int cin, int cout, int X, int Y, int Z) {
  // roles swap: convolve cout input channels into cin outputs
  conv3_forward<S>(dout, din, wt, nullptr, cout, cin, X, Y, Z);
}

template <typename S>
void conv3_backward_weights_ref(const S* in, const S* dout, S* dw,
                                int cin, int cout, int X, int Y, int Z) {
  const std::int64_t plane = static_cast<std::int64_t>(X) * Y;
  const std::int64_t vol = plane * Z;
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci) {
      const S* dy = dout + co * vol;
      const S* x = in + ci * vol;
      S* dwk = dw + (static_cast<std::int64_t>(co) * cin + ci) * 27;
      for (int kz = -1; kz <= 1; ++kz)
        for (int ky = -1; ky <= 1; ++ky)
          for (int kx = -1; kx <= 1; ++kx) {
            S acc(0);
            for (int z = std::max(0, -kz); z < Z - std::max(0, kz); ++z)
              for (int y = std::max(0, -ky); y < Y - std::max(0, ky); ++y) {
                const S* dyrow = dy + z * plane + static_cast<std::int64_t>(y) * X;
                const S* irow = x + (z + kz) * plane + static_cast<std::int64_t>(y + ky) * X + kx;
                for (int px = std::max(0, -kx); px < X - std::max(0, kx); ++px)
                  acc += dyrow[px] * irow[px];
              }
            dwk[(kz + 1) * 9 + (ky + 1) * 3 + (kx + 1)] += acc;
          }
    }
}

template <typename S>
void conv3_backward_weights(const S* in, const S* dout, S* dw,
                            int cin, int cout, int X, int Y, int Z) {
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<S, float>) {
    detail::conv3_backward_weights_avx512(in, dout, dw, cin, cout, X, Y, Z);
    return;
  }
#endif
  conv3_backward_weights_ref(in, dout, dw, cin, cout, X, Y, Z);
}

template <typename S>
void bias_backward(const S* dout, S* db, int cout, std::int64_t vol) {
  for (int co = 0; co < cout; ++co) {
    double acc = 0.0;
    const S* dy = dout + co * vol;
    for (std::int64_t i = 0; i < vol; ++i) acc += static_cast<double>(dy[i]);
    db[co] += static_cast<S>(acc);
  }
}

// ---------------------------------------------------------------------------
// 1x1x1 convolution (classifier head). w[co][ci], b[co].

template <typename S>
void conv1_forward(const S* in, S* out, const S* w, const S* b,
                   int cin, int cout, std::int64_t vol) {
  for (int co = 0; co < cout; ++co) {
    S* o = out + co * vol;
    const S bias = b ? b[co] : S(0);
    for (std::int64_t i = 0; i < vol; ++i) o[i] = bias;
    for (int ci = 0; ci < cin; ++ci) {
      const S wv = w[static_cast<std::int64_t>(co) * cin + ci];
      const S* x = in + ci * vol;
      for (std::int64_t i = 0; i < vol; ++i) o[i] += wv * x[i];
    }
  }
}

template <typename S>
void conv1_backward(const S* in, const S* dout, const S* w,
                    S* din, S* dw, int cin, int cout, std::int64_t vol) {
  for (int ci = 0; ci < cin; ++ci) {
    S* dx = din + ci * vol;
    for (std::int64_t i = 0; i < vol; ++i) dx[i] = S(0);
  }
  for (int co = 0; co < cout; ++co) {
    const S* dy = dout + co * vol;
    for (int ci = 0; ci < cin; ++ci) {
      const S wv = w[static_cast<std::int64_t>(co) * cin + ci];
      const S* x = in + ci * vol;
      S* dx = din + ci * vol;
      double acc = 0.0;
      for (std::int64_t i = 0; i < vol; ++i) {
        dx[i] += wv * dy[i];
        acc += static_cast<double>(dy[i]) * x[i];
      }
      dw[static_cast<std::int64_t>(co) * cin + ci] += static_cast<S>(acc);
    }
  }
}

// ---------------------------------------------------------------------------
// 2x2x2 convolution, stride 2 (downsampling). w[co][ci][kz][ky][kx], b[co].
// Output dims are the input dims halved; input dims must be even.

template <typename S>
void downconv_forward(const S* in, S* out, const S* w, const S* b,
                      int cin, int cout, int X, int Y, int Z) {
  const int OX = X / 2, OY = Y / 2, OZ = Z / 2;
  const std::int64_t ivol = static_cast<std::int64_t>(X) * Y * Z;
  const std::int64_t ovol = static_cast<std::int64_t>(OX) * OY * OZ;
  for (int co = 0; co < cout; ++co) {
    S* o = out + co * ovol;
    for (std::int64_t i = 0; i < ovol; ++i) o[i] = b ? b[co] : S(0);
    for (int ci = 0; ci < cin; ++ci) {
      const S* x = in + ci * ivol;
      const S* wk = w + (static_cast<std::int64_t>(co) * cin + ci) * 8;
      for (int oz = 0; oz < OZ; ++oz)
        for (int oy = 0; oy < OY; ++oy)
          for (int ox = 0; ox < OX; ++ox) {
            S acc(0);
            for (int k = 0; k < 8; ++k) {
              const int kz = k >> 2, ky = (k >> 1) & 1, kx = k & 1;
              acc += wk[k] * x[(static_cast<std::int64_t>(2 * oz + kz) * Y + (2 * oy + ky)) * X +
                               (2 * ox + kx)];
            }
            o[(static_cast<std::int64_t>(oz) * OY + oy) * OX + ox] += acc;
          }
    }
  }
}

template <typename S>
void downconv_backward(const S* in, const S* dout, const S* w,
                       S* din, S* dw, int cin, int cout, int X, int Y, int Z) {
  const int OX = X / 2, OY = Y / 2, OZ = Z / 2;
  const std::int64_t ivol = static_cast<std::int64_t>(X) * Y * Z;
  const std::int64_t ovol = static_cast<std::int64_t>(OX) * OY * OZ;
  for (int ci = 0; ci < cin; ++ci) {
    S* dx = din + ci * ivol;
    for (std::int64_t i = 0; i < ivol; ++i) dx[i] = S(0);
  }
  for (int co = 0; co < cout; ++co) {
    const S* dy = dout + co * ovol;
    for (int ci = 0; ci < cin; ++ci) {
      const S* x = in + ci * ivol;
      S* dx = din + ci * ivol;
      const S* wk = w + (static_cast<std::int64_t>(co) * cin + ci) * 8;
      S* dwk = dw + (static_cast<std::int64_t>(co) * cin + ci) * 8;
      S wacc[8] = {S(0)};
      for (int oz = 0; oz < OZ; ++oz)
        for (int oy = 0; oy < OY; ++oy)
          for (int ox = 0; ox < OX; ++ox) {
            const S g = dy[(static_cast<std::int64_t>(oz) * OY + oy) * OX + ox];
            for (int k = 0; k < 8; ++k) {
              const int kz = k >> 2, ky = (k >> 1) & 1, kx = k & 1;
              const std::int64_t ii =
                  (static_cast<std::int64_t>(2 * oz + kz) * Y + (2 * oy + ky)) * X + (2 * ox + kx);
              dx[ii] += wk[k] * g;
              wacc[k] += x[ii] * g;
            }
          }
      for (int k = 0; k < 8; ++k) dwk[k] += wacc[k];
    }
  }
}

// ---------------------------------------------------------------------------
// 2x2x2 transposed convolution, stride 2 (learned upsampling).
// w[ci][co][kz][ky][kx], b[co]. Output dims are the input dims doubled.

template <typename S>
void deconv_forward(const S* in, S* out, const S* w, const S* b,
                    int cin, int cout, int X, int Y, int Z) {
  const int OX = 2 * X, OY = 2 * Y, OZ = 2 * Z;
  const std::int64_t ivol = static_cast<std::int64_t>(X) * Y * Z;
  const std::int64_t ovol = static_cast<std::int64_t>(OX) * OY * OZ;
  for (int co = 0; co < cout; ++co) {
    S* o = out + co * ovol;
    for (int oz = 0; oz < OZ; ++oz)
      for (int oy = 0; oy < OY; ++oy) {
        const int k0 = ((oz & 1) << 2) | ((oy & 1) << 1);
        S* orow = o + (static_cast<std::int64_t>(oz) * OY + oy) * OX;
        for (std::int64_t i = 0; i < OX; ++i) orow[i] = b ? b[co] : S(0);
        for (int ci = 0; ci < cin; ++ci) {
          const S* irow = in + ci * ivol + (static_cast<std::int64_t>(oz / 2) * Y + oy / 2) * X;
          const S* wk = w + (static_cast<std::int64_t>(ci) * cout + co) * 8 + k0;
          const S w0 = wk[0], w1 = wk[1];
          for (int xi = 0; xi < X; ++xi) {
            orow[2 * xi] += w0 * irow[xi];
            orow[2 * xi + 1] += w1 * irow[xi];
          }
        }
      }
  }
}

template <typename S>
void deconv_backward(const S* in, const S* dout, const S* w,
                     S* din, S* dw, int cin, int cout, int X, int Y, int Z) {
  const int OX = 2 * X, OY = 2 * Y, OZ = 2 * Z;
  const std::int64_t ivol = static_cast<std::int64_t>(X) * Y * Z;
  const std::int64_t ovol = static_cast<std::int64_t>(OX) * OY * OZ;
  for (int ci = 0; ci < cin; ++ci) {
    S* dx = din + ci * ivol;
    for (std::int64_t i = 0; i < ivol; ++i) dx[i] = S(0);
  }
  for (int ci = 0; ci < cin; ++ci) {
    const S* x = in + ci * ivol;
    S* dx = din + ci * ivol;
    for (int co = 0; co < cout; ++co) {
      const S* dy = dout + co * ovol;
      const S* wk = w + (static_cast<std::int64_t>(ci) * cout + co) * 8;
      S* dwk = dw + (static_cast<std::int64_t>(ci) * cout + co) * 8;
      S wacc[8] = {S(0)};
      for (int zi = 0; zi < Z; ++zi)
        for (int yi = 0; yi < Y; ++yi) {
          const S* xrow = x + (static_cast<std::int64_t>(zi) * Y + yi) * X;
          S* dxrow = dx + (static_cast<std::int64_t>(zi) * Y + yi) * X;
          for (int kz = 0; kz < 2; ++kz)
            for (int ky = 0; ky < 2; ++ky) {
              const S* dyrow =
                  dy + (static_cast<std::int64_t>(2 * zi + kz) * OY + (2 * yi + ky)) * OX;
              const int k0 = (kz << 2) | (ky << 1);
              const S w0 = wk[k0], w1 = wk[k0 + 1];
              S a0(0), a1(0);
              for (int xi = 0; xi < X; ++xi) {
                const S g0 = dyrow[2 * xi], g1 = dyrow[2 * xi + 1];
                dxrow[xi] += w0 * g0 + w1 * g1;
                a0 += xrow[xi] * g0;
                a1 += xrow[xi] * g1;
              }
              wacc[k0] += a0;
              wacc[k0 + 1] += a1;
            }
        }
      for (int k = 0; k < 8; ++k) dwk[k] += wacc[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Trilinear x2 upsampling (half-pixel centers, clamped borders). A constant
// field upsamples to the same constant; the backward pass is the exact
// transpose of the forward interpolation.

struct LinearTaps {
  std::vector<int> i0, i1;
  std::vector<float> w1;  // weight of i1; weight of i0 is 1 - w1
};

inline LinearTaps linear_taps_x2(int n_in) {
  LinearTaps t;
  const int n_out = 2 * n_in;
  t.i0.resize(n_out);
  t.i1.resize(n_out);
  t.w1.resize(n_out);
  for (int i = 0; i < n_out; ++i) {
    const double s = 0.5 * (i + 0.5) - 0.5;
    double f = std::floor(s);
    double frac = s - f;
    int lo = static_cast<int>(f);
    int hi = lo + 1;
    if (lo < 0) { lo = 0; }
    if (hi > n_in - 1) { hi = n_in - 1; }
    if (lo > n_in - 1) { lo = n_in - 1; }
    t.i0[i] = lo;
    t.i1[i] = hi;
    t.w1[i] = static_cast<float>(frac);
  }
  return t;
}

template <typename S>
void trilinear2x_forward(const S* in, S* out, int c, int X, int Y, int Z,
                         const LinearTaps& tx, const LinearTaps& ty, const LinearTaps& tz) {
  const int OX = 2 * X, OY = 2 * Y, OZ = 2 * Z;
  const std::int64_t ivol = static_cast<std::int64_t>(X) * Y * Z;
  const std::int64_t ovol = static_cast<std::int64_t>(OX) * OY * OZ;
  for (int ci = 0; ci < c; ++ci) {
    const S* x = in + ci * ivol;
    S* o = out + ci * ovol;
    for (int oz = 0; oz < OZ; ++oz) {
      const S wz1 = static_cast<S>(tz.w1[oz]), wz0 = S(1) - wz1;
      const std::int64_t z0 = tz.i0[oz], z1 = tz.i1[oz];
      for (int oy = 0; oy < OY; ++oy) {
        const S wy1 = static_cast<S>(ty.w1[oy]), wy0 = S(1) - wy1;
        const std::int64_t y0 = ty.i0[oy], y1 = ty.i1[oy];
        const S* r00 = x + (z0 * Y + y0) * X;
        const S* r01 = x + (z0 * Y + y1) * X;
        const S* r10 = x + (z1 * Y + y0) * X;
        const S* r11 = x + (z1 * Y + y1) * X;
        S* orow = o + (static_cast<std::int64_t>(oz) * OY + oy) * OX;
        for (int ox = 0; ox < OX; ++ox) {
          const S wx1 = static_cast<S>(tx.w1[ox]), wx0 = S(1) - wx1;
          const int x0 = tx.i0[ox], x1 = tx.i1[ox];
          const S v00 = wx0 * r00[x0] + wx1 * r00[x1];
          const S v01 = wx0 * r01[x0] + wx1 * r01[x1];
          const S v10 = wx0 * r10[x0] + wx1 * r10[x1];
          const S v11 = wx0 * r11[x0] + wx1 * r11[x1];
          orow[ox] = wz0 * (wy0 * v00 + wy1 * v01) + wz1 * (wy0 * v10 + wy1 * v11);
        }
      }
    }
  }
}

template <typename S>
void trilinear2x_backward(const S* dout, S* din, int c, int X, int Y, int Z,
                          const LinearTaps& tx, const LinearTaps& ty, const LinearTaps& tz) {
  const int OX = 2 * X, OY = 2 * Y, OZ = 2 * Z;
  const std::int64_t ivol = static_cast<std::int64_t>(X) * Y * Z;
  const std::int64_t ovol = static_cast<std::int64_t>(OX) * OY * OZ;
  for (int ci = 0; ci < c; ++ci) {
    const S* dy = dout + ci * ovol;
    S* dx = din + ci * ivol;
    for (std::int64_t i = 0; i < ivol; ++i) dx[i] = S(0);
    for (int oz = 0; oz < OZ; ++oz) {
      const S wz1 = static_cast<S>(tz.w1[oz]), wz0 = S(1) - wz1;
      const std::int64_t z0 = tz.i0[oz], z1 = tz.i1[oz];
      for (int oy = 0; oy < OY; ++oy) {
        const S wy1 = static_cast<S>(ty.w1[oy]), wy0 = S(1) - wy1;
        const std::int64_t y0 = ty.i0[oy], y1 = ty.i1[oy];
        S* r00 = dx + (z0 * Y + y0) * X;
        S* r01 = dx + (z0 * Y + y1) * X;
        S* r10 = dx + (z1 * Y + y0) * X;
        S* r11 = dx + (z1 * Y + y1) * X;
        const S* dyrow = dy + (static_cast<std::int64_t>(oz) * OY + oy) * OX;
        for (int ox = 0; ox < OX; ++ox) {
          const S wx1 = static_cast<S>(tx.w1[ox]), wx0 = S(1) - wx1;
          const int x0 = tx.i0[ox], x1 = tx.i1[ox];
          const S g = dyrow[ox];
          r00[x0] += wz0 * wy0 * wx0 * g;
          r00[x1] += wz0 * wy0 * wx1 * g;
          r01[x0] += wz0 * wy1 * wx0 * g;
          r01[x1] += wz0 * wy1 * wx1 * g;
          r10[x0] += wz1 * wy0 * wx0 * g;
          r10[x1] += wz1 * wy0 * wx1 * g;
          r11[x0] += wz1 * wy1 * wx0 * g;
          r11[x1] += wz1 * wy1 * wx1 * g;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Group normalization over (channels-per-group x spatial), per batch item.
// Statistics accumulate in double so results do not depend on vector width.

template <typename S>
void groupnorm_forward(const S* in, S* out, S* xhat, double* invstd_out,
                       const S* gamma, const S* beta,
                       int c, int groups, std::int64_t vol, double eps) {
  const int cper = c / groups;
  for (int g = 0; g < groups; ++g) {
    const std::int64_t len = static_cast<std::int64_t>(cper) * vol;
    const S* x = in + static_cast<std::int64_t>(g) * len;
    double sum = 0.0, sumsq = 0.0;
    for (std::int64_t i = 0; i < len; ++i) {
      const double xi = static_cast<double>(x[i]);
      sum += xi;
      sumsq += xi * xi;
    }
    const double mean = sum / static_cast<double>(len);
    const double var = std::max(0.0, sumsq / static_cast<double>(len) - mean * mean);
    const double invstd = 1.0 / std::sqrt(var + eps);
    invstd_out[g] = invstd;
    const S m = static_cast<S>(mean), is = static_cast<S>(invstd);
    for (int cc = 0; cc < cper; ++cc) {
      const int ch = g * cper + cc;
      const S ga = gamma[ch], be = beta[ch];
      const S* xc = in + static_cast<std::int64_t>(ch) * vol;
      S* xhc = xhat + static_cast<std::int64_t>(ch) * vol;
      S* o = out + static_cast<std::int64_t>(ch) * vol;
      for (std::int64_t i = 0; i < vol; ++i) {
        const S h = (xc[i] - m) * is;
        xhc[i] = h;
        o[i] = ga * h + be;
      }
    }
  }
}

template <typename S>
void groupnorm_backward(const S* dout, const S* xhat, const double* invstd,
                        const S* gamma, S* din, S* dgamma, S* dbeta,
                        int c, int groups, std::int64_t vol) {
  const int cper = c / groups;
  for (int g = 0; g < groups; ++g) {
    const std::int64_t len = static_cast<std::int64_t>(cper) * vol;
    double s1 = 0.0, s2 = 0.0;
    for (int cc = 0; cc < cper; ++cc) {
      const int ch = g * cper + cc;
      const S* dy = dout + static_cast<std::int64_t>(ch) * vol;
      const S* xh = xhat + static_cast<std::int64_t>(ch) * vol;
      double dg = 0.0, db = 0.0;
      for (std::int64_t i = 0; i < vol; ++i) {
        const double dyi = static_cast<double>(dy[i]);
        dg += dyi * xh[i];
        db += dyi;
      }
      dgamma[ch] += static_cast<S>(dg);
      dbeta[ch] += static_cast<S>(db);
      s1 += static_cast<double>(gamma[ch]) * db;
      s2 += static_cast<double>(gamma[ch]) * dg;
    }
    const double m1 = s1 / static_cast<double>(len);
    const double m2 = s2 / static_cast<double>(len);
    const S is = static_cast<S>(invstd[g]);
    const S m1s = static_cast<S>(m1), m2s = static_cast<S>(m2);
    for (int cc = 0; cc < cper; ++cc) {
      const int ch = g * cper + cc;
      const S ga = gamma[ch];
      const S* dy = dout + static_cast<std::int64_t>(ch) * vol;
      const S* xh = xhat + static_cast<std::int64_t>(ch) * vol;
      S* dx = din + static_cast<std::int64_t>(ch) * vol;
      for (std::int64_t i = 0; i < vol; ++i)
        dx[i] = is * (ga * dy[i] - m1s - xh[i] * m2s);
    }
  }
}

// ---------------------------------------------------------------------------
// Pointwise ops.

template <typename S>
void relu_forward(const S* in, S* out, std::int64_t len) {
  for (std::int64_t i = 0; i < len; ++i) out[i] = in[i] > S(0) ? in[i] : S(0);
}

template <typename S>
void relu_backward(const S* dout, const S* out, S* din, std::int64_t len) {
  for (std::int64_t i = 0; i < len; ++i) din[i] = out[i] > S(0) ? dout[i] : S(0);
}

template <typename S>
void sigmoid_forward(const S* in, S* out, std::int64_t len) {
  for (std::int64_t i = 0; i < len; ++i) out[i] = S(1) / (S(1) + std::exp(-in[i]));
}

template <typename S>
void sigmoid_backward(const S* dout, const S* out, S* din, std::int64_t len) {
  for (std::int64_t i = 0; i < len; ++i) din[i] = dout[i] * out[i] * (S(1) - out[i]);
}

}  // namespace mcseg::nn
