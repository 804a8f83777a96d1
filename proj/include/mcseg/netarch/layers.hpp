#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mcseg/core/rng.hpp"
#include "mcseg/core/tensor.hpp"
#include "mcseg/netarch/config.hpp"
#include "mcseg/netarch/kernels.hpp"

namespace mcseg::nn {

template <typename S>
void he_init(std::vector<S>& w, std::int64_t fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w) v = static_cast<S>(normal_sample(rng) * std);
}

// 3x3x3 conv + bias.
template <typename S>
struct Conv3Layer {
  int cin = 0, cout = 0;
  std::vector<S> w, b, gw, gb;
  Tensor<S> x_cache;

  void init(int cin_, int cout_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    w.assign(static_cast<std::size_t>(cin) * cout * 27, S(0));
    b.assign(cout, S(0));
    gw.assign(w.size(), S(0));
    gb.assign(b.size(), S(0));
    he_init(w, static_cast<std::int64_t>(cin) * 27, rng);
  }

  Tensor<S> forward(Tensor<S> x, bool train) {
    Tensor<S> out(x.n, cout, x.z, x.y, x.x);
    for (int n = 0; n < x.n; ++n)
      conv3_forward(x.chan(n, 0), out.chan(n, 0), w.data(), b.data(), cin, cout, x.x, x.y, x.z);
    if (train) x_cache = std::move(x);
    return out;
  }

  // need_dx=false skips the data gradient (the network input has no use
  // for one).
  Tensor<S> backward(const Tensor<S>& dy, bool need_dx = true) {
    const Tensor<S>& x = x_cache;
    Tensor<S> dx;
    std::vector<S> wt;
    if (need_dx) {
      dx = Tensor<S>(x.n, cin, x.z, x.y, x.x);
      wt.resize(w.size());
      conv3_transpose_weights(w.data(), wt.data(), cin, cout);
    }
    for (int n = 0; n < x.n; ++n) {
      if (need_dx)
        conv3_backward_data(dy.chan(n, 0), dx.chan(n, 0), wt.data(), cin, cout, x.x, x.y, x.z);
      conv3_backward_weights(x.chan(n, 0), dy.chan(n, 0), gw.data(), cin, cout, x.x, x.y, x.z);
      bias_backward(dy.chan(n, 0), gb.data(), cout, dy.spatial());
    }
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", w, gw);
    f(prefix + ".bias", b, gb);
  }
};

// 1x1x1 conv head.
template <typename S>
struct Conv1Layer {
  int cin = 0, cout = 0;
  std::vector<S> w, b, gw, gb;
  Tensor<S> x_cache;

  void init(int cin_, int cout_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    w.assign(static_cast<std::size_t>(cin) * cout, S(0));
    b.assign(cout, S(0));
    gw.assign(w.size(), S(0));
    gb.assign(b.size(), S(0));
    he_init(w, cin, rng);
  }

  Tensor<S> forward(Tensor<S> x, bool train) {
    Tensor<S> out(x.n, cout, x.z, x.y, x.x);
    for (int n = 0; n < x.n; ++n)
      conv1_forward(x.chan(n, 0), out.chan(n, 0), w.data(), b.data(), cin, cout, x.spatial());
    if (train) x_cache = std::move(x);
    return out;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const Tensor<S>& x = x_cache;
    Tensor<S> dx(x.n, cin, x.z, x.y, x.x);
    for (int n = 0; n < x.n; ++n) {
      conv1_backward(x.chan(n, 0), dy.chan(n, 0), w.data(), dx.chan(n, 0), gw.data(),
                     cin, cout, x.spatial());
      bias_backward(dy.chan(n, 0), gb.data(), cout, dy.spatial());
    }
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", w, gw);
    f(prefix + ".bias", b, gb);
  }
};

// 2x2x2 stride-2 conv.
template <typename S>
struct DownConvLayer {
  int cin = 0, cout = 0;
  std::vector<S> w, b, gw, gb;
  Tensor<S> x_cache;

  void init(int cin_, int cout_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    w.assign(static_cast<std::size_t>(cin) * cout * 8, S(0));
    b.assign(cout, S(0));
    gw.assign(w.size(), S(0));
    gb.assign(b.size(), S(0));
    he_init(w, static_cast<std::int64_t>(cin) * 8, rng);
  }

  Tensor<S> forward(Tensor<S> x, bool train) {
    require(x.x % 2 == 0 && x.y % 2 == 0 && x.z % 2 == 0, "downsampling needs even dims");
    Tensor<S> out(x.n, cout, x.z / 2, x.y / 2, x.x / 2);
    for (int n = 0; n < x.n; ++n)
      downconv_forward(x.chan(n, 0), out.chan(n, 0), w.data(), b.data(), cin, cout, x.x, x.y, x.z);
    if (train) x_cache = std::move(x);
    return out;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const Tensor<S>& x = x_cache;
    Tensor<S> dx(x.n, cin, x.z, x.y, x.x);
    for (int n = 0; n < x.n; ++n) {
      downconv_backward(x.chan(n, 0), dy.chan(n, 0), w.data(), dx.chan(n, 0), gw.data(),
                        cin, cout, x.x, x.y, x.z);
      bias_backward(dy.chan(n, 0), gb.data(), cout, dy.spatial());
    }
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", w, gw);
    f(prefix + ".bias", b, gb);
  }
};

// 2x2x2 stride-2 transposed conv.
template <typename S>
struct DeconvLayer {
  int cin = 0, cout = 0;
  std::vector<S> w, b, gw, gb;
  Tensor<S> x_cache;

  void init(int cin_, int cout_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    w.assign(static_cast<std::size_t>(cin) * cout * 8, S(0));
    b.assign(cout, S(0));
    gw.assign(w.size(), S(0));
    gb.assign(b.size(), S(0));
    he_init(w, static_cast<std::int64_t>(cin) * 8, rng);
  }

  Tensor<S> forward(Tensor<S> x, bool train) {
    Tensor<S> out(x.n, cout, x.z * 2, x.y * 2, x.x * 2);
    for (int n = 0; n < x.n; ++n)
      deconv_forward(x.chan(n, 0), out.chan(n, 0), w.data(), b.data(), cin, cout, x.x, x.y, x.z);
    if (train) x_cache = std::move(x);
    return out;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const Tensor<S>& x = x_cache;
    Tensor<S> dx(x.n, cin, x.z, x.y, x.x);
    for (int n = 0; n < x.n; ++n) {
      deconv_backward(x.chan(n, 0), dy.chan(n, 0), w.data(), dx.chan(n, 0), gw.data(),
                      cin, cout, x.x, x.y, x.z);
      bias_backward(dy.chan(n, 0), gb.data(), cout, dy.spatial());
    }
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", w, gw);
    f(prefix + ".bias", b, gb);
  }
};

// Parameter-free trilinear x2 upsampling.
template <typename S>
struct TrilinearUpLayer {
  LinearTaps tx, ty, tz;
  Dim3 in_dims;

  Tensor<S> forward(Tensor<S> x, bool train) {
    if (!(in_dims == x.dims())) {
      in_dims = x.dims();
      tx = linear_taps_x2(x.x);
      ty = linear_taps_x2(x.y);
      tz = linear_taps_x2(x.z);
    }
    Tensor<S> out(x.n, x.c, x.z * 2, x.y * 2, x.x * 2);
    for (int n = 0; n < x.n; ++n)
      trilinear2x_forward(x.chan(n, 0), out.chan(n, 0), x.c, x.x, x.y, x.z, tx, ty, tz);
    (void)train;
    return out;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dx(dy.n, dy.c, in_dims.z, in_dims.y, in_dims.x);
    for (int n = 0; n < dy.n; ++n)
      trilinear2x_backward(dy.chan(n, 0), dx.chan(n, 0), dy.c, in_dims.x, in_dims.y, in_dims.z,
                           tx, ty, tz);
    return dx;
  }
};

template <typename S>
struct GroupNormRelu {
  int channels = 0, groups = 1;
  std::vector<S> gamma, beta, ggamma, gbeta;
  Tensor<S> xhat;
  std::vector<double> invstd;

  void init(int channels_, int groups_) {
    channels = channels_;
    groups = groups_;
    gamma.assign(channels, S(1));
    beta.assign(channels, S(0));
    ggamma.assign(channels, S(0));
    gbeta.assign(channels, S(0));
  }

  // Normalizes in place and applies the activation; the relu mask is
  // recoverable in backward from the cached normalized values, so only xhat
  // is stored.
  Tensor<S> forward(Tensor<S> x, bool train) {
    const std::int64_t vol = x.spatial();
    const int cper = channels / groups;
    Tensor<S> xh;
    if (train) xh = Tensor<S>(x.n, x.c, x.z, x.y, x.x);
    invstd.assign(static_cast<std::size_t>(x.n) * groups, 0.0);
    for (int n = 0; n < x.n; ++n) {
      for (int g = 0; g < groups; ++g) {
        const std::int64_t len = static_cast<std::int64_t>(cper) * vol;
        S* slice = x.chan(n, g * cper);
        double sum = 0.0, sumsq = 0.0;
        for (std::int64_t i = 0; i < len; ++i) {
          const double xi = static_cast<double>(slice[i]);
          sum += xi;
          sumsq += xi * xi;
        }
        const double mean = sum / static_cast<double>(len);
        const double var = std::max(0.0, sumsq / static_cast<double>(len) - mean * mean);
        const double is = 1.0 / std::sqrt(var + nn::kNormEps);
        invstd[static_cast<std::size_t>(n) * groups + g] = is;
        const S ms = static_cast<S>(mean), iss = static_cast<S>(is);
        for (int cc = 0; cc < cper; ++cc) {
          const int ch = g * cper + cc;
          const S ga = gamma[ch], be = beta[ch];
          S* xc = x.chan(n, ch);
          if (train) {
            S* xhc = xh.chan(n, ch);
            for (std::int64_t i = 0; i < vol; ++i) {
              const S h = (xc[i] - ms) * iss;
              xhc[i] = h;
              const S o = ga * h + be;
              xc[i] = o > S(0) ? o : S(0);
            }
          } else {
            for (std::int64_t i = 0; i < vol; ++i) {
              const S o = ga * ((xc[i] - ms) * iss) + be;
              xc[i] = o > S(0) ? o : S(0);
            }
          }
        }
      }
    }
    if (train) xhat = std::move(xh);
    return x;
  }

  Tensor<S> backward(Tensor<S> dy) {
    const std::int64_t vol = dy.spatial();
    const int cper = channels / groups;
    for (int n = 0; n < dy.n; ++n) {
      for (int g = 0; g < groups; ++g) {
        const std::int64_t len = static_cast<std::int64_t>(cper) * vol;
        double s1 = 0.0, s2 = 0.0;
        for (int cc = 0; cc < cper; ++cc) {
          const int ch = g * cper + cc;
          const S ga = gamma[ch], be = beta[ch];
          S* dyc = dy.chan(n, ch);
          const S* xh = xhat.chan(n, ch);
          double dg = 0.0, db = 0.0;
          for (std::int64_t i = 0; i < vol; ++i) {
            const S pre = ga * xh[i] + be;
            const S d = pre > S(0) ? dyc[i] : S(0);
            dyc[i] = d;
            dg += static_cast<double>(d) * xh[i];
            db += static_cast<double>(d);
          }
          ggamma[ch] += static_cast<S>(dg);
          gbeta[ch] += static_cast<S>(db);
          s1 += static_cast<double>(ga) * db;
          s2 += static_cast<double>(ga) * dg;
        }
        const double m1 = s1 / static_cast<double>(len);
        const double m2 = s2 / static_cast<double>(len);
        const S is = static_cast<S>(invstd[static_cast<std::size_t>(n) * groups + g]);
        const S m1s = static_cast<S>(m1), m2s = static_cast<S>(m2);
        for (int cc = 0; cc < cper; ++cc) {
          const int ch = g * cper + cc;
          const S ga = gamma[ch];
          S* dyc = dy.chan(n, ch);
          const S* xh = xhat.chan(n, ch);
          for (std::int64_t i = 0; i < vol; ++i)
            dyc[i] = is * (ga * dyc[i] - m1s - xh[i] * m2s);
        }
      }
    }
    return dy;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma, ggamma);
    f(prefix + ".beta", beta, gbeta);
  }
};

template <typename S>
struct SigmoidLayer {
  Tensor<S> y_cache;

  Tensor<S> forward(Tensor<S> x, bool train) {
    sigmoid_forward(x.data(), x.data(), x.numel());
    if (train) y_cache = x;
    return x;
  }

  Tensor<S> backward(Tensor<S> dy) {
    sigmoid_backward(dy.data(), y_cache.data(), dy.data(), dy.numel());
    return dy;
  }
};

// conv3 -> groupnorm -> relu
template <typename S>
struct ConvBlock {
  Conv3Layer<S> conv;
  GroupNormRelu<S> norm;

  void init(int cin, int cout, int groups, Rng& rng) {
    conv.init(cin, cout, rng);
    norm.init(cout, groups);
  }

  Tensor<S> forward(Tensor<S> x, bool train) {
    return norm.forward(conv.forward(std::move(x), train), train);
  }
  Tensor<S> backward(Tensor<S> dy, bool need_dx = true) {
    return conv.backward(norm.backward(std::move(dy)), need_dx);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    conv.visit(prefix + ".conv", f);
    norm.visit(prefix + ".norm", f);
  }
};

// strided conv -> groupnorm -> relu
template <typename S>
struct DownBlock {
  DownConvLayer<S> conv;
  GroupNormRelu<S> norm;

  void init(int cin, int cout, int groups, Rng& rng) {
    conv.init(cin, cout, rng);
    norm.init(cout, groups);
  }

  Tensor<S> forward(Tensor<S> x, bool train) {
    return norm.forward(conv.forward(std::move(x), train), train);
  }
  Tensor<S> backward(Tensor<S> dy) {
    return conv.backward(norm.backward(std::move(dy)));
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    conv.visit(prefix + ".conv", f);
    norm.visit(prefix + ".norm", f);
  }
};

// Upsampling block. transposed_conv: learned 2x2x2 stride-2 deconv.
// trilinear: parameter-free x2 interpolation followed by a 3x3x3 mixing conv
// so both variants carry learned weights into the same normalization.
template <typename S>
struct UpBlock {
  DecoderKind kind = DecoderKind::transposed_conv;
  DeconvLayer<S> deconv;
  TrilinearUpLayer<S> interp;
  Conv3Layer<S> conv;
  GroupNormRelu<S> norm;

  void init(DecoderKind kind_, int cin, int cout, int groups, Rng& rng) {
    kind = kind_;
    if (kind == DecoderKind::transposed_conv)
      deconv.init(cin, cout, rng);
    else
      conv.init(cin, cout, rng);
    norm.init(cout, groups);
  }

  Tensor<S> forward(Tensor<S> x, bool train) {
    Tensor<S> up = (kind == DecoderKind::transposed_conv)
                       ? deconv.forward(std::move(x), train)
                       : conv.forward(interp.forward(std::move(x), train), train);
    return norm.forward(std::move(up), train);
  }

  Tensor<S> backward(Tensor<S> dy) {
    Tensor<S> g = norm.backward(std::move(dy));
    if (kind == DecoderKind::transposed_conv) return deconv.backward(g);
    return interp.backward(conv.backward(g));
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    if (kind == DecoderKind::transposed_conv)
      deconv.visit(prefix + ".deconv", f);
    else
      conv.visit(prefix + ".conv", f);
    norm.visit(prefix + ".norm", f);
  }
};

// Elementwise dropout with inverted scaling; used only for stochastic
// uncertainty passes, never inside the training step.
template <typename S>
void apply_dropout(Tensor<S>& t, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return;
  Rng rng(mix_seed(seed, 0x6d61736bull));
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  for (auto& v : t.v)
    v = (uniform_unit(rng) < rate) ? S(0) : v * scale;
}

}  // namespace mcseg::nn
