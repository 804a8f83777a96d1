#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcseg/netarch/layers.hpp"

namespace mcseg {

// V-Net style encoder: two conv blocks per resolution level, strided-conv
// downsampling between levels. Level l features live at input dims / 2^l.
template <typename S>
struct Encoder {
  NetworkConfig cfg;
  nn::ConvBlock<S> stem0, stem1;
  struct Stage {
    nn::DownBlock<S> down;
    nn::ConvBlock<S> b0, b1;
  };
  std::vector<Stage> stages;
  std::vector<Tensor<S>> level_out;
  std::uint64_t forward_count = 0;

  void init(const NetworkConfig& cfg_, Rng& rng) {
    cfg = cfg_;
    stem0.init(cfg.input_channels, cfg.channels[0], cfg.groups_for(cfg.channels[0]), rng);
    stem1.init(cfg.channels[0], cfg.channels[0], cfg.groups_for(cfg.channels[0]), rng);
    stages.resize(cfg.levels - 1);
    for (int l = 1; l < cfg.levels; ++l) {
      auto& st = stages[l - 1];
      const int g = cfg.groups_for(cfg.channels[l]);
      st.down.init(cfg.channels[l - 1], cfg.channels[l], g, rng);
      st.b0.init(cfg.channels[l], cfg.channels[l], g, rng);
      st.b1.init(cfg.channels[l], cfg.channels[l], g, rng);
    }
  }

  // Returns per-level outputs; level cfg.levels-1 is the bottleneck.
  const std::vector<Tensor<S>>& forward(const Tensor<S>& x, bool train) {
    ++forward_count;
    level_out.assign(cfg.levels, Tensor<S>{});
    level_out[0] = stem1.forward(stem0.forward(x, train), train);
    for (int l = 1; l < cfg.levels; ++l) {
      auto& st = stages[l - 1];
      // level_out[l-1] stays alive as the skip input, so the down path copies
      level_out[l] =
          st.b1.forward(st.b0.forward(st.down.forward(level_out[l - 1], train), train), train);
    }
    return level_out;
  }

  // dlevel[l] holds the accumulated gradient at each level output.
  void backward(std::vector<Tensor<S>>& dlevel) {
    for (int l = cfg.levels - 1; l >= 1; --l) {
      auto& st = stages[l - 1];
      Tensor<S> g = st.down.backward(st.b0.backward(st.b1.backward(std::move(dlevel[l]))));
      for (std::int64_t i = 0; i < g.numel(); ++i) dlevel[l - 1].v[i] += g.v[i];
    }
    stem0.backward(stem1.backward(std::move(dlevel[0])), /*need_dx=*/false);
  }

  template <typename F>
  void visit(F&& f) {
    stem0.visit("encoder.level0.block0", f);
    stem1.visit("encoder.level0.block1", f);
    for (int l = 1; l < cfg.levels; ++l) {
      auto& st = stages[l - 1];
      const std::string p = "encoder.level" + std::to_string(l);
      st.down.visit(p + ".down", f);
      st.b0.visit(p + ".block0", f);
      st.b1.visit(p + ".block1", f);
    }
  }
};

// One decoder head: upsample, add the encoder skip, two conv blocks per
// level, then a 1x1x1 sigmoid classifier.
template <typename S>
struct Decoder {
  NetworkConfig cfg;
  DecoderKind kind = DecoderKind::transposed_conv;
  struct Stage {
    nn::UpBlock<S> up;
    nn::ConvBlock<S> b0, b1;
  };
  std::vector<Stage> stages;  // stage s handles level cfg.levels-2-s
  nn::Conv1Layer<S> head;
  nn::SigmoidLayer<S> out_act;

  void init(const NetworkConfig& cfg_, DecoderKind kind_, Rng& rng) {
    cfg = cfg_;
    kind = kind_;
    stages.resize(cfg.levels - 1);
    for (int s = 0; s < cfg.levels - 1; ++s) {
      const int l = cfg.levels - 2 - s;
      const int g = cfg.groups_for(cfg.channels[l]);
      auto& st = stages[s];
      st.up.init(kind, cfg.channels[l + 1], cfg.channels[l], g, rng);
      st.b0.init(cfg.channels[l], cfg.channels[l], g, rng);
      st.b1.init(cfg.channels[l], cfg.channels[l], g, rng);
    }
    head.init(cfg.channels[0], cfg.output_channels, rng);
  }

  Tensor<S> forward(const Tensor<S>& bottleneck, const std::vector<Tensor<S>>& skips, bool train) {
    Tensor<S> x = bottleneck;
    for (int s = 0; s < static_cast<int>(stages.size()); ++s) {
      const int l = cfg.levels - 2 - s;
      auto& st = stages[s];
      Tensor<S> up = st.up.forward(std::move(x), train);
      check_same_shape(up, skips[l], "decoder skip add");
      for (std::int64_t i = 0; i < up.numel(); ++i) up.v[i] += skips[l].v[i];
      x = st.b1.forward(st.b0.forward(std::move(up), train), train);
    }
    return out_act.forward(head.forward(std::move(x), train), train);
  }

  // Returns the bottleneck gradient and accumulates skip gradients.
  Tensor<S> backward(Tensor<S> dprob, std::vector<Tensor<S>>& dskips) {
    Tensor<S> g = head.backward(out_act.backward(std::move(dprob)));
    for (int s = static_cast<int>(stages.size()) - 1; s >= 0; --s) {
      const int l = cfg.levels - 2 - s;
      auto& st = stages[s];
      g = st.b0.backward(st.b1.backward(std::move(g)));
      Tensor<S> gup = st.up.backward(g);
      if (dskips[l].numel() == 0) {
        dskips[l] = std::move(g);
      } else {
        for (std::int64_t i = 0; i < g.numel(); ++i) dskips[l].v[i] += g.v[i];
      }
      g = std::move(gup);
    }
    return g;
  }

  template <typename F>
  void visit(const std::string& name, F&& f) {
    for (int s = 0; s < static_cast<int>(stages.size()); ++s) {
      const int l = cfg.levels - 2 - s;
      const std::string p = name + ".level" + std::to_string(l);
      auto& st = stages[s];
      st.up.visit(p + ".up", f);
      st.b0.visit(p + ".block0", f);
      st.b1.visit(p + ".block1", f);
    }
    head.visit(name + ".head", f);
  }
};

// Shared-encoder dual-decoder segmentation network. Decoder A upsamples with
// transposed convolutions; decoder B's kind is configurable so the two heads
// can be made architecturally identical or slightly different. The output
// discrepancy of the two heads serves as a cheap epistemic-uncertainty proxy.
template <typename S>
class DualDecoderNet {
 public:
  struct Output {
    Tensor<S> pa, pb;
  };

  DualDecoderNet() = default;

  DualDecoderNet(const NetworkConfig& cfg, DecoderKind decoder_b, std::uint64_t seed) {
    cfg.validate();
    cfg_ = cfg;
    decoder_b_ = decoder_b;
    Rng rng(mix_seed(seed, 0x1417ull));
    encoder_.init(cfg, rng);
    dec_a_.init(cfg, DecoderKind::transposed_conv, rng);
    dec_b_.init(cfg, decoder_b, rng);
  }

  const NetworkConfig& config() const { return cfg_; }
  DecoderKind decoder_b_kind() const { return decoder_b_; }

  Output forward(const Tensor<S>& batch, bool train = false) {
    check_input(batch);
    const auto& levels = encoder_.forward(batch, train);
    Output out;
    out.pa = dec_a_.forward(levels[cfg_.levels - 1], levels, train);
    out.pb = dec_b_.forward(levels[cfg_.levels - 1], levels, train);
    return out;
  }

  // Stochastic pass for uncertainty estimation: dropout at the encoder
  // bottleneck only, same mask for both decoders, never used for training.
  Output forward_with_dropout(const Tensor<S>& batch, std::uint64_t seed) {
    check_input(batch);
    const auto& levels = encoder_.forward(batch, false);
    Tensor<S> bottleneck = levels[cfg_.levels - 1];
    nn::apply_dropout(bottleneck, cfg_.dropout_rate, seed);
    Output out;
    out.pa = dec_a_.forward(bottleneck, levels, false);
    out.pb = dec_b_.forward(bottleneck, levels, false);
    return out;
  }

  // Expects a prior forward(batch, train=true); accumulates parameter grads.
  void backward(Tensor<S> dpa, Tensor<S> dpb) {
    std::vector<Tensor<S>> dskips(cfg_.levels);
    Tensor<S> dbot_a = dec_a_.backward(std::move(dpa), dskips);
    Tensor<S> dbot_b = dec_b_.backward(std::move(dpb), dskips);
    for (std::int64_t i = 0; i < dbot_a.numel(); ++i) dbot_a.v[i] += dbot_b.v[i];
    if (dskips[cfg_.levels - 1].numel() == 0)
      dskips[cfg_.levels - 1] = std::move(dbot_a);
    else
      for (std::int64_t i = 0; i < dbot_a.numel(); ++i)
        dskips[cfg_.levels - 1].v[i] += dbot_a.v[i];
    encoder_.backward(dskips);
  }

  void zero_grad() {
    visit_params([](const std::string&, std::vector<S>&, std::vector<S>& g) {
      std::fill(g.begin(), g.end(), S(0));
    });
  }

  template <typename F>
  void visit_params(F&& f) {
    encoder_.visit(f);
    dec_a_.visit("decoderA", f);
    dec_b_.visit("decoderB", f);
  }

  std::int64_t parameter_count() {
    std::int64_t total = 0;
    visit_params([&](const std::string&, std::vector<S>& w, std::vector<S>&) {
      total += static_cast<std::int64_t>(w.size());
    });
    return total;
  }

  std::uint64_t encoder_forward_count() const { return encoder_.forward_count; }

 private:
  void check_input(const Tensor<S>& batch) const {
    require(batch.c == cfg_.input_channels, "batch has ", batch.c, " channels, expected ",
            cfg_.input_channels);
    cfg_.check_input_dims(batch.dims());
  }

  NetworkConfig cfg_;
  DecoderKind decoder_b_ = DecoderKind::trilinear;
  Encoder<S> encoder_;
  Decoder<S> dec_a_, dec_b_;
};

}  // namespace mcseg
