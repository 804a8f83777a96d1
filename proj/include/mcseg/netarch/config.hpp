#pragma once

#include <string>
#include <vector>

#include "mcseg/core/common.hpp"
#include "mcseg/core/grid.hpp"

namespace mcseg {

enum class DecoderKind { transposed_conv, trilinear };

inline const char* decoder_kind_name(DecoderKind k) {
  return k == DecoderKind::transposed_conv ? "transposed_conv" : "trilinear";
}

inline DecoderKind decoder_kind_from_name(const std::string& s) {
  if (s == "transposed_conv") return DecoderKind::transposed_conv;
  if (s == "trilinear") return DecoderKind::trilinear;
  fail("unknown decoder kind '", s, "' (expected transposed_conv or trilinear)");
}

struct NetworkConfig {
  int levels = 5;
  std::vector<int> channels = {16, 32, 64, 128, 256};
  int input_channels = 1;
  int output_channels = 1;
  double dropout_rate = 0.5;
  int norm_groups = 4;

  int spatial_divisor() const { return 1 << (levels - 1); }

  void validate() const {
    require(levels >= 2, "network needs at least 2 levels, got ", levels);
    require(static_cast<int>(channels.size()) == levels, "channel schedule has ",
            channels.size(), " entries for ", levels, " levels");
    for (int l = 0; l < levels; ++l) {
      require(channels[l] >= 1, "channel count must be positive");
      if (l > 0)
        require(channels[l] > channels[l - 1], "channels must strictly increase with depth");
    }
    require(input_channels == 1, "only single-channel input volumes are supported");
    require(output_channels == 1, "binary sigmoid head expects one output channel");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must lie in [0,1)");
    require(norm_groups >= 1, "norm_groups must be >= 1");
    for (int l = 0; l < levels; ++l) {
      const int g = std::min(norm_groups, channels[l]);
      require(channels[l] % g == 0, "channels[", l, "]=", channels[l],
              " not divisible by norm group count ", g);
    }
  }

  int groups_for(int ch) const { return std::min(norm_groups, ch); }

  void check_input_dims(const Dim3& d) const {
    const int div = spatial_divisor();
    require(d.x % div == 0 && d.y % div == 0 && d.z % div == 0,
            "input patch ", d.x, "x", d.y, "x", d.z,
            " not divisible by 2^(levels-1) = ", div);
  }
};

}  // namespace mcseg
