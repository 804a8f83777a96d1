#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mcseg/inference/sliding_window.hpp"
#include "test_util.hpp"

using namespace mcseg;

TEST_CASE("window planning on enumerated cases") {
  SECTION("window equal to volume: single corner") {
    const WindowPlan p = plan_windows({112, 112, 80}, {112, 112, 80}, {18, 18, 4});
    REQUIRE(p.count() == 1);
    REQUIRE(p.corner(0) == Dim3{0, 0, 0});
  }

  SECTION("corners enumerate stride positions plus the end-aligned window") {
    const WindowPlan p = plan_windows({130, 112, 84}, {112, 112, 80}, {18, 18, 4});
    REQUIRE(p.xs == std::vector<int>{0, 18});
    REQUIRE(p.ys == std::vector<int>{0});
    REQUIRE(p.zs == std::vector<int>{0, 4});
    REQUIRE(p.count() == 4);
  }

  SECTION("end alignment clamps the final corner") {
    const WindowPlan p = plan_windows({115, 112, 80}, {112, 112, 80}, {18, 18, 4});
    REQUIRE(p.xs == std::vector<int>{0, 3});
  }

  SECTION("window larger than volume is an error") {
    REQUIRE_THROWS_AS(plan_windows({64, 64, 64}, {112, 112, 80}, {18, 18, 4}), Error);
  }

  SECTION("stride beyond the window is an error") {
    REQUIRE_THROWS_WITH(plan_windows({64, 64, 64}, {16, 16, 16}, {18, 4, 4}),
                        Catch::Matchers::ContainsSubstring("coverage"));
  }
}

TEST_CASE("coverage invariant holds exhaustively on randomized shapes") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const Dim3 vol{static_cast<int>(uniform_int(rng, 4, 40)),
                   static_cast<int>(uniform_int(rng, 4, 40)),
                   static_cast<int>(uniform_int(rng, 4, 40))};
    const Dim3 win{static_cast<int>(uniform_int(rng, 1, vol.x)),
                   static_cast<int>(uniform_int(rng, 1, vol.y)),
                   static_cast<int>(uniform_int(rng, 1, vol.z))};
    const Dim3 stride{static_cast<int>(uniform_int(rng, 1, win.x)),
                      static_cast<int>(uniform_int(rng, 1, win.y)),
                      static_cast<int>(uniform_int(rng, 1, win.z))};
    const WindowPlan plan = plan_windows(vol, win, stride);
    Grid3<std::uint8_t> covered(vol);
    for (std::int64_t i = 0; i < plan.count(); ++i) {
      const Dim3 c = plan.corner(i);
      for (int z = 0; z < win.z; ++z)
        for (int y = 0; y < win.y; ++y)
          for (int x = 0; x < win.x; ++x) covered.at(c.x + x, c.y + y, c.z + z) = 1;
    }
    for (auto v : covered.data) REQUIRE(v == 1);

    for (std::size_t i = 1; i < plan.xs.size(); ++i) REQUIRE(plan.xs[i] > plan.xs[i - 1]);
    for (std::size_t i = 1; i < plan.ys.size(); ++i) REQUIRE(plan.ys[i] > plan.ys[i - 1]);
    for (std::size_t i = 1; i < plan.zs.size(); ++i) REQUIRE(plan.zs[i] > plan.zs[i - 1]);
  }
}

TEST_CASE("recompose averages overlapping windows") {
  SECTION("constant windows recompose to the constant") {
    const WindowPlan plan = plan_windows({10, 8, 6}, {4, 4, 4}, {3, 3, 3});
    std::vector<Tensor<float>> windows;
    for (std::int64_t i = 0; i < plan.count(); ++i) {
      Tensor<float> w(1, 1, 4, 4, 4);
      w.fill(0.37f);
      windows.push_back(w);
    }
    const ProbabilityMap out = recompose(plan, windows);
    for (float v : out.data) REQUIRE(v == Catch::Approx(0.37f).margin(1e-7));
  }

  SECTION("two overlapping windows of 0 and 1 average to 0.5 in the overlap") {
    const WindowPlan plan = plan_windows({6, 4, 4}, {4, 4, 4}, {2, 4, 4});
    REQUIRE(plan.count() == 2);
    std::vector<Tensor<float>> windows(2, Tensor<float>(1, 1, 4, 4, 4));
    windows[0].fill(0.0f);
    windows[1].fill(1.0f);
    const ProbabilityMap out = recompose(plan, windows);
    for (int x = 0; x < 6; ++x) {
      const float v = out.at(x, 1, 1);
      if (x < 2) REQUIRE(v == 0.0f);
      else if (x < 4) REQUIRE(v == 0.5f);
      else REQUIRE(v == 1.0f);
    }
  }

  SECTION("window count mismatch is an error") {
    const WindowPlan plan = plan_windows({6, 4, 4}, {4, 4, 4}, {2, 4, 4});
    std::vector<Tensor<float>> windows(1, Tensor<float>(1, 1, 4, 4, 4));
    REQUIRE_THROWS_AS(recompose(plan, windows), Error);
  }
}

TEST_CASE("cut-then-recompose reproduces arbitrary maps") {
  Rng rng(4);
  for (int rep = 0; rep < 25; ++rep) {
    const Dim3 vol{static_cast<int>(uniform_int(rng, 6, 24)),
                   static_cast<int>(uniform_int(rng, 6, 24)),
                   static_cast<int>(uniform_int(rng, 6, 24))};
    const Dim3 win{static_cast<int>(uniform_int(rng, 2, vol.x)),
                   static_cast<int>(uniform_int(rng, 2, vol.y)),
                   static_cast<int>(uniform_int(rng, 2, vol.z))};
    const Dim3 stride{static_cast<int>(uniform_int(rng, 1, std::min(6, win.x))),
                      static_cast<int>(uniform_int(rng, 1, std::min(6, win.y))),
                      static_cast<int>(uniform_int(rng, 1, std::min(6, win.z)))};
    ProbabilityMap source(vol);
    for (auto& v : source.data) v = static_cast<float>(uniform_unit(rng));

    const WindowPlan plan = plan_windows(vol, win, stride);
    std::vector<Tensor<float>> windows;
    for (std::int64_t i = 0; i < plan.count(); ++i) {
      Tensor<float> w(1, 1, win.z, win.y, win.x);
      cut_window(source, plan.corner(i), win, w);
      windows.push_back(std::move(w));
    }
    const ProbabilityMap out = recompose(plan, windows);
    double max_err = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      max_err = std::max<double>(max_err, std::fabs(out.data[i] - source.data[i]));
    INFO("vol=" << vol.x << "x" << vol.y << "x" << vol.z);
    REQUIRE(max_err < 1e-6);
  }
}

TEST_CASE("recompose is linear in the window predictions") {
  Rng rng(5);
  const Dim3 vol{9, 7, 5};
  const Dim3 win{4, 3, 2};
  const Dim3 stride{2, 2, 2};
  const WindowPlan plan = plan_windows(vol, win, stride);
  std::vector<Tensor<float>> wa, wb, wc;
  const float alpha = 0.3f, beta = 0.45f;
  for (std::int64_t i = 0; i < plan.count(); ++i) {
    Tensor<float> a(1, 1, win.z, win.y, win.x), b(1, 1, win.z, win.y, win.x),
        c(1, 1, win.z, win.y, win.x);
    for (std::int64_t j = 0; j < a.numel(); ++j) {
      a.v[j] = static_cast<float>(uniform_unit(rng));
      b.v[j] = static_cast<float>(uniform_unit(rng));
      c.v[j] = alpha * a.v[j] + beta * b.v[j];
    }
    wa.push_back(std::move(a));
    wb.push_back(std::move(b));
    wc.push_back(std::move(c));
  }
  const ProbabilityMap ra = recompose(plan, wa);
  const ProbabilityMap rb = recompose(plan, wb);
  const ProbabilityMap rc = recompose(plan, wc);
  for (std::size_t i = 0; i < rc.data.size(); ++i)
    REQUIRE(std::fabs(rc.data[i] - (alpha * ra.data[i] + beta * rb.data[i])) < 1e-6);
}

TEST_CASE("segment_volume with stub models") {
  Volume vol({10, 8, 6});
  const WindowPlan plan = plan_windows(vol.dims, {4, 4, 4}, {3, 3, 3});

  SECTION("stub emitting equal decoder maps: ensemble equals either") {
    auto model = [](const Tensor<float>& in) {
      Tensor<float> pa(in.n, in.c, in.z, in.y, in.x), pb = pa;
      pa.fill(0.7f);
      pb.fill(0.7f);
      Tensor<float> ens(in.n, in.c, in.z, in.y, in.x);
      for (std::int64_t i = 0; i < ens.numel(); ++i) ens.v[i] = 0.5f * (pa.v[i] + pb.v[i]);
      return ens;
    };
    auto [prob, mask] = segment_volume(model, vol, plan, 0.5f);
    for (float v : prob.data) REQUIRE(v == Catch::Approx(0.7f).margin(1e-6));
    REQUIRE(mask.foreground_count() == mask.dims.voxels());
  }

  SECTION("constant 0.4 is empty at threshold 0.5") {
    auto model = [](const Tensor<float>& in) {
      Tensor<float> out(in.n, in.c, in.z, in.y, in.x);
      out.fill(0.4f);
      return out;
    };
    auto [prob, mask] = segment_volume(model, vol, plan, 0.5f);
    REQUIRE(mask.foreground_count() == 0);
  }

  SECTION("decoders at 0.9 and 0.3 ensemble to 0.6: foreground everywhere") {
    auto model = [](const Tensor<float>& in) {
      Tensor<float> out(in.n, in.c, in.z, in.y, in.x);
      out.fill(0.5f * (0.9f + 0.3f));
      return out;
    };
    auto [prob, mask] = segment_volume(model, vol, plan, 0.5f);
    for (float v : prob.data) REQUIRE(v == Catch::Approx(0.6f).margin(1e-6));
    REQUIRE(mask.foreground_count() == mask.dims.voxels());
  }

  SECTION("repeated calls are bit-stable") {
    Rng wrng(6);
    // deterministic but position-dependent stub
    auto model = [&](const Tensor<float>& in) {
      Tensor<float> out(in.n, in.c, in.z, in.y, in.x);
      for (std::int64_t i = 0; i < out.numel(); ++i)
        out.v[i] = 0.5f + 0.4f * std::sin(static_cast<float>(i) + in.v[0]);
      return out;
    };
    for (auto& f : vol.data) f = static_cast<float>(uniform_unit(wrng));
    auto [p1, m1] = segment_volume(model, vol, plan, 0.5f);
    auto [p2, m2] = segment_volume(model, vol, plan, 0.5f);
    REQUIRE(p1.data == p2.data);
    REQUIRE(m1.data == m2.data);
  }
}
