#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "mcseg/datapipe/patches.hpp"
#include "mcseg/datapipe/preprocess.hpp"
#include "mcseg/datapipe/split.hpp"
#include "mcseg/datapipe/synthetic.hpp"
#include "test_util.hpp"

using namespace mcseg;

TEST_CASE("preprocess crops the enlarged bounding box") {
  Rng rng(1);
  Volume v({64, 64, 64});
  for (auto& f : v.data) f = static_cast<float>(normal_sample(rng));
  LabelMask m({64, 64, 64});
  for (int z = 10; z <= 20; ++z)
    for (int y = 10; y <= 20; ++y)
      for (int x = 10; x <= 20; ++x) m.at(x, y, z) = 1;

  auto [cv, cm] = preprocess(v, m, 5);
  REQUIRE(cv.dims == Dim3{21, 21, 21});  // 5..25 inclusive
  REQUIRE(cm.dims == cv.dims);
  REQUIRE(cm.foreground_count() == 11 * 11 * 11);
  // mask voxels line up with the original coordinates
  REQUIRE(cm.at(5, 5, 5) == 1);
  REQUIRE(cm.at(4, 5, 5) == 0);

  SECTION("margin clamps at the volume bounds") {
    auto [cv2, cm2] = preprocess(v, m, 30);
    REQUIRE(cv2.dims == Dim3{51, 51, 51});  // 0..50
  }
}

TEST_CASE("normalization produces zero mean and unit variance") {
  Rng rng(2);
  Volume v({20, 18, 16});
  for (auto& f : v.data) f = static_cast<float>(3.0 + 2.5 * normal_sample(rng));
  LabelMask m(v.dims);
  m.at(9, 9, 8) = 1;
  auto [cv, cm] = preprocess(v, m, 50);

  double mean = 0.0;
  for (float f : cv.data) mean += f;
  mean /= static_cast<double>(cv.data.size());
  double var = 0.0;
  for (float f : cv.data) var += (f - mean) * (f - mean);
  var /= static_cast<double>(cv.data.size());
  REQUIRE(std::fabs(mean) < 1e-5);
  REQUIRE(std::fabs(var - 1.0) < 1e-4);
}

TEST_CASE("constant volumes normalize to all zeros") {
  Volume v({8, 8, 8});
  std::fill(v.data.begin(), v.data.end(), 42.0f);
  normalize_intensity(v);
  for (float f : v.data) REQUIRE(f == 0.0f);
}

TEST_CASE("preprocess rejects an empty mask") {
  Volume v({8, 8, 8});
  LabelMask m({8, 8, 8});
  REQUIRE_THROWS_AS(preprocess(v, m, 2), Error);
}

TEST_CASE("unlabeled preprocessing takes a centered crop") {
  Volume v({16, 16, 16});
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) v.at(x, y, z) = static_cast<float>(x);
  const Volume c = preprocess_unlabeled(v, {8, 8, 8});
  REQUIRE(c.dims == Dim3{8, 8, 8});
  // centered: original x range 4..11, normalized afterwards; mean of 4..11 is 7.5
  double mean = 0.0;
  for (float f : c.data) mean += f;
  REQUIRE(std::fabs(mean) < 1e-4);
}

TEST_CASE("patch sampling obeys the corner distribution") {
  Rng rng(3);
  Volume v({9, 8, 8});
  LabelMask m(v.dims);
  m.at(4, 4, 4) = 1;
  PatchSpec spec;
  spec.shape = {8, 8, 8};
  spec.rot90_inplane = false;
  spec.flips = false;

  SECTION("volume equal to patch: the whole volume at corner (0,0,0)") {
    PatchSpec full = spec;
    full.shape = {9, 8, 8};
    auto [p, lm] = sample_patch(v, &m, full, rng);
    REQUIRE(p.dims == v.dims);
    REQUIRE(p.data == v.data);
    REQUIRE(lm->at(4, 4, 4) == 1);
  }

  SECTION("fixed rng state reproduces the corner") {
    Rng r1(77), r2(77);
    auto c1 = sample_patch_corner(v.dims, spec.shape, r1);
    auto c2 = sample_patch_corner(v.dims, spec.shape, r2);
    REQUIRE(c1 == c2);
  }

  SECTION("two-choice axis is uniform to within 5 points over 1000 draws") {
    int zero = 0;
    for (int i = 0; i < 1000; ++i) {
      const Dim3 c = sample_patch_corner(v.dims, spec.shape, rng);
      REQUIRE((c.x == 0 || c.x == 1));
      REQUIRE(c.y == 0);
      zero += c.x == 0;
    }
    REQUIRE(zero > 450);
    REQUIRE(zero < 550);
  }

  SECTION("patch larger than the volume is an error") {
    PatchSpec big = spec;
    big.shape = {10, 8, 8};
    REQUIRE_THROWS_AS(sample_patch(v, &m, big, rng), Error);
  }
}

TEST_CASE("augmentation transforms form a group on volume and mask") {
  Rng rng(4);
  Volume v({6, 6, 4});
  for (auto& f : v.data) f = static_cast<float>(normal_sample(rng));
  LabelMask m = testutil::random_mask(v.dims, 0.4, rng);
  const auto fg = m.foreground_count();

  SECTION("all flags off is the identity") {
    PatchSpec spec;
    spec.rot90_inplane = false;
    spec.flips = false;
    Volume vc = v;
    LabelMask mc = m;
    augment(vc, &mc, spec, rng);
    REQUIRE(vc.data == v.data);
    REQUIRE(mc.data == m.data);
  }

  SECTION("a 180-degree rotation applied twice is the identity") {
    Grid3<float> g = v;
    AugmentDraw d;
    d.rot_k = 2;
    apply_augmentation(g, d);
    apply_augmentation(g, d);
    REQUIRE(g.data == v.data);
  }

  SECTION("four quarter turns are the identity") {
    Grid3<float> g = v;
    AugmentDraw d;
    d.rot_k = 1;
    for (int i = 0; i < 4; ++i) apply_augmentation(g, d);
    REQUIRE(g.data == v.data);
  }

  SECTION("flips are involutions") {
    Grid3<std::uint8_t> g = m;
    AugmentDraw d;
    d.flip_x = true;
    d.flip_y = true;
    apply_augmentation(g, d);
    apply_augmentation(g, d);
    REQUIRE(g.data == m.data);
  }

  SECTION("voxel count is preserved under any draw") {
    PatchSpec spec;  // both flags on
    for (int rep = 0; rep < 10; ++rep) {
      LabelMask mc = m;
      Volume vc = v;
      augment(vc, &mc, spec, rng);
      REQUIRE(mc.foreground_count() == fg);
    }
  }

  SECTION("volume and mask receive the identical transform") {
    PatchSpec spec;
    Rng r1(5), r2(5);
    Volume vc = v;
    LabelMask mc = m;
    augment(vc, &mc, spec, r1);
    // encode mask into a float grid and transform it with the same draws
    Volume as_float(v.dims);
    for (std::int64_t i = 0; i < v.dims.voxels(); ++i)
      as_float.data[i] = static_cast<float>(m.data[i]);
    augment(as_float, nullptr, spec, r2);
    for (std::int64_t i = 0; i < v.dims.voxels(); ++i)
      REQUIRE(static_cast<float>(mc.data[i]) == as_float.data[i]);
  }

  SECTION("rotations demand a square in-plane patch") {
    PatchSpec spec;
    spec.shape = {6, 4, 4};
    REQUIRE_THROWS_AS(spec.validate(), Error);
  }
}

TEST_CASE("batch composition draws 2+2 with per-epoch exhaustion") {
  SyntheticSpec sspec;
  sspec.shape = {20, 20, 12};
  sspec.count = 6;
  sspec.seed = 5;
  sspec.blur_sigma = 1.0;
  sspec.noise_sigma = 0.2;

  std::vector<PreparedVolume> pool;
  for (int i = 0; i < 6; ++i) {
    auto [v, m] = generate_synthetic_sample(sspec, i);
    PreparedVolume pv;
    pv.id = i;
    pv.vol = std::move(v);
    pv.mask = std::move(m);
    pv.has_label = i < 3;
    pool.push_back(std::move(pv));
  }
  PatchSpec pspec;
  pspec.shape = {12, 12, 8};

  SECTION("selector marks exactly the labeled positions") {
    BatchComposer comp(&pool, {0, 1, 2}, {3, 4, 5}, pspec, 2, 2);
    Rng rng(6);
    for (int i = 0; i < 20; ++i) {
      const TrainingBatch b = comp.next(rng);
      REQUIRE(b.input.n == 4);
      int sum = 0;
      for (auto s : b.labeled_selector) sum += s;
      REQUIRE(sum == 2);
      REQUIRE(b.labeled_selector[0] == 1);
      REQUIRE(b.labeled_selector[1] == 1);
      REQUIRE(b.labeled_selector[2] == 0);
      // labeled items come from the labeled pool
      REQUIRE(b.item_ids[0] < 3);
      REQUIRE(b.item_ids[1] < 3);
      REQUIRE(b.item_ids[2] >= 3);
    }
  }

  SECTION("pools of size 2 give the unique batch up to order") {
    BatchComposer comp(&pool, {0, 1}, {3, 4}, pspec, 2, 2);
    Rng rng(7);
    for (int i = 0; i < 5; ++i) {
      const TrainingBatch b = comp.next(rng);
      std::vector<int> lab = {b.item_ids[0], b.item_ids[1]};
      std::sort(lab.begin(), lab.end());
      REQUIRE(lab == std::vector<int>{0, 1});
    }
  }

  SECTION("without-replacement epochs balance volume usage") {
    BatchComposer comp(&pool, {0, 1, 2}, {3, 4, 5}, pspec, 2, 2);
    Rng rng(8);
    std::map<int, int> counts;
    const int iters = 150;
    for (int i = 0; i < iters; ++i) {
      const TrainingBatch b = comp.next(rng);
      counts[b.item_ids[0]]++;
      counts[b.item_ids[1]]++;
    }
    const int expected = iters * 2 / 3;
    for (int id = 0; id < 3; ++id) {
      REQUIRE(counts[id] >= expected - 1);
      REQUIRE(counts[id] <= expected + 1);
    }
  }

  SECTION("empty pools are an error") {
    REQUIRE_THROWS_AS(
        [&] {
          BatchComposer comp(&pool, {}, {3}, pspec, 2, 2);
          Rng rng(9);
          comp.next(rng);
        }(),
        Error);
  }
}

TEST_CASE("synthetic generator determinism and degenerate settings") {
  SECTION("blur 0 and noise 0 reproduce the mask exactly") {
    SyntheticSpec spec;
    spec.shape = {24, 24, 24};
    spec.blur_sigma = 0.0;
    spec.noise_sigma = 0.0;
    spec.seed = 11;
    auto [v, m] = generate_synthetic_sample(spec, 0);
    for (std::int64_t i = 0; i < v.dims.voxels(); ++i)
      REQUIRE(v.data[i] == static_cast<float>(m.data[i]));
  }

  SECTION("same seed gives a bit-identical dataset, different seed differs") {
    SyntheticSpec spec;
    spec.shape = {20, 20, 16};
    spec.count = 3;
    spec.seed = 21;
    const auto d1 = generate_synthetic(spec);
    const auto d2 = generate_synthetic(spec);
    REQUIRE(d1.size() == 3);
    for (int i = 0; i < 3; ++i) {
      REQUIRE(d1[i].first.data == d2[i].first.data);
      REQUIRE(d1[i].second.data == d2[i].second.data);
    }
    spec.seed = 22;
    const auto d3 = generate_synthetic(spec);
    bool differs = false;
    for (int i = 0; i < 3; ++i)
      if (d3[i].second.data != d1[i].second.data) differs = true;
    REQUIRE(differs);
  }

  SECTION("foreground fraction stays within (0.02, 0.5) over 100 samples") {
    SyntheticSpec spec;  // defaults: 64^3
    spec.count = 100;
    spec.seed = 33;
    for (int i = 0; i < spec.count; ++i) {
      auto [v, m] = generate_synthetic_sample(spec, i);
      const double frac =
          static_cast<double>(m.foreground_count()) / static_cast<double>(m.dims.voxels());
      INFO("sample " << i << " fraction " << frac);
      REQUIRE(frac > 0.02);
      REQUIRE(frac < 0.5);
    }
  }

  SECTION("degenerate spec is rejected") {
    SyntheticSpec spec;
    spec.shape = {8, 8, 8};  // 0.18 * 8 < 2 voxels
    REQUIRE_THROWS_AS(spec.validate(), Error);
  }
}

TEST_CASE("splits are disjoint with the requested labeled fraction") {
  testutil::TempDir tmp("split");
  for (std::uint64_t seed : {1ull, 9ull, 123ull}) {
    for (double ratio : {0.1, 0.2, 0.5}) {
      const DatasetSplit s = make_split(40, 8, ratio, seed);
      REQUIRE(s.labeled.size() + s.unlabeled.size() == 32);
      REQUIRE(s.validation.size() == 8);
      REQUIRE(static_cast<int>(s.labeled.size()) ==
              static_cast<int>(std::lround(ratio * 32)));
      REQUIRE_NOTHROW(s.validate());
    }
  }

  const DatasetSplit s = make_split(40, 8, 0.1, 7);
  write_split_manifest(s, tmp.file("split.txt"));
  const DatasetSplit r = read_split_manifest(tmp.file("split.txt"));
  REQUIRE(r.labeled == s.labeled);
  REQUIRE(r.unlabeled == s.unlabeled);
  REQUIRE(r.validation == s.validation);
}
