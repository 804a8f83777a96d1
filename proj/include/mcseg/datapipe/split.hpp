#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mcseg/core/common.hpp"
#include "mcseg/core/rng.hpp"

namespace mcseg {

// Semi-supervised dataset split: disjoint labeled / unlabeled / validation
// id lists. The labeled count is round(labeled_ratio * #train), at least 1.
struct DatasetSplit {
  std::vector<int> labeled;
  std::vector<int> unlabeled;
  std::vector<int> validation;
  std::uint64_t seed = 0;

  void validate() const {
    auto overlaps = [](const std::vector<int>& a, const std::vector<int>& b) {
      for (int x : a)
        for (int y : b)
          if (x == y) return true;
      return false;
    };
    require(!overlaps(labeled, unlabeled) && !overlaps(labeled, validation) &&
                !overlaps(unlabeled, validation),
            "split id lists must be pairwise disjoint");
    require(!labeled.empty(), "split has no labeled volumes");
  }
};

inline DatasetSplit make_split(int total, int validation_count, double labeled_ratio,
                               std::uint64_t seed) {
  require(total >= 2, "need at least 2 volumes to split");
  require(validation_count >= 0 && validation_count < total, "bad validation count");
  require(labeled_ratio > 0.0 && labeled_ratio <= 1.0, "labeled_ratio must lie in (0, 1]");
  const int train = total - validation_count;
  int n_labeled = static_cast<int>(std::lround(labeled_ratio * train));
  n_labeled = std::clamp(n_labeled, 1, train);

  std::vector<int> ids(total);
  for (int i = 0; i < total; ++i) ids[i] = i;
  Rng rng(mix_seed(seed, 0x5b17ull));
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1)]);

  DatasetSplit split;
  split.seed = seed;
  split.labeled.assign(ids.begin(), ids.begin() + n_labeled);
  split.unlabeled.assign(ids.begin() + n_labeled, ids.begin() + train);
  split.validation.assign(ids.begin() + train, ids.end());
  std::sort(split.labeled.begin(), split.labeled.end());
  std::sort(split.unlabeled.begin(), split.unlabeled.end());
  std::sort(split.validation.begin(), split.validation.end());
  split.validate();
  return split;
}

// Manifest format: one "<id> <role>" pair per line.
inline void write_split_manifest(const DatasetSplit& split, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot open split manifest ", path, " for writing");
  for (int id : split.labeled) out << id << " labeled\n";
  for (int id : split.unlabeled) out << id << " unlabeled\n";
  for (int id : split.validation) out << id << " validation\n";
  out.close();
  require(out.good(), "failed writing split manifest ", path);
}

inline DatasetSplit read_split_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open split manifest ", path);
  DatasetSplit split;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int id;
    std::string role;
    ls >> id >> role;
    require(!ls.fail(), path, ": malformed manifest line '", line, "'");
    if (role == "labeled") split.labeled.push_back(id);
    else if (role == "unlabeled") split.unlabeled.push_back(id);
    else if (role == "validation") split.validation.push_back(id);
    else fail(path, ": unknown split role '", role, "'");
  }
  split.validate();
  return split;
}

}  // namespace mcseg
