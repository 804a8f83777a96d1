#pragma once

#include <cstdint>
#include <vector>

#include "mcseg/core/common.hpp"
#include "mcseg/core/grid.hpp"

namespace mcseg {

// Allocator that skips value-initialization: activation buffers are fully
// overwritten by the kernel that produces them, so zero-filling them first
// would double the memory traffic of every layer.
template <typename T>
struct UninitAllocator : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = UninitAllocator<U>;
  };
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) > 0)
      ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    else
      ::new (static_cast<void*>(p)) U;
  }
};

// Dense activation tensor, layout [n][c][z][y][x] with x contiguous.
// Spatial memory order matches Grid3 so volume patches copy in flat runs.
// Freshly constructed tensors hold indeterminate values; call fill() when
// the consumer reads before writing.
template <typename S>
struct Tensor {
  int n = 0, c = 0, z = 0, y = 0, x = 0;
  std::vector<S, UninitAllocator<S>> v;

  Tensor() = default;
  Tensor(int n_, int c_, int z_, int y_, int x_)
      : n(n_), c(c_), z(z_), y(y_), x(x_),
        v(static_cast<std::size_t>(n_) * c_ * z_ * y_ * x_) {}
  Tensor(int n_, int c_, Dim3 d) : Tensor(n_, c_, d.z, d.y, d.x) {}

  std::int64_t spatial() const { return static_cast<std::int64_t>(z) * y * x; }
  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  Dim3 dims() const { return {x, y, z}; }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && z == o.z && y == o.y && x == o.x;
  }

  S* data() { return v.data(); }
  const S* data() const { return v.data(); }

  // pointer to the start of channel ic of batch item in
  S* chan(int in, int ic) {
    return v.data() + (static_cast<std::size_t>(in) * c + ic) * spatial();
  }
  const S* chan(int in, int ic) const {
    return v.data() + (static_cast<std::size_t>(in) * c + ic) * spatial();
  }

  S& at(int in, int ic, int iz, int iy, int ix) {
    return chan(in, ic)[(static_cast<std::int64_t>(iz) * y + iy) * x + ix];
  }
  const S& at(int in, int ic, int iz, int iy, int ix) const {
    return chan(in, ic)[(static_cast<std::int64_t>(iz) * y + iy) * x + ix];
  }

  void fill(S value) { std::fill(v.begin(), v.end(), value); }

  template <typename S2>
  Tensor<S2> cast() const {
    Tensor<S2> out(n, c, z, y, x);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<S2>(v[i]);
    return out;
  }
};

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* what) {
  require(a.same_shape(b), what, ": tensor shape mismatch (", a.n, ",", a.c, ",", a.z, ",",
          a.y, ",", a.x, ") vs (", b.n, ",", b.c, ",", b.z, ",", b.y, ",", b.x, ")");
}

}  // namespace mcseg
