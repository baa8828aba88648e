#pragma once

#include <cstddef>
#include <vector>

#include "pstereo/common.hpp"

namespace ps::net {

/// Dense float32 feature map in CHW order (channel-major, row-major inside
/// each channel). All network math runs on these; the double-precision
/// domain types stay outside the net.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_) {
    v.assign(static_cast<std::size_t>(c_) * h_ * w_, 0.0f);
  }
  static Tensor zeros(int c, int h, int w) { return Tensor(c, h, w); }

  std::size_t size() const { return v.size(); }
  float at(int ci, int y, int x) const {
    return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
  }
  float& at(int ci, int y, int x) { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }

  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

}  // namespace ps::net
