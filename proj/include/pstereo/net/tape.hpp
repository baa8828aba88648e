#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pstereo/net/kernels.hpp"

namespace ps::net {

/// One learnable buffer plus its gradient and optimizer moments. Shapes:
/// conv (cout, cin, k, k); transposed conv (cin, cout, k, k); linear
/// (cout, cin); bias (cout) — all row-major flat.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> w, g, m, v;

  std::size_t count() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
  void init_buffers() {
    w.assign(count(), 0.0f);
    g.assign(count(), 0.0f);
    m.assign(count(), 0.0f);
    v.assign(count(), 0.0f);
  }
};

/// Reverse-mode tape over Tensor ops. Each op records a closure that pulls
/// the output gradient back into its inputs and parameter .g buffers; seed
/// output gradients, then call backward() once. One tape per training step.
class Tape {
 public:
  int input(Tensor t) { return push(std::move(t)); }

  const Tensor& val(int id) const { return nodes_[id].val; }
  Tensor& grad(int id) { return nodes_[id].grad; }

  int conv2d(int x, Param& w, Param& b, int k, int s, int p) {
    int y = push(conv2d_forward(nodes_[x].val, w.w.data(), b.w.data(), w.shape[0], k, s, p));
    backs_.push_back([this, x, y, &w, &b, k, s, p] {
      conv2d_backward(nodes_[x].val, w.w.data(), nodes_[y].grad, k, s, p,
                      nodes_[x].grad.v.data(), w.g.data(), b.g.data());
    });
    return y;
  }

  int deconv2d(int x, Param& w, Param& b, int k, int s, int p) {
    int y = push(deconv2d_forward(nodes_[x].val, w.w.data(), b.w.data(), w.shape[1], k, s, p));
    backs_.push_back([this, x, y, &w, &b, k, s, p] {
      deconv2d_backward(nodes_[x].val, w.w.data(), nodes_[y].grad, k, s, p,
                        nodes_[x].grad.v.data(), w.g.data(), b.g.data());
    });
    return y;
  }

  int linear(int x, Param& w, Param& b) {
    int y = push(linear_forward(nodes_[x].val, w.w.data(), b.w.data(), w.shape[0]));
    backs_.push_back([this, x, y, &w, &b] {
      linear_backward(nodes_[x].val, w.w.data(), nodes_[y].grad, nodes_[x].grad.v.data(),
                      w.g.data(), b.g.data());
    });
    return y;
  }

  int leaky_relu(int x, float slope) {
    Tensor t = nodes_[x].val;
    leaky_relu_forward(t, slope);
    int y = push(std::move(t));
    backs_.push_back([this, x, y, slope] {
      leaky_relu_backward(nodes_[x].val, nodes_[y].grad, slope, nodes_[x].grad);
    });
    return y;
  }

  int relu(int x) { return leaky_relu(x, 0.0f); }

  int sigmoid(int x) {
    Tensor t = nodes_[x].val;
    sigmoid_forward(t);
    int y = push(std::move(t));
    backs_.push_back(
        [this, x, y] { sigmoid_backward(nodes_[y].val, nodes_[y].grad, nodes_[x].grad); });
    return y;
  }

  int add(int a, int b) {
    check(nodes_[a].val.same_shape(nodes_[b].val), Err::shape_error, "add shapes differ");
    Tensor t = nodes_[a].val;
    for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] += nodes_[b].val.v[i];
    int y = push(std::move(t));
    backs_.push_back([this, a, b, y] {
      const Tensor& dy = nodes_[y].grad;
      for (std::size_t i = 0; i < dy.v.size(); ++i) {
        nodes_[a].grad.v[i] += dy.v[i];
        nodes_[b].grad.v[i] += dy.v[i];
      }
    });
    return y;
  }

  /// x * s with s shaped (C,1,1), broadcast over the spatial dims.
  int mul_channel(int x, int s) {
    const Tensor& xv = nodes_[x].val;
    const Tensor& sv = nodes_[s].val;
    check(sv.c == xv.c && sv.h == 1 && sv.w == 1, Err::shape_error,
          "channel scale must be (C,1,1)");
    Tensor t = xv;
    const std::size_t hw = static_cast<std::size_t>(xv.h) * xv.w;
    for (int ci = 0; ci < xv.c; ++ci)
      for (std::size_t i = 0; i < hw; ++i) t.v[ci * hw + i] *= sv.v[ci];
    int y = push(std::move(t));
    backs_.push_back([this, x, s, y, hw] {
      const Tensor& dy = nodes_[y].grad;
      const Tensor& xv2 = nodes_[x].val;
      const Tensor& sv2 = nodes_[s].val;
      for (int ci = 0; ci < xv2.c; ++ci) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          nodes_[x].grad.v[ci * hw + i] += dy.v[ci * hw + i] * sv2.v[ci];
          acc += static_cast<double>(dy.v[ci * hw + i]) * xv2.v[ci * hw + i];
        }
        nodes_[s].grad.v[ci] += static_cast<float>(acc);
      }
    });
    return y;
  }

  /// x * s with s shaped (1,H,W), broadcast over channels.
  int mul_spatial(int x, int s) {
    const Tensor& xv = nodes_[x].val;
    const Tensor& sv = nodes_[s].val;
    check(sv.c == 1 && sv.h == xv.h && sv.w == xv.w, Err::shape_error,
          "spatial scale must be (1,H,W)");
    Tensor t = xv;
    const std::size_t hw = static_cast<std::size_t>(xv.h) * xv.w;
    for (int ci = 0; ci < xv.c; ++ci)
      for (std::size_t i = 0; i < hw; ++i) t.v[ci * hw + i] *= sv.v[i];
    int y = push(std::move(t));
    backs_.push_back([this, x, s, y, hw] {
      const Tensor& dy = nodes_[y].grad;
      const Tensor& xv2 = nodes_[x].val;
      const Tensor& sv2 = nodes_[s].val;
      for (int ci = 0; ci < xv2.c; ++ci)
        for (std::size_t i = 0; i < hw; ++i) {
          nodes_[x].grad.v[ci * hw + i] += dy.v[ci * hw + i] * sv2.v[i];
          nodes_[s].grad.v[i] += dy.v[ci * hw + i] * xv2.v[ci * hw + i];
        }
    });
    return y;
  }

  int concat_ch(const std::vector<int>& xs) {
    check(!xs.empty(), Err::empty_list, "nothing to concatenate");
    int h = nodes_[xs[0]].val.h, w = nodes_[xs[0]].val.w, c = 0;
    for (int id : xs) {
      check(nodes_[id].val.h == h && nodes_[id].val.w == w, Err::shape_error,
            "concat spatial dims differ");
      c += nodes_[id].val.c;
    }
    Tensor t(c, h, w);
    std::size_t off = 0;
    for (int id : xs) {
      const Tensor& xv = nodes_[id].val;
      std::copy(xv.v.begin(), xv.v.end(), t.v.begin() + off);
      off += xv.v.size();
    }
    int y = push(std::move(t));
    backs_.push_back([this, xs, y] {
      std::size_t off2 = 0;
      for (int id : xs) {
        Tensor& dx = nodes_[id].grad;
        const Tensor& dy = nodes_[y].grad;
        for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dy.v[off2 + i];
        off2 += dx.v.size();
      }
    });
    return y;
  }

  /// Elementwise max over same-shaped tensors; gradient routes to the first
  /// maximizer, so ties resolve deterministically by list order.
  int max_over(const std::vector<int>& xs) {
    check(!xs.empty(), Err::empty_list, "nothing to pool");
    Tensor t = nodes_[xs[0]].val;
    auto winner = std::make_shared<std::vector<std::int32_t>>(t.v.size(), 0);
    for (std::size_t j = 1; j < xs.size(); ++j) {
      const Tensor& xv = nodes_[xs[j]].val;
      check(xv.same_shape(t), Err::shape_error, "max pool shapes differ");
      for (std::size_t i = 0; i < t.v.size(); ++i)
        if (xv.v[i] > t.v[i]) {
          t.v[i] = xv.v[i];
          (*winner)[i] = static_cast<std::int32_t>(j);
        }
    }
    int y = push(std::move(t));
    backs_.push_back([this, xs, y, winner] {
      const Tensor& dy = nodes_[y].grad;
      for (std::size_t i = 0; i < dy.v.size(); ++i)
        nodes_[xs[(*winner)[i]]].grad.v[i] += dy.v[i];
    });
    return y;
  }

  int gap_pool(int x) {
    int y = push(gap(nodes_[x].val));
    backs_.push_back([this, x, y] {
      const Tensor& xv = nodes_[x].val;
      const std::size_t hw = static_cast<std::size_t>(xv.h) * xv.w;
      const float inv = 1.0f / static_cast<float>(hw);
      for (int ci = 0; ci < xv.c; ++ci) {
        float gch = nodes_[y].grad.v[ci] * inv;
        for (std::size_t i = 0; i < hw; ++i) nodes_[x].grad.v[ci * hw + i] += gch;
      }
    });
    return y;
  }

  int gmp_pool(int x) {
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    int y = push(gmp(nodes_[x].val, *argmax));
    backs_.push_back([this, x, y, argmax] {
      for (int ci = 0; ci < nodes_[y].val.c; ++ci)
        nodes_[x].grad.v[(*argmax)[ci]] += nodes_[y].grad.v[ci];
    });
    return y;
  }

  int channel_mean_map(int x) {
    int y = push(channel_mean(nodes_[x].val));
    backs_.push_back([this, x, y] {
      const Tensor& xv = nodes_[x].val;
      const std::size_t hw = static_cast<std::size_t>(xv.h) * xv.w;
      const float inv = 1.0f / static_cast<float>(xv.c);
      for (int ci = 0; ci < xv.c; ++ci)
        for (std::size_t i = 0; i < hw; ++i)
          nodes_[x].grad.v[ci * hw + i] += nodes_[y].grad.v[i] * inv;
    });
    return y;
  }

  int channel_max_map(int x) {
    auto argc = std::make_shared<std::vector<int>>();
    int y = push(channel_max(nodes_[x].val, *argc));
    backs_.push_back([this, x, y, argc] {
      const Tensor& xv = nodes_[x].val;
      const std::size_t hw = static_cast<std::size_t>(xv.h) * xv.w;
      for (std::size_t i = 0; i < hw; ++i)
        nodes_[x].grad.v[static_cast<std::size_t>((*argc)[i]) * hw + i] += nodes_[y].grad.v[i];
    });
    return y;
  }

  int l2norm_px(int x) {
    int y = push(l2norm_px_forward(nodes_[x].val));
    backs_.push_back([this, x, y] {
      l2norm_px_backward(nodes_[x].val, nodes_[y].grad, nodes_[x].grad);
    });
    return y;
  }

  /// Runs every recorded closure in reverse order. Output gradients must be
  /// seeded via grad() first.
  void backward() {
    for (auto it = backs_.rbegin(); it != backs_.rend(); ++it) (*it)();
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val, grad;
  };
  std::vector<Node> nodes_;
  std::vector<std::function<void()>> backs_;

  int push(Tensor&& t) {
    Node n;
    n.grad = Tensor(t.c, t.h, t.w);
    n.val = std::move(t);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }
};

}  // namespace ps::net
