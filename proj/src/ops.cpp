#include "nisnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kernels.hpp"
#include "nisnn/errors.hpp"

namespace nisnn {

namespace {

using Node = Tape::Node;

// Gradient buffer of the k-th input, or nullptr when it takes no gradient.
float* grad_of(const Node& node, std::size_t k) {
  const auto& in = node.inputs[k];
  if (!in->requires_grad) return nullptr;
  return in->grad_buffer().data();
}

const std::vector<float>& out_grad(const Node& node, std::size_t k = 0) {
  return node.outputs[k]->grad;
}

// Maps every output element of a broadcast binary op to its source index in
// each operand.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
  bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1);
  Shape pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  std::vector<std::size_t> sa(rank, 0);
  std::vector<std::size_t> sb(rank, 0);
  std::size_t acc_a = 1;
  std::size_t acc_b = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : acc_a;
    sb[i] = pb[i] == 1 ? 0 : acc_b;
    acc_a *= pa[i];
    acc_b *= pb[i];
  }
  std::size_t n = shape_numel(plan.out);
  plan.a_index.resize(n);
  plan.b_index.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    plan.a_index[flat] = ia;
    plan.b_index[flat] = ib;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += sa[ax];
      ib += sb[ax];
      if (idx[ax] < plan.out[ax]) break;
      ia -= sa[ax] * idx[ax];
      ib -= sb[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return plan;
}

enum class BinOp { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, std::string_view name) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape()));
  std::size_t n = shape_numel(plan->out);
  std::vector<float> out(n);
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    float x = da[plan->same ? i : plan->a_index[i]];
    float y = db[plan->same ? i : plan->b_index[i]];
    switch (op) {
      case BinOp::kAdd: out[i] = x + y; break;
      case BinOp::kSub: out[i] = x - y; break;
      case BinOp::kMul: out[i] = x * y; break;
    }
  }
  auto ia = a.impl();
  auto ib = b.impl();
  return make_result(name, plan->out, std::move(out), {a, b}, [plan, op, ia, ib, n](const Node& node) {
    const auto& g = out_grad(node);
    float* ga = grad_of(node, 0);
    float* gb = grad_of(node, 1);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t ai = plan->same ? i : plan->a_index[i];
      std::size_t bi = plan->same ? i : plan->b_index[i];
      switch (op) {
        case BinOp::kAdd:
          if (ga) ga[ai] += g[i];
          if (gb) gb[bi] += g[i];
          break;
        case BinOp::kSub:
          if (ga) ga[ai] += g[i];
          if (gb) gb[bi] -= g[i];
          break;
        case BinOp::kMul:
          if (ga) ga[ai] += g[i] * ib->data[bi];
          if (gb) gb[bi] += g[i] * ia->data[ai];
          break;
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul, "mul"); }

Tensor scale(const Tensor& x, float factor) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (float& v : out) v *= factor;
  return make_result("scale", x.shape(), std::move(out), {x}, [factor](const Node& node) {
    float* gx = grad_of(node, 0);
    const auto& g = out_grad(node);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (float& v : out) v = v > 0.0F ? v : 0.0F;
  auto ix = x.impl();
  return make_result("relu", x.shape(), std::move(out), {x}, [ix](const Node& node) {
    float* gx = grad_of(node, 0);
    const auto& g = out_grad(node);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ix->data[i] > 0.0F) gx[i] += g[i];
    }
  });
}

Tensor heaviside(const Tensor& x, float threshold) {
  OpCounter::bump("threshold");
  std::vector<float> out(x.numel());
  auto d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] > threshold ? 1.0F : 0.0F;
  return Tensor::from_data(x.shape(), std::move(out));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<float> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](const Node& node) {
    float* gx = grad_of(node, 0);
    const auto& g = out_grad(node);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& in = x.shape();
  std::size_t rank = in.size();
  if (order.size() != rank) throw DimensionError("permute order rank mismatch for " + shape_str(in));
  std::vector<bool> seen(rank, false);
  for (std::size_t ax : order) {
    if (ax >= rank || seen[ax]) throw DimensionError("invalid permutation for " + shape_str(in));
    seen[ax] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in[order[i]];
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * in[i + 1];

  std::size_t n = x.numel();
  auto src_index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    (*src_index)[flat] = src;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      src += in_strides[order[ax]];
      if (idx[ax] < out_shape[ax]) break;
      src -= in_strides[order[ax]] * idx[ax];
      idx[ax] = 0;
    }
  }
  std::vector<float> out(n);
  auto d = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = d[(*src_index)[i]];
  return make_result("permute", std::move(out_shape), std::move(out), {x}, [src_index](const Node& node) {
    float* gx = grad_of(node, 0);
    const auto& g = out_grad(node);
    for (std::size_t i = 0; i < g.size(); ++i) gx[(*src_index)[i]] += g[i];
  });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(x.shape()));
  std::vector<std::size_t> order(x.rank());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[x.rank() - 1], order[x.rank() - 2]);
  return permute(x, order);
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  return make_result("sum", {1}, {static_cast<float>(acc)}, {x}, [](const Node& node) {
    float* gx = grad_of(node, 0);
    float g = out_grad(node)[0];
    std::size_t n = node.inputs[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  auto n = static_cast<double>(x.numel());
  return make_result("mean", {1}, {static_cast<float>(acc / n)}, {x}, [n](const Node& node) {
    float* gx = grad_of(node, 0);
    float g = out_grad(node)[0] / static_cast<float>(n);
    for (std::size_t i = 0; i < node.inputs[0]->data.size(); ++i) gx[i] += g;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  std::size_t m = sa[sa.size() - 2];
  std::size_t n = sa[sa.size() - 1];
  std::size_t n2 = sb[sb.size() - 2];
  std::size_t p = sb[sb.size() - 1];
  Shape batch_a(sa.begin(), sa.end() - 2);
  Shape batch_b(sb.begin(), sb.end() - 2);
  if (n != n2 || (batch_a != batch_b && !batch_a.empty() && !batch_b.empty())) {
    throw DimensionError("matmul shape mismatch: " + shape_str(sa) + " x " + shape_str(sb));
  }
  OpCounter::bump("matmul");
  Shape out_shape = batch_a.size() >= batch_b.size() ? batch_a : batch_b;
  std::size_t batch = shape_numel(out_shape);
  out_shape.push_back(m);
  out_shape.push_back(p);
  std::size_t stride_a = batch_a.empty() ? 0 : m * n;
  std::size_t stride_b = batch_b.empty() ? 0 : n * p;

  std::vector<float> out(batch * m * p, 0.0F);
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm_nn(m, n, p, pa + i * stride_a, pb + i * stride_b, out.data() + i * m * p);
  }
  auto ia = a.impl();
  auto ib = b.impl();
  return make_result("matmul", std::move(out_shape), std::move(out), {a, b},
                     [ia, ib, batch, m, n, p, stride_a, stride_b](const Node& node) {
                       const float* g = out_grad(node).data();
                       float* ga = grad_of(node, 0);
                       float* gb = grad_of(node, 1);
                       for (std::size_t i = 0; i < batch; ++i) {
                         const float* gi = g + i * m * p;
                         if (ga) kernels::gemm_nt(m, p, n, gi, ib->data.data() + i * stride_b, ga + i * stride_a);
                         if (gb) kernels::gemm_tn(n, m, p, ia->data.data() + i * stride_a, gi, gb + i * stride_b);
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.dim(1)) {
    throw DimensionError("linear shape mismatch: input " + shape_str(x.shape()) + ", weight " +
                         shape_str(weight.shape()));
  }
  std::size_t in = weight.dim(1);
  std::size_t out_f = weight.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_f)) {
    throw DimensionError("linear bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  OpCounter::bump("linear");
  std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<float> out(rows * out_f, 0.0F);
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(bias.data().begin(), bias.data().end(), out.begin() + static_cast<std::ptrdiff_t>(r * out_f));
    }
  }
  kernels::gemm_nt(rows, in, out_f, x.data().data(), weight.data().data(), out.data());
  auto ix = x.impl();
  auto iw = weight.impl();
  return make_result("linear", std::move(out_shape), std::move(out), {x, weight, bias},
                     [ix, iw, rows, in, out_f](const Node& node) {
                       const float* g = out_grad(node).data();
                       float* gx = grad_of(node, 0);
                       float* gw = grad_of(node, 1);
                       float* gbias = grad_of(node, 2);
                       if (gx) kernels::gemm_nn(rows, out_f, in, g, iw->data.data(), gx);
                       if (gw) kernels::gemm_tn(out_f, rows, in, g, ix->data.data(), gw);
                       if (gbias) {
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t o = 0; o < out_f; ++o) gbias[o] += g[r * out_f + o];
                         }
                       }
                     });
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, kh, kw, pad_top, pad_left;
  std::size_t k() const { return cin * kh * kw; }
  std::size_t hw() const { return h * w; }
};

void im2col(const ConvGeometry& g, const float* x, float* col) {
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        float* row = col + ((ci * g.kh + ky) * g.kw + kx) * g.hw();
        for (std::size_t oy = 0; oy < g.h; ++oy) {
          auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          for (std::size_t ox = 0; ox < g.w; ++ox) {
            auto ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            bool inside = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) && ix >= 0 &&
                          ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.w + ox] =
                inside ? x[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] : 0.0F;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* col, float* dx) {
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const float* row = col + ((ci * g.kh + ky) * g.kw + kx) * g.hw();
        for (std::size_t oy = 0; oy < g.h; ++oy) {
          auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.w; ++ox) {
            auto ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dx[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] += row[oy * g.w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d_same(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.rank() != 4) throw DimensionError("conv kernel must be rank 4, got " + shape_str(w.shape()));
  if (x.rank() != 4 || x.dim(1) != w.dim(1)) {
    throw DimensionError("conv input " + shape_str(x.shape()) + " does not match kernel " + shape_str(w.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(0))) {
    throw DimensionError("conv bias " + shape_str(bias.shape()) + " does not match kernel " + shape_str(w.shape()));
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0};
  g.pad_top = (g.kh - 1) / 2;
  g.pad_left = (g.kw - 1) / 2;
  OpCounter::bump("conv2d");

  std::vector<float> out(g.batch * g.cout * g.hw(), 0.0F);
  std::vector<float> col(g.k() * g.hw());
  const float* px = x.data().data();
  const float* pw = w.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    float* ob = out.data() + b * g.cout * g.hw();
    if (bias.defined()) {
      for (std::size_t co = 0; co < g.cout; ++co) std::fill_n(ob + co * g.hw(), g.hw(), bias.data()[co]);
    }
    im2col(g, px + b * g.cin * g.hw(), col.data());
    kernels::gemm_nn(g.cout, g.k(), g.hw(), pw, col.data(), ob);
  }
  auto ix = x.impl();
  auto iw = w.impl();
  return make_result("conv2d", {g.batch, g.cout, g.h, g.w}, std::move(out), {x, w, bias},
                     [ix, iw, g](const Node& node) {
                       const float* gout = out_grad(node).data();
                       float* gx = grad_of(node, 0);
                       float* gw = grad_of(node, 1);
                       float* gbias = grad_of(node, 2);
                       std::vector<float> col(g.k() * g.hw());
                       std::vector<float> dcol(gx ? g.k() * g.hw() : 0);
                       for (std::size_t b = 0; b < g.batch; ++b) {
                         const float* gb = gout + b * g.cout * g.hw();
                         if (gbias) {
                           for (std::size_t co = 0; co < g.cout; ++co) {
                             float acc = 0.0F;
                             for (std::size_t i = 0; i < g.hw(); ++i) acc += gb[co * g.hw() + i];
                             gbias[co] += acc;
                           }
                         }
                         if (gw) {
                           im2col(g, ix->data.data() + b * g.cin * g.hw(), col.data());
                           kernels::gemm_nt(g.cout, g.hw(), g.k(), gb, col.data(), gw);
                         }
                         if (gx) {
                           std::fill(dcol.begin(), dcol.end(), 0.0F);
                           kernels::gemm_tn(g.k(), g.cout, g.hw(), iw->data.data(), gb, dcol.data());
                           col2im(g, dcol.data(), gx + b * g.cin * g.hw());
                         }
                       }
                     });
}

namespace {

void check_poolable(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw DimensionError("2x2 pooling needs [B,C,H,W] with even H and W, got " + shape_str(x.shape()));
  }
}

}  // namespace

Tensor max_pool2d(const Tensor& x) {
  check_poolable(x);
  std::size_t planes = x.dim(0) * x.dim(1);
  std::size_t h = x.dim(2);
  std::size_t w = x.dim(3);
  std::size_t oh = h / 2;
  std::size_t ow = w / 2;
  std::vector<float> out(planes * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  auto d = x.data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        std::size_t base = pl * h * w + 2 * y * w + 2 * xx;
        std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (std::size_t c = 1; c < 4; ++c) {
          if (d[cand[c]] > d[best]) best = cand[c];
        }
        std::size_t o = (pl * oh + y) * ow + xx;
        out[o] = d[best];
        (*argmax)[o] = best;
      }
    }
  }
  return make_result("max_pool2d", {x.dim(0), x.dim(1), oh, ow}, std::move(out), {x}, [argmax](const Node& node) {
    float* gx = grad_of(node, 0);
    const auto& g = out_grad(node);
    for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
  });
}

Tensor avg_pool2d(const Tensor& x) {
  check_poolable(x);
  std::size_t planes = x.dim(0) * x.dim(1);
  std::size_t h = x.dim(2);
  std::size_t w = x.dim(3);
  std::size_t oh = h / 2;
  std::size_t ow = w / 2;
  std::vector<float> out(planes * oh * ow);
  auto d = x.data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        std::size_t base = pl * h * w + 2 * y * w + 2 * xx;
        out[(pl * oh + y) * ow + xx] = 0.25F * ((d[base] + d[base + 1]) + (d[base + w] + d[base + w + 1]));
      }
    }
  }
  return make_result("avg_pool2d", {x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                     [planes, h, w, oh, ow](const Node& node) {
                       float* gx = grad_of(node, 0);
                       const auto& g = out_grad(node);
                       for (std::size_t pl = 0; pl < planes; ++pl) {
                         for (std::size_t y = 0; y < oh; ++y) {
                           for (std::size_t xx = 0; xx < ow; ++xx) {
                             float v = 0.25F * g[(pl * oh + y) * ow + xx];
                             std::size_t base = pl * h * w + 2 * y * w + 2 * xx;
                             gx[base] += v;
                             gx[base + 1] += v;
                             gx[base + w] += v;
                             gx[base + w + 1] += v;
                           }
                         }
                       }
                     });
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 Mode mode) {
  if (x.rank() < 2) throw DimensionError("batchnorm needs [B,C,...], got " + shape_str(x.shape()));
  std::size_t batch = x.dim(0);
  std::size_t channels = x.dim(1);
  if (gamma.numel() != channels || beta.numel() != channels || state.running_mean.size() != channels) {
    throw DimensionError("batchnorm parameters do not match " + std::to_string(channels) + " channels");
  }
  std::size_t inner = x.numel() / (batch * channels);
  std::size_t count = batch * inner;
  if (mode == Mode::kTrain && count < 2) {
    throw ContractError("degenerate batch: batchnorm in training mode needs at least 2 values per channel");
  }
  auto d = x.data();
  auto mean_c = std::make_shared<std::vector<float>>(channels);
  auto inv_std = std::make_shared<std::vector<float>>(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const float* p = d.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) s += p[i];
      }
      double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const float* p = d.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      double var = ss / static_cast<double>(count);
      (*mean_c)[c] = static_cast<float>(mu);
      (*inv_std)[c] = static_cast<float>(1.0 / std::sqrt(var + state.eps));
      double unbiased = ss / static_cast<double>(count - 1);
      state.running_mean[c] = static_cast<float>((1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu);
      state.running_var[c] =
          static_cast<float>((1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased);
    } else {
      (*mean_c)[c] = state.running_mean[c];
      (*inv_std)[c] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + state.eps));
    }
  }
  auto xhat = std::make_shared<std::vector<float>>(x.numel());
  std::vector<float> out(x.numel());
  auto gm = gamma.data();
  auto bt = beta.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::size_t off = (b * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        float h = (d[off + i] - (*mean_c)[c]) * (*inv_std)[c];
        (*xhat)[off + i] = h;
        out[off + i] = gm[c] * h + bt[c];
      }
    }
  }
  auto ig = gamma.impl();
  bool train = mode == Mode::kTrain;
  return make_result("batchnorm", x.shape(), std::move(out), {x, gamma, beta},
                     [xhat, inv_std, ig, batch, channels, inner, count, train](const Node& node) {
                       const auto& g = out_grad(node);
                       float* gx = grad_of(node, 0);
                       float* gg = grad_of(node, 1);
                       float* gb = grad_of(node, 2);
                       for (std::size_t c = 0; c < channels; ++c) {
                         double sum_g = 0.0;
                         double sum_gx = 0.0;
                         for (std::size_t b = 0; b < batch; ++b) {
                           std::size_t off = (b * channels + c) * inner;
                           for (std::size_t i = 0; i < inner; ++i) {
                             sum_g += g[off + i];
                             sum_gx += static_cast<double>(g[off + i]) * (*xhat)[off + i];
                           }
                         }
                         if (gg) gg[c] += static_cast<float>(sum_gx);
                         if (gb) gb[c] += static_cast<float>(sum_g);
                         if (!gx) continue;
                         double scale_c = static_cast<double>(ig->data[c]) * (*inv_std)[c];
                         auto n = static_cast<double>(count);
                         for (std::size_t b = 0; b < batch; ++b) {
                           std::size_t off = (b * channels + c) * inner;
                           for (std::size_t i = 0; i < inner; ++i) {
                             double v = train ? scale_c * (g[off + i] - sum_g / n - (*xhat)[off + i] * sum_gx / n)
                                              : scale_c * g[off + i];
                             gx[off + i] += static_cast<float>(v);
                           }
                         }
                       }
                     });
}

Tensor softmax_lastdim(const Tensor& x) {
  std::size_t cols = x.shape().back();
  std::size_t rows = x.numel() / cols;
  auto d = x.data();
  auto out = std::make_shared<std::vector<float>>(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = d.data() + r * cols;
    float* o = out->data() + r * cols;
    float mx = in[0];
    for (std::size_t j = 0; j < cols; ++j) {
      if (!std::isfinite(in[j])) throw NumericError("softmax input contains a non-finite value");
      mx = std::max(mx, in[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    auto inv = static_cast<float>(1.0 / total);
    for (std::size_t j = 0; j < cols; ++j) o[j] *= inv;
  }
  std::vector<float> result = *out;
  return make_result("softmax", x.shape(), std::move(result), {x}, [out, rows, cols](const Node& node) {
    const auto& g = out_grad(node);
    float* gx = grad_of(node, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const float* y = out->data() + r * cols;
      const float* gr = g.data() + r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += static_cast<double>(gr[j]) * y[j];
      for (std::size_t j = 0; j < cols; ++j) gx[r * cols + j] += y[j] * static_cast<float>(gr[j] - dot);
    }
  });
}

}  // namespace nisnn
