#include "stereoagg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace stereoagg {

namespace {

template <typename Scalar>
Tensor<Scalar> make_result(const char* op, Shape shape, ArrayX<Scalar> values,
                           std::initializer_list<const Tensor<Scalar>*> inputs) {
  if (!values.allFinite()) throw NumericFault(op);
  Tensor<Scalar> out(std::move(shape), std::move(values));
  bool needs_grad = false;
  if (NoGradGuard::grad_enabled()) {
    for (const auto* t : inputs) needs_grad = needs_grad || t->requires_grad();
  }
  out.set_requires_grad(needs_grad);
  return out;
}

template <typename Scalar, typename Fn>
void record(const char* op, const Tensor<Scalar>& out, Fn&& fn) {
  if (out.requires_grad()) Tape<Scalar>::active().record(op, std::forward<Fn>(fn));
}

Index normalize_axis(Index axis, Index rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ContractViolation(std::string(op) + ": axis " + std::to_string(axis) +
                            " out of range for rank " + std::to_string(rank));
  }
  return axis;
}

// Splits a shape around one axis into (outer, extent, inner) loop counts.
struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& shape, Index axis) {
  AxisSplit s;
  for (Index i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i) s.inner *= shape[i];
  return s;
}

// Flat source index in a and b for every element of the broadcast output.
struct BroadcastPlan {
  Shape shape;
  std::vector<Index> a_index;
  std::vector<Index> b_index;
};

std::vector<Index> aligned_strides(const Shape& in, const Shape& out) {
  const std::size_t offset = out.size() - in.size();
  std::vector<Index> strides(out.size(), 0);
  Index stride = 1;
  for (std::size_t k = in.size(); k-- > 0;) {
    strides[k + offset] = in[k] == 1 ? 0 : stride;
    stride *= in[k];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.shape = broadcast_shape(a, b);
  const Index n = shape_numel(plan.shape);
  plan.a_index.resize(static_cast<std::size_t>(n));
  plan.b_index.resize(static_cast<std::size_t>(n));
  const auto sa = aligned_strides(a, plan.shape);
  const auto sb = aligned_strides(b, plan.shape);
  const std::size_t rank = plan.shape.size();
  std::vector<Index> counter(rank, 0);
  Index ia = 0;
  Index ib = 0;
  for (Index flat = 0; flat < n; ++flat) {
    plan.a_index[flat] = ia;
    plan.b_index[flat] = ib;
    for (std::size_t k = rank; k-- > 0;) {
      ++counter[k];
      ia += sa[k];
      ib += sb[k];
      if (counter[k] < plan.shape[k]) break;
      ia -= sa[k] * counter[k];
      ib -= sb[k] * counter[k];
      counter[k] = 0;
    }
  }
  return plan;
}

enum class Binary { add, sub, mul };

template <typename Scalar>
Tensor<Scalar> binary(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Binary kind, const char* op) {
  if (a.shape() == b.shape()) {
    ArrayX<Scalar> v;
    switch (kind) {
      case Binary::add: v = a.values() + b.values(); break;
      case Binary::sub: v = a.values() - b.values(); break;
      case Binary::mul: v = a.values() * b.values(); break;
    }
    auto out = make_result(op, a.shape(), std::move(v), {&a, &b});
    record(op, out, [an = a.node(), bn = b.node(), on = out.node(), kind] {
      if (!on->has_grad()) return;
      const auto& g = on->grad;
      switch (kind) {
        case Binary::add:
          if (an->requires_grad) an->accumulate(g);
          if (bn->requires_grad) bn->accumulate(g);
          break;
        case Binary::sub:
          if (an->requires_grad) an->accumulate(g);
          if (bn->requires_grad) bn->accumulate(-g);
          break;
        case Binary::mul:
          if (an->requires_grad) an->accumulate(g * bn->value);
          if (bn->requires_grad) bn->accumulate(g * an->value);
          break;
      }
    });
    return out;
  }

  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
  const Index n = static_cast<Index>(plan->a_index.size());
  ArrayX<Scalar> v(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (Index i = 0; i < n; ++i) {
    const Scalar x = av[plan->a_index[i]];
    const Scalar y = bv[plan->b_index[i]];
    v[i] = kind == Binary::add ? x + y : kind == Binary::sub ? x - y : x * y;
  }
  auto out = make_result(op, plan->shape, std::move(v), {&a, &b});
  record(op, out, [an = a.node(), bn = b.node(), on = out.node(), plan, kind] {
    if (!on->has_grad()) return;
    const auto& g = on->grad;
    const Index count = g.size();
    if (an->requires_grad) {
      ArrayX<Scalar> ga = ArrayX<Scalar>::Zero(an->value.size());
      for (Index i = 0; i < count; ++i) {
        const Scalar factor = kind == Binary::mul ? bn->value[plan->b_index[i]] : Scalar(1);
        ga[plan->a_index[i]] += g[i] * factor;
      }
      an->accumulate(ga);
    }
    if (bn->requires_grad) {
      ArrayX<Scalar> gb = ArrayX<Scalar>::Zero(bn->value.size());
      for (Index i = 0; i < count; ++i) {
        const Scalar factor = kind == Binary::mul ? an->value[plan->a_index[i]]
                              : kind == Binary::sub ? Scalar(-1)
                                                    : Scalar(1);
        gb[plan->b_index[i]] += g[i] * factor;
      }
      bn->accumulate(gb);
    }
  });
  return out;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    const Index ea = k < rank - a.size() ? 1 : a[k - (rank - a.size())];
    const Index eb = k < rank - b.size() ? 1 : b[k - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ContractViolation("cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    out[k] = ea == 1 ? eb : ea;
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary(a, b, Binary::add, "add");
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary(a, b, Binary::sub, "sub");
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary(a, b, Binary::mul, "mul");
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor) {
  auto out = make_result("scale", x.shape(), ArrayX<Scalar>(x.values() * factor), {&x});
  record("scale", out, [xn = x.node(), on = out.node(), factor] {
    if (on->has_grad()) xn->accumulate(on->grad * factor);
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& x, Scalar offset) {
  auto out = make_result("add_scalar", x.shape(), ArrayX<Scalar>(x.values() + offset), {&x});
  record("add_scalar", out, [xn = x.node(), on = out.node()] {
    if (on->has_grad()) xn->accumulate(on->grad);
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> neg(const Tensor<Scalar>& x) {
  return scale(x, Scalar(-1));
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  auto out = make_result("relu", x.shape(), ArrayX<Scalar>(x.values().max(Scalar(0))), {&x});
  record("relu", out, [xn = x.node(), on = out.node()] {
    if (!on->has_grad()) return;
    xn->accumulate((xn->value > Scalar(0)).select(on->grad, Scalar(0)));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& x) {
  auto out = make_result("abs", x.shape(), ArrayX<Scalar>(x.values().abs()), {&x});
  record("abs", out, [xn = x.node(), on = out.node()] {
    if (!on->has_grad()) return;
    const auto& v = xn->value;
    xn->accumulate((v > Scalar(0)).select(on->grad, (v < Scalar(0)).select(-on->grad, Scalar(0))));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  ArrayX<Scalar> v(1);
  v[0] = x.values().sum();
  auto out = make_result("sum", Shape{}, std::move(v), {&x});
  record("sum", out, [xn = x.node(), on = out.node()] {
    if (on->has_grad()) xn->accumulate(ArrayX<Scalar>::Constant(xn->value.size(), on->grad[0]));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  if (x.numel() == 0) throw ContractViolation("mean of an empty tensor");
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.numel()));
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x, Index axis) {
  axis = normalize_axis(axis, x.rank(), "sum");
  const AxisSplit s = split_at(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + axis);
  ArrayX<Scalar> v = ArrayX<Scalar>::Zero(s.outer * s.inner);
  const auto& xv = x.values();
  for (Index o = 0; o < s.outer; ++o)
    for (Index k = 0; k < s.extent; ++k)
      for (Index i = 0; i < s.inner; ++i) v[o * s.inner + i] += xv[(o * s.extent + k) * s.inner + i];
  auto out = make_result("sum_axis", std::move(shape), std::move(v), {&x});
  record("sum_axis", out, [xn = x.node(), on = out.node(), s] {
    if (!on->has_grad()) return;
    ArrayX<Scalar> g(xn->value.size());
    for (Index o = 0; o < s.outer; ++o)
      for (Index k = 0; k < s.extent; ++k)
        for (Index i = 0; i < s.inner; ++i) g[(o * s.extent + k) * s.inner + i] = on->grad[o * s.inner + i];
    xn->accumulate(g);
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis) {
  axis = normalize_axis(axis, x.rank(), "softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  const auto& xv = x.values();
  ArrayX<Scalar> v(xv.size());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.extent * s.inner + i;
      Scalar top = xv[base];
      for (Index k = 1; k < s.extent; ++k) top = std::max(top, xv[base + k * s.inner]);
      Scalar total = 0;
      for (Index k = 0; k < s.extent; ++k) {
        const Scalar e = std::exp(xv[base + k * s.inner] - top);
        v[base + k * s.inner] = e;
        total += e;
      }
      for (Index k = 0; k < s.extent; ++k) v[base + k * s.inner] /= total;
    }
  }
  auto out = make_result("softmax", x.shape(), std::move(v), {&x});
  record("softmax", out, [xn = x.node(), on = out.node(), s] {
    if (!on->has_grad()) return;
    const auto& y = on->value;
    const auto& gy = on->grad;
    ArrayX<Scalar> g(y.size());
    for (Index o = 0; o < s.outer; ++o) {
      for (Index i = 0; i < s.inner; ++i) {
        const Index base = o * s.extent * s.inner + i;
        Scalar dot = 0;
        for (Index k = 0; k < s.extent; ++k) dot += gy[base + k * s.inner] * y[base + k * s.inner];
        for (Index k = 0; k < s.extent; ++k) {
          const Index at = base + k * s.inner;
          g[at] = y[at] * (gy[at] - dot);
        }
      }
    }
    xn->accumulate(g);
  });
  return out;
}

template <typename Scalar>
MaxResult<Scalar> max_reduce(const Tensor<Scalar>& x, Index axis) {
  axis = normalize_axis(axis, x.rank(), "max_reduce");
  const AxisSplit s = split_at(x.shape(), axis);
  if (s.extent == 0) throw ContractViolation("max_reduce over an empty axis");
  Shape shape = x.shape();
  shape.erase(shape.begin() + axis);
  const auto& xv = x.values();
  ArrayX<Scalar> v(s.outer * s.inner);
  std::vector<Index> winners(static_cast<std::size_t>(s.outer * s.inner));
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.extent * s.inner + i;
      Index best = 0;
      for (Index k = 1; k < s.extent; ++k) {
        if (xv[base + k * s.inner] > xv[base + best * s.inner]) best = k;
      }
      v[o * s.inner + i] = xv[base + best * s.inner];
      winners[o * s.inner + i] = best;
    }
  }
  auto out = make_result("max_reduce", std::move(shape), std::move(v), {&x});
  record("max_reduce", out, [xn = x.node(), on = out.node(), s, winners] {
    if (!on->has_grad()) return;
    ArrayX<Scalar> g = ArrayX<Scalar>::Zero(xn->value.size());
    for (Index o = 0; o < s.outer; ++o)
      for (Index i = 0; i < s.inner; ++i) {
        const Index r = o * s.inner + i;
        g[(o * s.extent + winners[r]) * s.inner + i] = on->grad[r];
      }
    xn->accumulate(g);
  });
  return {out, std::move(winners)};
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ContractViolation("reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  auto out = make_result("reshape", std::move(shape), x.values(), {&x});
  record("reshape", out, [xn = x.node(), on = out.node()] {
    if (on->has_grad()) xn->accumulate(on->grad);
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> roll(const Tensor<Scalar>& x, Index axis, Index shift) {
  axis = normalize_axis(axis, x.rank(), "roll");
  const AxisSplit s = split_at(x.shape(), axis);
  if (s.extent == 0) return x;
  const Index n = s.extent;
  const Index k0 = ((shift % n) + n) % n;
  const auto& xv = x.values();
  ArrayX<Scalar> v(xv.size());
  for (Index o = 0; o < s.outer; ++o)
    for (Index k = 0; k < n; ++k) {
      const Index src = (k - k0 + n) % n;
      v.segment((o * n + k) * s.inner, s.inner) = xv.segment((o * n + src) * s.inner, s.inner);
    }
  auto out = make_result("roll", x.shape(), std::move(v), {&x});
  record("roll", out, [xn = x.node(), on = out.node(), s, k0] {
    if (!on->has_grad()) return;
    const Index n = s.extent;
    ArrayX<Scalar> g(on->grad.size());
    for (Index o = 0; o < s.outer; ++o)
      for (Index k = 0; k < n; ++k) {
        const Index src = (k - k0 + n) % n;
        g.segment((o * n + src) * s.inner, s.inner) = on->grad.segment((o * n + k) * s.inner, s.inner);
      }
    xn->accumulate(g);
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, Index axis) {
  if (parts.empty()) throw ContractViolation("concat of zero tensors");
  axis = normalize_axis(axis, parts.front().rank(), "concat");
  Shape shape = parts.front().shape();
  shape[axis] = 0;
  for (const auto& p : parts) {
    Shape expect = parts.front().shape();
    Shape got = p.shape();
    if (got.size() != expect.size()) throw ContractViolation("concat rank mismatch");
    expect[axis] = got[axis] = 0;
    if (got != expect) {
      throw ContractViolation("concat shape mismatch " + shape_string(parts.front().shape()) + " vs " +
                              shape_string(p.shape()));
    }
    shape[axis] += p.dim(axis);
  }
  const AxisSplit total = split_at(shape, axis);
  ArrayX<Scalar> v(shape_numel(shape));
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    const Index width = p.dim(axis) * total.inner;
    for (Index o = 0; o < total.outer; ++o) {
      v.segment(o * total.extent * total.inner + offset, width) = p.values().segment(o * width, width);
    }
    offsets.push_back(offset);
    offset += width;
  }
  auto out = make_result("concat", std::move(shape), std::move(v), {});
  bool needs_grad = false;
  for (const auto& p : parts) needs_grad = needs_grad || p.requires_grad();
  out.set_requires_grad(needs_grad && NoGradGuard::grad_enabled());
  std::vector<std::shared_ptr<typename Tensor<Scalar>::Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  record("concat", out, [nodes, on = out.node(), offsets, total] {
    if (!on->has_grad()) return;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      auto& pn = *nodes[j];
      if (!pn.requires_grad) continue;
      const Index width = pn.value.size() / total.outer;
      ArrayX<Scalar> g(pn.value.size());
      for (Index o = 0; o < total.outer; ++o) {
        g.segment(o * width, width) = on->grad.segment(o * total.extent * total.inner + offsets[j], width);
      }
      pn.accumulate(g);
    }
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> stack(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw ContractViolation("stack of zero tensors");
  std::vector<Tensor<Scalar>> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts.front().shape()) {
      throw ContractViolation("stack shape mismatch " + shape_string(parts.front().shape()) + " vs " +
                              shape_string(p.shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, s));
  }
  return concat(lifted, 0);
}

template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, Index axis, Index start, Index length) {
  axis = normalize_axis(axis, x.rank(), "slice");
  const AxisSplit s = split_at(x.shape(), axis);
  if (start < 0 || length < 0 || start + length > s.extent) {
    throw ContractViolation("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                            ") out of range for extent " + std::to_string(s.extent));
  }
  Shape shape = x.shape();
  shape[axis] = length;
  const Index width = length * s.inner;
  ArrayX<Scalar> v(s.outer * width);
  for (Index o = 0; o < s.outer; ++o) {
    v.segment(o * width, width) = x.values().segment((o * s.extent + start) * s.inner, width);
  }
  auto out = make_result("slice", std::move(shape), std::move(v), {&x});
  record("slice", out, [xn = x.node(), on = out.node(), s, start, width] {
    if (!on->has_grad()) return;
    ArrayX<Scalar> g = ArrayX<Scalar>::Zero(xn->value.size());
    for (Index o = 0; o < s.outer; ++o) {
      g.segment((o * s.extent + start) * s.inner, width) = on->grad.segment(o * width, width);
    }
    xn->accumulate(g);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Convolution core. Every convolution variant walks the same (coarse
// position, tap, fine position) triples: fine = coarse * stride + tap - pad.
// For conv3d the fine grid is the input and the coarse grid the output; for
// the transpose it is the other way round.

namespace {

struct ConvGeometry {
  Triple fine{};    // spatial extents of the high-resolution side
  Triple coarse{};  // spatial extents of the strided side
  Triple kernel{};
  Triple stride{};
  Triple pad{};
};

template <typename Visit>
void for_each_tap(const ConvGeometry& g, Visit&& visit) {
  const Index taps_hw = g.kernel[1] * g.kernel[2];
  for (Index od = 0; od < g.coarse[0]; ++od)
    for (Index oh = 0; oh < g.coarse[1]; ++oh)
      for (Index ow = 0; ow < g.coarse[2]; ++ow) {
        const Index coarse_flat = (od * g.coarse[1] + oh) * g.coarse[2] + ow;
        for (Index td = 0; td < g.kernel[0]; ++td) {
          const Index id = od * g.stride[0] + td - g.pad[0];
          if (id < 0 || id >= g.fine[0]) continue;
          for (Index th = 0; th < g.kernel[1]; ++th) {
            const Index ih = oh * g.stride[1] + th - g.pad[1];
            if (ih < 0 || ih >= g.fine[1]) continue;
            for (Index tw = 0; tw < g.kernel[2]; ++tw) {
              const Index iw = ow * g.stride[2] + tw - g.pad[2];
              if (iw < 0 || iw >= g.fine[2]) continue;
              visit(coarse_flat, td * taps_hw + th * g.kernel[2] + tw, (id * g.fine[1] + ih) * g.fine[2] + iw);
            }
          }
        }
      }
}

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// dst[dst_pos] += src[src_pos] * K_tap   (src has ci channels, dst has co)
template <typename Scalar>
struct TapKernels {
  const Scalar* kernel;
  Index ci;
  Index co;

  Eigen::Map<const RowMat<Scalar>> tap(Index t) const {
    return Eigen::Map<const RowMat<Scalar>>(kernel + t * ci * co, ci, co);
  }
};

template <typename Scalar>
void apply_forward(const Scalar* src, Index src_pos, Scalar* dst, Index dst_pos, const TapKernels<Scalar>& k,
                   Index t) {
  Eigen::Map<const RowVec<Scalar>> x(src + src_pos * k.ci, k.ci);
  Eigen::Map<RowVec<Scalar>> y(dst + dst_pos * k.co, k.co);
  y.noalias() += x * k.tap(t);
}

template <typename Scalar>
void apply_adjoint(const Scalar* grad_dst, Index dst_pos, Scalar* grad_src, Index src_pos,
                   const TapKernels<Scalar>& k, Index t) {
  Eigen::Map<const RowVec<Scalar>> gy(grad_dst + dst_pos * k.co, k.co);
  Eigen::Map<RowVec<Scalar>> gx(grad_src + src_pos * k.ci, k.ci);
  gx.noalias() += gy * k.tap(t).transpose();
}

template <typename Scalar>
void accumulate_kernel(const Scalar* src, Index src_pos, const Scalar* grad_dst, Index dst_pos, Scalar* grad_kernel,
                       Index ci, Index co, Index t) {
  Eigen::Map<const RowVec<Scalar>> x(src + src_pos * ci, ci);
  Eigen::Map<const RowVec<Scalar>> gy(grad_dst + dst_pos * co, co);
  Eigen::Map<RowMat<Scalar>> gk(grad_kernel + t * ci * co, ci, co);
  gk.noalias() += x.transpose() * gy;
}

Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

void require_odd_kernel(const Triple& k, const char* op) {
  for (Index e : k) {
    if (e <= 0 || e % 2 == 0) throw ContractViolation(std::string(op) + ": kernel extents must be odd");
  }
}

// Shared implementation behind conv2d and conv3d; `in` is [D,H,W,Ci] and
// `kernel` is [kd,kh,kw,Ci,Co] in memory regardless of the public ranks.
template <typename Scalar>
Tensor<Scalar> conv_impl(const char* op, const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                         const Triple& extents, const Triple& kernel_extents, Index ci, Index co, Triple stride,
                         Shape (*output_shape)(const Triple&, Index)) {
  require_odd_kernel(kernel_extents, op);
  for (Index s : stride) {
    if (s <= 0) throw ContractViolation(std::string(op) + ": stride must be positive");
  }
  ConvGeometry g;
  g.fine = extents;
  g.kernel = kernel_extents;
  g.stride = stride;
  for (int a = 0; a < 3; ++a) {
    g.coarse[a] = ceil_div(extents[a], stride[a]);
    g.pad[a] = kernel_extents[a] / 2;
  }
  const Index out_positions = g.coarse[0] * g.coarse[1] * g.coarse[2];
  ArrayX<Scalar> v = ArrayX<Scalar>::Zero(out_positions * co);
  const TapKernels<Scalar> k{kernel.values().data(), ci, co};
  const Scalar* in = input.values().data();
  for_each_tap(g, [&](Index o, Index t, Index i) { apply_forward(in, i, v.data(), o, k, t); });

  auto out = make_result(op, output_shape(g.coarse, co), std::move(v), {&input, &kernel});
  record(op, out, [xn = input.node(), kn = kernel.node(), on = out.node(), g, ci, co] {
    if (!on->has_grad()) return;
    const Scalar* gy = on->grad.data();
    if (xn->requires_grad) {
      ArrayX<Scalar> gx = ArrayX<Scalar>::Zero(xn->value.size());
      const TapKernels<Scalar> k{kn->value.data(), ci, co};
      for_each_tap(g, [&](Index o, Index t, Index i) { apply_adjoint(gy, o, gx.data(), i, k, t); });
      xn->accumulate(gx);
    }
    if (kn->requires_grad) {
      ArrayX<Scalar> gk = ArrayX<Scalar>::Zero(kn->value.size());
      const Scalar* x = xn->value.data();
      for_each_tap(g, [&](Index o, Index t, Index i) { accumulate_kernel(x, i, gy, o, gk.data(), ci, co, t); });
      kn->accumulate(gk);
    }
  });
  return out;
}

Shape shape_hwc(const Triple& coarse, Index c) { return {coarse[1], coarse[2], c}; }
Shape shape_dhwc(const Triple& coarse, Index c) { return {coarse[0], coarse[1], coarse[2], c}; }

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, Index stride) {
  if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(2) != input.dim(2)) {
    throw ContractViolation("conv2d: input " + shape_string(input.shape()) + " incompatible with kernel " +
                            shape_string(kernel.shape()));
  }
  return conv_impl<Scalar>("conv2d", input, kernel, {1, input.dim(0), input.dim(1)},
                           {1, kernel.dim(0), kernel.dim(1)}, kernel.dim(2), kernel.dim(3), {1, stride, stride},
                           &shape_hwc);
}

template <typename Scalar>
Tensor<Scalar> conv3d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, Triple stride) {
  if (input.rank() != 4 || kernel.rank() != 5 || kernel.dim(3) != input.dim(3)) {
    throw ContractViolation("conv3d: input " + shape_string(input.shape()) + " incompatible with kernel " +
                            shape_string(kernel.shape()));
  }
  return conv_impl<Scalar>("conv3d", input, kernel, {input.dim(0), input.dim(1), input.dim(2)},
                           {kernel.dim(0), kernel.dim(1), kernel.dim(2)}, kernel.dim(3), kernel.dim(4), stride,
                           &shape_dhwc);
}

template <typename Scalar>
Tensor<Scalar> conv3d_transpose(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, Triple stride,
                                const Shape& output_shape) {
  if (input.rank() != 4 || kernel.rank() != 5 || kernel.dim(3) != input.dim(3) || output_shape.size() != 4 ||
      output_shape[3] != kernel.dim(4)) {
    throw ContractViolation("conv3d_transpose: input " + shape_string(input.shape()) + ", kernel " +
                            shape_string(kernel.shape()) + ", output " + shape_string(output_shape));
  }
  ConvGeometry g;
  g.kernel = {kernel.dim(0), kernel.dim(1), kernel.dim(2)};
  g.stride = stride;
  require_odd_kernel(g.kernel, "conv3d_transpose");
  for (int a = 0; a < 3; ++a) {
    g.coarse[a] = input.dim(a);
    g.fine[a] = output_shape[a];
    g.pad[a] = g.kernel[a] / 2;
    if (stride[a] <= 0 || output_shape[a] != stride[a] * input.dim(a)) {
      throw ContractViolation("conv3d_transpose: output extent " + std::to_string(output_shape[a]) +
                              " inconsistent with stride " + std::to_string(stride[a]) + " and input extent " +
                              std::to_string(input.dim(a)));
    }
  }
  const Index ci = kernel.dim(3);
  const Index co = kernel.dim(4);
  ArrayX<Scalar> v = ArrayX<Scalar>::Zero(shape_numel(output_shape));
  const TapKernels<Scalar> k{kernel.values().data(), ci, co};
  const Scalar* in = input.values().data();
  // Here the coarse side is the input: scatter each input row through every tap.
  for_each_tap(g, [&](Index o, Index t, Index i) { apply_forward(in, o, v.data(), i, k, t); });

  auto out = make_result("conv3d_transpose", output_shape, std::move(v), {&input, &kernel});
  record("conv3d_transpose", out, [xn = input.node(), kn = kernel.node(), on = out.node(), g, ci, co] {
    if (!on->has_grad()) return;
    const Scalar* gy = on->grad.data();
    if (xn->requires_grad) {
      ArrayX<Scalar> gx = ArrayX<Scalar>::Zero(xn->value.size());
      const TapKernels<Scalar> k{kn->value.data(), ci, co};
      for_each_tap(g, [&](Index o, Index t, Index i) { apply_adjoint(gy, i, gx.data(), o, k, t); });
      xn->accumulate(gx);
    }
    if (kn->requires_grad) {
      ArrayX<Scalar> gk = ArrayX<Scalar>::Zero(kn->value.size());
      const Scalar* x = xn->value.data();
      for_each_tap(g, [&](Index o, Index t, Index i) { accumulate_kernel(x, o, gy, i, gk.data(), ci, co, t); });
      kn->accumulate(gk);
    }
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& input, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          Mode mode, BatchNormState<Scalar>& state) {
  if (input.rank() < 1) throw ContractViolation("batch_norm on a scalar");
  const Index channels = input.dim(-1);
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw ContractViolation("batch_norm: gamma/beta must be [" + std::to_string(channels) + "], got " +
                            shape_string(gamma.shape()) + " and " + shape_string(beta.shape()));
  }
  const Index positions = input.numel() / channels;
  if (positions == 0) throw ContractViolation("batch_norm on an empty tensor");
  using Mat = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> x(input.values().data(), positions, channels);
  const Scalar eps = static_cast<Scalar>(kBatchNormEpsilon);

  ArrayX<Scalar> mu;
  ArrayX<Scalar> var;
  if (mode == Mode::train) {
    mu = x.colwise().mean().transpose();
    var = (x.rowwise() - mu.transpose()).square().colwise().mean().transpose();
    const auto momentum = static_cast<Scalar>(kBatchNormMomentum);
    if (!state.initialized || state.running_mean.size() != channels) {
      state.running_mean = mu;
      state.running_var = var;
      state.initialized = true;
    } else {
      state.running_mean = momentum * state.running_mean + (Scalar(1) - momentum) * mu;
      state.running_var = momentum * state.running_var + (Scalar(1) - momentum) * var;
    }
  } else {
    if (!state.initialized || state.running_mean.size() != channels) {
      throw ConfigError("batch_norm in eval mode without initialized running statistics");
    }
    mu = state.running_mean;
    var = state.running_var;
  }
  const ArrayX<Scalar> inv_std = (var + eps).rsqrt();
  Mat xhat = (x.rowwise() - mu.transpose()).rowwise() * inv_std.transpose();
  Mat y = (xhat.rowwise() * gamma.values().transpose()).rowwise() + beta.values().transpose();
  ArrayX<Scalar> values = Eigen::Map<ArrayX<Scalar>>(y.data(), y.size());

  auto out = make_result("batch_norm", input.shape(), std::move(values), {&input, &gamma, &beta});
  record("batch_norm", out,
         [xn = input.node(), gn = gamma.node(), bn = beta.node(), on = out.node(), xhat = std::move(xhat), inv_std,
          positions, channels, mode] {
           if (!on->has_grad()) return;
           Eigen::Map<const Mat> gy(on->grad.data(), positions, channels);
           if (gn->requires_grad) gn->accumulate((gy * xhat).colwise().sum().transpose());
           if (bn->requires_grad) bn->accumulate(gy.colwise().sum().transpose());
           if (!xn->requires_grad) return;
           const ArrayX<Scalar> scale = gn->value * inv_std;
           Mat gx;
           if (mode == Mode::train) {
             // d/dx of gamma * (x - mean) / sqrt(var + eps) with batch statistics.
             const auto m = static_cast<Scalar>(positions);
             const ArrayX<Scalar> sum_gy = gy.colwise().sum().transpose();
             const ArrayX<Scalar> sum_gy_xhat = (gy * xhat).colwise().sum().transpose();
             gx = ((gy * m).rowwise() - sum_gy.transpose() - (xhat.rowwise() * sum_gy_xhat.transpose())).rowwise() *
                  (scale / m).transpose();
           } else {
             gx = gy.rowwise() * scale.transpose();
           }
           xn->accumulate(Eigen::Map<const ArrayX<Scalar>>(gx.data(), gx.size()));
         });
  return out;
}

#define STEREOAGG_INSTANTIATE_OPS(S)                                                                     \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                            \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                            \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                            \
  template Tensor<S> scale(const Tensor<S>&, S);                                                         \
  template Tensor<S> add_scalar(const Tensor<S>&, S);                                                    \
  template Tensor<S> neg(const Tensor<S>&);                                                              \
  template Tensor<S> relu(const Tensor<S>&);                                                             \
  template Tensor<S> abs(const Tensor<S>&);                                                              \
  template Tensor<S> sum(const Tensor<S>&);                                                              \
  template Tensor<S> sum(const Tensor<S>&, Index);                                                       \
  template Tensor<S> mean(const Tensor<S>&);                                                             \
  template Tensor<S> softmax(const Tensor<S>&, Index);                                                   \
  template MaxResult<S> max_reduce(const Tensor<S>&, Index);                                             \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                                   \
  template Tensor<S> roll(const Tensor<S>&, Index, Index);                                               \
  template Tensor<S> concat(const std::vector<Tensor<S>>&, Index);                                       \
  template Tensor<S> stack(const std::vector<Tensor<S>>&);                                               \
  template Tensor<S> slice(const Tensor<S>&, Index, Index, Index);                                       \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, Index);                                  \
  template Tensor<S> conv3d(const Tensor<S>&, const Tensor<S>&, Triple);                                 \
  template Tensor<S> conv3d_transpose(const Tensor<S>&, const Tensor<S>&, Triple, const Shape&);         \
  template Tensor<S> batch_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Mode, BatchNormState<S>&);

STEREOAGG_INSTANTIATE_OPS(float)
STEREOAGG_INSTANTIATE_OPS(double)

}  // namespace stereoagg
