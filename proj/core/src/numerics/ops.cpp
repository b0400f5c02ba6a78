#include "fdp/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fdp/numerics/kernels.hpp"

namespace fdp::num {
namespace {

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

std::vector<std::size_t> strides_of(const Shape& dims) {
  std::vector<std::size_t> st(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) st[i - 1] = st[i] * dims[i];
  return st;
}

// Output extents and per-operand strides (0 on broadcast axes).
struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa, sb;
  bool trivial = false;
};

Broadcast make_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": rank mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  Broadcast bc;
  bc.out.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " +
                       shape_string(b));
    }
    bc.out[i] = std::max(a[i], b[i]);
  }
  bc.trivial = (a == b);
  auto sa = strides_of(a);
  auto sb = strides_of(b);
  bc.sa.resize(a.size());
  bc.sb.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    bc.sa[i] = a[i] == 1 ? 0 : sa[i];
    bc.sb[i] = b[i] == 1 ? 0 : sb[i];
  }
  return bc;
}

// Calls f(out_index, a_offset, b_offset) over the broadcast output in
// row-major order.
template <class F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t total = element_count(bc.out);
  const std::size_t r = bc.out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t o = 0; o < total; ++o) {
    f(o, oa, ob);
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      oa += bc.sa[ax];
      ob += bc.sb[ax];
      if (idx[ax] < bc.out[ax]) break;
      oa -= bc.sa[ax] * idx[ax];
      ob -= bc.sb[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

template <class T, class Fwd, class GradA, class GradB>
Var<T> binary_broadcast(const char* name, const Var<T>& a, const Var<T>& b, Fwd fwd, GradA ga,
                        GradB gb) {
  Graph<T>& g = a.graph();
  const Broadcast bc = make_broadcast(a.dims(), b.dims(), name);
  Tensor<T> out(bc.out);
  const T* av = a.value().ptr();
  const T* bv = b.value().ptr();
  T* ov = out.ptr();
  if (bc.trivial) {
    for (std::size_t i = 0; i < out.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  } else {
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { ov[o] = fwd(av[ia], bv[ib]); });
  }
  const std::size_t ia_id = a.id(), ib_id = b.id();
  return g.record(name, std::move(out), {a, b}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    const T* x = gr.value(ia_id).ptr();
    const T* y = gr.value(ib_id).ptr();
    const T* d = dy.ptr();
    if (gr.requires_grad(ia_id)) {
      T* dx = gr.grad_accumulator(ia_id).ptr();
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { dx[i] += ga(d[o], x[i], y[j]); });
    }
    if (gr.requires_grad(ib_id)) {
      T* dyb = gr.grad_accumulator(ib_id).ptr();
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { dyb[j] += gb(d[o], x[i], y[j]); });
    }
  });
}

template <class T, class Fwd, class Deriv>
Var<T> unary(const char* name, const Var<T>& x, Fwd fwd, Deriv deriv) {
  Graph<T>& g = x.graph();
  Tensor<T> out(x.dims());
  const T* xv = x.value().ptr();
  T* ov = out.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) ov[i] = fwd(xv[i]);
  const std::size_t xid = x.id();
  const std::size_t oid = g.size();
  return g.record(name, std::move(out), {x}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    const T* in = gr.value(xid).ptr();
    const T* o = gr.value(oid).ptr();
    const T* d = dy.ptr();
    T* dx = gr.grad_accumulator(xid).ptr();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += d[i] * deriv(in[i], o[i]);
  });
}

void require_rank(const Shape& dims, std::size_t rank, const char* op) {
  if (dims.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(dims));
  }
}

}  // namespace

// ---- element-wise ----------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary_broadcast<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T d, T, T) { return d; },
      [](T d, T, T) { return d; });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary_broadcast<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T d, T, T) { return d; },
      [](T d, T, T) { return -d; });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary_broadcast<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T d, T, T y) { return d * y; },
      [](T d, T x, T) { return d * x; });
}

template <class T>
Var<T> scale(const Var<T>& x, T factor) {
  return unary<T>("scale", x, [=](T v) { return v * factor; }, [=](T, T) { return factor; });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return unary<T>("relu", x, [](T v) { return v > T(0) ? v : T(0); },
                  [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary<T>("leaky_relu", x, [=](T v) { return v > T(0) ? v : slope * v; },
                  [=](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> abs(const Var<T>& x) {
  return unary<T>("abs", x, [](T v) { return std::abs(v); },
                  [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Var<T> dropout(const Var<T>& x, T rate, bool training, std::mt19937_64& rng) {
  if (rate < T(0) || rate >= T(1)) throw UsageError("dropout: rate must be in [0, 1)");
  if (!training || rate == T(0)) return x;
  Graph<T>& g = x.graph();
  const T keep = T(1) - rate;
  Tensor<T> mask(x.dims());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& m : mask.data()) m = u(rng) < static_cast<double>(keep) ? T(1) / keep : T(0);
  Tensor<T> out(x.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * mask[i];
  const std::size_t xid = x.id();
  return g.record("dropout", std::move(out), {x}, [xid, mask = std::move(mask)](Graph<T>& gr, const Tensor<T>& dy) {
    T* dx = gr.grad_accumulator(xid).ptr();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
  });
}

// ---- shape -----------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& x, Shape dims) {
  Graph<T>& g = x.graph();
  Tensor<T> out = x.value().reshaped(std::move(dims));
  const std::size_t xid = x.id();
  return g.record("reshape", std::move(out), {x}, [xid](Graph<T>& gr, const Tensor<T>& dy) {
    T* dx = gr.grad_accumulator(xid).ptr();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

template <class T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.dims();
  if (perm.size() != in.size()) throw ShapeError("permute: permutation rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_dims(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out_dims[i] = in[perm[i]];
  const auto in_strides = strides_of(in);
  // Broadcast helper doubles as a strided walker: sa = gathered input strides.
  Broadcast walk;
  walk.out = out_dims;
  walk.sa.resize(in.size());
  walk.sb.assign(in.size(), 0);
  for (std::size_t i = 0; i < in.size(); ++i) walk.sa[i] = in_strides[perm[i]];

  Graph<T>& g = x.graph();
  Tensor<T> out(out_dims);
  const T* xv = x.value().ptr();
  T* ov = out.ptr();
  for_each_broadcast(walk, [&](std::size_t o, std::size_t i, std::size_t) { ov[o] = xv[i]; });
  const std::size_t xid = x.id();
  return g.record("permute", std::move(out), {x}, [xid, walk](Graph<T>& gr, const Tensor<T>& dy) {
    T* dx = gr.grad_accumulator(xid).ptr();
    const T* d = dy.ptr();
    for_each_broadcast(walk, [&](std::size_t o, std::size_t i, std::size_t) { dx[i] += d[o]; });
  });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().dims();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_dims = first;
  out_dims[axis] = 0;
  for (const auto& p : parts) {
    const Shape& d = p.dims();
    if (d.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (i != axis && d[i] != first[i]) {
        throw ShapeError("concat: extent mismatch " + shape_string(d) + " vs " + shape_string(first));
      }
    }
    out_dims[axis] += d[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  Graph<T>& g = parts.front().graph();
  Tensor<T> out(out_dims);
  std::vector<std::size_t> ids, widths;
  std::size_t offset = 0;
  const std::size_t out_row = out_dims[axis] * inner;
  for (const auto& p : parts) {
    const std::size_t w = p.dims()[axis] * inner;
    const T* src = p.value().ptr();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * w, src + (o + 1) * w, out.ptr() + o * out_row + offset);
    }
    ids.push_back(p.id());
    widths.push_back(w);
    offset += w;
  }
  return g.record("concat", std::move(out), parts, [=](Graph<T>& gr, const Tensor<T>& dy) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t w = widths[k];
      if (gr.requires_grad(ids[k])) {
        T* dx = gr.grad_accumulator(ids[k]).ptr();
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = dy.ptr() + o * out_row + off;
          for (std::size_t i = 0; i < w; ++i) dx[o * w + i] += src[i];
        }
      }
      off += w;
    }
  });
}

template <class T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& in = x.dims();
  if (axis >= in.size() || begin >= end || end > in[axis]) {
    throw ShapeError("slice: invalid range on " + shape_string(in));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  Shape out_dims = in;
  out_dims[axis] = end - begin;
  const std::size_t in_row = in[axis] * inner;
  const std::size_t w = (end - begin) * inner;
  const std::size_t off = begin * inner;

  Graph<T>& g = x.graph();
  Tensor<T> out(out_dims);
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = x.value().ptr() + o * in_row + off;
    std::copy(src, src + w, out.ptr() + o * w);
  }
  const std::size_t xid = x.id();
  return g.record("slice", std::move(out), {x}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    T* dx = gr.grad_accumulator(xid).ptr();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < w; ++i) dx[o * in_row + off + i] += dy[o * w + i];
    }
  });
}

// ---- reductions / linear algebra ------------------------------------------

template <class T>
Var<T> sum(const Var<T>& x) {
  Graph<T>& g = x.graph();
  double acc = 0;
  for (T v : x.value().data()) acc += v;
  const std::size_t xid = x.id();
  return g.record("sum", Tensor<T>::scalar(static_cast<T>(acc)), {x}, [xid](Graph<T>& gr, const Tensor<T>& dy) {
    for (auto& v : gr.grad_accumulator(xid).data()) v += dy[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank(a.dims(), 2, "matmul");
  require_rank(b.dims(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ " + shape_string(a.dims()) + " * " + shape_string(b.dims()));
  }
  Graph<T>& g = a.graph();
  Tensor<T> out(Shape{m, n});
  kernels::gemm_nn(m, n, k, a.value().ptr(), b.value().ptr(), out.ptr());
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("matmul", std::move(out), {a, b}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    if (gr.requires_grad(ia)) {
      kernels::gemm_nt(m, k, n, dy.ptr(), gr.value(ib).ptr(), gr.grad_accumulator(ia).ptr());
    }
    if (gr.requires_grad(ib)) {
      kernels::gemm_tn(k, n, m, gr.value(ia).ptr(), dy.ptr(), gr.grad_accumulator(ib).ptr());
    }
  });
}

template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  require_rank(a.dims(), 3, "bmm");
  require_rank(b.dims(), 3, "bmm");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  if (b.dim(0) != batch || bk != k) {
    throw ShapeError("bmm: incompatible " + shape_string(a.dims()) + " and " + shape_string(b.dims()) +
                     (transpose_b ? " (transposed)" : ""));
  }
  Graph<T>& g = a.graph();
  Tensor<T> out(Shape{batch, m, n});
  const T* av = a.value().ptr();
  const T* bv = b.value().ptr();
  for (std::size_t i = 0; i < batch; ++i) {
    if (transpose_b) {
      kernels::gemm_nt(m, n, k, av + i * m * k, bv + i * n * k, out.ptr() + i * m * n);
    } else {
      kernels::gemm_nn(m, n, k, av + i * m * k, bv + i * k * n, out.ptr() + i * m * n);
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("bmm", std::move(out), {a, b}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    const T* x = gr.value(ia).ptr();
    const T* y = gr.value(ib).ptr();
    for (std::size_t i = 0; i < batch; ++i) {
      const T* d = dy.ptr() + i * m * n;
      if (gr.requires_grad(ia)) {
        T* dx = gr.grad_accumulator(ia).ptr() + i * m * k;
        if (transpose_b) {
          kernels::gemm_nn(m, k, n, d, y + i * n * k, dx);
        } else {
          kernels::gemm_nt(m, k, n, d, y + i * k * n, dx);
        }
      }
      if (gr.requires_grad(ib)) {
        if (transpose_b) {
          kernels::gemm_tn(n, k, m, d, x + i * m * k, gr.grad_accumulator(ib).ptr() + i * n * k);
        } else {
          kernels::gemm_tn(k, n, m, x + i * m * k, d, gr.grad_accumulator(ib).ptr() + i * k * n);
        }
      }
    }
  });
}

template <class T>
Var<T> softmax(const Var<T>& x) {
  const Shape& dims = x.dims();
  if (dims.empty()) throw ShapeError("softmax: empty axis");
  const std::size_t cols = dims.back();
  const std::size_t rows = x.value().size() / cols;
  Graph<T>& g = x.graph();
  Tensor<T> out(dims);
  const T* xv = x.value().ptr();
  T* ov = out.ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv + r * cols;
    T* o = ov + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  const std::size_t xid = x.id();
  const std::size_t oid = g.size();
  return g.record("softmax", std::move(out), {x}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    const T* y = gr.value(oid).ptr();
    T* dx = gr.grad_accumulator(xid).ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = y + r * cols;
      const T* dr = dy.ptr() + r * cols;
      T inner = 0;
      for (std::size_t c = 0; c < cols; ++c) inner += yr[c] * dr[c];
      for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += yr[c] * (dr[c] - inner);
    }
  });
}

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const OptVar<T>& bias) {
  Var<T> y = matmul(x, weight);
  if (bias) y = add(y, reshape(*bias, Shape{1, bias->value().size()}));
  return y;
}

// ---- convolution / pooling -------------------------------------------------

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const OptVar<T>& bias, Conv2dOptions opts) {
  require_rank(x.dims(), 4, "conv2d");
  require_rank(weight.dims(), 4, "conv2d weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  const std::size_t groups = opts.groups, stride = opts.stride, pad = opts.padding;
  if (groups == 0 || stride == 0) throw ShapeError("conv2d: groups and stride must be positive");
  if (cin % groups != 0 || cout % groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(cin) + "->" + std::to_string(cout) +
                     " not divisible by groups " + std::to_string(groups));
  }
  const std::size_t cig = cin / groups, cog = cout / groups;
  if (weight.dim(1) != cig || weight.dim(3) != k) {
    throw ShapeError("conv2d: weight " + shape_string(weight.dims()) + " incompatible with input " +
                     shape_string(x.dims()));
  }
  if (h + 2 * pad < k || w + 2 * pad < k ||
      (!opts.floor_mode && ((h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0))) {
    throw ShapeError("conv2d: extent " + shape_string(x.dims()) + " not compatible with kernel " +
                     std::to_string(k) + ", stride " + std::to_string(stride) + ", padding " + std::to_string(pad));
  }
  if (bias && bias->value().size() != cout) throw ShapeError("conv2d: bias size mismatch");
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
  const kernels::ConvGeometry geo{cig, h, w, k, k, stride, pad, oh, ow};
  const std::size_t plane = oh * ow;
  const std::size_t rows = cig * k * k;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  Graph<T>& g = x.graph();
  Tensor<T> out(Shape{n, cout, oh, ow});
  std::vector<T> col(direct ? 0 : rows * plane);
  const T* xv = x.value().ptr();
  const T* wv = weight.value().ptr();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const T* xin = xv + (s * cin + gi * cig) * h * w;
      const T* src = xin;
      if (!direct) {
        kernels::im2col(xin, geo, col.data());
        src = col.data();
      }
      kernels::gemm_nn(cog, plane, rows, wv + gi * cog * rows, src, out.ptr() + (s * cout + gi * cog) * plane);
    }
  }
  if (bias) {
    const T* bv = bias->value().ptr();
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t c = 0; c < cout; ++c) {
        T* o = out.ptr() + (s * cout + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) o[p] += bv[c];
      }
  }
  const std::size_t xid = x.id(), wid = weight.id();
  const std::optional<std::size_t> bid = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return g.record("conv2d", std::move(out), inputs, [=](Graph<T>& gr, const Tensor<T>& dy) {
    const bool need_x = gr.requires_grad(xid);
    const bool need_w = gr.requires_grad(wid);
    const T* xval = gr.value(xid).ptr();
    const T* wval = gr.value(wid).ptr();
    std::vector<T> buf(direct ? 0 : rows * plane);
    std::vector<T> dcol(direct ? 0 : rows * plane);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const T* d = dy.ptr() + (s * cout + gi * cog) * plane;
        const T* xin = xval + (s * cin + gi * cig) * h * w;
        if (need_w) {
          const T* src = xin;
          if (!direct) {
            kernels::im2col(xin, geo, buf.data());
            src = buf.data();
          }
          kernels::gemm_nt(cog, rows, plane, d, src, gr.grad_accumulator(wid).ptr() + gi * cog * rows);
        }
        if (need_x) {
          T* dx = gr.grad_accumulator(xid).ptr() + (s * cin + gi * cig) * h * w;
          if (direct) {
            kernels::gemm_tn(rows, plane, cog, wval + gi * cog * rows, d, dx);
          } else {
            std::fill(dcol.begin(), dcol.end(), T(0));
            kernels::gemm_tn(rows, plane, cog, wval + gi * cog * rows, d, dcol.data());
            kernels::col2im(dcol.data(), geo, dx);
          }
        }
      }
    }
    if (bid && gr.requires_grad(*bid)) {
      T* db = gr.grad_accumulator(*bid).ptr();
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t c = 0; c < cout; ++c) {
          const T* d = dy.ptr() + (s * cout + c) * plane;
          T acc = 0;
          for (std::size_t p = 0; p < plane; ++p) acc += d[p];
          db[c] += acc;
        }
    }
  });
}

template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const OptVar<T>& bias,
                        std::size_t stride, std::size_t pad) {
  require_rank(x.dims(), 4, "conv_transpose2d");
  require_rank(weight.dims(), 4, "conv_transpose2d weight");
  if (stride == 0) throw ShapeError("conv_transpose2d: stride must be >= 1");
  const std::size_t n = x.dim(0), cx = x.dim(1), hx = x.dim(2), wx = x.dim(3);
  if (weight.dim(0) != cx) {
    throw ShapeError("conv_transpose2d: weight " + shape_string(weight.dims()) + " incompatible with input " +
                     shape_string(x.dims()));
  }
  const std::size_t cy = weight.dim(1), k = weight.dim(2);
  if (weight.dim(3) != k) throw ShapeError("conv_transpose2d: kernel must be square");
  if ((hx - 1) * stride + k < 2 * pad + 1 || (wx - 1) * stride + k < 2 * pad + 1) {
    throw ShapeError("conv_transpose2d: padding too large");
  }
  if (bias && bias->value().size() != cy) throw ShapeError("conv_transpose2d: bias size mismatch");
  const std::size_t hy = (hx - 1) * stride + k - 2 * pad, wy = (wx - 1) * stride + k - 2 * pad;
  // Geometry of the adjoint convolution mapping y -> x.
  const kernels::ConvGeometry geo{cy, hy, wy, k, k, stride, pad, hx, wx};
  const std::size_t px = hx * wx, py = hy * wy;
  const std::size_t rows = cy * k * k;

  Graph<T>& g = x.graph();
  Tensor<T> out(Shape{n, cy, hy, wy});
  std::vector<T> col(rows * px);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(col.begin(), col.end(), T(0));
    kernels::gemm_tn(rows, px, cx, weight.value().ptr(), x.value().ptr() + s * cx * px, col.data());
    kernels::col2im(col.data(), geo, out.ptr() + s * cy * py);
  }
  if (bias) {
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t c = 0; c < cy; ++c) {
        T* o = out.ptr() + (s * cy + c) * py;
        const T b = bias->value()[c];
        for (std::size_t p = 0; p < py; ++p) o[p] += b;
      }
  }
  const std::size_t xid = x.id(), wid = weight.id();
  const std::optional<std::size_t> bid = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return g.record("conv_transpose2d", std::move(out), inputs, [=](Graph<T>& gr, const Tensor<T>& dy) {
    std::vector<T> buf(rows * px);
    const T* xval = gr.value(xid).ptr();
    const T* wval = gr.value(wid).ptr();
    for (std::size_t s = 0; s < n; ++s) {
      kernels::im2col(dy.ptr() + s * cy * py, geo, buf.data());
      if (gr.requires_grad(xid)) {
        kernels::gemm_nn(cx, px, rows, wval, buf.data(), gr.grad_accumulator(xid).ptr() + s * cx * px);
      }
      if (gr.requires_grad(wid)) {
        kernels::gemm_nt(cx, rows, px, xval + s * cx * px, buf.data(), gr.grad_accumulator(wid).ptr());
      }
    }
    if (bid && gr.requires_grad(*bid)) {
      T* db = gr.grad_accumulator(*bid).ptr();
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t c = 0; c < cy; ++c) {
          const T* d = dy.ptr() + (s * cy + c) * py;
          T acc = 0;
          for (std::size_t p = 0; p < py; ++p) acc += d[p];
          db[c] += acc;
        }
    }
  });
}

namespace {

struct Geometry3d {
  std::size_t c, d, h, w, kd, kh, kw, pd, ph, pw, od, oh, ow;
};

template <class T>
void im2col3d(const T* x, const Geometry3d& g, T* col) {
  const std::size_t vol = g.od * g.oh * g.ow;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t a = 0; a < g.kd; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t e = 0; e < g.kw; ++e, ++row) {
          T* dst = col + row * vol;
          std::size_t o = 0;
          for (std::size_t z = 0; z < g.od; ++z) {
            const long iz = static_cast<long>(z + a) - static_cast<long>(g.pd);
            for (std::size_t y = 0; y < g.oh; ++y) {
              const long iy = static_cast<long>(y + b) - static_cast<long>(g.ph);
              for (std::size_t xx = 0; xx < g.ow; ++xx, ++o) {
                const long ix = static_cast<long>(xx + e) - static_cast<long>(g.pw);
                const bool inside = iz >= 0 && iz < static_cast<long>(g.d) && iy >= 0 &&
                                    iy < static_cast<long>(g.h) && ix >= 0 && ix < static_cast<long>(g.w);
                dst[o] = inside ? x[((c * g.d + iz) * g.h + iy) * g.w + ix] : T(0);
              }
            }
          }
        }
}

template <class T>
void col2im3d(const T* col, const Geometry3d& g, T* x) {
  const std::size_t vol = g.od * g.oh * g.ow;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t a = 0; a < g.kd; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t e = 0; e < g.kw; ++e, ++row) {
          const T* src = col + row * vol;
          std::size_t o = 0;
          for (std::size_t z = 0; z < g.od; ++z) {
            const long iz = static_cast<long>(z + a) - static_cast<long>(g.pd);
            for (std::size_t y = 0; y < g.oh; ++y) {
              const long iy = static_cast<long>(y + b) - static_cast<long>(g.ph);
              for (std::size_t xx = 0; xx < g.ow; ++xx, ++o) {
                const long ix = static_cast<long>(xx + e) - static_cast<long>(g.pw);
                if (iz >= 0 && iz < static_cast<long>(g.d) && iy >= 0 && iy < static_cast<long>(g.h) && ix >= 0 &&
                    ix < static_cast<long>(g.w)) {
                  x[((c * g.d + iz) * g.h + iy) * g.w + ix] += src[o];
                }
              }
            }
          }
        }
}

}  // namespace

template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& weight, const OptVar<T>& bias, Conv3dPadding pad) {
  require_rank(x.dims(), 5, "conv3d");
  require_rank(weight.dims(), 5, "conv3d weight");
  const std::size_t n = x.dim(0), cin = x.dim(1);
  const std::size_t cout = weight.dim(0);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv3d: weight " + shape_string(weight.dims()) + " incompatible with input " +
                     shape_string(x.dims()));
  }
  Geometry3d geo{cin, x.dim(2), x.dim(3), x.dim(4), weight.dim(2), weight.dim(3), weight.dim(4),
                 pad.depth, pad.height, pad.width, 0, 0, 0};
  if (geo.d + 2 * geo.pd < geo.kd || geo.h + 2 * geo.ph < geo.kh || geo.w + 2 * geo.pw < geo.kw) {
    throw ShapeError("conv3d: kernel larger than padded input " + shape_string(x.dims()));
  }
  if (bias && bias->value().size() != cout) throw ShapeError("conv3d: bias size mismatch");
  geo.od = geo.d + 2 * geo.pd - geo.kd + 1;
  geo.oh = geo.h + 2 * geo.ph - geo.kh + 1;
  geo.ow = geo.w + 2 * geo.pw - geo.kw + 1;
  const std::size_t vol = geo.od * geo.oh * geo.ow;
  const std::size_t in_vol = geo.d * geo.h * geo.w;
  const std::size_t rows = cin * geo.kd * geo.kh * geo.kw;

  Graph<T>& g = x.graph();
  Tensor<T> out(Shape{n, cout, geo.od, geo.oh, geo.ow});
  std::vector<T> col(rows * vol);
  for (std::size_t s = 0; s < n; ++s) {
    im2col3d(x.value().ptr() + s * cin * in_vol, geo, col.data());
    kernels::gemm_nn(cout, vol, rows, weight.value().ptr(), col.data(), out.ptr() + s * cout * vol);
    if (bias) {
      for (std::size_t c = 0; c < cout; ++c) {
        T* o = out.ptr() + (s * cout + c) * vol;
        for (std::size_t p = 0; p < vol; ++p) o[p] += bias->value()[c];
      }
    }
  }
  const std::size_t xid = x.id(), wid = weight.id();
  const std::optional<std::size_t> bid = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return g.record("conv3d", std::move(out), inputs, [=](Graph<T>& gr, const Tensor<T>& dy) {
    std::vector<T> buf(rows * vol);
    for (std::size_t s = 0; s < n; ++s) {
      const T* d = dy.ptr() + s * cout * vol;
      if (gr.requires_grad(wid)) {
        im2col3d(gr.value(xid).ptr() + s * cin * in_vol, geo, buf.data());
        kernels::gemm_nt(cout, rows, vol, d, buf.data(), gr.grad_accumulator(wid).ptr());
      }
      if (gr.requires_grad(xid)) {
        std::fill(buf.begin(), buf.end(), T(0));
        kernels::gemm_tn(rows, vol, cout, gr.value(wid).ptr(), d, buf.data());
        col2im3d(buf.data(), geo, gr.grad_accumulator(xid).ptr() + s * cin * in_vol);
      }
    }
    if (bid && gr.requires_grad(*bid)) {
      T* db = gr.grad_accumulator(*bid).ptr();
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t c = 0; c < cout; ++c) {
          const T* d = dy.ptr() + (s * cout + c) * vol;
          T acc = 0;
          for (std::size_t p = 0; p < vol; ++p) acc += d[p];
          db[c] += acc;
        }
    }
  });
}

template <class T>
Var<T> max_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride) {
  require_rank(x.dims(), 4, "max_pool2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kernel == 0 || stride == 0 || h < kernel || w < kernel) {
    throw ShapeError("max_pool2d: window " + std::to_string(kernel) + " does not fit " + shape_string(x.dims()));
  }
  const std::size_t oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
  Graph<T>& g = x.graph();
  Tensor<T> out(Shape{n, c, oh, ow});
  std::vector<std::size_t> arg(out.size());
  const T* xv = x.value().ptr();
  std::size_t o = 0;
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* plane = xv + p * h * w;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
        std::size_t best = (y * stride) * w + xx * stride;
        for (std::size_t i = 0; i < kernel; ++i)
          for (std::size_t j = 0; j < kernel; ++j) {
            const std::size_t idx = (y * stride + i) * w + xx * stride + j;
            if (plane[idx] > plane[best]) best = idx;
          }
        out[o] = plane[best];
        arg[o] = p * h * w + best;
      }
  }
  const std::size_t xid = x.id();
  return g.record("max_pool2d", std::move(out), {x}, [xid, arg = std::move(arg)](Graph<T>& gr, const Tensor<T>& dy) {
    T* dx = gr.grad_accumulator(xid).ptr();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[arg[i]] += dy[i];
  });
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank(x.dims(), 4, "global_avg_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Graph<T>& g = x.graph();
  Tensor<T> out(Shape{n, c});
  const T* xv = x.value().ptr();
  for (std::size_t p = 0; p < n * c; ++p) {
    double acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += xv[p * plane + i];
    out[p] = static_cast<T>(acc / static_cast<double>(plane));
  }
  const std::size_t xid = x.id();
  return g.record("global_avg_pool", std::move(out), {x}, [=](Graph<T>& gr, const Tensor<T>& dy) {
    T* dx = gr.grad_accumulator(xid).ptr();
    const T inv = T(1) / static_cast<T>(plane);
    for (std::size_t p = 0; p < n * c; ++p)
      for (std::size_t i = 0; i < plane; ++i) dx[p * plane + i] += dy[p] * inv;
  });
}

template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, BatchNormState opts) {
  if (x.dims().size() < 2) throw ShapeError("batch_norm: expected N x C x ...");
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t inner = x.value().size() / (n * c);
  if (gamma.value().size() != c || beta.value().size() != c || running_mean.size() != c || running_var.size() != c) {
    throw ShapeError("batch_norm: parameter size does not match channel count " + std::to_string(c));
  }
  const std::size_t count = n * inner;
  std::vector<T> mu(c), inv_std(c);
  const T* xv = x.value().ptr();
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double v = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) v += (p[i] - m) * (p[i] - m);
      }
      v /= static_cast<double>(count);
      mu[ch] = static_cast<T>(m);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(v + opts.eps));
      const double unbiased = count > 1 ? v * static_cast<double>(count) / static_cast<double>(count - 1) : v;
      running_mean[ch] = static_cast<T>((1.0 - opts.momentum) * running_mean[ch] + opts.momentum * m);
      running_var[ch] = static_cast<T>((1.0 - opts.momentum) * running_var[ch] + opts.momentum * unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = running_mean[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + opts.eps));
    }
  }
  Graph<T>& g = x.graph();
  Tensor<T> out(x.dims());
  Tensor<T> xhat(x.dims());
  const T* gv = gamma.value().ptr();
  const T* bv = beta.value().ptr();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const T xh = (xv[base + i] - mu[ch]) * inv_std[ch];
        xhat[base + i] = xh;
        out[base + i] = gv[ch] * xh + bv[ch];
      }
    }
  const std::size_t xid = x.id(), gid = gamma.id(), bid = beta.id();
  return g.record("batch_norm", std::move(out), {x, gamma, beta},
                  [=, xhat = std::move(xhat)](Graph<T>& gr, const Tensor<T>& dy) {
                    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
                    for (std::size_t b = 0; b < n; ++b)
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t base = (b * c + ch) * inner;
                        for (std::size_t i = 0; i < inner; ++i) {
                          sum_dy[ch] += dy[base + i];
                          sum_dy_xhat[ch] += dy[base + i] * xhat[base + i];
                        }
                      }
                    if (gr.requires_grad(gid)) {
                      T* dg = gr.grad_accumulator(gid).ptr();
                      for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += static_cast<T>(sum_dy_xhat[ch]);
                    }
                    if (gr.requires_grad(bid)) {
                      T* db = gr.grad_accumulator(bid).ptr();
                      for (std::size_t ch = 0; ch < c; ++ch) db[ch] += static_cast<T>(sum_dy[ch]);
                    }
                    if (!gr.requires_grad(xid)) return;
                    T* dx = gr.grad_accumulator(xid).ptr();
                    const T* gam = gr.value(gid).ptr();
                    const double m = static_cast<double>(count);
                    for (std::size_t b = 0; b < n; ++b)
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t base = (b * c + ch) * inner;
                        const T k = gam[ch] * inv_std[ch];
                        if (training) {
                          const T mdy = static_cast<T>(sum_dy[ch] / m);
                          const T mdx = static_cast<T>(sum_dy_xhat[ch] / m);
                          for (std::size_t i = 0; i < inner; ++i)
                            dx[base + i] += k * (dy[base + i] - mdy - xhat[base + i] * mdx);
                        } else {
                          for (std::size_t i = 0; i < inner; ++i) dx[base + i] += k * dy[base + i];
                        }
                      }
                  });
}

// ---- losses ----------------------------------------------------------------

template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("mse: extent mismatch " + shape_string(a.dims()) + " vs " + shape_string(b.dims()));
  }
  Graph<T>& g = a.graph();
  const std::size_t count = a.value().size();
  double acc = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(a.value()[i]) - static_cast<double>(b.value()[i]);
    acc += d * d;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("mse", Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count))), {a, b},
                  [=](Graph<T>& gr, const Tensor<T>& dy) {
                    const T* x = gr.value(ia).ptr();
                    const T* y = gr.value(ib).ptr();
                    const T f = dy[0] * T(2) / static_cast<T>(count);
                    if (gr.requires_grad(ia)) {
                      T* d = gr.grad_accumulator(ia).ptr();
                      for (std::size_t i = 0; i < count; ++i) d[i] += f * (x[i] - y[i]);
                    }
                    if (gr.requires_grad(ib)) {
                      T* d = gr.grad_accumulator(ib).ptr();
                      for (std::size_t i = 0; i < count; ++i) d[i] -= f * (x[i] - y[i]);
                    }
                  });
}

template <class T>
Var<T> nll_from_probs(const Var<T>& probs, std::span<const std::size_t> labels) {
  require_rank(probs.dims(), 2, "nll_from_probs");
  const std::size_t n = probs.dim(0), m = probs.dim(1);
  if (labels.size() != n) throw ShapeError("nll_from_probs: label count does not match batch");
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[i] >= m) throw ShapeError("nll_from_probs: label out of range");
    const double p = probs.value()[i * m + lab[i]];
    acc -= std::log(std::max(p, kLogClamp));
  }
  Graph<T>& g = probs.graph();
  const std::size_t pid = probs.id();
  return g.record("nll", Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n))), {probs},
                  [=](Graph<T>& gr, const Tensor<T>& dy) {
                    T* d = gr.grad_accumulator(pid).ptr();
                    const T* p = gr.value(pid).ptr();
                    for (std::size_t i = 0; i < n; ++i) {
                      const T pv = p[i * m + lab[i]];
                      if (static_cast<double>(pv) > kLogClamp) d[i * m + lab[i]] -= dy[0] / (static_cast<T>(n) * pv);
                    }
                  });
}

#define FDP_INSTANTIATE_OPS(T)                                                                          \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> scale<T>(const Var<T>&, T);                                                           \
  template Var<T> relu<T>(const Var<T>&);                                                               \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                                      \
  template Var<T> sigmoid<T>(const Var<T>&);                                                            \
  template Var<T> abs<T>(const Var<T>&);                                                                \
  template Var<T> dropout<T>(const Var<T>&, T, bool, std::mt19937_64&);                                 \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                                     \
  template Var<T> permute<T>(const Var<T>&, const std::vector<std::size_t>&);                           \
  template Var<T> concat<T>(const std::vector<Var<T>>&, std::size_t);                                   \
  template Var<T> slice<T>(const Var<T>&, std::size_t, std::size_t, std::size_t);                       \
  template Var<T> sum<T>(const Var<T>&);                                                                \
  template Var<T> mean<T>(const Var<T>&);                                                               \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                              \
  template Var<T> bmm<T>(const Var<T>&, const Var<T>&, bool);                                           \
  template Var<T> softmax<T>(const Var<T>&);                                                            \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const OptVar<T>&);                \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const OptVar<T>&, Conv2dOptions); \
  template Var<T> conv_transpose2d<T>(const Var<T>&, const Var<T>&, const OptVar<T>&,       \
                                      std::size_t, std::size_t);                                        \
  template Var<T> conv3d<T>(const Var<T>&, const Var<T>&, const OptVar<T>&, Conv3dPadding); \
  template Var<T> max_pool2d<T>(const Var<T>&, std::size_t, std::size_t);                               \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                                    \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&,    \
                                bool, BatchNormState);                                                  \
  template Var<T> mse<T>(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> nll_from_probs<T>(const Var<T>&, std::span<const std::size_t>);

FDP_INSTANTIATE_OPS(float)
FDP_INSTANTIATE_OPS(double)

}  // namespace fdp::num
