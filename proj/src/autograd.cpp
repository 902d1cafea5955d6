#include "tsad/autograd.hpp"

#include "tsad/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace tsad::ag {

namespace {

thread_local bool g_grad_enabled = true;

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

// Builds the result node; records inputs and the backward closure only when needed.
template <class T>
Var<T> make_result(Shape shape, Buffer<T> value, std::vector<NodePtr<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
    auto node = std::make_shared<Node<T>>();
    node->shape = shape;
    node->value = std::move(value);
    if (g_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(),
                                     [](const NodePtr<T>& p) { return p && p->requires_grad; });
        if (any) {
            node->requires_grad = true;
            node->inputs = std::move(inputs);
            node->backward = std::move(backward_fn);
        }
    }
    return Var<T>(std::move(node));
}

template <class T>
bool wants(const NodePtr<T>& p) {
    return p && p->requires_grad;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidInput(what);
}

template <class T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
    require(a.shape() == b.shape(),
            std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <class T>
void require_scalar(const Var<T>& x, const char* op) {
    require(x.shape().size() == 1, std::string(op) + ": expected a scalar");
}

// Output columns [lo, hi) read in-bounds input for kernel offset kx.
inline void valid_span(int kx, int stride, int pad, int w, int wo, int& lo, int& hi) {
    lo = 0;
    while (lo < wo && lo * stride + kx - pad < 0) ++lo;
    hi = wo;
    while (hi > lo && (hi - 1) * stride + kx - pad >= w) --hi;
}

// cols[(ci*k + ky)*k + kx][oy*wo + ox] = x[ci][oy*s + ky - p][ox*s + kx - p]
template <class T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* cols) {
    const std::size_t hw_out = static_cast<std::size_t>(ho) * wo;
    for (int ci = 0; ci < c; ++ci) {
        const T* plane = x + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw_out;
                int lo, hi;
                valid_span(kx, stride, pad, w, wo, lo, hi);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    T* dst = row + static_cast<std::size_t>(oy) * wo;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + wo, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * w + kx - pad;
                    std::fill(dst, dst + lo, T(0));
                    if (stride == 1) {
                        std::copy(src + lo, src + hi, dst + lo);
                    } else {
                        for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
                    }
                    std::fill(dst + hi, dst + wo, T(0));
                }
            }
        }
    }
}

template <class T>
void col2im(const T* cols, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
    const std::size_t hw_out = static_cast<std::size_t>(ho) * wo;
    for (int ci = 0; ci < c; ++ci) {
        T* plane = x + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw_out;
                int lo, hi;
                valid_span(kx, stride, pad, w, wo, lo, hi);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = row + static_cast<std::size_t>(oy) * wo;
                    T* dst = plane + static_cast<std::size_t>(iy) * w + kx - pad;
                    if (stride == 1) {
                        for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
                    } else {
                        for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
                    }
                }
            }
        }
    }
}

template <class T>
using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
template <class T>
using ArrMap = Eigen::Map<Arr<T>>;
template <class T>
using ConstArrMap = Eigen::Map<const Arr<T>>;

}  // namespace

std::string to_string(const Shape& s) {
    return "[" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
           std::to_string(s.w) + "]";
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <class T>
Var<T> Var<T>::constant(Shape shape, std::vector<T> value) {
    require(value.size() == shape.size(), "constant: value size does not match shape " + ag::to_string(shape));
    auto node = std::make_shared<Node<T>>();
    node->shape = shape;
    node->value.assign(value.begin(), value.end());
    return Var(std::move(node));
}

template <class T>
Var<T> Var<T>::constant(Shape shape, T fill) {
    return constant(shape, std::vector<T>(shape.size(), fill));
}

template <class T>
Var<T> Var<T>::parameter(Shape shape, std::vector<T> value) {
    auto v = constant(shape, std::move(value));
    v.node()->requires_grad = true;
    v.node()->grad.assign(v.node()->value.size(), T(0));
    return v;
}

template <class T>
void backward(const Var<T>& loss, const std::unordered_set<const Node<T>*>& cut) {
    require_scalar(loss, "backward");
    if (!loss.requires_grad()) return;

    // iterative post-order DFS
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
    visited.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node<T>* n : order) n->grad.assign(n->value.size(), T(0));
    loss.node()->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward && !cut.contains(n)) n->backward(*n);
    }
}

// ---------------------------------------------------------------- structural

template <class T>
Var<T> identity(const Var<T>& x) {
    return make_result<T>(x.shape(), Buffer<T>(x.value().begin(), x.value().end()), {x.ptr()},
                          [](Node<T>& self) {
                              auto& in = *self.inputs[0];
                              for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
                          });
}

template <class T>
Var<T> detach(const Var<T>& x) {
    return Var<T>::constant(x.shape(), std::vector<T>(x.value().begin(), x.value().end()));
}

template <class T>
Var<T> expand_batch(const Var<T>& x, int batch) {
    require(x.shape().n == 1, "expand_batch: input batch must be 1");
    Shape s = x.shape();
    s.n = batch;
    const std::size_t per = x.shape().size();
    Buffer<T> out(s.size());
    for (int b = 0; b < batch; ++b) std::copy(x.value().begin(), x.value().end(), out.begin() + b * per);
    return make_result<T>(s, std::move(out), {x.ptr()}, [per, batch](Node<T>& self) {
        auto& in = *self.inputs[0];
        for (int b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < per; ++i) in.grad[i] += self.grad[b * per + i];
    });
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
    const Shape sa = a.shape();
    const Shape sb = b.shape();
    require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
            "concat_channels: shape mismatch " + to_string(sa) + " vs " + to_string(sb));
    Shape s = sa;
    s.c = sa.c + sb.c;
    Buffer<T> out(s.size());
    const std::size_t na = sa.sample();
    const std::size_t nb = sb.sample();
    for (int i = 0; i < s.n; ++i) {
        std::copy_n(a.value().begin() + i * na, na, out.begin() + i * (na + nb));
        std::copy_n(b.value().begin() + i * nb, nb, out.begin() + i * (na + nb) + na);
    }
    return make_result<T>(s, std::move(out), {a.ptr(), b.ptr()}, [na, nb, batch = s.n](Node<T>& self) {
        for (int k = 0; k < 2; ++k) {
            auto& in = self.inputs[k];
            if (!wants(in)) continue;
            const std::size_t len = k == 0 ? na : nb;
            const std::size_t off = k == 0 ? 0 : na;
            for (int i = 0; i < batch; ++i)
                for (std::size_t j = 0; j < len; ++j) in->grad[i * len + j] += self.grad[i * (na + nb) + off + j];
        }
    });
}

template <class T>
Var<T> slice_channels(const Var<T>& x, int first, int count) {
    const Shape sx = x.shape();
    require(first >= 0 && count > 0 && first + count <= sx.c, "slice_channels: channel range out of bounds");
    Shape s = sx;
    s.c = count;
    const std::size_t plane = sx.plane();
    const std::size_t len = static_cast<std::size_t>(count) * plane;
    Buffer<T> out(s.size());
    for (int i = 0; i < sx.n; ++i)
        std::copy_n(x.value().begin() + i * sx.sample() + first * plane, len, out.begin() + i * len);
    return make_result<T>(s, std::move(out), {x.ptr()}, [sx, first, plane, len](Node<T>& self) {
        auto& in = *self.inputs[0];
        for (int i = 0; i < sx.n; ++i)
            for (std::size_t j = 0; j < len; ++j) in.grad[i * sx.sample() + first * plane + j] += self.grad[i * len + j];
    });
}

template <class T>
Var<T> upsample2x(const Var<T>& x) {
    const Shape sx = x.shape();
    Shape s = sx;
    s.h *= 2;
    s.w *= 2;
    Buffer<T> out(s.size());
    const std::size_t planes = static_cast<std::size_t>(sx.n) * sx.c;
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = x.value().data() + p * sx.plane();
        T* dst = out.data() + p * s.plane();
        for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx) dst[y * s.w + xx] = src[(y / 2) * sx.w + xx / 2];
    }
    return make_result<T>(s, std::move(out), {x.ptr()}, [sx, s, planes](Node<T>& self) {
        auto& in = *self.inputs[0];
        for (std::size_t p = 0; p < planes; ++p) {
            T* dst = in.grad.data() + p * sx.plane();
            const T* src = self.grad.data() + p * s.plane();
            for (int y = 0; y < s.h; ++y)
                for (int xx = 0; xx < s.w; ++xx) dst[(y / 2) * sx.w + xx / 2] += src[y * s.w + xx];
        }
    });
}

// ---------------------------------------------------------------- elementwise

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same(a, b, "add");
    Buffer<T> out(a.value().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_result<T>(a.shape(), std::move(out), {a.ptr(), b.ptr()}, [](Node<T>& self) {
        for (auto& in : self.inputs)
            if (wants(in))
                for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_same(a, b, "sub");
    Buffer<T> out(a.value().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_result<T>(a.shape(), std::move(out), {a.ptr(), b.ptr()}, [](Node<T>& self) {
        if (wants(self.inputs[0]))
            for (std::size_t i = 0; i < self.grad.size(); ++i) self.inputs[0]->grad[i] += self.grad[i];
        if (wants(self.inputs[1]))
            for (std::size_t i = 0; i < self.grad.size(); ++i) self.inputs[1]->grad[i] -= self.grad[i];
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same(a, b, "mul");
    Buffer<T> out(a.value().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_result<T>(a.shape(), std::move(out), {a.ptr(), b.ptr()}, [](Node<T>& self) {
        auto& x = self.inputs[0];
        auto& y = self.inputs[1];
        if (wants(x))
            for (std::size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i] * y->value[i];
        if (wants(y))
            for (std::size_t i = 0; i < self.grad.size(); ++i) y->grad[i] += self.grad[i] * x->value[i];
    });
}

template <class T>
Var<T> scale(const Var<T>& x, T factor) {
    Buffer<T> out(x.value().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * factor;
    return make_result<T>(x.shape(), std::move(out), {x.ptr()}, [factor](Node<T>& self) {
        auto& in = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i] * factor;
    });
}

template <class T>
Var<T> silu(const Var<T>& x) {
    const auto n = static_cast<Eigen::Index>(x.value().size());
    Buffer<T> out(x.value().size());
    ConstArrMap<T> v(x.value().data(), n);
    ArrMap<T>(out.data(), n) = v / (T(1) + (-v).exp());
    return make_result<T>(x.shape(), std::move(out), {x.ptr()}, [n](Node<T>& self) {
        auto& in = *self.inputs[0];
        ConstArrMap<T> v(in.value.data(), n);
        ConstArrMap<T> g(self.grad.data(), n);
        // silu'(v) = s (1 + v (1 - s)), and silu(v) = v s
        ConstArrMap<T> y(self.value.data(), n);
        const Arr<T> s = T(1) / (T(1) + (-v).exp());
        ArrMap<T>(in.grad.data(), n) += g * (s + y * (T(1) - s));
    });
}

template <class T>
Var<T> exp_floor(const Var<T>& x, T floor) {
    Buffer<T> out(x.value().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(std::exp(x.value()[i]), floor);
    return make_result<T>(x.shape(), std::move(out), {x.ptr()}, [floor](Node<T>& self) {
        auto& in = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (self.value[i] > floor) in.grad[i] += self.grad[i] * self.value[i];
    });
}

// ---------------------------------------------------------------- layers

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    const Shape sx = x.shape();
    const Shape sw = w.shape();
    require(sw.c == sx.c && sw.h == sw.w,
            "conv2d: weight " + to_string(sw) + " incompatible with input " + to_string(sx));
    const int k = sw.h;
    const int co = sw.n;
    const int ho = (sx.h + 2 * pad - k) / stride + 1;
    const int wo = (sx.w + 2 * pad - k) / stride + 1;
    require(ho > 0 && wo > 0, "conv2d: empty output for input " + to_string(sx));
    if (b.defined()) require(b.shape().size() == static_cast<std::size_t>(co), "conv2d: bias size mismatch");
    const Shape s{sx.n, co, ho, wo};
    const bool pointwise = k == 1 && stride == 1 && pad == 0;
    const int rows = sx.c * k * k;
    const std::size_t hw = static_cast<std::size_t>(ho) * wo;

    Buffer<T> out(s.size());
    Buffer<T> cols(pointwise ? 0 : static_cast<std::size_t>(rows) * hw);
    ConstMatMap<T> wm(w.value().data(), co, rows);
    for (int i = 0; i < sx.n; ++i) {
        const T* xi = x.value().data() + i * sx.sample();
        if (!pointwise) im2col(xi, sx.c, sx.h, sx.w, k, stride, pad, ho, wo, cols.data());
        ConstMatMap<T> cm(pointwise ? xi : cols.data(), rows, static_cast<Eigen::Index>(hw));
        MatMap<T> om(out.data() + i * s.sample(), co, static_cast<Eigen::Index>(hw));
        om.noalias() = wm * cm;
        if (b.defined())
            for (int o = 0; o < co; ++o) om.row(o).array() += b.value()[o];
    }

    std::vector<NodePtr<T>> inputs{x.ptr(), w.ptr()};
    if (b.defined()) inputs.push_back(b.ptr());
    return make_result<T>(s, std::move(out), std::move(inputs),
                          [sx, s, k, co, rows, hw, stride, pad, pointwise](Node<T>& self) {
        auto& xn = self.inputs[0];
        auto& wn = self.inputs[1];
        const bool has_bias = self.inputs.size() > 2;
        Buffer<T> cols(pointwise ? 0 : static_cast<std::size_t>(rows) * hw);
        Buffer<T> dcols(static_cast<std::size_t>(rows) * hw);
        ConstMatMap<T> wm(wn->value.data(), co, rows);
        for (int i = 0; i < sx.n; ++i) {
            ConstMatMap<T> gm(self.grad.data() + i * s.sample(), co, static_cast<Eigen::Index>(hw));
            if (wants(wn)) {
                const T* xi = xn->value.data() + i * sx.sample();
                if (!pointwise) im2col(xi, sx.c, sx.h, sx.w, k, stride, pad, s.h, s.w, cols.data());
                ConstMatMap<T> cm(pointwise ? xi : cols.data(), rows, static_cast<Eigen::Index>(hw));
                MatMap<T> dw(wn->grad.data(), co, rows);
                dw.noalias() += gm * cm.transpose();
            }
            if (has_bias && wants(self.inputs[2])) {
                auto& bg = self.inputs[2]->grad;
                for (int o = 0; o < co; ++o) bg[o] += gm.row(o).sum();
            }
            if (wants(xn)) {
                T* dxi = xn->grad.data() + i * sx.sample();
                if (pointwise) {
                    MatMap<T> dx(dxi, rows, static_cast<Eigen::Index>(hw));
                    dx.noalias() += wm.transpose() * gm;
                } else {
                    MatMap<T> dc(dcols.data(), rows, static_cast<Eigen::Index>(hw));
                    dc.noalias() = wm.transpose() * gm;
                    col2im(dcols.data(), sx.c, sx.h, sx.w, k, stride, pad, s.h, s.w, dxi);
                }
            }
        }
    });
}

template <class T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const Shape sx = x.shape();
    const Shape sw = w.shape();
    require(sw.n == sx.c && sw.c == 1 && sw.h == sw.w && sw.h % 2 == 1,
            "depthwise_conv2d: weight " + to_string(sw) + " incompatible with input " + to_string(sx));
    const int k = sw.h;
    const int pad = k / 2;
    const int h = sx.h;
    const int wd = sx.w;
    Buffer<T> out(sx.size());
    for (int i = 0; i < sx.n; ++i) {
        for (int c = 0; c < sx.c; ++c) {
            const T* src = x.value().data() + i * sx.sample() + c * sx.plane();
            T* dst = out.data() + i * sx.sample() + c * sx.plane();
            const T* wk = w.value().data() + static_cast<std::size_t>(c) * k * k;
            std::fill(dst, dst + sx.plane(), b.defined() ? b.value()[c] : T(0));
            for (int ky = 0; ky < k; ++ky) {
                const int dy = ky - pad;
                for (int kx = 0; kx < k; ++kx) {
                    const int dx = kx - pad;
                    const T wv = wk[ky * k + kx];
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(wd, wd - dx);
                    for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
                        T* o = dst + y * wd;
                        const T* s = src + (y + dy) * wd + dx;
                        for (int xx = x0; xx < x1; ++xx) o[xx] += wv * s[xx];
                    }
                }
            }
        }
    }
    std::vector<NodePtr<T>> inputs{x.ptr(), w.ptr()};
    if (b.defined()) inputs.push_back(b.ptr());
    return make_result<T>(sx, std::move(out), std::move(inputs), [sx, k, pad](Node<T>& self) {
        auto& xn = self.inputs[0];
        auto& wn = self.inputs[1];
        const bool bias = self.inputs.size() > 2 && wants(self.inputs[2]);
        const int h = sx.h;
        const int wd = sx.w;
        for (int i = 0; i < sx.n; ++i) {
            for (int c = 0; c < sx.c; ++c) {
                const std::size_t off = i * sx.sample() + c * sx.plane();
                const T* src = xn->value.data() + off;
                const T* g = self.grad.data() + off;
                const T* wk = wn->value.data() + static_cast<std::size_t>(c) * k * k;
                T* dw = wants(wn) ? wn->grad.data() + static_cast<std::size_t>(c) * k * k : nullptr;
                T* dxp = wants(xn) ? xn->grad.data() + off : nullptr;
                if (bias) {
                    T gsum = 0;
                    for (std::size_t p = 0; p < sx.plane(); ++p) gsum += g[p];
                    self.inputs[2]->grad[c] += gsum;
                }
                for (int ky = 0; ky < k; ++ky) {
                    const int dy = ky - pad;
                    for (int kx = 0; kx < k; ++kx) {
                        const int dx = kx - pad;
                        const T wv = wk[ky * k + kx];
                        const int x0 = std::max(0, -dx);
                        const int x1 = std::min(wd, wd - dx);
                        T acc = 0;
                        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
                            const T* gr = g + y * wd;
                            const std::size_t in_row = static_cast<std::size_t>(y + dy) * wd + dx;
                            if (dw) {
                                acc += (ConstArrMap<T>(gr + x0, x1 - x0) * ConstArrMap<T>(src + in_row + x0, x1 - x0)).sum();
                            }
                            if (dxp) {
                                T* d = dxp + in_row;
                                for (int xx = x0; xx < x1; ++xx) d[xx] += wv * gr[xx];
                            }
                        }
                        if (dw) dw[ky * k + kx] += acc;
                    }
                }
            }
        }
    });
}

template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
    const Shape sx = x.shape();
    require(gamma.shape().size() == static_cast<std::size_t>(sx.c) &&
                beta.shape().size() == static_cast<std::size_t>(sx.c),
            "layer_norm: affine size must equal channel count");
    const auto m = static_cast<Eigen::Index>(sx.sample());
    const auto plane = static_cast<Eigen::Index>(sx.plane());
    Buffer<T> out(sx.size());
    auto normalized = std::make_shared<Buffer<T>>(sx.size());
    auto inv_std = std::make_shared<Buffer<T>>(sx.n);
    for (int i = 0; i < sx.n; ++i) {
        ConstArrMap<T> src(x.value().data() + i * m, m);
        const T mean = src.mean();
        const T var = (src - mean).square().mean();
        const T inv = T(1) / std::sqrt(var + eps);
        (*inv_std)[i] = inv;
        ArrMap<T> xh(normalized->data() + i * m, m);
        xh = (src - mean) * inv;
        for (int c = 0; c < sx.c; ++c)
            ArrMap<T>(out.data() + i * m + c * plane, plane) =
                xh.segment(c * plane, plane) * gamma.value()[c] + beta.value()[c];
    }
    return make_result<T>(sx, std::move(out), {x.ptr(), gamma.ptr(), beta.ptr()},
                          [sx, m, plane, normalized, inv_std](Node<T>& self) {
        auto& xn = self.inputs[0];
        auto& gn = self.inputs[1];
        auto& bn = self.inputs[2];
        Arr<T> dxh(m);
        for (int i = 0; i < sx.n; ++i) {
            ConstArrMap<T> g(self.grad.data() + i * m, m);
            ConstArrMap<T> xh(normalized->data() + i * m, m);
            for (int c = 0; c < sx.c; ++c) {
                const auto gc = g.segment(c * plane, plane);
                if (wants(gn)) gn->grad[c] += (gc * xh.segment(c * plane, plane)).sum();
                if (wants(bn)) bn->grad[c] += gc.sum();
                dxh.segment(c * plane, plane) = gc * gn->value[c];
            }
            if (wants(xn)) {
                const T mm = static_cast<T>(m);
                const T mean_d = dxh.sum() / mm;
                const T mean_dx = (dxh * xh).sum() / mm;
                ArrMap<T>(xn->grad.data() + i * m, m) += (*inv_std)[i] * (dxh - mean_d - xh * mean_dx);
            }
        }
    });
}

// ---------------------------------------------------------------- reductions

template <class T>
Var<T> half_squared_error(const Var<T>& a, const Var<T>& b) {
    require_same(a, b, "half_squared_error");
    T acc = 0;
    for (std::size_t i = 0; i < a.value().size(); ++i) {
        const T d = a.value()[i] - b.value()[i];
        acc += d * d;
    }
    return make_result<T>(Shape{}, {acc / T(2)}, {a.ptr(), b.ptr()}, [](Node<T>& self) {
        auto& an = self.inputs[0];
        auto& bn = self.inputs[1];
        const T g = self.grad[0];
        for (std::size_t i = 0; i < an->value.size(); ++i) {
            const T d = an->value[i] - bn->value[i];
            if (wants(an)) an->grad[i] += g * d;
            if (wants(bn)) bn->grad[i] -= g * d;
        }
    });
}

template <class T>
Var<T> kl_residual(const Var<T>& delta_mu, const Var<T>& sigma, const Var<T>& delta_sigma) {
    require_same(delta_mu, sigma, "kl_residual");
    require_same(delta_mu, delta_sigma, "kl_residual");
    T acc = 0;
    for (std::size_t i = 0; i < delta_mu.value().size(); ++i) {
        const T dm = delta_mu.value()[i];
        const T s = sigma.value()[i];
        const T ds = delta_sigma.value()[i];
        acc += T(0.5) * (dm * dm / (s * s) + ds * ds - T(2) * std::log(ds) - T(1));
    }
    return make_result<T>(Shape{}, {acc}, {delta_mu.ptr(), sigma.ptr(), delta_sigma.ptr()}, [](Node<T>& self) {
        auto& dmn = self.inputs[0];
        auto& sn = self.inputs[1];
        auto& dsn = self.inputs[2];
        const T g = self.grad[0];
        for (std::size_t i = 0; i < dmn->value.size(); ++i) {
            const T dm = dmn->value[i];
            const T s = sn->value[i];
            const T ds = dsn->value[i];
            if (wants(dmn)) dmn->grad[i] += g * dm / (s * s);
            if (wants(sn)) sn->grad[i] -= g * dm * dm / (s * s * s);
            if (wants(dsn)) dsn->grad[i] += g * (ds - T(1) / ds);
        }
    });
}

template <class T>
Var<T> hinge_below(const Var<T>& x, T margin) {
    require_scalar(x, "hinge_below");
    const T gap = margin - x.item();
    return make_result<T>(Shape{}, {std::max(gap, T(0))}, {x.ptr()}, [](Node<T>& self) {
        if (self.value[0] > T(0)) self.inputs[0]->grad[0] -= self.grad[0];
    });
}

#define TSAD_INSTANTIATE(T)                                                                      \
    template class Var<T>;                                                                       \
    template void backward<T>(const Var<T>&, const std::unordered_set<const Node<T>*>&);         \
    template Var<T> identity<T>(const Var<T>&);                                                  \
    template Var<T> detach<T>(const Var<T>&);                                                    \
    template Var<T> expand_batch<T>(const Var<T>&, int);                                         \
    template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                            \
    template Var<T> slice_channels<T>(const Var<T>&, int, int);                                  \
    template Var<T> upsample2x<T>(const Var<T>&);                                                \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                        \
    template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                        \
    template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                        \
    template Var<T> scale<T>(const Var<T>&, T);                                                  \
    template Var<T> silu<T>(const Var<T>&);                                                      \
    template Var<T> exp_floor<T>(const Var<T>&, T);                                              \
    template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);            \
    template Var<T> depthwise_conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&);            \
    template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);               \
    template Var<T> half_squared_error<T>(const Var<T>&, const Var<T>&);                         \
    template Var<T> kl_residual<T>(const Var<T>&, const Var<T>&, const Var<T>&);                 \
    template Var<T> hinge_below<T>(const Var<T>&, T);

TSAD_INSTANTIATE(float)
TSAD_INSTANTIATE(double)

#undef TSAD_INSTANTIATE

}  // namespace tsad::ag
