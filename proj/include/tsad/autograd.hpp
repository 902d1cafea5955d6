#pragma once

// Minimal reverse-mode differentiation over NCHW tensors.
//
// Every op returns a Var holding its value; when gradient recording is on and
// an input requires a gradient, the result remembers its inputs and a backward
// closure. backward() walks the recorded graph in reverse topological order.

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace tsad::ag {

struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t sample() const { return static_cast<std::size_t>(c) * plane(); }
    std::size_t size() const { return static_cast<std::size_t>(n) * sample(); }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

// Vectorized kernels pick their summation order from the buffer address, so
// every tensor starts on a 64-byte boundary to keep results bitwise repeatable.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept { return true; }
};

template <class T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

template <class T>
struct Node {
    Shape shape;
    Buffer<T> value;
    Buffer<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;
};

template <class T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Var constant(Shape shape, std::vector<T> value);
    static Var constant(Shape shape, T fill = T(0));
    static Var parameter(Shape shape, std::vector<T> value);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::span<const T> value() const { return node_->value; }
    Buffer<T>& mutable_value() { return node_->value; }
    std::span<const T> grad() const { return node_->grad; }
    Buffer<T>& mutable_grad() { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    T item() const { return node_->value.at(0); }

    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& ptr() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Fills gradients of every node reachable from the scalar `loss`. Nodes in `cut`
// receive their gradient but do not pass it on to their inputs, which realizes
// a stop-gradient on that edge for this pass only.
template <class T>
void backward(const Var<T>& loss, const std::unordered_set<const Node<T>*>& cut = {});

// ---- structural ops ----
template <class T> Var<T> identity(const Var<T>& x);
template <class T> Var<T> detach(const Var<T>& x);
template <class T> Var<T> expand_batch(const Var<T>& x, int batch);
template <class T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> slice_channels(const Var<T>& x, int first, int count);
template <class T> Var<T> upsample2x(const Var<T>& x);

// ---- elementwise ----
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& x, T factor);
template <class T> Var<T> silu(const Var<T>& x);
// max(exp(x), floor); gradient is zero where the floor is active.
template <class T> Var<T> exp_floor(const Var<T>& x, T floor);

// ---- layers ----
// w: [out, in, k, k]; b: [1, out, 1, 1] or undefined.
template <class T> Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);
// w: [c, 1, k, k]; stride 1, "same" padding.
template <class T> Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b);
// Per-sample normalization over (C, H, W) followed by a per-channel affine map.
template <class T> Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

// ---- reductions to a scalar of shape [1,1,1,1] ----
template <class T> Var<T> half_squared_error(const Var<T>& a, const Var<T>& b);
// sum of 0.5 * (dmu^2 / sigma^2 + dsigma^2 - log dsigma^2 - 1)
template <class T> Var<T> kl_residual(const Var<T>& delta_mu, const Var<T>& sigma, const Var<T>& delta_sigma);
// max(0, margin - x) for scalar x.
template <class T> Var<T> hinge_below(const Var<T>& x, T margin);

}  // namespace tsad::ag
