#include "gfk/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace gfk {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

namespace {
thread_local bool g_grad_recording = true;

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match value count " +
                                    std::to_string(data.size()));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return impl;
}
}  // namespace

bool grad_recording_enabled() { return g_grad_recording; }

NoGradGuard::NoGradGuard() : previous_(g_grad_recording) { g_grad_recording = false; }
NoGradGuard::~NoGradGuard() { g_grad_recording = previous_; }

Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<void(TensorImpl&)> backward_fn) {
    auto impl = new_impl(std::move(shape), std::move(data), false);
    if (g_grad_recording) {
        bool any = false;
        for (const auto& t : inputs) any = any || (t.defined() && t.requires_grad());
        if (any) {
            impl->requires_grad = true;
            impl->backward_fn = std::move(backward_fn);
            for (auto& t : inputs)
                if (t.defined()) impl->parents.push_back(t.impl());
        }
    }
    Tensor out;
    out.impl() = std::move(impl);
    return out;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    Tensor t;
    t.impl_ = new_impl(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0), requires_grad);
    return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    Tensor t;
    t.impl_ = new_impl(std::move(shape), std::vector<double>(static_cast<size_t>(n), value), requires_grad);
    return t;
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values, bool requires_grad) {
    Tensor t;
    t.impl_ = new_impl(std::move(shape), std::move(values), requires_grad);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_vector({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    std::vector<double> values(static_cast<size_t>(n));
    for (auto& v : values) v = rng.normal(0.0, stddev);
    Tensor t;
    t.impl_ = new_impl(std::move(shape), std::move(values), requires_grad);
    return t;
}

const Shape& Tensor::shape() const {
    if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
    return impl_->shape;
}

int64_t Tensor::dim(int axis) const {
    const auto& s = shape();
    if (axis < 0) axis += static_cast<int>(s.size());
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw std::invalid_argument("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[static_cast<size_t>(axis)];
}

int64_t Tensor::numel() const { return impl_ ? impl_->numel() : 0; }

std::span<const double> Tensor::data() const {
    if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
    return impl_->data;
}

std::span<double> Tensor::mutable_data() {
    if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
    return impl_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("tensor: item() on non-scalar of shape " + shape_str(shape()));
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
    if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
    impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
    return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
    if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    if (!impl_) return Tensor();
    Tensor t;
    t.impl_ = new_impl(impl_->shape, impl_->data, false);
    return t;
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS over parents; `order` ends up topologically
    // sorted with parents before children.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    struct Frame {
        TensorImpl* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    TensorImpl* root = loss.impl().get();
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next_parent < top.node->parents.size()) {
            TensorImpl* parent = top.node->parents[top.next_parent++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.push_back({parent, 0});
        } else {
            order.push_back(top.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

}  // namespace gfk
