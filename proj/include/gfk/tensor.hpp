#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gfk/rng.hpp"

namespace gfk {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until backward touches this node
    bool requires_grad = false;

    // Graph record: parents plus the rule that routes this node's grad to them.
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

// Dense double-precision tensor handle. Copying a Tensor aliases the same
// storage; ops return fresh storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    int64_t dim(int axis) const;
    int64_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();  // direct writes, bypasses the graph
    double item() const;               // single-element tensors only

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Same values, cut loose from the graph.
    Tensor detach() const;

    std::shared_ptr<TensorImpl>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
    friend Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                                 std::function<void(TensorImpl&)> backward_fn);
};

// Reverse-mode pass: fills .grad of every requires_grad leaf reachable from
// `loss`, visiting each graph node once in reverse topological order.
void backward(const Tensor& loss);

// While alive, ops do not record graph nodes (inference mode). Thread-local.
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_recording_enabled();

// Glue for op implementations: wires parents/backward when recording is on
// and any input requires grad.
Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<void(TensorImpl&)> backward_fn);

}  // namespace gfk
