#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gd/graph.hpp"  // Real

namespace gd {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

namespace detail {

struct Node {
    std::uint64_t id = 0;
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool backward_done = false;  // set on a loss root after backward()
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates this node's grad into its parents' grads. Null for leaves
    // and for nodes outside any differentiable path.
    std::function<void(Node&)> backprop;

    std::vector<Real>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

// Dense multi-dimensional array tracked by reverse-mode autodiff. A Tensor is
// a cheap shared handle to a tape node; ops (see ops.hpp) build fresh nodes,
// backward() walks the recorded graph. Scalars have an empty shape.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, Real v, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<Real> data, bool requires_grad = false);
    static Tensor scalar(Real v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[i]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
    std::uint64_t node_id() const { return node_->id; }

    const std::vector<Real>& value() const { return node_->value; }
    // Direct mutation of a leaf's payload (optimizer updates, running stats).
    std::vector<Real>& mutable_value() { return node_->value; }
    Real item() const;  // value of a single-element tensor

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<Real>& grad() const;
    void zero_grad() { node_->grad.clear(); }

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Reverse pass from a scalar loss. Populates grad on every requires_grad
// tensor reachable through the tape. A second backward() through the same
// loss without rebuilding the graph is rejected.
void backward(const Tensor& loss);

// Tape node factory used by the operator implementations.
Tensor make_op_node(Shape shape, std::vector<Real> value, std::vector<Tensor> inputs,
                    std::function<void(detail::Node&)> backprop);

}  // namespace gd
