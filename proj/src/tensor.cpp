#include "gd/tensor.hpp"

#include <malloc.h>

#include <atomic>
#include <stdexcept>
#include <unordered_set>

namespace gd {

namespace {
std::atomic<std::uint64_t> g_next_node_id{1};

// Tensor payloads run to a few MB and are allocated/freed once per op; keep
// them inside the heap arena instead of per-allocation mmap so the pages stay
// warm across steps.
struct MallocTuning {
    MallocTuning() {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
    }
};
const MallocTuning g_malloc_tuning;
}  // namespace

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, Real v, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    n->value.assign(shape_numel(shape), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<Real> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw std::invalid_argument("Tensor::from_data: " + std::to_string(data.size()) +
                                    " values for shape " + shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(Real v, bool requires_grad) {
    return from_data({}, {v}, requires_grad);
}

Real Tensor::item() const {
    if (numel() != 1)
        throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(numel()) +
                                    " elements");
    return node_->value[0];
}

const std::vector<Real>& Tensor::grad() const {
    if (node_->grad.empty())
        throw std::runtime_error("Tensor::grad: no gradient present (node " +
                                 std::to_string(node_->id) + ")");
    return node_->grad;
}

Tensor make_op_node(Shape shape, std::vector<Real> value, std::vector<Tensor> inputs,
                    std::function<void(detail::Node&)> backprop) {
    auto n = std::make_shared<detail::Node>();
    n->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    for (const auto& t : inputs) rg = rg || t.requires_grad();
    n->requires_grad = rg;
    if (rg) {
        n->parents.reserve(inputs.size());
        for (auto& t : inputs) n->parents.push_back(t.node());
        n->backprop = std::move(backprop);
    }
    return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(loss.shape()));
    auto root = loss.node();
    if (root->backward_done)
        throw std::runtime_error("backward: already ran through this loss; rebuild the graph first");
    root->backward_done = true;
    if (!root->requires_grad) return;  // nothing reachable requires grad

    // Iterative postorder DFS over parents; reversed it yields each node
    // before any of its inputs.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backprop && !node->grad.empty()) node->backprop(*node);
    }
}

}  // namespace gd
