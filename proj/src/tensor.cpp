#include "rissc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace rissc::ad {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

NodePtr new_node(Shape shape, std::vector<double> value, bool requires_grad) {
    if (numel(shape) != value.size())
        throw ShapeError("data length " + std::to_string(value.size()) + " does not match shape " +
                         shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
    return n;
}

}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    for (auto d : shape)
        if (d == 0) throw ShapeError("zero-sized dimension in " + shape_str(shape));
    return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    const auto n = numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from_data({1}, {v}, requires_grad); }

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= rank()) throw ShapeError("axis " + std::to_string(i) + " out of range for " + shape_str(shape()));
    return node_->shape[i];
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
}

std::span<double> Tensor::mutable_data() {
    if (node_->backward_fn) throw ContractError("mutable_data() on a non-leaf tensor");
    return node_->value;
}

Tensor Tensor::detach() const { return Tensor(new_node(node_->shape, node_->value, false)); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   BackwardFn backward_fn) {
    bool needs = false;
    if (t_grad_enabled)
        for (const auto& p : parents) needs = needs || p.requires_grad();
    auto n = new_node(std::move(shape), std::move(value), needs);
    if (needs) {
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

std::vector<NodePtr> reverse_topological_order(const Tensor& root) {
    std::vector<NodePtr> out;
    if (!root.requires_grad()) return out;
    std::unordered_set<const Node*> seen;
    std::vector<NodePtr> stack{root.node()};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto n = std::move(stack.back());
        stack.pop_back();
        for (const auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
        out.push_back(std::move(n));
    }
    // Parents are always created before children.
    std::sort(out.begin(), out.end(), [](const NodePtr& a, const NodePtr& b) { return a->seq > b->seq; });
    return out;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward() requires a scalar loss, got " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    if (!loss.requires_grad()) throw ContractError("loss does not depend on any trainable tensor");
    auto order = reverse_topological_order(loss);
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto& n : order)
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
}

}  // namespace rissc::ad
