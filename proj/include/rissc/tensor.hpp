#pragma once

// Dense double-precision tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle to an immutable node. Nodes created while
// gradient recording is enabled and at least one parent requires a gradient
// remember their parents and a backward closure; every node also carries a
// monotonically increasing sequence number, so sorting the reachable set by
// descending sequence number yields a valid reverse topological order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rissc::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
    std::uint64_t seq = 0;
    std::vector<NodePtr> parents;
    BackwardFn backward_fn;

    // Returns the gradient buffer, allocating zeros on first use.
    std::vector<double>& grad_buffer();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const;
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<const double> data() const { return node_->value; }
    double item() const;
    double operator[](std::size_t i) const { return node_->value[i]; }

    // Leaf tensors (parameters) may be updated in place by optimizers and
    // finite-difference probes. Calling this on an interior node is an error.
    std::span<double> mutable_data();

    // Empty span when no gradient has been accumulated.
    std::span<const double> grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.clear(); }
    std::span<double> mutable_grad() { return node_->grad_buffer(); }

    // Same values, no history.
    Tensor detach() const;

    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

// Gradient recording is on by default; NoGradGuard disables it for the
// lifetime of the guard on the current thread.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Creates the result node of an operation. The backward closure receives the
// result node (whose grad is populated) and must accumulate into the parents'
// grad buffers. History is dropped when recording is off or no parent needs a
// gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   BackwardFn backward_fn);

// Single reverse sweep from a scalar loss. Gradients accumulate into every
// reachable node that requires one.
void backward(const Tensor& loss);

// Nodes reachable from `root` that require a gradient, in the order the
// reverse sweep visits them.
std::vector<NodePtr> reverse_topological_order(const Tensor& root);

}  // namespace rissc::ad
