// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode automatic differentiation over dense double arrays.
//
// Graphs are built on the fly (define-by-run): every op on tensors that
// require gradients records its inputs and a backward rule. backward()
// orders the reachable nodes into a ComputationTape and replays it in
// reverse. Leaves accumulate gradients across calls; interior gradients are
// recomputed per call.
//
// A graph and its tensors belong to one thread at a time.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace edvtg::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class ShapeError : public std::invalid_argument {
public:
    ShapeError(const std::string& op, const Shape& a, const Shape& b);
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first written
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;
    const char* op = "leaf";

    bool is_leaf() const { return parents.empty(); }
    std::vector<double>& ensure_grad();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const { return node_->value; }
    std::span<double> mutable_data() { return node_->value; }
    double item() const;
    double operator[](std::size_t i) const { return node_->value[i]; }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    bool has_grad() const { return !node_->grad.empty(); }
    /// Zeros when no gradient has been accumulated yet.
    std::vector<double> grad() const;
    std::span<double> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad();

    /// Same storage, cut off from the graph.
    Tensor detach() const;

    Node* node() const { return node_.get(); }
    const NodePtr& node_ptr() const { return node_; }

private:
    NodePtr node_;
};

/// Disables graph recording for its lifetime (evaluation, finite differences).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// Elementwise binary ops accept equal shapes, a one-element right operand,
// or a right operand of shape {n} / {1, n} broadcast over the rows of a
// 2-D left operand. Nothing else broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor pow(const Tensor& a, double p);
Tensor abs(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Softmax along the last axis. -inf entries receive probability 0.
Tensor softmax(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor embedding(const Tensor& table, std::span<const int> ids);

/// Mean token cross-entropy over rows of `logits`; targets < 0 are ignored.
/// Throws when every target is ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Ordered, de-duplicated view of the graph reachable from a root:
/// every node appears after all of its parents.
class ComputationTape {
public:
    static ComputationTape record(const Tensor& root);

    const std::vector<Node*>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(root)/d(root) = 1 and replays backward rules in reverse order.
    void backward() const;

private:
    std::vector<Node*> nodes_;
};

/// Populates gradients of every requires_grad leaf reachable from `loss`.
/// Throws if `loss` is not a one-element tensor.
void backward(const Tensor& loss);

struct GradCheckOptions {
    double step = 1e-5;
    double tol = 1e-4;
    /// 0 probes every element of every leaf; otherwise this many
    /// (leaf, element) pairs drawn uniformly over all elements.
    std::size_t probes = 0;
    std::uint64_t seed = 0;
    /// Lower bound on the relative-error denominator, so that gradients
    /// near zero are judged by absolute error instead.
    double denom_floor = 1e-6;
};

struct LeafCheck {
    std::string name;
    std::size_t probed = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool finite = true;
};

struct GradCheckReport {
    std::vector<LeafCheck> leaves;
    std::size_t probed = 0;
    double max_rel_error = 0.0;
    bool non_finite = false;
    bool passed = false;
};

/// Compares analytic gradients of `f` against central differences.
/// `f` must rebuild its graph from the leaves on every call.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& leaves,
                           const GradCheckOptions& opts = {});

}  // namespace edvtg::ad
