// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "edvtg/autodiff.hpp"

namespace edvtg::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ')';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b)) {}

std::vector<double>& Node::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor shape " + shape_str(shape) + " has a zero extent");
    }
    if (shape.empty() || shape_numel(shape) != values.size()) {
        throw ShapeError("tensor shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

std::size_t Tensor::rows() const {
    const auto& s = shape();
    return s.size() == 1 ? 1 : s[0];
}

std::size_t Tensor::cols() const { return shape().back(); }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() needs one element, got shape " + shape_str(shape()));
    return node_->value[0];
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
    auto node = std::make_shared<Node>();
    node->shape = node_->shape;
    node->value = node_->value;
    return Tensor(std::move(node));
}

ComputationTape ComputationTape::record(const Tensor& root) {
    ComputationTape tape;
    if (!root.defined()) return tape;
    // iterative post-order DFS so deep graphs cannot overflow the stack
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            tape.nodes_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void ComputationTape::backward() const {
    if (nodes_.empty()) return;
    for (Node* n : nodes_) {
        if (!n->is_leaf()) n->grad.clear();
    }
    Node* root = nodes_.back();
    auto& g = root->ensure_grad();
    for (auto& v : g) v += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward() needs a scalar loss, got shape " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) return;
    ComputationTape::record(loss).backward();
}

}  // namespace edvtg::ad
