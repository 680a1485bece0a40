#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "micap/errors.hpp"
#include "micap/rng.hpp"

namespace micap {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EMat>;
using ConstMatMap = Eigen::Map<const EMat>;

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// Reverse-mode autograd node. Forward values live in `data`, gradients are
// accumulated into `grad` during Tensor::backward(). `backward` reads the
// node's own grad and scatters into its parents.
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backward;

    int64_t size() const { return static_cast<int64_t>(data.size()); }

    int rows() const {
        if (shape.size() == 2) return shape[0];
        if (shape.size() <= 1) return 1;
        throw ShapeError("rows(): tensor has more than 2 dims");
    }
    int cols() const {
        if (shape.size() == 2) return shape[1];
        if (shape.size() == 1) return shape[0];
        if (shape.empty()) return 1;
        throw ShapeError("cols(): tensor has more than 2 dims");
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }

    MatMap mat() { return MatMap(data.data(), rows(), cols()); }
    ConstMatMap mat() const { return ConstMatMap(data.data(), rows(), cols()); }
    MatMap grad_mat() {
        ensure_grad();
        return MatMap(grad.data(), rows(), cols());
    }
};

namespace detail {
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

// Disables graph construction in scope; generation and evaluation run under
// this so autoregressive loops do not accumulate graph memory.
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor shape entries must be positive");
        n *= d;
    }
    return n;
}

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return filled(std::move(shape), 0.0, requires_grad);
    }

    static Tensor filled(std::vector<int> shape, double v, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode>();
        n->data.assign(static_cast<size_t>(shape_numel(shape)), v);
        n->shape = std::move(shape);
        n->requires_grad = requires_grad && grad_enabled();
        return Tensor(std::move(n));
    }

    static Tensor from_data(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<int64_t>(values.size()))
            throw ShapeError("from_data: product(shape) != len(data)");
        auto n = std::make_shared<TensorNode>();
        n->shape = std::move(shape);
        n->data = std::move(values);
        n->requires_grad = requires_grad && grad_enabled();
        return Tensor(std::move(n));
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    static Tensor randn(Rng& rng, std::vector<int> shape, double stddev,
                        bool requires_grad = false) {
        auto n = std::make_shared<TensorNode>();
        n->data.resize(static_cast<size_t>(shape_numel(shape)));
        n->shape = std::move(shape);
        for (auto& v : n->data) v = rng.normal(0.0, stddev);
        n->requires_grad = requires_grad && grad_enabled();
        return Tensor(std::move(n));
    }

    bool defined() const { return node_ != nullptr; }
    const NodePtr& node() const { return node_; }

    const std::vector<int>& shape() const { return node_->shape; }
    int64_t size() const { return node_->size(); }
    int rows() const { return node_->rows(); }
    int cols() const { return node_->cols(); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& values() const { return node_->data; }
    std::vector<double>& values() { return node_->data; }
    const std::vector<double>& grad() const { return node_->grad; }

    double item() const {
        if (size() != 1) throw ContractError("item(): tensor is not a scalar");
        return node_->data[0];
    }
    double at(int r, int c) const { return node_->data[static_cast<size_t>(r) * cols() + c]; }

    // Value-only copy with no graph history.
    Tensor detached_copy() const {
        auto n = std::make_shared<TensorNode>();
        n->shape = node_->shape;
        n->data = node_->data;
        return Tensor(std::move(n));
    }

    bool all_finite() const {
        for (double v : node_->data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    // Reverse accumulation from a scalar root.
    void backward() const {
        if (size() != 1) throw ContractError("backward(): root must be a scalar");
        if (!node_->requires_grad)
            throw ContractError("backward(): root does not require grad");

        std::vector<TensorNode*> order;
        std::unordered_set<TensorNode*> seen;
        // iterative post-order
        std::vector<std::pair<TensorNode*, size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [cur, idx] = stack.back();
            if (idx < cur->parents.size()) {
                TensorNode* p = cur->parents[idx++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(cur);
                stack.pop_back();
            }
        }
        node_->ensure_grad();
        node_->grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            TensorNode* n = *it;
            if (n->backward) n->backward(*n);
        }
    }

private:
    NodePtr node_;
};

namespace detail {

// Wires up a freshly computed output node: parents and backward are attached
// only when grad mode is on and some parent participates in the graph.
inline Tensor make_result(std::vector<int> shape, std::vector<double> data,
                          std::vector<NodePtr> parents,
                          std::function<void(TensorNode&)> backward) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    if (grad_enabled()) {
        bool any = false;
        for (const auto& p : parents)
            if (p->requires_grad) any = true;
        if (any) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward = std::move(backward);
        }
    }
    return Tensor(std::move(n));
}

}  // namespace detail

}  // namespace micap
