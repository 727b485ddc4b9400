#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "hapstream/rng.hpp"

namespace hapstream {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) {
        if (d <= 0) throw std::invalid_argument("tensor shape dims must be positive");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct TensorImpl;

// One step of the reverse pass: reads out.grad, accumulates into parents.
struct Node {
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until first accumulation
    std::shared_ptr<Node> node;

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

// Gradient tracking is on by default; predictions wrap themselves in a
// NoGradGuard so inference builds no graph.
namespace detail {
inline thread_local int no_grad_depth = 0;
}

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

class NoGradGuard {
public:
    NoGradGuard() { ++detail::no_grad_depth; }
    ~NoGradGuard() { --detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
public:
    Tensor() : impl_(std::make_shared<TensorImpl>()) {
        impl_->shape = {1};
        impl_->values.assign(1, 0.0);
    }

    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
        : impl_(std::make_shared<TensorImpl>()) {
        impl_->shape = std::move(shape);
        impl_->values.assign(static_cast<std::size_t>(shape_numel(impl_->shape)), fill);
        impl_->requires_grad = requires_grad;
    }

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : impl_(std::make_shared<TensorImpl>()) {
        if (static_cast<std::size_t>(shape_numel(shape)) != values.size())
            throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                        " values do not fill shape " + shape_str(shape));
        impl_->shape = std::move(shape);
        impl_->values = std::move(values);
        impl_->requires_grad = requires_grad;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor randn(Shape shape, rng::Engine& eng, double stddev = 1.0, bool requires_grad = true) {
        Tensor t(std::move(shape), 0.0, requires_grad);
        for (auto& v : t.impl_->values) v = stddev * eng.normal();
        return t;
    }

    static Tensor uniform(Shape shape, rng::Engine& eng, double lo, double hi, bool requires_grad = true) {
        Tensor t(std::move(shape), 0.0, requires_grad);
        for (auto& v : t.impl_->values) v = eng.uniform(lo, hi);
        return t;
    }

    const Shape& shape() const { return impl_->shape; }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->values.size()); }
    std::int64_t rows() const { return impl_->shape.size() == 1 ? 1 : impl_->shape[0]; }
    std::int64_t cols() const { return impl_->shape.back(); }

    std::span<double> values() { return impl_->values; }
    std::span<const double> values() const { return impl_->values; }
    double& at(std::int64_t i) { return impl_->values[static_cast<std::size_t>(i)]; }
    double at(std::int64_t i) const { return impl_->values[static_cast<std::size_t>(i)]; }
    double& at(std::int64_t r, std::int64_t c) { return impl_->values[static_cast<std::size_t>(r * cols() + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return impl_->values[static_cast<std::size_t>(r * cols() + c)]; }

    double item() const {
        if (numel() != 1) throw std::logic_error("item(): tensor has " + std::to_string(numel()) + " elements");
        return impl_->values[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const {
        if (impl_->grad.empty()) throw std::logic_error("grad(): no gradient accumulated; call backward() first");
        return impl_->grad;
    }
    std::span<double> grad_mut() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }

    TensorImpl& impl() { return *impl_; }
    const TensorImpl& impl() const { return *impl_; }
    const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

    // Reverse pass from a scalar loss. Topological order guarantees each
    // node fires once, so shared subexpressions accumulate additively.
    void backward() const {
        if (numel() != 1) throw std::logic_error("backward(): loss must be scalar, got " + shape_str(shape()));
        std::vector<TensorImpl*> topo;
        std::unordered_set<TensorImpl*> seen;
        std::vector<std::pair<TensorImpl*, std::size_t>> stack;
        stack.emplace_back(impl_.get(), 0);
        seen.insert(impl_.get());
        while (!stack.empty()) {
            auto& [ti, next] = stack.back();
            if (ti->node && next < ti->node->parents.size()) {
                TensorImpl* p = ti->node->parents[next++].get();
                if (seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                topo.push_back(ti);
                stack.pop_back();
            }
        }
        impl_->ensure_grad();
        impl_->grad[0] += 1.0;
        for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
            TensorImpl* ti = *it;
            if (ti->node && ti->node->backward) ti->node->backward(*ti);
        }
    }

private:
    std::shared_ptr<TensorImpl> impl_;
};

namespace detail {

// Builds the output of an op: grads flow iff tracking is on and some
// parent wants them.
inline Tensor make_op_output(Shape shape, std::vector<double> values,
                             std::vector<Tensor> parents,
                             std::function<void(const TensorImpl&)> backward) {
    bool track = false;
    if (grad_enabled()) {
        for (const auto& p : parents)
            if (p.requires_grad()) { track = true; break; }
    }
    Tensor out(std::move(shape), std::move(values), track);
    if (track) {
        auto node = std::make_shared<Node>();
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.impl_ptr());
        node->backward = std::move(backward);
        out.impl().node = std::move(node);
    }
    return out;
}

}  // namespace detail

}  // namespace hapstream
