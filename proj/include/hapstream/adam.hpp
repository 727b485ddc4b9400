#pragma once

#include <cmath>
#include <vector>

#include "hapstream/tensor.hpp"

namespace hapstream {

struct AdamConfig {
    double lr = 0.0001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction, bound to a fixed parameter list.
// Owns the zero-grad step: grads are cleared after every update so the
// online loop can never silently accumulate across samples.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<Tensor> params, AdamConfig cfg = {}) : cfg_(cfg), params_(std::move(params)) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0);
            v_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0);
        }
    }

    void step() {
        ++step_count_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = params_[i];
            if (!p.has_grad())
                throw std::logic_error("adam: parameter " + std::to_string(i) + " has no gradient");
            auto g = p.grad();
            auto w = p.values();
            for (std::size_t j = 0; j < w.size(); ++j) {
                m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
                v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
            p.zero_grad();
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    std::int64_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t step_count_ = 0;
};

}  // namespace hapstream
