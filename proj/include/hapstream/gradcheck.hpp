#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hapstream/tensor.hpp"

namespace hapstream {

// Central finite-difference check of reverse-mode gradients. The loss
// closure must be a pure function of the parameter values (reseed any
// dropout engine inside it). Returns the worst relative error over all
// checked coordinates; `max_per_param` > 0 caps the coordinates probed
// per tensor (deterministic stride subsample).
inline double gradcheck_max_rel_error(const std::function<Tensor()>& loss,
                                      std::vector<Tensor> params,
                                      double eps = 1e-5,
                                      std::int64_t max_per_param = -1) {
    for (auto& p : params) p.zero_grad();
    std::vector<std::vector<double>> analytic;
    {
        Tensor l = loss();
        l.backward();
        for (auto& p : params) {
            auto g = p.grad();
            analytic.emplace_back(g.begin(), g.end());
        }
    }
    double worst = 0.0;
    NoGradGuard ng;  // finite differences need values only
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto w = params[pi].values();
        const std::int64_t n = static_cast<std::int64_t>(w.size());
        const std::int64_t stride =
            (max_per_param > 0 && n > max_per_param) ? (n + max_per_param - 1) / max_per_param : 1;
        for (std::int64_t j = 0; j < n; j += stride) {
            const double orig = w[static_cast<std::size_t>(j)];
            w[static_cast<std::size_t>(j)] = orig + eps;
            const double fp = loss().item();
            w[static_cast<std::size_t>(j)] = orig - eps;
            const double fm = loss().item();
            w[static_cast<std::size_t>(j)] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[pi][static_cast<std::size_t>(j)];
            const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace hapstream
