#pragma once

#include <vector>

#include "hapstream/adam.hpp"
#include "hapstream/model.hpp"
#include "hapstream/ops.hpp"

namespace hapstream {

struct HedgeConfig {
    std::int64_t layers = 4;  // L >= 2
    std::int64_t hidden_width = 64;
    double beta = 0.99;      // multiplicative discount
    double smoothing = 0.2;  // floor s: alpha_i >= s/L
    double lr = 0.001;

    void validate() const {
        if (layers < 2) throw std::invalid_argument("hedge: layers must be >= 2");
        if (beta <= 0.0 || beta >= 1.0) throw std::invalid_argument("hedge: beta must be in (0,1)");
        if (smoothing <= 0.0 || smoothing >= 1.0) throw std::invalid_argument("hedge: smoothing must be in (0,1)");
    }
};

namespace detail {

// Shared backbone of the hedge/weighted-residual pair: a chain of L ReLU
// layers, each with a linear classifier head. Input = values ++ mask bits.
struct LayerStack {
    std::vector<Tensor> weights, biases;        // hidden chain
    std::vector<Tensor> heads, head_biases;     // per-layer classifiers

    void init(std::int64_t in_width, std::int64_t hidden, std::int64_t layers, std::int64_t classes,
              rng::Engine& eng) {
        for (std::int64_t i = 0; i < layers; ++i) {
            const std::int64_t w_in = i == 0 ? in_width : hidden;
            const double bound = std::sqrt(6.0 / static_cast<double>(w_in + hidden));
            weights.push_back(Tensor::uniform({w_in, hidden}, eng, -bound, bound));
            biases.push_back(Tensor({hidden}, 0.0, true));
            const double hb = std::sqrt(6.0 / static_cast<double>(hidden + classes));
            heads.push_back(Tensor::uniform({hidden, classes}, eng, -hb, hb));
            head_biases.push_back(Tensor({classes}, 0.0, true));
        }
    }

    // Returns the per-layer classifier logits for one input row.
    std::vector<Tensor> classifier_logits(const Tensor& x) const {
        std::vector<Tensor> logits;
        Tensor h = x;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            h = ops::relu(ops::linear(h, weights[i], biases[i]));
            logits.push_back(ops::linear(h, heads[i], head_biases[i]));
        }
        return logits;
    }

    void collect(std::vector<Tensor>& out) const {
        for (auto& t : weights) out.push_back(t);
        for (auto& t : biases) out.push_back(t);
        for (auto& t : heads) out.push_back(t);
        for (auto& t : head_biases) out.push_back(t);
    }
};

inline Tensor input_row(const StreamSample& s) {
    const std::size_t d = s.values.size();
    std::vector<double> row(2 * d);
    for (std::size_t i = 0; i < d; ++i) {
        row[i] = s.values[i];
        row[d + i] = s.mask[i] ? 1.0 : 0.0;
    }
    return Tensor({1, static_cast<std::int64_t>(2 * d)}, std::move(row));
}

}  // namespace detail

// Ensemble of per-layer classifiers hedged by multiplicative weights on
// the probability simplex with a smoothing floor.
class HedgeMLP : public OnlineModel {
public:
    HedgeMLP(std::int64_t num_features, int num_classes, HedgeConfig cfg, rng::Engine init_eng)
        : cfg_(cfg), classes_(num_classes) {
        cfg_.validate();
        stack_.init(2 * num_features, cfg_.hidden_width, cfg_.layers, num_classes, init_eng);
        alpha_.assign(static_cast<std::size_t>(cfg_.layers), 1.0 / static_cast<double>(cfg_.layers));
        std::vector<Tensor> params;
        stack_.collect(params);
        opt_ = Adam(params, AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8});
    }

    // ensemble logits = sum_i alpha_i * classifier_i logits
    std::pair<Tensor, std::vector<Tensor>> forward(const Tensor& x) const {
        auto logits = stack_.classifier_logits(x);
        Tensor ensemble = ops::scale(logits[0], alpha_[0]);
        for (std::size_t i = 1; i < logits.size(); ++i)
            ensemble = ops::add(ensemble, ops::scale(logits[i], alpha_[i]));
        return {ensemble, logits};
    }

    const std::vector<double>& alpha() const { return alpha_; }
    void set_alpha(std::vector<double> a) { alpha_ = std::move(a); }

    std::vector<NamedParam> named_params() override {
        std::vector<NamedParam> out;
        for (std::int64_t i = 0; i < cfg_.layers; ++i) {
            out.push_back({"layer" + std::to_string(i) + ".weight", stack_.weights[static_cast<std::size_t>(i)]});
            out.push_back({"layer" + std::to_string(i) + ".bias", stack_.biases[static_cast<std::size_t>(i)]});
            out.push_back({"head" + std::to_string(i) + ".weight", stack_.heads[static_cast<std::size_t>(i)]});
            out.push_back({"head" + std::to_string(i) + ".bias", stack_.head_biases[static_cast<std::size_t>(i)]});
        }
        return out;
    }

protected:
    std::vector<double> predict_impl(const StreamSample& s) override {
        auto [ensemble, logits] = forward(detail::input_row(s));
        return {ensemble.values().begin(), ensemble.values().end()};
    }

    double update_impl(const StreamSample& s, int label) override {
        const Tensor x = detail::input_row(s);
        auto [ensemble, logits] = forward(x);
        const std::vector<int> lab{label};
        Tensor loss = ops::cross_entropy(ensemble, lab);
        std::vector<double> ce(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i) {
            Tensor ci = ops::cross_entropy(logits[i], lab);
            ce[i] = ci.item();
            loss = ops::add(loss, ci);
        }
        const double loss_value = loss.item();
        loss.backward();
        opt_.step();
        // hedging: alpha_i *= beta^{CE_i}, then project back onto the
        // floored simplex {sum = 1, alpha_i >= s/L}
        for (std::size_t i = 0; i < alpha_.size(); ++i) alpha_[i] *= std::pow(cfg_.beta, ce[i]);
        project_alpha();
        return loss_value;
    }

private:
    void project_alpha() {
        const std::size_t L = alpha_.size();
        const double floor = cfg_.smoothing / static_cast<double>(L);
        std::vector<bool> pinned(L, false);
        std::size_t num_pinned = 0;
        for (;;) {
            double free_sum = 0.0;
            for (std::size_t i = 0; i < L; ++i)
                if (!pinned[i]) free_sum += alpha_[i];
            const double target = 1.0 - static_cast<double>(num_pinned) * floor;
            const std::size_t num_free = L - num_pinned;
            bool changed = false;
            for (std::size_t i = 0; i < L; ++i) {
                if (pinned[i]) continue;
                const double scaled = free_sum > 0.0 ? alpha_[i] * target / free_sum
                                                     : target / static_cast<double>(num_free);
                if (scaled < floor) {
                    pinned[i] = true;
                    ++num_pinned;
                    changed = true;
                }
            }
            if (!changed) {
                for (std::size_t i = 0; i < L; ++i) {
                    if (pinned[i])
                        alpha_[i] = floor;
                    else
                        alpha_[i] = free_sum > 0.0 ? alpha_[i] * target / free_sum
                                                   : target / static_cast<double>(num_free);
                }
                return;
            }
            if (num_pinned == L) {
                // everything underflowed: floor plus an even share of the rest
                const double rest = (1.0 - static_cast<double>(L) * floor) / static_cast<double>(L);
                for (auto& a : alpha_) a = floor + rest;
                return;
            }
        }
    }

    HedgeConfig cfg_;
    int classes_;
    detail::LayerStack stack_;
    std::vector<double> alpha_;
    Adam opt_;
};

// Eq-3-style variant: branch outputs scaled by unconstrained learnable
// alpha', one loss on the sum, no per-classifier losses.
class WeightedResidual : public OnlineModel {
public:
    WeightedResidual(std::int64_t num_features, int num_classes, HedgeConfig cfg, rng::Engine init_eng)
        : cfg_(cfg), classes_(num_classes) {
        cfg_.validate();
        stack_.init(2 * num_features, cfg_.hidden_width, cfg_.layers, num_classes, init_eng);
        for (std::int64_t i = 0; i < cfg_.layers; ++i) alpha_.push_back(Tensor({1}, 1.0, true));
        std::vector<Tensor> params;
        stack_.collect(params);
        for (auto& a : alpha_) params.push_back(a);
        opt_ = Adam(params, AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8});
    }

    Tensor forward(const Tensor& x) const {
        auto logits = stack_.classifier_logits(x);
        Tensor out = ops::scale_by(logits[0], alpha_[0]);
        for (std::size_t i = 1; i < logits.size(); ++i)
            out = ops::add(out, ops::scale_by(logits[i], alpha_[i]));
        return out;
    }

    std::vector<Tensor>& alpha() { return alpha_; }

    std::vector<NamedParam> named_params() override {
        std::vector<NamedParam> out;
        for (std::int64_t i = 0; i < cfg_.layers; ++i) {
            out.push_back({"layer" + std::to_string(i) + ".weight", stack_.weights[static_cast<std::size_t>(i)]});
            out.push_back({"layer" + std::to_string(i) + ".bias", stack_.biases[static_cast<std::size_t>(i)]});
            out.push_back({"head" + std::to_string(i) + ".weight", stack_.heads[static_cast<std::size_t>(i)]});
            out.push_back({"head" + std::to_string(i) + ".bias", stack_.head_biases[static_cast<std::size_t>(i)]});
            out.push_back({"alpha" + std::to_string(i), alpha_[static_cast<std::size_t>(i)]});
        }
        return out;
    }

protected:
    std::vector<double> predict_impl(const StreamSample& s) override {
        Tensor out = forward(detail::input_row(s));
        return {out.values().begin(), out.values().end()};
    }

    double update_impl(const StreamSample& s, int label) override {
        Tensor out = forward(detail::input_row(s));
        Tensor loss = ops::cross_entropy(out, {label});
        const double loss_value = loss.item();
        loss.backward();
        opt_.step();
        return loss_value;
    }

private:
    HedgeConfig cfg_;
    int classes_;
    detail::LayerStack stack_;
    std::vector<Tensor> alpha_;
    Adam opt_;
};

}  // namespace hapstream
