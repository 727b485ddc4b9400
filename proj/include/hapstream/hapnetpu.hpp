#pragma once

#include <vector>

#include "hapstream/adam.hpp"
#include "hapstream/hapnet.hpp"
#include "hapstream/model.hpp"
#include "hapstream/ops.hpp"

namespace hapstream {

// Recurrent model for the positionally uncorrelated regime. Compressed
// (index, value) entries become tokens value*1 + PE(index) — the same
// scalar position encoding HapNet uses, so positional identity survives
// compression — and a gated recurrent cell consumes them starting from
// the context carried over from the previous time step. The context is
// detached at every step boundary; gradients flow only through the
// within-sample recurrence.
class HapNetPU : public OnlineModel {
public:
    struct StepResult {
        Tensor logits;   // [1 x C]
        Tensor hidden;   // [1 x H] final hidden; next context when adopted
        bool advanced = false;
    };

    HapNetPU(std::int64_t num_features, int num_classes, FeatureSplit split, HapNetConfig cfg,
             rng::Engine init_eng, rng::Engine train_eng)
        : cfg_(cfg), d_(num_features), classes_(num_classes), split_(std::move(split)),
          train_eng_(train_eng), buffer_(static_cast<std::size_t>(cfg.buffer_size)) {
        cfg_.validate();
        pe_ = sinusoidal_pe(d_, cfg_.d_model);
        const std::int64_t H = cfg_.d_model;
        auto mat = [&](std::int64_t in, std::int64_t out) {
            const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
            return Tensor::uniform({in, out}, init_eng, -bound, bound);
        };
        wz_ = mat(H, H); uz_ = mat(H, H); bz_ = Tensor({H}, 0.0, true);
        wr_ = mat(H, H); ur_ = mat(H, H); br_ = Tensor({H}, 0.0, true);
        wh_ = mat(H, H); uh_ = mat(H, H); bh_ = Tensor({H}, 0.0, true);
        head1_ = mat(H, H);
        head1_bias_ = Tensor({H}, 0.0, true);
        head2_ = mat(H, classes_);
        head2_bias_ = Tensor({classes_}, 0.0, true);
        context_.assign(static_cast<std::size_t>(H), 0.0);
        opt_ = Adam(collect_params(), AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8});
    }

    // One recurrent pass over a compressed sample from the given context.
    // Empty samples do not advance the cell; logits come from the context
    // alone.
    StepResult step(const CompressedSample& c, std::span<const double> context) const {
        const std::int64_t H = cfg_.d_model;
        if (static_cast<std::int64_t>(context.size()) != H)
            throw std::invalid_argument("hapnetpu: context width mismatch");
        Tensor h({1, H}, std::vector<double>(context.begin(), context.end()));
        bool advanced = false;
        for (const auto& [idx, val] : c.entries) {
            if (idx < 0 || idx >= d_)
                throw std::invalid_argument("hapnetpu: entry index " + std::to_string(idx) + " out of range");
            std::vector<double> tok(static_cast<std::size_t>(H));
            const double* pe = pe_.data() + idx * H;
            for (std::int64_t k = 0; k < H; ++k) tok[static_cast<std::size_t>(k)] = val + pe[k];
            Tensor x({1, H}, std::move(tok));
            Tensor z = ops::sigmoid(ops::add(ops::linear(x, wz_, bz_), ops::matmul(h, uz_)));
            Tensor r = ops::sigmoid(ops::add(ops::linear(x, wr_, br_), ops::matmul(h, ur_)));
            Tensor hbar = ops::tanh(ops::add(ops::linear(x, wh_, bh_), ops::matmul(ops::mul(r, h), uh_)));
            h = ops::add(h, ops::mul(z, ops::sub(hbar, h)));  // (1-z)h + z*hbar
            advanced = true;
        }
        Tensor hidden_out = h;
        Tensor logits = ops::linear(ops::relu(ops::linear(h, head1_, head1_bias_)), head2_, head2_bias_);
        return {std::move(logits), std::move(hidden_out), advanced};
    }

    std::span<const double> context() const { return context_; }
    void reset_context() { std::fill(context_.begin(), context_.end(), 0.0); }

    std::vector<Tensor> collect_params() const {
        return {wz_, uz_, bz_, wr_, ur_, br_, wh_, uh_, bh_, head1_, head1_bias_, head2_, head2_bias_};
    }

    std::vector<NamedParam> named_params() override {
        return {{"gru.wz", wz_}, {"gru.uz", uz_}, {"gru.bz", bz_}, {"gru.wr", wr_}, {"gru.ur", ur_},
                {"gru.br", br_}, {"gru.wh", wh_}, {"gru.uh", uh_}, {"gru.bh", bh_}, {"head1.weight", head1_},
                {"head1.bias", head1_bias_}, {"head2.weight", head2_}, {"head2.bias", head2_bias_}};
    }

    const HapNetConfig& config() const { return cfg_; }

protected:
    std::vector<double> predict_impl(const StreamSample& s) override {
        StepResult r = step(compress(s), context_);
        return {r.logits.values().begin(), r.logits.values().end()};
    }

    double update_impl(const StreamSample& s, int label) override {
        const CompressedSample current = compress(s);
        buffer_.push(Stored{current, context_, label});

        std::vector<CompressedSample> copies = bootstrap_compressed(current);
        const std::int64_t extra = cfg_.batch_size - static_cast<std::int64_t>(copies.size());
        std::vector<Stored> replays;
        replays.reserve(static_cast<std::size_t>(std::max<std::int64_t>(extra, 0)));
        for (std::int64_t i = 0; i < extra; ++i)
            replays.push_back(buffer_[static_cast<std::size_t>(train_eng_.below(buffer_.size()))]);

        Tensor total = Tensor::scalar(0.0);
        std::int64_t n = 0;
        for (const auto& c : copies) {
            Tensor ce = ops::cross_entropy(step(c, context_).logits, {label});
            total = ops::add(total, ce);
            ++n;
        }
        for (const auto& st : replays) {
            Tensor ce = ops::cross_entropy(step(st.sample, st.context).logits, {st.label});
            total = ops::add(total, ce);
            ++n;
        }
        Tensor loss = ops::scale(total, 1.0 / static_cast<double>(n));
        const double loss_value = loss.item();
        loss.backward();
        opt_.step();

        // feedback: advance the context with the freshly updated cell
        {
            NoGradGuard ng;
            StepResult r = step(current, context_);
            if (r.advanced)
                context_.assign(r.hidden.values().begin(), r.hidden.values().end());
        }
        return loss_value;
    }

private:
    struct Stored {
        CompressedSample sample;
        std::vector<double> context;
        int label;
    };

    // Copy 0 identity; copies 1..K-1 drop auxiliary entries with
    // probability q (removal, not zeroing: compression semantics).
    std::vector<CompressedSample> bootstrap_compressed(const CompressedSample& c) {
        std::vector<CompressedSample> out;
        out.push_back(c);
        for (std::int64_t k = 1; k < cfg_.bootstrap_copies; ++k) {
            CompressedSample copy;
            copy.t = c.t;
            copy.label = c.label;
            for (const auto& e : c.entries) {
                if (split_.is_aux(e.first) && cfg_.bootstrap_q > 0.0 && train_eng_.uniform() < cfg_.bootstrap_q)
                    continue;
                copy.entries.push_back(e);
            }
            out.push_back(std::move(copy));
        }
        return out;
    }

    HapNetConfig cfg_;
    std::int64_t d_;
    int classes_;
    FeatureSplit split_;
    std::vector<double> pe_;
    rng::Engine train_eng_;

    Tensor wz_, uz_, bz_, wr_, ur_, br_, wh_, uh_, bh_;
    Tensor head1_, head1_bias_, head2_, head2_bias_;
    std::vector<double> context_;
    Adam opt_;
    ReplayRing<Stored> buffer_;
};

}  // namespace hapstream
