#pragma once

#include <cmath>
#include <deque>
#include <vector>

#include "hapstream/adam.hpp"
#include "hapstream/model.hpp"
#include "hapstream/ops.hpp"

namespace hapstream {

struct HapNetConfig {
    std::int64_t d_model = 32;
    std::int64_t blocks = 6;
    std::int64_t heads = 4;
    std::int64_t ff_width = 64;
    double dropout = 0.15;
    std::int64_t bootstrap_copies = 4;   // K
    double bootstrap_q = 0.5;            // per-coordinate drop probability
    double lr = 0.0001;
    std::int64_t batch_size = 64;
    std::int64_t buffer_size = 256;

    void validate() const {
        if (d_model % heads != 0) throw std::invalid_argument("hapnet: d_model must be divisible by heads");
        if (bootstrap_copies < 1) throw std::invalid_argument("hapnet: K must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("hapnet: dropout must be in [0,1)");
        if (batch_size < bootstrap_copies) throw std::invalid_argument("hapnet: batch_size must be >= K");
        if (buffer_size < 1) throw std::invalid_argument("hapnet: buffer_size must be >= 1");
    }
};

// Standard sinusoidal encoding of scalar positions, [positions x d_model].
inline std::vector<double> sinusoidal_pe(std::int64_t positions, std::int64_t d_model) {
    std::vector<double> pe(static_cast<std::size_t>(positions * d_model));
    for (std::int64_t pos = 0; pos < positions; ++pos)
        for (std::int64_t c = 0; c < d_model; ++c) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / static_cast<double>(d_model));
            const double angle = static_cast<double>(pos) * freq;
            pe[static_cast<std::size_t>(pos * d_model + c)] = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

// Fixed-capacity ring holding past samples for replay.
template <class T>
class ReplayRing {
public:
    explicit ReplayRing(std::size_t capacity) : capacity_(capacity) {}

    void push(T item) {
        if (items_.size() < capacity_) {
            items_.push_back(std::move(item));
        } else {
            items_[head_] = std::move(item);
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::size_t size() const { return items_.size(); }
    const T& operator[](std::size_t i) const { return items_[i]; }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<T> items_;
};

// Self-attention encoder over per-feature tokens. Feature values act as
// their own embeddings (value broadcast across channels) plus sinusoidal
// position encoding and a learned availability offset; masked positions
// carry only position information.
class HapNet : public OnlineModel {
public:
    HapNet(std::int64_t num_features, int num_classes, FeatureSplit split, HapNetConfig cfg,
           rng::Engine init_eng, rng::Engine train_eng)
        : cfg_(cfg), d_(num_features), classes_(num_classes), split_(std::move(split)),
          train_eng_(train_eng), buffer_(static_cast<std::size_t>(cfg.buffer_size)) {
        cfg_.validate();
        pe_ = sinusoidal_pe(d_, cfg_.d_model);
        avail_offset_ = Tensor({cfg_.d_model}, 0.0, true);
        auto mat = [&](std::int64_t in, std::int64_t out) {
            const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
            return Tensor::uniform({in, out}, init_eng, -bound, bound);
        };
        blocks_.resize(static_cast<std::size_t>(cfg_.blocks));
        for (auto& b : blocks_) {
            b.ln1_gain = Tensor({cfg_.d_model}, 1.0, true);
            b.ln1_bias = Tensor({cfg_.d_model}, 0.0, true);
            b.wq = mat(cfg_.d_model, cfg_.d_model);
            b.bq = Tensor({cfg_.d_model}, 0.0, true);
            b.wk = mat(cfg_.d_model, cfg_.d_model);
            b.bk = Tensor({cfg_.d_model}, 0.0, true);
            b.wv = mat(cfg_.d_model, cfg_.d_model);
            b.bv = Tensor({cfg_.d_model}, 0.0, true);
            b.wo = mat(cfg_.d_model, cfg_.d_model);
            b.bo = Tensor({cfg_.d_model}, 0.0, true);
            b.ln2_gain = Tensor({cfg_.d_model}, 1.0, true);
            b.ln2_bias = Tensor({cfg_.d_model}, 0.0, true);
            b.ff1 = mat(cfg_.d_model, cfg_.ff_width);
            b.ff1_bias = Tensor({cfg_.ff_width}, 0.0, true);
            b.ff2 = mat(cfg_.ff_width, cfg_.d_model);
            b.ff2_bias = Tensor({cfg_.d_model}, 0.0, true);
        }
        final_gain_ = Tensor({cfg_.d_model}, 1.0, true);
        final_bias_ = Tensor({cfg_.d_model}, 0.0, true);
        head1_ = mat(cfg_.d_model, cfg_.d_model);
        head1_bias_ = Tensor({cfg_.d_model}, 0.0, true);
        head2_ = mat(cfg_.d_model, classes_);
        head2_bias_ = Tensor({classes_}, 0.0, true);
        opt_ = Adam(collect_params(), AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8});
    }

    // Token construction for a batch of masked views: [B*d x d_model].
    Tensor embed(const std::vector<MaskedCopy>& rows) const {
        const std::int64_t B = static_cast<std::int64_t>(rows.size());
        std::vector<double> base(static_cast<std::size_t>(B * d_ * cfg_.d_model));
        std::vector<double> bits(static_cast<std::size_t>(B * d_));
        for (std::int64_t b = 0; b < B; ++b) {
            const auto& row = rows[static_cast<std::size_t>(b)];
            if (static_cast<std::int64_t>(row.values.size()) != d_)
                throw std::invalid_argument("hapnet: sample has " + std::to_string(row.values.size()) +
                                            " features, expected " + std::to_string(d_));
            for (std::int64_t i = 0; i < d_; ++i) {
                const double v = row.values[static_cast<std::size_t>(i)];
                const double* pe = pe_.data() + i * cfg_.d_model;
                double* dst = base.data() + (b * d_ + i) * cfg_.d_model;
                for (std::int64_t c = 0; c < cfg_.d_model; ++c) dst[c] = v + pe[c];
                bits[static_cast<std::size_t>(b * d_ + i)] = row.mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
            }
        }
        return ops::add_mask_offset({B * d_, cfg_.d_model}, std::move(base), std::move(bits), avail_offset_);
    }

    // Pre-norm encoder stack, mean pool over tokens, two-layer head.
    Tensor forward(const std::vector<MaskedCopy>& rows, bool training, rng::Engine& eng) const {
        const std::int64_t B = static_cast<std::int64_t>(rows.size());
        Tensor x = embed(rows);
        for (const auto& b : blocks_) {
            Tensor h = ops::layer_norm(x, b.ln1_gain, b.ln1_bias);
            Tensor att = ops::attention_core(ops::linear(h, b.wq, b.bq), ops::linear(h, b.wk, b.bk),
                                             ops::linear(h, b.wv, b.bv), B, d_, cfg_.heads);
            att = ops::linear(att, b.wo, b.bo);
            x = ops::add(x, ops::dropout(att, cfg_.dropout, training, eng));
            Tensor f = ops::layer_norm(x, b.ln2_gain, b.ln2_bias);
            f = ops::linear(ops::relu(ops::linear(f, b.ff1, b.ff1_bias)), b.ff2, b.ff2_bias);
            x = ops::add(x, ops::dropout(f, cfg_.dropout, training, eng));
        }
        x = ops::layer_norm(x, final_gain_, final_bias_);
        Tensor pooled = ops::mean_tokens(x, B, d_);
        Tensor hidden = ops::relu(ops::linear(pooled, head1_, head1_bias_));
        return ops::linear(hidden, head2_, head2_bias_);
    }

    std::vector<Tensor> collect_params() const {
        std::vector<Tensor> ps;
        ps.push_back(avail_offset_);
        for (const auto& b : blocks_)
            for (const Tensor* t :
                 {&b.ln1_gain, &b.ln1_bias, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo,
                  &b.ln2_gain, &b.ln2_bias, &b.ff1, &b.ff1_bias, &b.ff2, &b.ff2_bias})
                ps.push_back(*t);
        for (const Tensor* t : {&final_gain_, &final_bias_, &head1_, &head1_bias_, &head2_, &head2_bias_})
            ps.push_back(*t);
        return ps;
    }

    std::vector<NamedParam> named_params() override {
        std::vector<NamedParam> out;
        out.push_back({"avail_offset", avail_offset_});
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const auto& b = blocks_[i];
            const std::string pre = "block" + std::to_string(i) + ".";
            out.push_back({pre + "ln1.gain", b.ln1_gain});
            out.push_back({pre + "ln1.bias", b.ln1_bias});
            out.push_back({pre + "attn.wq", b.wq});
            out.push_back({pre + "attn.bq", b.bq});
            out.push_back({pre + "attn.wk", b.wk});
            out.push_back({pre + "attn.bk", b.bk});
            out.push_back({pre + "attn.wv", b.wv});
            out.push_back({pre + "attn.bv", b.bv});
            out.push_back({pre + "attn.wo", b.wo});
            out.push_back({pre + "attn.bo", b.bo});
            out.push_back({pre + "ln2.gain", b.ln2_gain});
            out.push_back({pre + "ln2.bias", b.ln2_bias});
            out.push_back({pre + "ff1.weight", b.ff1});
            out.push_back({pre + "ff1.bias", b.ff1_bias});
            out.push_back({pre + "ff2.weight", b.ff2});
            out.push_back({pre + "ff2.bias", b.ff2_bias});
        }
        out.push_back({"final_ln.gain", final_gain_});
        out.push_back({"final_ln.bias", final_bias_});
        out.push_back({"head1.weight", head1_});
        out.push_back({"head1.bias", head1_bias_});
        out.push_back({"head2.weight", head2_});
        out.push_back({"head2.bias", head2_bias_});
        return out;
    }

    const HapNetConfig& config() const { return cfg_; }
    const FeatureSplit& split() const { return split_; }

protected:
    std::vector<double> predict_impl(const StreamSample& s) override {
        rng::Engine unused;
        Tensor logits = forward({MaskedCopy{s.values, s.mask}}, /*training=*/false, unused);
        return {logits.values().begin(), logits.values().end()};
    }

    double update_impl(const StreamSample& s, int label) override {
        buffer_.push(StoredSample{s.values, s.mask, label});
        auto copies = bootstrap_masks(s, split_, cfg_.bootstrap_copies, cfg_.bootstrap_q, train_eng_);
        std::vector<MaskedCopy> rows;
        std::vector<int> labels;
        rows.reserve(static_cast<std::size_t>(cfg_.batch_size));
        for (auto& c : copies) {
            rows.push_back(std::move(c));
            labels.push_back(label);
        }
        const std::int64_t extra = cfg_.batch_size - cfg_.bootstrap_copies;
        for (std::int64_t i = 0; i < extra; ++i) {
            const auto& past = buffer_[static_cast<std::size_t>(train_eng_.below(buffer_.size()))];
            rows.push_back(MaskedCopy{past.values, past.mask});
            labels.push_back(past.label);
        }
        Tensor loss = ops::cross_entropy(forward(rows, /*training=*/true, train_eng_), labels);
        const double loss_value = loss.item();
        loss.backward();
        opt_.step();
        return loss_value;
    }

private:
    struct Block {
        Tensor ln1_gain, ln1_bias;
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor ln2_gain, ln2_bias;
        Tensor ff1, ff1_bias, ff2, ff2_bias;
    };

    struct StoredSample {
        std::vector<double> values;
        std::vector<bool> mask;
        int label;
    };

    HapNetConfig cfg_;
    std::int64_t d_;
    int classes_;
    FeatureSplit split_;
    std::vector<double> pe_;
    rng::Engine train_eng_;

    Tensor avail_offset_;
    std::vector<Block> blocks_;
    Tensor final_gain_, final_bias_;
    Tensor head1_, head1_bias_, head2_, head2_bias_;
    Adam opt_;
    ReplayRing<StoredSample> buffer_;
};

}  // namespace hapstream
