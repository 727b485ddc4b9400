#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "hapstream/dataset.hpp"
#include "hapstream/rng.hpp"

namespace hapstream {

enum class StreamMode { haphazard, trapezoid, variable_window };

inline std::string to_string(StreamMode m) {
    switch (m) {
        case StreamMode::haphazard: return "haphazard";
        case StreamMode::trapezoid: return "trapezoid";
        case StreamMode::variable_window: return "variable_window";
    }
    return "?";
}

inline StreamMode stream_mode_from_string(const std::string& s) {
    if (s == "haphazard") return StreamMode::haphazard;
    if (s == "trapezoid") return StreamMode::trapezoid;
    if (s == "variable_window") return StreamMode::variable_window;
    throw std::invalid_argument("unknown stream mode '" + s + "'");
}

struct FeatureSplit {
    std::vector<std::int64_t> base_indices;  // sorted
    std::vector<std::int64_t> aux_indices;   // sorted

    bool is_aux(std::int64_t i) const {
        return std::binary_search(aux_indices.begin(), aux_indices.end(), i);
    }
};

struct StreamConfig {
    StreamMode mode = StreamMode::haphazard;
    double p = 1.0;
    std::uint64_t seed = 0;
    std::int64_t trapezoid_chunks = 10;
    bool scale = true;  // online min-max scaling of observed values
};

struct StreamSample {
    std::int64_t t = 0;
    std::vector<double> values;  // zero where unavailable
    std::vector<bool> mask;      // 1 = available
    int label = 0;
};

// Availability-compressed view: only available coordinates survive, in
// ascending original-index order.
struct CompressedSample {
    std::int64_t t = 0;
    std::vector<std::pair<std::int64_t, double>> entries;
    int label = 0;
};

// One bootstrapped training view of a sample.
struct MaskedCopy {
    std::vector<double> values;
    std::vector<bool> mask;
};

// Last ceil(aux_fraction * d) indices are auxiliary, the rest base.
inline FeatureSplit default_split(std::int64_t d, double aux_fraction) {
    if (aux_fraction <= 0.0 || aux_fraction > 1.0)
        throw std::invalid_argument("aux_fraction must be in (0,1], got " + std::to_string(aux_fraction));
    const std::int64_t aux_count = static_cast<std::int64_t>(std::ceil(aux_fraction * static_cast<double>(d)));
    FeatureSplit split;
    for (std::int64_t i = 0; i < d - aux_count; ++i) split.base_indices.push_back(i);
    for (std::int64_t i = d - aux_count; i < d; ++i) split.aux_indices.push_back(i);
    return split;
}

namespace detail {

// Min-max scaling to [0,1] from values seen so far, available coordinates
// only; no lookahead. First occurrence of a feature maps to 0.
class OnlineMinMaxScaler {
public:
    explicit OnlineMinMaxScaler(std::int64_t d)
        : lo_(static_cast<std::size_t>(d), 0.0), hi_(static_cast<std::size_t>(d), 0.0),
          seen_(static_cast<std::size_t>(d), false) {}

    double observe_and_scale(std::int64_t i, double v) {
        auto ix = static_cast<std::size_t>(i);
        if (!seen_[ix]) {
            seen_[ix] = true;
            lo_[ix] = hi_[ix] = v;
        } else {
            lo_[ix] = std::min(lo_[ix], v);
            hi_[ix] = std::max(hi_[ix], v);
        }
        const double range = hi_[ix] - lo_[ix];
        return range > 0.0 ? (v - lo_[ix]) / range : 0.0;
    }

private:
    std::vector<double> lo_, hi_;
    std::vector<bool> seen_;
};

}  // namespace detail

// Haphazard regime: each auxiliary coordinate of each row is present with
// probability p, Bernoulli keyed by (seed, t, feature) so the stream is
// identical however it is generated. Base coordinates are always present.
inline std::vector<StreamSample> make_haphazard(const RawDataset& ds, const FeatureSplit& split, double p,
                                                std::uint64_t seed, bool scale = true) {
    if (p <= 0.0 || p > 1.0) throw std::invalid_argument("p must be in (0,1], got " + std::to_string(p));
    if (split.aux_indices.empty()) throw std::invalid_argument("haphazard mode requires a nonempty auxiliary set");
    const std::int64_t d = ds.num_features;
    rng::Key key(seed);
    detail::OnlineMinMaxScaler scaler(d);
    std::vector<StreamSample> out;
    out.reserve(ds.rows.size());
    for (std::size_t t = 0; t < ds.rows.size(); ++t) {
        StreamSample s;
        s.t = static_cast<std::int64_t>(t);
        s.label = ds.rows[t].label;
        s.values.assign(static_cast<std::size_t>(d), 0.0);
        s.mask.assign(static_cast<std::size_t>(d), true);
        for (std::int64_t i : split.aux_indices)
            s.mask[static_cast<std::size_t>(i)] =
                p >= 1.0 || key.bernoulli_at(static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(d) +
                                                 static_cast<std::uint64_t>(i),
                                             p);
        for (std::int64_t i = 0; i < d; ++i) {
            if (!s.mask[static_cast<std::size_t>(i)]) continue;
            const double raw = ds.rows[t].values[static_cast<std::size_t>(i)];
            s.values[static_cast<std::size_t>(i)] = scale ? scaler.observe_and_scale(i, raw) : raw;
        }
        out.push_back(std::move(s));
    }
    return out;
}

// Trapezoidal regime: `chunks` equal contiguous segments; in segment k
// (1-based) exactly the first ceil(k*d/chunks) features are available.
inline std::vector<StreamSample> make_trapezoid(const RawDataset& ds, std::int64_t chunks = 10, bool scale = true) {
    if (chunks < 1) throw std::invalid_argument("trapezoid_chunks must be >= 1");
    const std::int64_t d = ds.num_features;
    const std::int64_t n = static_cast<std::int64_t>(ds.rows.size());
    detail::OnlineMinMaxScaler scaler(d);
    std::vector<StreamSample> out;
    out.reserve(ds.rows.size());
    for (std::int64_t t = 0; t < n; ++t) {
        const std::int64_t k = std::min<std::int64_t>(chunks, (t * chunks) / n + 1);
        const std::int64_t avail =
            static_cast<std::int64_t>((k * d + chunks - 1) / chunks);  // ceil(k*d/chunks)
        StreamSample s;
        s.t = t;
        s.label = ds.rows[static_cast<std::size_t>(t)].label;
        s.values.assign(static_cast<std::size_t>(d), 0.0);
        s.mask.assign(static_cast<std::size_t>(d), false);
        for (std::int64_t i = 0; i < avail; ++i) {
            s.mask[static_cast<std::size_t>(i)] = true;
            const double raw = ds.rows[static_cast<std::size_t>(t)].values[static_cast<std::size_t>(i)];
            s.values[static_cast<std::size_t>(i)] = scale ? scaler.observe_and_scale(i, raw) : raw;
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<StreamSample> make_stream(const RawDataset& ds, const FeatureSplit& split,
                                             const StreamConfig& cfg) {
    switch (cfg.mode) {
        case StreamMode::haphazard:
        case StreamMode::variable_window:
            return make_haphazard(ds, split, cfg.p, cfg.seed, cfg.scale);
        case StreamMode::trapezoid:
            return make_trapezoid(ds, cfg.trapezoid_chunks, cfg.scale);
    }
    throw std::logic_error("unreachable");
}

inline CompressedSample compress(const StreamSample& s) {
    CompressedSample c;
    c.t = s.t;
    c.label = s.label;
    for (std::size_t i = 0; i < s.values.size(); ++i)
        if (s.mask[i]) c.entries.emplace_back(static_cast<std::int64_t>(i), s.values[i]);
    return c;
}

// Test oracle for compress: place entries back at their original indices.
inline std::vector<double> scatter(const CompressedSample& c, std::int64_t d) {
    std::vector<double> out(static_cast<std::size_t>(d), 0.0);
    for (auto& [idx, val] : c.entries) out[static_cast<std::size_t>(idx)] = val;
    return out;
}

// K bootstrapped training views. Copy 0 is always the identity; copies
// 1..K-1 drop each currently-available auxiliary coordinate with
// probability q. Base coordinates are never dropped.
inline std::vector<MaskedCopy> bootstrap_masks(const StreamSample& s, const FeatureSplit& split, std::int64_t K,
                                               double q, rng::Engine& eng) {
    if (K < 1) throw std::invalid_argument("bootstrap_masks: K must be >= 1");
    if (q < 0.0 || q >= 1.0) throw std::invalid_argument("bootstrap_masks: q must be in [0,1)");
    std::vector<MaskedCopy> copies;
    copies.reserve(static_cast<std::size_t>(K));
    copies.push_back({s.values, s.mask});
    for (std::int64_t k = 1; k < K; ++k) {
        MaskedCopy c{s.values, s.mask};
        if (q > 0.0) {
            for (std::int64_t i : split.aux_indices) {
                auto ix = static_cast<std::size_t>(i);
                if (c.mask[ix] && eng.uniform() < q) {
                    c.mask[ix] = false;
                    c.values[ix] = 0.0;
                }
            }
        }
        copies.push_back(std::move(c));
    }
    return copies;
}

// Debug/golden dump: JSON lines, one object per time step.
inline void dump_stream(const std::vector<StreamSample>& stream, std::ostream& os) {
    os.precision(17);
    for (const auto& s : stream) {
        os << "{\"t\":" << s.t << ",\"values\":[";
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            if (i) os << ",";
            os << s.values[i];
        }
        os << "],\"mask\":[";
        for (std::size_t i = 0; i < s.mask.size(); ++i) {
            if (i) os << ",";
            os << (s.mask[i] ? 1 : 0);
        }
        os << "],\"label\":" << s.label << "}\n";
    }
}

inline void dump_stream(const std::vector<StreamSample>& stream, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    dump_stream(stream, out);
}

}  // namespace hapstream
