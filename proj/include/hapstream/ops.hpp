#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hapstream/tensor.hpp"

namespace hapstream::ops {

namespace detail {
using hapstream::detail::make_op_output;

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> out(a.values().begin(), a.values().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.at(static_cast<std::int64_t>(i));
    return detail::make_op_output(a.shape(), std::move(out), {a, b}, [](const TensorImpl& o) {
        auto& pa = *o.node->parents[0];
        auto& pb = *o.node->parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] += o.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> out(a.values().begin(), a.values().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.at(static_cast<std::int64_t>(i));
    return detail::make_op_output(a.shape(), std::move(out), {a, b}, [](const TensorImpl& o) {
        auto& pa = *o.node->parents[0];
        auto& pb = *o.node->parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] -= o.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> out(a.values().begin(), a.values().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.at(static_cast<std::int64_t>(i));
    return detail::make_op_output(a.shape(), std::move(out), {a, b}, [](const TensorImpl& o) {
        auto& pa = *o.node->parents[0];
        auto& pb = *o.node->parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * pb.values[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] += o.grad[i] * pa.values[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.values().begin(), a.values().end());
    for (auto& v : out) v *= s;
    return detail::make_op_output(a.shape(), std::move(out), {a}, [s](const TensorImpl& o) {
        auto& pa = *o.node->parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += s * o.grad[i];
    });
}

// x * s where s is a learnable scalar tensor.
inline Tensor scale_by(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) throw std::invalid_argument("scale_by: scale must be scalar, got " + shape_str(s.shape()));
    double sv = s.at(0);
    std::vector<double> out(x.values().begin(), x.values().end());
    for (auto& v : out) v *= sv;
    return detail::make_op_output(x.shape(), std::move(out), {x, s}, [sv](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        auto& ps = *o.node->parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) px.grad[i] += sv * o.grad[i];
        }
        if (ps.requires_grad) {
            ps.ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * px.values[i];
            ps.grad[0] += acc;
        }
    });
}

// Broadcast-add a length-m vector to every row of x [n x m].
inline Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    const std::int64_t m = x.cols();
    if (b.numel() != m)
        throw std::invalid_argument("add_rowvec: vector " + shape_str(b.shape()) + " does not match row width " +
                                    std::to_string(m));
    std::vector<double> out(x.values().begin(), x.values().end());
    const std::int64_t n = x.numel() / m;
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t c = 0; c < m; ++c) out[static_cast<std::size_t>(r * m + c)] += b.at(c);
    return detail::make_op_output(x.shape(), std::move(out), {x, b}, [n, m](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        auto& pb = *o.node->parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) px.grad[i] += o.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::int64_t r = 0; r < n; ++r)
                for (std::int64_t c = 0; c < m; ++c)
                    pb.grad[static_cast<std::size_t>(c)] += o.grad[static_cast<std::size_t>(r * m + c)];
        }
    });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    const std::int64_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    std::vector<double> out(static_cast<std::size_t>(n * m), 0.0);
    {
        const double* A = a.values().data();
        const double* B = b.values().data();
        double* C = out.data();
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t l = 0; l < k; ++l) {
                const double av = A[i * k + l];
                if (av == 0.0) continue;
                const double* Brow = B + l * m;
                double* Crow = C + i * m;
                for (std::int64_t j = 0; j < m; ++j) Crow[j] += av * Brow[j];
            }
    }
    return detail::make_op_output({n, m}, std::move(out), {a, b}, [n, k, m](const TensorImpl& o) {
        auto& pa = *o.node->parents[0];
        auto& pb = *o.node->parents[1];
        const double* G = o.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA += G * B^T
            const double* B = pb.values.data();
            double* dA = pa.grad.data();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t l = 0; l < k; ++l) {
                    const double* Grow = G + i * m;
                    const double* Brow = B + l * m;
                    double acc = 0.0;
                    for (std::int64_t j = 0; j < m; ++j) acc += Grow[j] * Brow[j];
                    dA[i * k + l] += acc;
                }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB += A^T * G
            const double* A = pa.values.data();
            double* dB = pb.grad.data();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t l = 0; l < k; ++l) {
                    const double av = A[i * k + l];
                    if (av == 0.0) continue;
                    const double* Grow = G + i * m;
                    double* dBrow = dB + l * m;
                    for (std::int64_t j = 0; j < m; ++j) dBrow[j] += av * Grow[j];
                }
        }
    });
}

inline Tensor relu(const Tensor& x) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return detail::make_op_output(x.shape(), std::move(out), {x}, [](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (px.values[i] > 0.0) px.grad[i] += o.grad[i];
    });
}

inline Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (auto& v : out) v = 1.0 / (1.0 + std::exp(-v));
    return detail::make_op_output(x.shape(), std::move(out), {x}, [](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const double y = o.values[i];
            px.grad[i] += o.grad[i] * y * (1.0 - y);
        }
    });
}

inline Tensor tanh(const Tensor& x) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (auto& v : out) v = std::tanh(v);
    return detail::make_op_output(x.shape(), std::move(out), {x}, [](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const double y = o.values[i];
            px.grad[i] += o.grad[i] * (1.0 - y * y);
        }
    });
}

// Softmax along `axis` (negative counts from the back). Max-subtraction
// keeps magnitudes up to ~1e3 exact to 1e-12.
inline Tensor softmax(const Tensor& x, int axis = -1) {
    const int rank = static_cast<int>(x.shape().size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank)
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
    for (double v : x.values())
        if (!std::isfinite(v)) throw std::runtime_error("softmax: non-finite input");

    const std::int64_t len = x.shape()[axis];
    std::int64_t inner = 1;
    for (int d = axis + 1; d < rank; ++d) inner *= x.shape()[d];
    const std::int64_t outer = x.numel() / (len * inner);
    const std::int64_t stride = inner;

    std::vector<double> out(x.values().begin(), x.values().end());
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
            double* base = out.data() + o * len * inner + in;
            double mx = base[0];
            for (std::int64_t i = 1; i < len; ++i) mx = std::max(mx, base[i * stride]);
            double sum = 0.0;
            for (std::int64_t i = 0; i < len; ++i) {
                base[i * stride] = std::exp(base[i * stride] - mx);
                sum += base[i * stride];
            }
            for (std::int64_t i = 0; i < len; ++i) base[i * stride] /= sum;
        }
    return detail::make_op_output(x.shape(), std::move(out), {x},
                                  [len, inner, outer, stride](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::int64_t ou = 0; ou < outer; ++ou)
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t off = ou * len * inner + in;
                const double* y = o.values.data() + off;
                const double* g = o.grad.data() + off;
                double* dx = px.grad.data() + off;
                double dot = 0.0;
                for (std::int64_t i = 0; i < len; ++i) dot += g[i * stride] * y[i * stride];
                for (std::int64_t i = 0; i < len; ++i)
                    dx[i * stride] += y[i * stride] * (g[i * stride] - dot);
            }
    });
}

// Normalizes each row of the last axis to zero mean / unit variance, then
// applies elementwise gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
    const std::int64_t m = x.cols();
    if (m < 2) throw std::invalid_argument("layer_norm: last axis must have length >= 2, got " + std::to_string(m));
    if (gain.numel() != m || bias.numel() != m)
        throw std::invalid_argument("layer_norm: gain/bias must have length " + std::to_string(m));
    const std::int64_t n = x.numel() / m;
    std::vector<double> out(static_cast<std::size_t>(n * m));
    std::vector<double> xhat(static_cast<std::size_t>(n * m));
    std::vector<double> inv_sd(static_cast<std::size_t>(n));
    for (std::int64_t r = 0; r < n; ++r) {
        const double* xr = x.values().data() + r * m;
        double mu = 0.0;
        for (std::int64_t c = 0; c < m; ++c) mu += xr[c];
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (std::int64_t c = 0; c < m; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= static_cast<double>(m);
        const double isd = 1.0 / std::sqrt(var + eps);
        inv_sd[static_cast<std::size_t>(r)] = isd;
        for (std::int64_t c = 0; c < m; ++c) {
            const double h = (xr[c] - mu) * isd;
            xhat[static_cast<std::size_t>(r * m + c)] = h;
            out[static_cast<std::size_t>(r * m + c)] = h * gain.at(c) + bias.at(c);
        }
    }
    return detail::make_op_output(x.shape(), std::move(out), {x, gain, bias},
                                  [n, m, xh = std::move(xhat), isd = std::move(inv_sd)](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        auto& pg = *o.node->parents[1];
        auto& pb = *o.node->parents[2];
        if (pg.requires_grad) {
            pg.ensure_grad();
            for (std::int64_t r = 0; r < n; ++r)
                for (std::int64_t c = 0; c < m; ++c)
                    pg.grad[static_cast<std::size_t>(c)] +=
                        o.grad[static_cast<std::size_t>(r * m + c)] * xh[static_cast<std::size_t>(r * m + c)];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::int64_t r = 0; r < n; ++r)
                for (std::int64_t c = 0; c < m; ++c)
                    pb.grad[static_cast<std::size_t>(c)] += o.grad[static_cast<std::size_t>(r * m + c)];
        }
        if (px.requires_grad) {
            px.ensure_grad();
            for (std::int64_t r = 0; r < n; ++r) {
                const double* g = o.grad.data() + r * m;
                const double* h = xh.data() + r * m;
                double mean_hg = 0.0, mean_hgx = 0.0;
                std::vector<double> hg(static_cast<std::size_t>(m));
                for (std::int64_t c = 0; c < m; ++c) {
                    hg[static_cast<std::size_t>(c)] = g[c] * pg.values[static_cast<std::size_t>(c)];
                    mean_hg += hg[static_cast<std::size_t>(c)];
                    mean_hgx += hg[static_cast<std::size_t>(c)] * h[c];
                }
                mean_hg /= static_cast<double>(m);
                mean_hgx /= static_cast<double>(m);
                double* dx = px.grad.data() + r * m;
                const double s = isd[static_cast<std::size_t>(r)];
                for (std::int64_t c = 0; c < m; ++c)
                    dx[c] += s * (hg[static_cast<std::size_t>(c)] - mean_hg - h[c] * mean_hgx);
            }
        }
    });
}

// Inverted dropout: survivors scaled by 1/(1-rate) at train time so that
// inference is the identity.
inline Tensor dropout(const Tensor& x, double rate, bool training, rng::Engine& eng) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const double keep = 1.0 - rate;
    std::vector<double> mask(static_cast<std::size_t>(x.numel()));
    for (auto& mv : mask) mv = eng.uniform() < rate ? 0.0 : 1.0 / keep;
    std::vector<double> out(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return detail::make_op_output(x.shape(), std::move(out), {x}, [mk = std::move(mask)](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) px.grad[i] += o.grad[i] * mk[i];
    });
}

// Mean over n of -log softmax(logits)[label]; gradient (softmax - onehot)/n.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.shape().size() != 2)
        throw std::invalid_argument("cross_entropy: logits must be [n x C], got " + shape_str(logits.shape()));
    const std::int64_t n = logits.shape()[0], C = logits.shape()[1];
    if (C < 2) throw std::invalid_argument("cross_entropy: need at least 2 classes");
    if (static_cast<std::int64_t>(labels.size()) != n)
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(n) + " rows");
    std::vector<double> probs(static_cast<std::size_t>(n * C));
    double total = 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
        if (labels[static_cast<std::size_t>(r)] < 0 || labels[static_cast<std::size_t>(r)] >= C)
            throw std::out_of_range("cross_entropy: label " + std::to_string(labels[static_cast<std::size_t>(r)]) +
                                    " out of range [0," + std::to_string(C) + ")");
        const double* z = logits.values().data() + r * C;
        double mx = z[0];
        for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, z[c]);
        double sum = 0.0;
        for (std::int64_t c = 0; c < C; ++c) sum += std::exp(z[c] - mx);
        const double lse = mx + std::log(sum);
        for (std::int64_t c = 0; c < C; ++c) probs[static_cast<std::size_t>(r * C + c)] = std::exp(z[c] - lse);
        total += lse - z[labels[static_cast<std::size_t>(r)]];
    }
    total /= static_cast<double>(n);
    return detail::make_op_output({1}, {total}, {logits},
                                  [n, C, pr = std::move(probs), labels](const TensorImpl& o) {
        auto& pl = *o.node->parents[0];
        if (!pl.requires_grad) return;
        pl.ensure_grad();
        const double g = o.grad[0] / static_cast<double>(n);
        for (std::int64_t r = 0; r < n; ++r) {
            for (std::int64_t c = 0; c < C; ++c)
                pl.grad[static_cast<std::size_t>(r * C + c)] += g * pr[static_cast<std::size_t>(r * C + c)];
            pl.grad[static_cast<std::size_t>(r * C + labels[static_cast<std::size_t>(r)])] -= g;
        }
    });
}

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    return detail::make_op_output({1}, {acc}, {x}, [](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (auto& g : px.grad) g += o.grad[0];
    });
}

inline Tensor mean(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    return detail::make_op_output({1}, {acc * inv}, {x}, [inv](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (auto& g : px.grad) g += o.grad[0] * inv;
    });
}

// Mean over the token axis of a [B*T x d] activation -> [B x d].
inline Tensor mean_tokens(const Tensor& x, std::int64_t batch, std::int64_t tokens) {
    const std::int64_t d = x.cols();
    if (x.rows() != batch * tokens)
        throw std::invalid_argument("mean_tokens: rows " + std::to_string(x.rows()) + " != batch*tokens");
    std::vector<double> out(static_cast<std::size_t>(batch * d), 0.0);
    const double inv = 1.0 / static_cast<double>(tokens);
    for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t t = 0; t < tokens; ++t)
            for (std::int64_t c = 0; c < d; ++c)
                out[static_cast<std::size_t>(b * d + c)] += x.at((b * tokens + t), c) * inv;
    return detail::make_op_output({batch, d}, std::move(out), {x}, [batch, tokens, d, inv](const TensorImpl& o) {
        auto& px = *o.node->parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::int64_t b = 0; b < batch; ++b)
            for (std::int64_t t = 0; t < tokens; ++t)
                for (std::int64_t c = 0; c < d; ++c)
                    px.grad[static_cast<std::size_t>((b * tokens + t) * d + c)] +=
                        o.grad[static_cast<std::size_t>(b * d + c)] * inv;
    });
}

// Scaled dot-product self-attention over [B*T x d] projections, multi-head.
// One graph node with the softmax weights saved for the reverse pass.
inline Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                             std::int64_t batch, std::int64_t tokens, std::int64_t heads) {
    const std::int64_t d = q.cols();
    if (d % heads != 0)
        throw std::invalid_argument("attention_core: width " + std::to_string(d) + " not divisible by " +
                                    std::to_string(heads) + " heads");
    detail::check_same_shape(q, k, "attention_core");
    detail::check_same_shape(q, v, "attention_core");
    if (q.rows() != batch * tokens) throw std::invalid_argument("attention_core: rows != batch*tokens");
    const std::int64_t dk = d / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dk));

    std::vector<double> attn(static_cast<std::size_t>(batch * heads * tokens * tokens));
    std::vector<double> out(static_cast<std::size_t>(batch * tokens * d), 0.0);
    const double* Q = q.values().data();
    const double* K = k.values().data();
    const double* V = v.values().data();
    for (std::int64_t b = 0; b < batch; ++b)
        for (std::int64_t h = 0; h < heads; ++h) {
            double* A = attn.data() + ((b * heads + h) * tokens) * tokens;
            const std::int64_t col0 = h * dk;
            for (std::int64_t t = 0; t < tokens; ++t) {
                const double* qr = Q + (b * tokens + t) * d + col0;
                double mx = -1e300;
                for (std::int64_t u = 0; u < tokens; ++u) {
                    const double* kr = K + (b * tokens + u) * d + col0;
                    double s = 0.0;
                    for (std::int64_t c = 0; c < dk; ++c) s += qr[c] * kr[c];
                    s *= sc;
                    A[t * tokens + u] = s;
                    mx = std::max(mx, s);
                }
                double sum = 0.0;
                for (std::int64_t u = 0; u < tokens; ++u) {
                    A[t * tokens + u] = std::exp(A[t * tokens + u] - mx);
                    sum += A[t * tokens + u];
                }
                for (std::int64_t u = 0; u < tokens; ++u) A[t * tokens + u] /= sum;
                double* orow = out.data() + (b * tokens + t) * d + col0;
                for (std::int64_t u = 0; u < tokens; ++u) {
                    const double a = A[t * tokens + u];
                    const double* vr = V + (b * tokens + u) * d + col0;
                    for (std::int64_t c = 0; c < dk; ++c) orow[c] += a * vr[c];
                }
            }
        }
    return detail::make_op_output(q.shape(), std::move(out), {q, k, v},
                                  [batch, tokens, heads, dk, d, sc, A = std::move(attn)](const TensorImpl& o) {
        auto& pq = *o.node->parents[0];
        auto& pk = *o.node->parents[1];
        auto& pv = *o.node->parents[2];
        const bool wq = pq.requires_grad, wk = pk.requires_grad, wv = pv.requires_grad;
        if (wq) pq.ensure_grad();
        if (wk) pk.ensure_grad();
        if (wv) pv.ensure_grad();
        const double* G = o.grad.data();
        std::vector<double> dA(static_cast<std::size_t>(tokens * tokens));
        std::vector<double> dS(static_cast<std::size_t>(tokens * tokens));
        for (std::int64_t b = 0; b < batch; ++b)
            for (std::int64_t h = 0; h < heads; ++h) {
                const double* Ah = A.data() + ((b * heads + h) * tokens) * tokens;
                const std::int64_t col0 = h * dk;
                // dV += A^T G ; dA = G V^T
                for (std::int64_t t = 0; t < tokens; ++t) {
                    const double* grow = G + (b * tokens + t) * d + col0;
                    for (std::int64_t u = 0; u < tokens; ++u) {
                        const double* vr = pv.values.data() + (b * tokens + u) * d + col0;
                        double acc = 0.0;
                        for (std::int64_t c = 0; c < dk; ++c) acc += grow[c] * vr[c];
                        dA[static_cast<std::size_t>(t * tokens + u)] = acc;
                        if (wv) {
                            double* dvr = pv.grad.data() + (b * tokens + u) * d + col0;
                            const double a = Ah[t * tokens + u];
                            for (std::int64_t c = 0; c < dk; ++c) dvr[c] += a * grow[c];
                        }
                    }
                }
                if (!wq && !wk) continue;
                // softmax backward row-wise
                for (std::int64_t t = 0; t < tokens; ++t) {
                    double dot = 0.0;
                    for (std::int64_t u = 0; u < tokens; ++u)
                        dot += dA[static_cast<std::size_t>(t * tokens + u)] * Ah[t * tokens + u];
                    for (std::int64_t u = 0; u < tokens; ++u)
                        dS[static_cast<std::size_t>(t * tokens + u)] =
                            Ah[t * tokens + u] * (dA[static_cast<std::size_t>(t * tokens + u)] - dot) * sc;
                }
                for (std::int64_t t = 0; t < tokens; ++t) {
                    const double* qr = pq.values.data() + (b * tokens + t) * d + col0;
                    double* dqr = wq ? pq.grad.data() + (b * tokens + t) * d + col0 : nullptr;
                    for (std::int64_t u = 0; u < tokens; ++u) {
                        const double s = dS[static_cast<std::size_t>(t * tokens + u)];
                        if (s == 0.0) continue;
                        const double* kr = pk.values.data() + (b * tokens + u) * d + col0;
                        if (wq)
                            for (std::int64_t c = 0; c < dk; ++c) dqr[c] += s * kr[c];
                        if (wk) {
                            double* dkr = pk.grad.data() + (b * tokens + u) * d + col0;
                            for (std::int64_t c = 0; c < dk; ++c) dkr[c] += s * qr[c];
                        }
                    }
                }
            }
    });
}

// token_i = value_i * 1 + PE(i) + mask_i * a, built over a [B*T x d] base of
// values+PE (constant) plus the learned availability offset a.
inline Tensor add_mask_offset(const Shape& shape, std::vector<double> base, std::vector<double> mask_bits,
                              const Tensor& offset) {
    const std::int64_t d = shape.back();
    const std::int64_t n = static_cast<std::int64_t>(base.size()) / d;
    if (offset.numel() != d)
        throw std::invalid_argument("add_mask_offset: offset width " + std::to_string(offset.numel()) +
                                    " != token width " + std::to_string(d));
    if (static_cast<std::int64_t>(mask_bits.size()) != n)
        throw std::invalid_argument("add_mask_offset: need one mask bit per token");
    for (std::int64_t r = 0; r < n; ++r) {
        if (mask_bits[static_cast<std::size_t>(r)] == 0.0) continue;
        const double mb = mask_bits[static_cast<std::size_t>(r)];
        for (std::int64_t c = 0; c < d; ++c) base[static_cast<std::size_t>(r * d + c)] += mb * offset.at(c);
    }
    return detail::make_op_output(shape, std::move(base), {offset},
                                  [n, d, mb = std::move(mask_bits)](const TensorImpl& o) {
        auto& pa = *o.node->parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::int64_t r = 0; r < n; ++r) {
            if (mb[static_cast<std::size_t>(r)] == 0.0) continue;
            for (std::int64_t c = 0; c < d; ++c)
                pa.grad[static_cast<std::size_t>(c)] +=
                    mb[static_cast<std::size_t>(r)] * o.grad[static_cast<std::size_t>(r * d + c)];
        }
    });
}

inline Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
    return add_rowvec(matmul(x, W), b);
}

}  // namespace hapstream::ops
