#pragma once

#include <string>
#include <vector>

#include "hapstream/stream.hpp"
#include "hapstream/tensor.hpp"

namespace hapstream {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

// Predict-then-update contract shared by all model families. predict(t)
// must precede update(t); the guard catches protocol violations in the
// evaluation loop.
class OnlineModel {
public:
    virtual ~OnlineModel() = default;

    std::vector<double> predict(const StreamSample& s) {
        pending_t_ = s.t;
        has_pending_ = true;
        NoGradGuard ng;
        return predict_impl(s);
    }

    double update(const StreamSample& s, int label) {
        if (!has_pending_ || pending_t_ != s.t)
            throw std::logic_error("update(t=" + std::to_string(s.t) + ") called without a matching predict");
        has_pending_ = false;
        return update_impl(s, label);
    }

    virtual std::vector<NamedParam> named_params() = 0;

protected:
    virtual std::vector<double> predict_impl(const StreamSample& s) = 0;
    virtual double update_impl(const StreamSample& s, int label) = 0;

private:
    std::int64_t pending_t_ = -1;
    bool has_pending_ = false;
};

}  // namespace hapstream
