#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "hapstream/model.hpp"

namespace hapstream {

struct StepRecord {
    std::int64_t t;
    int predicted;
    int label;
    double ce;
};

struct Metrics {
    std::int64_t error = 0;
    double mean_ce = 0.0;
    double macro_f1 = 0.0;
    double micro_f1 = 0.0;
    double accuracy = 0.0;
};

struct RunResult {
    std::string dataset;
    std::string mode;
    double p = 1.0;
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;
    Metrics metrics;
    double wall_time_seconds = 0.0;
};

// Confusion-matrix metrics; macro F1 averages per-class F1 with 0/0 := 0.
inline Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                               const std::vector<double>* per_step_ce = nullptr) {
    if (predictions.size() != labels.size() || predictions.empty())
        throw std::logic_error("metrics: need equal nonzero prediction/label counts");
    int num_classes = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        num_classes = std::max({num_classes, labels[i] + 1, predictions[i] + 1});
    std::vector<std::int64_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predictions[i] == labels[i]) {
            ++correct;
            ++tp[static_cast<std::size_t>(labels[i])];
        } else {
            ++fp[static_cast<std::size_t>(predictions[i])];
            ++fn[static_cast<std::size_t>(labels[i])];
        }
    }
    Metrics m;
    m.error = static_cast<std::int64_t>(labels.size()) - correct;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    double macro = 0.0;
    std::int64_t tp_all = 0, fp_all = 0, fn_all = 0;
    for (int c = 0; c < num_classes; ++c) {
        const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
        macro += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
        tp_all += tp[c];
        fp_all += fp[c];
        fn_all += fn[c];
    }
    m.macro_f1 = macro / static_cast<double>(num_classes);
    const double micro_denom = static_cast<double>(2 * tp_all + fp_all + fn_all);
    m.micro_f1 = micro_denom > 0.0 ? 2.0 * static_cast<double>(tp_all) / micro_denom : 0.0;
    if (per_step_ce) {
        double acc = 0.0;
        for (double v : *per_step_ce) acc += v;
        m.mean_ce = acc / static_cast<double>(per_step_ce->size());
    }
    return m;
}

inline int argmax_prediction(const std::vector<double>& logits) {
    int best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
        if (logits[c] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    return best;  // ties break toward the lower class index
}

inline double prediction_ce(const std::vector<double>& logits, int label) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    return mx + std::log(sum) - logits[static_cast<std::size_t>(label)];
}

struct RunError : std::runtime_error {
    RunError(std::int64_t t, const std::string& what)
        : std::runtime_error("step t=" + std::to_string(t) + ": " + what), failed_t(t) {}
    std::int64_t failed_t;
};

// Predict-then-update over the stream, in order; nothing past the current
// step is ever touched.
inline RunResult run_prequential(OnlineModel& model, const std::vector<StreamSample>& stream) {
    RunResult result;
    const auto start = std::chrono::steady_clock::now();
    std::vector<int> preds, labels;
    std::vector<double> ces;
    preds.reserve(stream.size());
    labels.reserve(stream.size());
    ces.reserve(stream.size());
    for (const auto& sample : stream) {
        try {
            const std::vector<double> logits = model.predict(sample);
            const int pred = argmax_prediction(logits);
            const double ce = prediction_ce(logits, sample.label);
            result.steps.push_back({sample.t, pred, sample.label, ce});
            preds.push_back(pred);
            labels.push_back(sample.label);
            ces.push_back(ce);
            model.update(sample, sample.label);
        } catch (const std::exception& e) {
            throw RunError(sample.t, e.what());
        }
    }
    result.metrics = compute_metrics(preds, labels, &ces);
    result.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

struct AggregateStat {
    double mean = 0.0;
    double stddev = 0.0;  // sample (n-1); 0 when n == 1
};

struct AggregateResult {
    std::vector<RunResult> runs;  // ordered by seed
    AggregateStat error, mean_ce, macro_f1, micro_f1, accuracy;
    bool single_run = false;  // stddev undefined, reported as 0
    bool partial = false;
    std::vector<std::string> failures;
};

inline AggregateStat aggregate_stat(const std::vector<double>& xs) {
    AggregateStat s;
    if (xs.empty()) return s;
    for (double v : xs) s.mean += v;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double acc = 0.0;
        for (double v : xs) acc += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
    }
    return s;
}

inline void finalize_aggregate(AggregateResult& agg) {
    std::vector<double> err, ce, maf1, mif1, acc;
    for (const auto& r : agg.runs) {
        err.push_back(static_cast<double>(r.metrics.error));
        ce.push_back(r.metrics.mean_ce);
        maf1.push_back(r.metrics.macro_f1);
        mif1.push_back(r.metrics.micro_f1);
        acc.push_back(r.metrics.accuracy);
    }
    agg.error = aggregate_stat(err);
    agg.mean_ce = aggregate_stat(ce);
    agg.macro_f1 = aggregate_stat(maf1);
    agg.micro_f1 = aggregate_stat(mif1);
    agg.accuracy = aggregate_stat(acc);
    agg.single_run = agg.runs.size() == 1;
}

// Runs seeds base_seed..base_seed+n-1, optionally across threads; results
// are ordered by seed so the output is independent of the job count.
inline AggregateResult repeat_runs(std::int64_t n, std::uint64_t base_seed, int jobs,
                                   const std::function<RunResult(std::uint64_t seed)>& one_run) {
    if (n < 1) throw std::invalid_argument("repeat: n must be >= 1");
    AggregateResult agg;
    std::vector<RunResult> results(static_cast<std::size_t>(n));
    std::vector<std::string> errors(static_cast<std::size_t>(n));
    std::vector<bool> ok(static_cast<std::size_t>(n), false);
    if (jobs < 1) jobs = 1;
    std::atomic<std::int64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::int64_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                results[static_cast<std::size_t>(i)] = one_run(base_seed + static_cast<std::uint64_t>(i));
                ok[static_cast<std::size_t>(i)] = true;
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(i)] =
                    "seed " + std::to_string(base_seed + static_cast<std::uint64_t>(i)) + ": " + e.what();
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (std::int64_t i = 0; i < n; ++i) {
        if (ok[static_cast<std::size_t>(i)])
            agg.runs.push_back(std::move(results[static_cast<std::size_t>(i)]));
        else
            agg.failures.push_back(errors[static_cast<std::size_t>(i)]);
    }
    agg.partial = !agg.failures.empty();
    finalize_aggregate(agg);
    return agg;
}

}  // namespace hapstream
