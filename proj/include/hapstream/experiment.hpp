#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hapstream/export.hpp"
#include "hapstream/hapnet.hpp"
#include "hapstream/hapnetpu.hpp"
#include "hapstream/hedge.hpp"
#include "hapstream/prequential.hpp"

namespace hapstream {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string dataset = "german";
    std::string data_dir = default_data_dir();
    std::string mode = "haphazard";
    std::string model = "hapnet";
    std::vector<double> p_list;     // empty -> dataset default
    double aux_fraction = -1.0;     // <0 -> dataset default
    std::int64_t trapezoid_chunks = 10;
    bool scale = true;
    std::int64_t n_runs = 20;
    std::uint64_t base_seed = 1;
    int jobs = 0;  // 0 -> hardware concurrency
    std::string out = "";
    std::string format = "csv";
    bool from_manifest = false;  // reproduction mode: wall_time exported as 0
    HapNetConfig hapnet;
    HedgeConfig hedge;

    void validate() const {
        static const std::set<std::string> models = {"hapnet", "hapnetpu", "hedge", "weighted_residual"};
        if (!models.count(model)) throw ConfigError("model: unknown model '" + model + "'");
        stream_mode_from_string(mode);  // throws on bad mode
        for (double p : p_list)
            if (p <= 0.0 || p > 1.0) throw ConfigError("p: must be in (0,1], got " + std::to_string(p));
        if (aux_fraction >= 0.0 && (aux_fraction <= 0.0 || aux_fraction > 1.0))
            throw ConfigError("aux_fraction: must be in (0,1]");
        if (n_runs < 1) throw ConfigError("n_runs: must be >= 1");
        if (trapezoid_chunks < 1) throw ConfigError("trapezoid_chunks: must be >= 1");
        if (format != "csv" && format != "json") throw ConfigError("format: must be csv or json");
        hapnet.validate();
        hedge.validate();
    }

    int effective_jobs() const {
        if (jobs > 0) return jobs;
        const unsigned hc = std::thread::hardware_concurrency();
        return hc > 0 ? static_cast<int>(hc) : 1;
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

}  // namespace detail

inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["dataset"] = c.dataset;
    j["data_dir"] = c.data_dir;
    j["mode"] = c.mode;
    j["model"] = c.model;
    j["p_list"] = c.p_list;
    j["aux_fraction"] = c.aux_fraction;
    j["trapezoid_chunks"] = c.trapezoid_chunks;
    j["scale"] = c.scale;
    j["n_runs"] = c.n_runs;
    j["base_seed"] = c.base_seed;
    j["jobs"] = c.jobs;
    j["out"] = c.out;
    j["format"] = c.format;
    j["hapnet"] = {{"d_model", c.hapnet.d_model},       {"blocks", c.hapnet.blocks},
                   {"heads", c.hapnet.heads},           {"ff_width", c.hapnet.ff_width},
                   {"dropout", c.hapnet.dropout},       {"K", c.hapnet.bootstrap_copies},
                   {"q", c.hapnet.bootstrap_q},         {"lr", c.hapnet.lr},
                   {"batch_size", c.hapnet.batch_size}, {"buffer_size", c.hapnet.buffer_size}};
    j["hedge"] = {{"layers", c.hedge.layers},
                  {"hidden_width", c.hedge.hidden_width},
                  {"beta", c.hedge.beta},
                  {"smoothing", c.hedge.smoothing},
                  {"lr", c.hedge.lr}};
    return j;
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j, ExperimentConfig base = {}) {
    static const std::set<std::string> top = {"dataset", "data_dir", "mode",      "model",
                                              "p_list",  "p",        "aux_fraction", "trapezoid_chunks",
                                              "scale",   "n_runs",   "base_seed", "jobs",
                                              "out",     "format",   "hapnet",    "hedge"};
    detail::reject_unknown_keys(j, top, "config");
    ExperimentConfig c = std::move(base);
    if (j.contains("dataset")) c.dataset = j["dataset"].get<std::string>();
    if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("mode")) c.mode = j["mode"].get<std::string>();
    if (j.contains("model")) c.model = j["model"].get<std::string>();
    if (j.contains("p_list")) c.p_list = j["p_list"].get<std::vector<double>>();
    if (j.contains("p")) c.p_list = {j["p"].get<double>()};
    if (j.contains("aux_fraction")) c.aux_fraction = j["aux_fraction"].get<double>();
    if (j.contains("trapezoid_chunks")) c.trapezoid_chunks = j["trapezoid_chunks"].get<std::int64_t>();
    if (j.contains("scale")) c.scale = j["scale"].get<bool>();
    if (j.contains("n_runs")) c.n_runs = j["n_runs"].get<std::int64_t>();
    if (j.contains("base_seed")) c.base_seed = j["base_seed"].get<std::uint64_t>();
    if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
    if (j.contains("out")) c.out = j["out"].get<std::string>();
    if (j.contains("format")) c.format = j["format"].get<std::string>();
    if (j.contains("hapnet")) {
        static const std::set<std::string> keys = {"d_model", "blocks", "heads",      "ff_width",   "dropout",
                                                   "K",       "q",      "lr",         "batch_size", "buffer_size"};
        const auto& h = j["hapnet"];
        detail::reject_unknown_keys(h, keys, "config.hapnet");
        if (h.contains("d_model")) c.hapnet.d_model = h["d_model"].get<std::int64_t>();
        if (h.contains("blocks")) c.hapnet.blocks = h["blocks"].get<std::int64_t>();
        if (h.contains("heads")) c.hapnet.heads = h["heads"].get<std::int64_t>();
        if (h.contains("ff_width")) c.hapnet.ff_width = h["ff_width"].get<std::int64_t>();
        if (h.contains("dropout")) c.hapnet.dropout = h["dropout"].get<double>();
        if (h.contains("K")) c.hapnet.bootstrap_copies = h["K"].get<std::int64_t>();
        if (h.contains("q")) c.hapnet.bootstrap_q = h["q"].get<double>();
        if (h.contains("lr")) c.hapnet.lr = h["lr"].get<double>();
        if (h.contains("batch_size")) c.hapnet.batch_size = h["batch_size"].get<std::int64_t>();
        if (h.contains("buffer_size")) c.hapnet.buffer_size = h["buffer_size"].get<std::int64_t>();
    }
    if (j.contains("hedge")) {
        static const std::set<std::string> keys = {"layers", "hidden_width", "beta", "smoothing", "lr"};
        const auto& h = j["hedge"];
        detail::reject_unknown_keys(h, keys, "config.hedge");
        if (h.contains("layers")) c.hedge.layers = h["layers"].get<std::int64_t>();
        if (h.contains("hidden_width")) c.hedge.hidden_width = h["hidden_width"].get<std::int64_t>();
        if (h.contains("beta")) c.hedge.beta = h["beta"].get<double>();
        if (h.contains("smoothing")) c.hedge.smoothing = h["smoothing"].get<double>();
        if (h.contains("lr")) c.hedge.lr = h["lr"].get<double>();
    }
    return c;
}

// Resolves dataset-dependent defaults (p, aux_fraction) against the
// registry once the dataset is known.
struct ResolvedExperiment {
    ExperimentConfig config;
    RawDataset dataset;
    FeatureSplit split;
    std::vector<double> p_list;
};

inline ResolvedExperiment resolve_experiment(ExperimentConfig cfg) {
    cfg.validate();
    ResolvedExperiment rx;
    rx.dataset = load_dataset(cfg.dataset, cfg.data_dir);
    const DatasetSpec* spec = find_dataset_spec(cfg.dataset);
    double aux = cfg.aux_fraction;
    if (aux < 0.0) aux = spec ? spec->aux_fraction : 1.0;
    cfg.aux_fraction = aux;
    rx.split = default_split(rx.dataset.num_features, aux);
    rx.p_list = cfg.p_list;
    if (rx.p_list.empty()) rx.p_list = {spec ? spec->default_p : 1.0};
    rx.config = std::move(cfg);
    return rx;
}

inline std::unique_ptr<OnlineModel> make_model(const ExperimentConfig& cfg, std::int64_t d, int classes,
                                               const FeatureSplit& split, std::uint64_t run_seed) {
    rng::Key run_key(run_seed);
    rng::Engine init_eng(run_key.child("init"));
    rng::Engine train_eng(run_key.child("train"));
    if (cfg.model == "hapnet")
        return std::make_unique<HapNet>(d, classes, split, cfg.hapnet, init_eng, train_eng);
    if (cfg.model == "hapnetpu")
        return std::make_unique<HapNetPU>(d, classes, split, cfg.hapnet, init_eng, train_eng);
    if (cfg.model == "hedge") return std::make_unique<HedgeMLP>(d, classes, cfg.hedge, init_eng);
    if (cfg.model == "weighted_residual")
        return std::make_unique<WeightedResidual>(d, classes, cfg.hedge, init_eng);
    throw ConfigError("unknown model '" + cfg.model + "'");
}

inline RunResult run_single(const ResolvedExperiment& rx, double p, std::uint64_t run_seed) {
    rng::Key run_key(run_seed);
    StreamConfig sc;
    sc.mode = stream_mode_from_string(rx.config.mode);
    sc.p = p;
    sc.seed = run_key.child("stream").state();
    sc.trapezoid_chunks = rx.config.trapezoid_chunks;
    sc.scale = rx.config.scale;
    const auto stream = make_stream(rx.dataset, rx.split, sc);
    auto model = make_model(rx.config, rx.dataset.num_features, rx.dataset.num_classes, rx.split, run_seed);
    RunResult r = run_prequential(*model, stream);
    r.dataset = rx.dataset.name;
    r.mode = rx.config.mode;
    r.p = p;
    r.seed = run_seed;
    if (rx.config.from_manifest) r.wall_time_seconds = 0.0;
    return r;
}

inline AggregateResult run_aggregate(const ResolvedExperiment& rx, double p) {
    return repeat_runs(rx.config.n_runs, rx.config.base_seed, rx.config.effective_jobs(),
                       [&](std::uint64_t seed) { return run_single(rx, p, seed); });
}

// Manifest: the full resolved config plus provenance; re-running it
// reproduces the export byte-for-byte.
inline void write_manifest(const ExperimentConfig& cfg, const std::vector<double>& p_list,
                           const std::string& path) {
    nlohmann::json j;
    j["tool"] = "hapstream";
    j["manifest_version"] = 1;
    j["config"] = experiment_to_json(cfg);
    j["config"]["p_list"] = p_list;
    j["seeds_first"] = cfg.base_seed;
    j["seeds_count"] = cfg.n_runs;
    write_json(j, path);
}

inline ExperimentConfig load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("tool", "") != "hapstream") throw ConfigError(path + ": not a hapstream manifest");
    ExperimentConfig cfg = experiment_from_json(j.at("config"));
    cfg.from_manifest = true;
    return cfg;
}

}  // namespace hapstream
