#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hapstream/prequential.hpp"

namespace hapstream {

// Fixed-point, locale-independent float formatting so exports are
// byte-stable across runs and machines.
inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

inline std::string csv_header() {
    return "dataset,mode,p,seed,error,mean_ce,macro_f1,micro_f1,accuracy,wall_time";
}

inline std::string csv_row(const RunResult& r) {
    std::ostringstream os;
    os << r.dataset << ',' << r.mode << ',' << format_fixed(r.p, 4) << ',' << r.seed << ',' << r.metrics.error
       << ',' << format_fixed(r.metrics.mean_ce, 6) << ',' << format_fixed(r.metrics.macro_f1, 6) << ','
       << format_fixed(r.metrics.micro_f1, 6) << ',' << format_fixed(r.metrics.accuracy, 6) << ','
       << format_fixed(r.wall_time_seconds, 6);
    return os.str();
}

inline void write_csv(const std::vector<RunResult>& runs, std::ostream& os) {
    os << csv_header() << '\n';
    for (const auto& r : runs) os << csv_row(r) << '\n';
}

inline void write_csv(const std::vector<RunResult>& runs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_csv(runs, out);
}

// Summary-level parse-back (steps are not persisted in CSV).
inline std::vector<RunResult> parse_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty CSV");
    if (line != csv_header()) throw std::runtime_error(path + ": unexpected CSV header");
    std::vector<RunResult> runs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string tok;
        RunResult r;
        std::getline(is, r.dataset, ',');
        std::getline(is, r.mode, ',');
        std::getline(is, tok, ',');
        r.p = std::stod(tok);
        std::getline(is, tok, ',');
        r.seed = std::stoull(tok);
        std::getline(is, tok, ',');
        r.metrics.error = std::stoll(tok);
        std::getline(is, tok, ',');
        r.metrics.mean_ce = std::stod(tok);
        std::getline(is, tok, ',');
        r.metrics.macro_f1 = std::stod(tok);
        std::getline(is, tok, ',');
        r.metrics.micro_f1 = std::stod(tok);
        std::getline(is, tok, ',');
        r.metrics.accuracy = std::stod(tok);
        std::getline(is, tok, ',');
        r.wall_time_seconds = std::stod(tok);
        runs.push_back(std::move(r));
    }
    return runs;
}

inline nlohmann::json run_to_json(const RunResult& r, bool include_steps) {
    nlohmann::json j;
    j["dataset"] = r.dataset;
    j["mode"] = r.mode;
    j["p"] = r.p;
    j["seed"] = r.seed;
    j["error"] = r.metrics.error;
    j["mean_ce"] = r.metrics.mean_ce;
    j["macro_f1"] = r.metrics.macro_f1;
    j["micro_f1"] = r.metrics.micro_f1;
    j["accuracy"] = r.metrics.accuracy;
    j["wall_time"] = r.wall_time_seconds;
    if (include_steps) {
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& s : r.steps)
            steps.push_back({{"t", s.t}, {"predicted", s.predicted}, {"label", s.label}, {"ce", s.ce}});
        j["steps"] = std::move(steps);
    }
    return j;
}

inline nlohmann::json aggregate_to_json(const AggregateResult& agg, bool include_steps) {
    nlohmann::json j;
    auto stat = [](const AggregateStat& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.stddev}}; };
    j["n_runs"] = agg.runs.size();
    j["single_run"] = agg.single_run;
    j["partial"] = agg.partial;
    if (!agg.failures.empty()) j["failures"] = agg.failures;
    j["error"] = stat(agg.error);
    j["mean_ce"] = stat(agg.mean_ce);
    j["macro_f1"] = stat(agg.macro_f1);
    j["micro_f1"] = stat(agg.micro_f1);
    j["accuracy"] = stat(agg.accuracy);
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : agg.runs) runs.push_back(run_to_json(r, include_steps));
    j["runs"] = std::move(runs);
    return j;
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

}  // namespace hapstream
