#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hapstream/model.hpp"

namespace hapstream {

// Checkpoint layout: JSON object {"format": "...", "params": {name:
// {"shape": [...], "values": [row-major doubles]}}}.
inline void save_checkpoint(OnlineModel& model, const std::string& path) {
    nlohmann::json root;
    root["format"] = "hapstream-checkpoint-v1";
    nlohmann::json params = nlohmann::json::object();
    for (auto& np : model.named_params()) {
        nlohmann::json p;
        p["shape"] = np.tensor.shape();
        p["values"] = std::vector<double>(np.tensor.values().begin(), np.tensor.values().end());
        params[np.name] = std::move(p);
    }
    root["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << root.dump();
}

inline void load_checkpoint(OnlineModel& model, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json root = nlohmann::json::parse(in);
    if (root.value("format", "") != "hapstream-checkpoint-v1")
        throw std::runtime_error(path + ": not a hapstream checkpoint");
    const auto& params = root.at("params");
    for (auto& np : model.named_params()) {
        if (!params.contains(np.name)) throw std::runtime_error(path + ": missing parameter " + np.name);
        const auto& p = params.at(np.name);
        Shape shape = p.at("shape").get<Shape>();
        if (shape != np.tensor.shape())
            throw std::runtime_error(path + ": shape mismatch for " + np.name + ": " + shape_str(shape) + " vs " +
                                     shape_str(np.tensor.shape()));
        auto vals = p.at("values").get<std::vector<double>>();
        if (vals.size() != static_cast<std::size_t>(np.tensor.numel()))
            throw std::runtime_error(path + ": value count mismatch for " + np.name);
        std::copy(vals.begin(), vals.end(), np.tensor.values().begin());
    }
}

}  // namespace hapstream
