#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "hapstream/dataset.hpp"
#include "hapstream/rng.hpp"

namespace test_helpers {

inline std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "hapstream_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string write_file(const std::string& name, const std::string& contents) {
    const auto path = (temp_dir() / name).string();
    std::ofstream out(path, std::ios::binary);
    out << contents;
    return path;
}

inline std::string source_data_dir() {
#ifdef HAPSTREAM_SOURCE_DATA_DIR
    return HAPSTREAM_SOURCE_DATA_DIR;
#else
    return "data";
#endif
}

inline bool have_dataset(const std::string& name) {
    const auto* spec = hapstream::find_dataset_spec(name);
    if (!spec) return false;
    for (const auto& f : spec->files)
        if (!std::filesystem::exists(std::filesystem::path(source_data_dir()) / f)) return false;
    return true;
}

// Random rows with a linearly separable label rule.
inline hapstream::RawDataset synthetic_linear(std::int64_t rows, std::int64_t d, std::uint64_t seed) {
    hapstream::RawDataset ds;
    ds.name = "synthetic";
    ds.num_features = d;
    ds.num_classes = 2;
    hapstream::rng::Engine eng(seed);
    for (std::int64_t r = 0; r < rows; ++r) {
        hapstream::RawRow row;
        double acc = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
            const double v = eng.uniform();
            row.values.push_back(v);
            acc += (i % 2 == 0 ? 1.0 : -1.0) * v;
        }
        row.label = acc > 0.0 ? 1 : 0;
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

}  // namespace test_helpers
