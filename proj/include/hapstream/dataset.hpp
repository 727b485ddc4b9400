#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hapstream {

struct RawRow {
    std::vector<double> values;
    int label = 0;
};

// A benchmark table in on-disk row and feature order. Streams are
// temporal, so order is preserved end to end.
struct RawDataset {
    std::string name;
    std::int64_t num_features = 0;
    int num_classes = 0;
    std::vector<RawRow> rows;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what) {}
};

namespace detail {

inline bool parse_double(std::string_view tok, double& out) {
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);  // from_chars rejects '+'
    if (tok.empty()) return false;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

inline std::vector<std::string> split_tokens(const std::string& line, char delim) {
    std::vector<std::string> toks;
    std::string cur;
    if (delim == ' ') {
        std::istringstream iss(line);
        while (iss >> cur) toks.push_back(cur);
    } else {
        std::istringstream iss(line);
        while (std::getline(iss, cur, delim)) {
            // trim surrounding whitespace
            auto b = cur.find_first_not_of(" \t\r");
            auto e = cur.find_last_not_of(" \t\r");
            toks.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
        }
    }
    return toks;
}

// Maps raw label keys to contiguous class ids. {-1,+1} -> {0,1}; anything
// else by sorted-unique order (numeric when all keys parse, else lexical).
class LabelMapper {
public:
    void add(const std::string& tok) {
        keys_.push_back(tok);
        double v;
        all_numeric_ = all_numeric_ && parse_double(tok, v);
    }

    std::vector<int> resolve(int& num_classes) const {
        std::vector<std::string> uniq = keys_;
        std::sort(uniq.begin(), uniq.end(), [&](const std::string& a, const std::string& b) {
            if (all_numeric_) {
                double x, y;
                parse_double(a, x);
                parse_double(b, y);
                return x < y;
            }
            return a < b;
        });
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        std::map<std::string, int> index;
        for (std::size_t i = 0; i < uniq.size(); ++i) index[uniq[i]] = static_cast<int>(i);
        num_classes = static_cast<int>(uniq.size());
        std::vector<int> mapped;
        mapped.reserve(keys_.size());
        for (const auto& k : keys_) mapped.push_back(index.at(k));
        return mapped;
    }

private:
    std::vector<std::string> keys_;
    bool all_numeric_ = true;
};

}  // namespace detail

// svmlight sparse text: `label idx:val idx:val ...`, 1-based strictly
// ascending indices; absent indices are zero. d = max index seen.
inline RawDataset load_svmlight(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    RawDataset ds;
    ds.name = std::filesystem::path(path).stem().string();
    detail::LabelMapper labels;
    std::vector<std::vector<std::pair<std::int64_t, double>>> sparse_rows;
    std::string line;
    std::size_t lineno = 0;
    std::int64_t max_idx = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto toks = detail::split_tokens(line, ' ');
        if (toks.empty()) continue;
        labels.add(toks[0]);
        std::vector<std::pair<std::int64_t, double>> entries;
        std::int64_t prev = 0;
        for (std::size_t i = 1; i < toks.size(); ++i) {
            auto colon = toks[i].find(':');
            if (colon == std::string::npos)
                throw ParseError(path, lineno, "expected idx:val, got '" + toks[i] + "'");
            std::int64_t idx = 0;
            double val = 0.0;
            try {
                idx = std::stoll(toks[i].substr(0, colon));
            } catch (...) {
                throw ParseError(path, lineno, "non-numeric index in '" + toks[i] + "'");
            }
            if (!detail::parse_double(toks[i].substr(colon + 1), val))
                throw ParseError(path, lineno, "non-numeric value in '" + toks[i] + "'");
            if (idx <= prev)
                throw ParseError(path, lineno, "indices must be ascending and unique: " + std::to_string(idx) +
                                                   " after " + std::to_string(prev));
            prev = idx;
            entries.emplace_back(idx, val);
        }
        max_idx = std::max(max_idx, prev);
        sparse_rows.push_back(std::move(entries));
    }
    ds.num_features = max_idx;
    auto mapped = labels.resolve(ds.num_classes);
    ds.rows.reserve(sparse_rows.size());
    for (std::size_t r = 0; r < sparse_rows.size(); ++r) {
        RawRow row;
        row.values.assign(static_cast<std::size_t>(max_idx), 0.0);
        for (auto& [idx, val] : sparse_rows[r]) row.values[static_cast<std::size_t>(idx - 1)] = val;
        row.label = mapped[r];
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

// Dense table, comma- or whitespace-delimited (sniffed from the first data
// line). label_column: 0-based, or -1 for the last column. A non-numeric
// first line is treated as a header. Appends to `into` when given so
// multi-file datasets keep file order.
inline RawDataset load_dense_csv(const std::string& path, int label_column,
                                 RawDataset* into = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    RawDataset local;
    RawDataset& ds = into ? *into : local;
    if (ds.name.empty()) ds.name = std::filesystem::path(path).stem().string();

    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
    }
    if (lines.empty()) throw ParseError(path, 0, "empty file");

    const char delim = lines[0].find(',') != std::string::npos ? ',' : ' ';
    std::size_t start = 0;
    {
        auto toks = detail::split_tokens(lines[0], delim);
        bool numeric = true;
        double v;
        for (auto& t : toks)
            if (!detail::parse_double(t, v)) { numeric = false; break; }
        // header rows are non-numeric throughout; a single label token is not
        if (!numeric) {
            std::size_t bad = 0;
            for (auto& t : toks)
                if (!detail::parse_double(t, v)) ++bad;
            if (bad > 1) start = 1;
        }
    }

    detail::LabelMapper labels;
    std::vector<std::vector<double>> feats;
    std::int64_t width = -1;
    for (std::size_t li = start; li < lines.size(); ++li) {
        auto toks = detail::split_tokens(lines[li], delim);
        if (toks.empty()) continue;
        if (width < 0) {
            width = static_cast<std::int64_t>(toks.size());
            if (width < 2) throw ParseError(path, li + 1, "need at least one feature and a label");
        } else if (static_cast<std::int64_t>(toks.size()) != width) {
            throw ParseError(path, li + 1, "ragged row: " + std::to_string(toks.size()) + " columns, expected " +
                                               std::to_string(width));
        }
        const int lc = label_column < 0 ? static_cast<int>(width) - 1 : label_column;
        if (lc >= width) throw ParseError(path, li + 1, "label column out of range");
        labels.add(toks[static_cast<std::size_t>(lc)]);
        std::vector<double> row;
        row.reserve(static_cast<std::size_t>(width - 1));
        for (std::int64_t c = 0; c < width; ++c) {
            if (c == lc) continue;
            double v;
            if (!detail::parse_double(toks[static_cast<std::size_t>(c)], v))
                throw ParseError(path, li + 1, "non-numeric feature '" + toks[static_cast<std::size_t>(c)] + "'");
            row.push_back(v);
        }
        feats.push_back(std::move(row));
    }
    int nc = 0;
    auto mapped = labels.resolve(nc);

    if (ds.num_features == 0) {
        ds.num_features = width - 1;
    } else if (ds.num_features != width - 1) {
        throw ParseError(path, 0, "feature count " + std::to_string(width - 1) + " does not match earlier file (" +
                                      std::to_string(ds.num_features) + ")");
    }
    ds.num_classes = std::max(ds.num_classes, nc);
    for (std::size_t r = 0; r < feats.size(); ++r) {
        RawRow row;
        row.values = std::move(feats[r]);
        row.label = mapped[r];
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

// ------------------------------------------------------------------
// Benchmark registry: where each known dataset lives under the data dir
// and the base/aux convention pinned for it.

struct DatasetSpec {
    std::string name;
    std::vector<std::string> files;  // loaded and concatenated in order
    bool svmlight = false;
    int label_column = -1;
    double aux_fraction = 1.0;
    double default_p = 1.0;
};

inline const std::vector<DatasetSpec>& dataset_registry() {
    static const std::vector<DatasetSpec> specs = {
        {"italy_power", {"ItalyPowerDemand_TRAIN.txt", "ItalyPowerDemand_TEST.txt"}, false, 0, 1.0, 0.8},
        {"german", {"german.data-numeric"}, false, -1, 22.0 / 24.0, 0.73},
        {"svmguide3", {"svmguide3.txt"}, true, -1, 20.0 / 22.0, 0.72},
        {"magic04", {"magic04.data"}, false, -1, 8.0 / 10.0, 0.68},
        {"a8a", {"a8a.txt"}, true, -1, 121.0 / 123.0, 0.75},
    };
    return specs;
}

inline const DatasetSpec* find_dataset_spec(const std::string& name) {
    for (const auto& s : dataset_registry())
        if (s.name == name) return &s;
    return nullptr;
}

inline std::string default_data_dir() {
    if (const char* env = std::getenv("HAPSTREAM_DATA_DIR")) return env;
    return "data";
}

struct MissingDataset : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Loads a registered benchmark by name, or any file path directly
// (svmlight when the extension is .svm/.libsvm, dense otherwise).
inline RawDataset load_dataset(const std::string& name_or_path, const std::string& data_dir) {
    if (const DatasetSpec* spec = find_dataset_spec(name_or_path)) {
        RawDataset ds;
        ds.name = spec->name;
        for (const auto& f : spec->files) {
            const auto path = (std::filesystem::path(data_dir) / f).string();
            if (!std::filesystem::exists(path))
                throw MissingDataset("dataset file not found: " + path);
            if (spec->svmlight) {
                RawDataset part = load_svmlight(path);
                if (ds.num_features == 0) {
                    part.name = ds.name;
                    ds = std::move(part);
                } else {
                    for (auto& r : part.rows) ds.rows.push_back(std::move(r));
                }
            } else {
                load_dense_csv(path, spec->label_column, &ds);
            }
        }
        return ds;
    }
    if (!std::filesystem::exists(name_or_path))
        throw MissingDataset("dataset file not found: " + name_or_path);
    const auto ext = std::filesystem::path(name_or_path).extension().string();
    if (ext == ".svm" || ext == ".libsvm") return load_svmlight(name_or_path);
    return load_dense_csv(name_or_path, -1);
}

}  // namespace hapstream
