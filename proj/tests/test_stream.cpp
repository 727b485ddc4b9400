#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "hapstream/stream.hpp"
#include "helpers.hpp"

using namespace hapstream;
using test_helpers::synthetic_linear;

TEST_CASE("default_split puts the last ceil(aux*d) features in aux", "[stream]") {
    FeatureSplit all = default_split(10, 1.0);
    REQUIRE(all.base_indices.empty());
    REQUIRE(all.aux_indices.size() == 10);

    FeatureSplit half = default_split(10, 0.5);
    REQUIRE(half.base_indices == std::vector<std::int64_t>{0, 1, 2, 3, 4});
    REQUIRE(half.aux_indices == std::vector<std::int64_t>{5, 6, 7, 8, 9});

    REQUIRE_THROWS_AS(default_split(10, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(default_split(10, 1.5), std::invalid_argument);
}

TEST_CASE("p=1 keeps every value, p->0 masks all auxiliaries", "[stream]") {
    RawDataset ds = synthetic_linear(50, 6, 1);
    FeatureSplit split = default_split(6, 0.5);

    auto full = make_haphazard(ds, split, 1.0, 7, /*scale=*/false);
    for (std::size_t t = 0; t < full.size(); ++t) {
        for (bool m : full[t].mask) REQUIRE(m);
        REQUIRE(full[t].values == ds.rows[t].values);
    }

    auto starved = make_haphazard(ds, split, 1e-12, 7, false);
    for (const auto& s : starved) {
        for (std::int64_t i : split.base_indices) REQUIRE(s.mask[static_cast<std::size_t>(i)]);
        for (std::int64_t i : split.aux_indices) REQUIRE_FALSE(s.mask[static_cast<std::size_t>(i)]);
    }

    REQUIRE_THROWS_AS(make_haphazard(ds, split, 0.0, 7), std::invalid_argument);
    REQUIRE_THROWS_AS(make_haphazard(ds, split, 1.5, 7), std::invalid_argument);
    REQUIRE_THROWS_AS(make_haphazard(ds, FeatureSplit{}, 0.5, 7), std::invalid_argument);
}

TEST_CASE("empirical availability matches p", "[stream]") {
    RawDataset ds = synthetic_linear(1000, 22, 2);
    FeatureSplit split = default_split(22, 1.0);
    const double p = 0.73;
    auto stream = make_haphazard(ds, split, p, 11);
    std::int64_t on = 0, total = 0;
    for (const auto& s : stream)
        for (bool m : s.mask) {
            on += m ? 1 : 0;
            ++total;
        }
    REQUIRE(std::abs(static_cast<double>(on) / static_cast<double>(total) - p) < 0.01);
}

TEST_CASE("identical (seed,p) give bit-identical streams", "[stream]") {
    RawDataset ds = synthetic_linear(200, 8, 3);
    FeatureSplit split = default_split(8, 0.75);
    auto a = make_haphazard(ds, split, 0.6, 42);
    auto b = make_haphazard(ds, split, 0.6, 42);
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        REQUIRE(a[t].values == b[t].values);
        REQUIRE(a[t].mask == b[t].mask);
    }
    auto c = make_haphazard(ds, split, 0.6, 43);
    bool any_diff = false;
    for (std::size_t t = 0; t < a.size(); ++t) any_diff |= a[t].mask != c[t].mask;
    REQUIRE(any_diff);
}

TEST_CASE("masked positions always hold zero values", "[stream]") {
    RawDataset ds = synthetic_linear(300, 7, 5);
    FeatureSplit split = default_split(7, 1.0);
    for (const auto& s : make_haphazard(ds, split, 0.4, 9))
        for (std::size_t i = 0; i < s.values.size(); ++i)
            if (!s.mask[i]) REQUIRE(s.values[i] == 0.0);
}

TEST_CASE("mask bits are independent across time", "[stream]") {
    RawDataset ds = synthetic_linear(100000, 2, 6);
    FeatureSplit split = default_split(2, 1.0);
    auto stream = make_haphazard(ds, split, 0.5, 13);
    for (std::int64_t f = 0; f < 2; ++f) {
        double mean = 0.0;
        for (const auto& s : stream) mean += s.mask[static_cast<std::size_t>(f)] ? 1.0 : 0.0;
        mean /= static_cast<double>(stream.size());
        double num = 0.0, den = 0.0;
        for (std::size_t t = 0; t + 1 < stream.size(); ++t) {
            const double a = (stream[t].mask[static_cast<std::size_t>(f)] ? 1.0 : 0.0) - mean;
            const double b = (stream[t + 1].mask[static_cast<std::size_t>(f)] ? 1.0 : 0.0) - mean;
            num += a * b;
            den += a * a;
        }
        REQUIRE(std::abs(num / den) < 0.02);
    }
}

TEST_CASE("trapezoid exposes a growing feature prefix", "[stream]") {
    RawDataset ds = synthetic_linear(100, 10, 7);

    auto flat = make_trapezoid(ds, 1, false);
    for (const auto& s : flat)
        for (bool m : s.mask) REQUIRE(m);

    auto grown = make_trapezoid(ds, 10, false);
    // first segment: exactly ceil(1*10/10) = 1 feature on
    for (std::size_t t = 0; t < 10; ++t) {
        REQUIRE(grown[t].mask[0]);
        for (std::size_t i = 1; i < 10; ++i) REQUIRE_FALSE(grown[t].mask[i]);
    }
    // last segment: everything on
    for (std::size_t t = 90; t < 100; ++t)
        for (bool m : grown[t].mask) REQUIRE(m);
}

TEST_CASE("trapezoid total availability matches the closed form", "[stream]") {
    if (!test_helpers::have_dataset("german")) SKIP("german data file not present");
    RawDataset german = load_dataset("german", test_helpers::source_data_dir());
    auto stream = make_trapezoid(german, 10);
    std::int64_t total = 0;
    for (const auto& s : stream)
        for (bool m : s.mask) total += m ? 1 : 0;
    std::int64_t expected = 0;
    for (std::int64_t k = 1; k <= 10; ++k) expected += ((k * 24 + 9) / 10) * 100;
    REQUIRE(total == expected);
}

TEST_CASE("compress keeps available entries in ascending index order", "[stream]") {
    StreamSample s;
    s.t = 3;
    s.values = {3, 0, 7};
    s.mask = {true, false, true};
    s.label = 1;
    CompressedSample c = compress(s);
    REQUIRE(c.entries == std::vector<std::pair<std::int64_t, double>>{{0, 3.0}, {2, 7.0}});

    StreamSample none;
    none.values = {1, 2};
    none.mask = {false, false};
    REQUIRE(compress(none).entries.empty());
}

TEST_CASE("scatter of compress is the identity on masked samples", "[stream]") {
    rng::Engine eng(17);
    for (int rep = 0; rep < 1000; ++rep) {
        StreamSample s;
        const std::int64_t d = 1 + static_cast<std::int64_t>(eng.below(12));
        for (std::int64_t i = 0; i < d; ++i) {
            const bool on = eng.bernoulli(0.6);
            s.mask.push_back(on);
            s.values.push_back(on ? eng.uniform(-5.0, 5.0) : 0.0);
        }
        REQUIRE(scatter(compress(s), d) == s.values);
    }
}

TEST_CASE("bootstrap copy zero is the identity and base survives", "[stream]") {
    rng::Engine eng(19);
    StreamSample s;
    s.values = {1, 2, 3, 4, 5, 6};
    s.mask = {true, true, true, true, false, true};
    FeatureSplit split = default_split(6, 0.5);

    auto one = bootstrap_masks(s, split, 1, 0.5, eng);
    REQUIRE(one.size() == 1);
    REQUIRE(one[0].values == s.values);
    REQUIRE(one[0].mask == s.mask);

    auto noq = bootstrap_masks(s, split, 4, 0.0, eng);
    for (const auto& c : noq) {
        REQUIRE(c.values == s.values);
        REQUIRE(c.mask == s.mask);
    }

    for (int rep = 0; rep < 200; ++rep) {
        auto copies = bootstrap_masks(s, split, 4, 0.9, eng);
        for (const auto& c : copies)
            for (std::int64_t i : split.base_indices) REQUIRE(c.mask[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("bootstrap drop rate matches q on available auxiliaries", "[stream]") {
    rng::Engine eng(23);
    RawDataset ds = synthetic_linear(2500, 8, 29);
    FeatureSplit split = default_split(8, 1.0);
    auto stream = make_haphazard(ds, split, 0.7, 31);
    std::int64_t survived = 0, available = 0;
    for (const auto& s : stream) {
        auto copies = bootstrap_masks(s, split, 4, 0.5, eng);
        std::int64_t avail = 0;
        for (bool m : s.mask) avail += m ? 1 : 0;
        for (std::size_t k = 1; k < copies.size(); ++k) {
            available += avail;
            for (bool m : copies[k].mask) survived += m ? 1 : 0;
        }
    }
    const double rate = static_cast<double>(survived) / static_cast<double>(available);
    REQUIRE(std::abs(rate - 0.5) < 0.01);
}

TEST_CASE("stream dump emits one JSON object per step", "[stream]") {
    StreamSample s;
    s.t = 0;
    s.values = {0.5, 0.0};
    s.mask = {true, false};
    s.label = 1;
    std::ostringstream os;
    dump_stream(std::vector<StreamSample>{s}, os);
    REQUIRE(os.str() == "{\"t\":0,\"values\":[0.5,0],\"mask\":[1,0],\"label\":1}\n");
}
