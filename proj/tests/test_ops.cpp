#include <catch2/catch_amalgamated.hpp>

#include "hapstream/gradcheck.hpp"
#include "hapstream/ops.hpp"

using namespace hapstream;

namespace {

// Random projection turns any tensor-valued op into a scalar loss with
// non-degenerate per-coordinate gradients.
Tensor project(const Tensor& y, const Tensor& r) { return ops::sum(ops::mul(y, r)); }

Tensor rand_const(Shape shape, rng::Engine& eng, double lo = -2.0, double hi = 2.0) {
    return Tensor::uniform(std::move(shape), eng, lo, hi, false);
}

}  // namespace

TEST_CASE("matmul identity and zero cases", "[ops]") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor col({2, 1}, {3, 4});
    Tensor out = ops::matmul(eye, col);
    REQUIRE(out.at(0) == 3.0);
    REQUIRE(out.at(1) == 4.0);

    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor z({2, 1}, {0, 0});
    Tensor out2 = ops::matmul(a, z);
    REQUIRE(out2.at(0) == 0.0);
    REQUIRE(out2.at(1) == 0.0);

    REQUIRE_THROWS_WITH(ops::matmul(Tensor({2, 3}), Tensor({2, 3})),
                        Catch::Matchers::ContainsSubstring("[2x3]"));
}

TEST_CASE("matmul gradients match central differences", "[ops]") {
    rng::Engine eng(5);
    Tensor a = Tensor::uniform({3, 4}, eng, -2.0, 2.0, true);
    Tensor b = Tensor::uniform({4, 2}, eng, -2.0, 2.0, true);
    Tensor r = rand_const({3, 2}, eng);
    const double err = gradcheck_max_rel_error([&] { return project(ops::matmul(a, b), r); }, {a, b});
    REQUIRE(err < 1e-5);
}

TEST_CASE("softmax basics", "[ops]") {
    Tensor x({2}, {0.0, 0.0});
    Tensor y = ops::softmax(x);
    REQUIRE(y.at(0) == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(y.at(1) == Catch::Approx(0.5).margin(1e-15));

    Tensor big({2}, {1000.0, 0.0});
    Tensor yb = ops::softmax(big);
    REQUIRE(yb.at(0) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(yb.at(1) == Catch::Approx(0.0).margin(1e-12));

    Tensor bad({2}, {std::nan(""), 0.0});
    REQUIRE_THROWS_AS(ops::softmax(bad), std::runtime_error);
    REQUIRE_THROWS_AS(ops::softmax(x, 5), std::invalid_argument);
}

TEST_CASE("softmax rows sum to one for large magnitudes", "[ops]") {
    rng::Engine eng(9);
    for (int rep = 0; rep < 50; ++rep) {
        Tensor x = Tensor::uniform({4, 7}, eng, -1e3, 1e3, false);
        Tensor y = ops::softmax(x);
        for (std::int64_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (std::int64_t c = 0; c < 7; ++c) {
                // exp underflows to exactly 0 for gaps past ~709
                REQUIRE(y.at(r, c) >= 0.0);
                s += y.at(r, c);
            }
            REQUIRE(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("softmax along axis 0 normalizes columns", "[ops]") {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = ops::softmax(x, 0);
    for (std::int64_t c = 0; c < 3; ++c)
        REQUIRE(y.at(0, c) + y.at(1, c) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("softmax gradient matches central differences", "[ops]") {
    rng::Engine eng(13);
    Tensor x = Tensor::uniform({5}, eng, -2.0, 2.0, true);
    Tensor r = rand_const({5}, eng);
    const double err = gradcheck_max_rel_error([&] { return project(ops::softmax(x), r); }, {x});
    REQUIRE(err < 1e-4);
}

TEST_CASE("layer_norm zero-variance and standardized rows", "[ops]") {
    Tensor gain({3}, 1.0);
    Tensor bias({3}, 0.0);
    Tensor c({1, 3}, {5, 5, 5});
    Tensor yc = ops::layer_norm(c, gain, bias);
    for (std::int64_t i = 0; i < 3; ++i) REQUIRE(yc.at(i) == Catch::Approx(0.0).margin(1e-12));

    Tensor g2({2}, 1.0), b2({2}, 0.0);
    Tensor x({1, 2}, {1.0, -1.0});
    Tensor y = ops::layer_norm(x, g2, b2);
    REQUIRE(y.at(0) == Catch::Approx(1.0).margin(1e-4));
    REQUIRE(y.at(1) == Catch::Approx(-1.0).margin(1e-4));

    REQUIRE_THROWS_AS(ops::layer_norm(Tensor({3, 1}), Tensor({1}), Tensor({1})), std::invalid_argument);
}

TEST_CASE("layer_norm rows have zero mean unit variance before gain/bias", "[ops]") {
    rng::Engine eng(21);
    Tensor gain({8}, 1.0), bias({8}, 0.0);
    Tensor x = Tensor::uniform({4, 8}, eng, -3.0, 3.0, false);
    Tensor y = ops::layer_norm(x, gain, bias);
    for (std::int64_t r = 0; r < 4; ++r) {
        double mu = 0.0, var = 0.0;
        for (std::int64_t c = 0; c < 8; ++c) mu += y.at(r, c);
        mu /= 8.0;
        for (std::int64_t c = 0; c < 8; ++c) var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
        var /= 8.0;
        REQUIRE(std::abs(mu) < 1e-12);
        REQUIRE(var == Catch::Approx(1.0).margin(1e-3));  // up to eps in the denominator
    }
}

TEST_CASE("layer_norm gradients match central differences", "[ops]") {
    rng::Engine eng(23);
    Tensor x = Tensor::uniform({4, 8}, eng, -2.0, 2.0, true);
    Tensor gain = Tensor::uniform({8}, eng, 0.5, 1.5, true);
    Tensor bias = Tensor::uniform({8}, eng, -0.5, 0.5, true);
    Tensor r = rand_const({4, 8}, eng);
    const double err =
        gradcheck_max_rel_error([&] { return project(ops::layer_norm(x, gain, bias), r); }, {x, gain, bias});
    REQUIRE(err < 1e-4);
}

TEST_CASE("dropout identities", "[ops]") {
    rng::Engine eng(31);
    Tensor x({100}, 1.0, true);
    Tensor y0 = ops::dropout(x, 0.0, true, eng);
    for (std::int64_t i = 0; i < 100; ++i) REQUIRE(y0.at(i) == x.at(i));
    Tensor yi = ops::dropout(x, 0.15, false, eng);
    for (std::int64_t i = 0; i < 100; ++i) REQUIRE(yi.at(i) == x.at(i));
    REQUIRE_THROWS_AS(ops::dropout(x, 1.0, true, eng), std::invalid_argument);
    REQUIRE_THROWS_AS(ops::dropout(x, -0.1, true, eng), std::invalid_argument);
}

TEST_CASE("inverted dropout preserves the mean", "[ops]") {
    rng::Engine eng(37);
    Tensor x({1000000}, 1.0);
    Tensor y = ops::dropout(x, 0.15, true, eng);
    double mean = 0.0;
    for (double v : y.values()) mean += v;
    mean /= static_cast<double>(y.numel());
    REQUIRE(mean > 0.997);
    REQUIRE(mean < 1.003);
}

TEST_CASE("cross_entropy reference values", "[ops]") {
    Tensor uniform({1, 2}, {0.0, 0.0});
    REQUIRE(ops::cross_entropy(uniform, {0}).item() == Catch::Approx(std::log(2.0)).margin(1e-12));
    REQUIRE(ops::cross_entropy(uniform, {1}).item() == Catch::Approx(0.693147).margin(1e-6));

    Tensor confident({1, 2}, {30.0, -30.0});
    REQUIRE(ops::cross_entropy(confident, {0}).item() < 1e-12);

    REQUIRE_THROWS_AS(ops::cross_entropy(uniform, {2}), std::out_of_range);
    REQUIRE_THROWS_AS(ops::cross_entropy(Tensor({1, 1}), {0}), std::invalid_argument);
}

TEST_CASE("cross_entropy gradient matches central differences", "[ops]") {
    rng::Engine eng(41);
    Tensor logits = Tensor::uniform({8, 2}, eng, -2.0, 2.0, true);
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(static_cast<int>(eng.below(2)));
    const double err = gradcheck_max_rel_error([&] { return ops::cross_entropy(logits, labels); }, {logits});
    REQUIRE(err < 1e-4);
}

TEST_CASE("elementwise activations match central differences", "[ops]") {
    rng::Engine eng(43);
    Tensor x = Tensor::uniform({3, 5}, eng, -2.0, 2.0, true);
    Tensor r = rand_const({3, 5}, eng);
    REQUIRE(gradcheck_max_rel_error([&] { return project(ops::sigmoid(x), r); }, {x}) < 1e-4);
    REQUIRE(gradcheck_max_rel_error([&] { return project(ops::tanh(x), r); }, {x}) < 1e-4);
    // relu is kinked at 0; random values stay clear of it almost surely
    REQUIRE(gradcheck_max_rel_error([&] { return project(ops::relu(x), r); }, {x}) < 1e-4);
}

TEST_CASE("add_rowvec and scale_by gradients", "[ops]") {
    rng::Engine eng(47);
    Tensor x = Tensor::uniform({4, 3}, eng, -2.0, 2.0, true);
    Tensor b = Tensor::uniform({3}, eng, -2.0, 2.0, true);
    Tensor r = rand_const({4, 3}, eng);
    REQUIRE(gradcheck_max_rel_error([&] { return project(ops::add_rowvec(x, b), r); }, {x, b}) < 1e-5);

    Tensor s({1}, 1.3, true);
    REQUIRE(gradcheck_max_rel_error([&] { return project(ops::scale_by(x, s), r); }, {x, s}) < 1e-5);
}

TEST_CASE("attention_core gradients match central differences", "[ops]") {
    rng::Engine eng(53);
    const std::int64_t B = 2, T = 3, d = 4, heads = 2;
    Tensor q = Tensor::uniform({B * T, d}, eng, -1.0, 1.0, true);
    Tensor k = Tensor::uniform({B * T, d}, eng, -1.0, 1.0, true);
    Tensor v = Tensor::uniform({B * T, d}, eng, -1.0, 1.0, true);
    Tensor r = rand_const({B * T, d}, eng);
    const double err = gradcheck_max_rel_error(
        [&] { return project(ops::attention_core(q, k, v, B, T, heads), r); }, {q, k, v});
    REQUIRE(err < 1e-4);
    REQUIRE_THROWS_AS(ops::attention_core(q, k, v, B, T, 3), std::invalid_argument);
}

TEST_CASE("mean_tokens pools over the token axis", "[ops]") {
    Tensor x({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});  // B=2, T=2
    Tensor y = ops::mean_tokens(x, 2, 2);
    REQUIRE(y.at(0, 0) == 2.0);
    REQUIRE(y.at(0, 1) == 3.0);
    REQUIRE(y.at(1, 0) == 6.0);
    REQUIRE(y.at(1, 1) == 7.0);

    rng::Engine eng(59);
    Tensor xr = Tensor::uniform({6, 3}, eng, -2.0, 2.0, true);
    Tensor r = rand_const({2, 3}, eng);
    REQUIRE(gradcheck_max_rel_error([&] { return project(ops::mean_tokens(xr, 2, 3), r); }, {xr}) < 1e-5);
}

TEST_CASE("add_mask_offset applies the offset only where masked bits are set", "[ops]") {
    Tensor a({3}, {0.5, -0.5, 1.0});
    a.set_requires_grad(true);
    std::vector<double> base = {1, 1, 1, 2, 2, 2};
    std::vector<double> bits = {1.0, 0.0};
    Tensor out = ops::add_mask_offset({2, 3}, base, bits, a);
    REQUIRE(out.at(0, 0) == 1.5);
    REQUIRE(out.at(0, 1) == 0.5);
    REQUIRE(out.at(1, 0) == 2.0);

    rng::Engine eng(61);
    Tensor r = rand_const({2, 3}, eng);
    const double err = gradcheck_max_rel_error(
        [&] { return project(ops::add_mask_offset({2, 3}, base, bits, a), r); }, {a});
    REQUIRE(err < 1e-5);
}
