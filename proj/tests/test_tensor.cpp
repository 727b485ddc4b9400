#include <catch2/catch_amalgamated.hpp>

#include "hapstream/ops.hpp"
#include "hapstream/tensor.hpp"

using namespace hapstream;

TEST_CASE("shape bookkeeping", "[tensor]") {
    Tensor t({2, 3}, 1.5);
    REQUIRE(t.numel() == 6);
    REQUIRE(t.rows() == 2);
    REQUIRE(t.cols() == 3);
    REQUIRE_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
    REQUIRE_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("backward of sum gives all-ones gradient", "[tensor]") {
    Tensor x({3, 4}, 2.5, true);
    ops::sum(x).backward();
    for (double g : x.grad()) REQUIRE(g == 1.0);
}

TEST_CASE("backward of half sum of squares reproduces x", "[tensor]") {
    rng::Engine eng(3);
    Tensor x = Tensor::uniform({5}, eng, -2.0, 2.0, true);
    Tensor loss = ops::scale(ops::sum(ops::mul(x, x)), 0.5);
    loss.backward();
    for (std::int64_t i = 0; i < x.numel(); ++i)
        REQUIRE(x.grad()[static_cast<std::size_t>(i)] == Catch::Approx(x.at(i)).margin(1e-12));
}

TEST_CASE("backward rejects non-scalar loss", "[tensor]") {
    Tensor x({2, 2}, 1.0, true);
    Tensor y = ops::mul(x, x);
    REQUIRE_THROWS_AS(y.backward(), std::logic_error);
}

TEST_CASE("repeated backward without zeroing accumulates", "[tensor]") {
    Tensor x({4}, 1.0, true);
    ops::sum(x).backward();
    ops::sum(x).backward();
    for (double g : x.grad()) REQUIRE(g == 2.0);
}

TEST_CASE("shared subexpression accumulates like a duplicated graph", "[tensor]") {
    rng::Engine eng(17);
    // shared: x used twice through the same tensor
    Tensor x = Tensor::uniform({6}, eng, -2.0, 2.0, true);
    Tensor loss = ops::sum(ops::mul(x, x));
    loss.backward();

    // oracle: two independent copies of the same values
    Tensor a(x.shape(), {x.values().begin(), x.values().end()}, true);
    Tensor b(x.shape(), {x.values().begin(), x.values().end()}, true);
    ops::sum(ops::mul(a, b)).backward();
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double expected = a.grad()[static_cast<std::size_t>(i)] + b.grad()[static_cast<std::size_t>(i)];
        REQUIRE(x.grad()[static_cast<std::size_t>(i)] == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("NoGradGuard suppresses graph construction", "[tensor]") {
    Tensor x({3}, 1.0, true);
    NoGradGuard ng;
    Tensor y = ops::mul(x, x);
    REQUIRE_FALSE(y.requires_grad());
    REQUIRE(y.impl().node == nullptr);
}
