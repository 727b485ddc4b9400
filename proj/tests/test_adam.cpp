#include <catch2/catch_amalgamated.hpp>

#include "hapstream/adam.hpp"
#include "hapstream/ops.hpp"

using namespace hapstream;

TEST_CASE("zero gradient leaves parameters unchanged", "[adam]") {
    Tensor w({3}, {1.0, -2.0, 0.5}, true);
    w.grad_mut();  // allocate zeros
    Adam opt({w});
    opt.step();
    REQUIRE(w.at(0) == 1.0);
    REQUIRE(w.at(1) == -2.0);
    REQUIRE(w.at(2) == 0.5);
}

TEST_CASE("first step with unit gradient moves by lr", "[adam]") {
    Tensor w({1}, 3.0, true);
    w.grad_mut()[0] = 1.0;
    AdamConfig cfg;
    Adam opt({w}, cfg);
    opt.step();
    // bias-corrected mhat/sqrt(vhat) == 1, so the move is lr up to eps
    REQUIRE(std::abs((3.0 - w.at(0)) - cfg.lr) < 1e-11);
    REQUIRE(opt.step_count() == 1);
    // grads were zeroed by the step
    REQUIRE(w.grad()[0] == 0.0);
}

TEST_CASE("missing gradient is a contract error", "[adam]") {
    Tensor w({2}, 1.0, true);
    Adam opt({w});
    REQUIRE_THROWS_AS(opt.step(), std::logic_error);
}

TEST_CASE("quadratic bowl converges monotonically after warmup", "[adam]") {
    rng::Engine eng(71);
    Tensor w = Tensor::uniform({5}, eng, -1.0, 1.0, true);
    Adam opt({w});  // default lr
    auto norm = [&] {
        double s = 0.0;
        for (double v : w.values()) s += v * v;
        return std::sqrt(s);
    };
    const double initial = norm();
    double prev = initial;
    for (int step = 1; step <= 500; ++step) {
        Tensor loss = ops::sum(ops::mul(w, w));
        loss.backward();
        opt.step();
        const double cur = norm();
        if (step > 10) REQUIRE(cur < prev);
        prev = cur;
    }
    REQUIRE(prev < initial - 0.03);
}
