#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hapstream::rng {

// splitmix64 finalizer; full-period bijective mix on 64 bits.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline double to_unit(std::uint64_t bits) {
    // 53 high bits -> [0, 1)
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Splittable key for deriving independent RNG consumers from one run seed.
// Counter-based draws make streams reproducible regardless of evaluation
// order: uniform_at(c) depends only on (key, c).
class Key {
public:
    Key() = default;
    explicit Key(std::uint64_t seed) : state_(mix64(seed)) {}

    Key child(std::uint64_t tag) const { return Key::from_state(combine(state_, tag)); }
    Key child(std::string_view tag) const { return child(fnv1a(tag)); }

    std::uint64_t bits_at(std::uint64_t counter) const { return mix64(state_ ^ mix64(counter)); }
    double uniform_at(std::uint64_t counter) const { return to_unit(bits_at(counter)); }
    bool bernoulli_at(std::uint64_t counter, double p) const { return uniform_at(counter) < p; }

    std::uint64_t state() const { return state_; }

private:
    static Key from_state(std::uint64_t s) {
        Key k;
        k.state_ = s;
        return k;
    }
    std::uint64_t state_ = 0x853c49e6748fea9bULL;
};

// Sequential engine over a key; used where draw order is naturally serial
// (parameter init, dropout, replay sampling).
class Engine {
public:
    Engine() = default;
    explicit Engine(Key key) : key_(key) {}
    explicit Engine(std::uint64_t seed) : key_(Key(seed)) {}

    std::uint64_t next_bits() { return key_.bits_at(counter_++); }
    double uniform() { return to_unit(next_bits()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    bool bernoulli(double p) { return uniform() < p; }

    // 0 <= result < n
    std::uint64_t below(std::uint64_t n) { return next_bits() % n; }

    double normal() {
        // Box-Muller; two uniforms per draw, cache unused half.
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    Key key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace hapstream::rng
