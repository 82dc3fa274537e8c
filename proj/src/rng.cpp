#include "splitloc/rng.hpp"

#include <cmath>
#include <numbers>

namespace splitloc {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer; bijective, good avalanche.
uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace

uint64_t Substream::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double Substream::uniform() {
    // 53 random bits into [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Substream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Substream::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 kept away from zero.
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

int Substream::next_int(int n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

Substream Substream::fork(uint64_t index) const {
    return Substream(mix64(key_ ^ mix64(index + kGolden)));
}

Substream RngService::stream(std::string_view name) const {
    // FNV-1a over the name, then mixed with the seed.
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return Substream(mix64(h ^ mix64(seed_ + kGolden)));
}

} // namespace splitloc
