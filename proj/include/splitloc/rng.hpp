#pragma once
#include <cstdint>
#include <string_view>

namespace splitloc {

// Counter-based stream: every draw hashes (key, counter), so independent
// substreams can be forked by index and replayed in any order.
class Substream {
public:
    Substream() = default;
    explicit Substream(uint64_t key) : key_(key) {}

    uint64_t next_u64();
    double uniform();                     // [0, 1)
    double uniform(double lo, double hi); // [lo, hi)
    double normal();                      // standard normal
    int next_int(int n);                  // [0, n)

    // Child stream derived from this stream's key and an index.
    // Does not consume state of the parent.
    Substream fork(uint64_t index) const;

    uint64_t key() const { return key_; }

private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Root of all randomness for a run. Named substreams keep the modules
// (sampling, noise, init, dropout, ...) decoupled from each other.
class RngService {
public:
    explicit RngService(uint64_t seed) : seed_(seed) {}
    Substream stream(std::string_view name) const;
    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
};

} // namespace splitloc
