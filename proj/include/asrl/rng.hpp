#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace asrl {

// Counter-based random stream. Draw i of stream (seed, name) is a pure
// function of (seed, hash(name), i), so a stream can be reopened at any
// counter position and checkpoints only need to store the counter.
class RngStream {
public:
    RngStream() = default;
    RngStream(std::uint64_t seed, std::string_view name, std::uint64_t start_counter = 0);

    std::uint64_t next_u64();
    // [0,1), 53-bit resolution.
    double uniform();
    // (0,1], safe as a log() argument.
    double uniform_open();
    // N(0,1) via Box-Muller; consumes exactly two draws per value.
    double normal();
    // Uniform integer in [0,n), n > 0.
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates over indices 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace asrl
