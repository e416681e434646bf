#pragma once

#include <array>
#include <cstdint>

#include "seedsr/tensor.hpp"

namespace seedsr {

// Philox4x32-10 counter-based generator. Every draw is a pure function of
// (seed, stream, counter), so trajectories are reproducible and independent
// streams can be carved out of one seed without coordination.
class Philox {
public:
    explicit Philox(uint64_t seed, uint64_t stream = 0)
        : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
          ctr_hi_(stream) {}

    uint32_t next_u32();
    uint64_t next_u64();

    // Uniform in [0,1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (cached spare).
    double normal();

    // Integer in [0, n) by rejection-free 64-bit multiply-shift.
    uint64_t uniform_int(uint64_t n);

    void fill_normal(Tensor& t);
    Tensor normal_tensor(std::vector<int> dims);

private:
    std::array<uint32_t, 4> block(uint64_t counter) const;

    std::array<uint32_t, 2> key_;
    uint64_t ctr_hi_ = 0;  // stream id occupies the high counter lanes
    uint64_t ctr_lo_ = 0;  // consumed sequentially
    std::array<uint32_t, 4> buf_{};
    int buf_pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stable 64-bit mix for deriving stream ids / split hashes from small integers.
uint64_t mix64(uint64_t x);
uint64_t mix64(uint64_t a, uint64_t b);

}  // namespace seedsr
