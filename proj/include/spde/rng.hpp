#pragma once

// Counter-based random numbers (Philox 4x32-10, Salmon et al. SC'11).
// Every Brownian increment is addressed by (seed, path, step), so a path can
// be reproduced in isolation and ensembles are independent of execution order.

#include <array>
#include <cmath>
#include <cstdint>

namespace spde {

namespace philox {

constexpr uint32_t kWeylA = 0x9E3779B9u;
constexpr uint32_t kWeylB = 0xBB67AE85u;
constexpr uint32_t kMultA = 0xD2511F53u;
constexpr uint32_t kMultB = 0xCD9E8D57u;

inline void mul_hi_lo(uint32_t a, uint32_t b, uint32_t& lo, uint32_t& hi) {
    const uint64_t p = static_cast<uint64_t>(a) * b;
    lo = static_cast<uint32_t>(p);
    hi = static_cast<uint32_t>(p >> 32);
}

inline void round_once(std::array<uint32_t, 4>& ctr, const std::array<uint32_t, 2>& key) {
    uint32_t lo0, hi0, lo1, hi1;
    mul_hi_lo(kMultA, ctr[0], lo0, hi0);
    mul_hi_lo(kMultB, ctr[2], lo1, hi1);
    const std::array<uint32_t, 4> out = {hi1 ^ ctr[1] ^ key[0], lo1,
                                         hi0 ^ ctr[3] ^ key[1], lo0};
    ctr = out;
}

inline std::array<uint32_t, 4> block(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) {
        round_once(ctr, key);
        if (r < 9) {
            key[0] += kWeylA;
            key[1] += kWeylB;
        }
    }
    return ctr;
}

} // namespace philox

// 128-bit random block for one (seed, path, step) address.
inline std::array<uint32_t, 4> counter_block(uint64_t seed, uint64_t path, uint64_t step) {
    const std::array<uint32_t, 4> ctr = {
        static_cast<uint32_t>(step), static_cast<uint32_t>(step >> 32),
        static_cast<uint32_t>(path), static_cast<uint32_t>(path >> 32)};
    const std::array<uint32_t, 2> key = {static_cast<uint32_t>(seed),
                                         static_cast<uint32_t>(seed >> 32)};
    return philox::block(ctr, key);
}

namespace detail {

// 53-bit uniform strictly inside (0,1)
inline double to_open_unit(uint32_t hi, uint32_t lo) {
    const uint64_t v = (static_cast<uint64_t>(hi) << 32) | lo;
    return static_cast<double>(v >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

} // namespace detail

// Standard normal draw for the given address (Box-Muller).
inline double normal_draw(uint64_t seed, uint64_t path, uint64_t step) {
    const auto r = counter_block(seed, path, step);
    const double u1 = detail::to_open_unit(r[0], r[1]);
    const double u2 = detail::to_open_unit(r[2], r[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

} // namespace spde
