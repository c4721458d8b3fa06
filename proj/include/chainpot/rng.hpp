#ifndef CHAINPOT_RNG_HPP
#define CHAINPOT_RNG_HPP

#include <array>
#include <cstdint>

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011). A draw is
// a pure function of (seed, stream, step), which is what makes Monte Carlo
// output independent of the worker count: trajectory k always consumes the
// stream keyed by k, wherever it runs.

namespace chainpot {

namespace philox {

inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;

inline void round_once(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
}

inline std::array<std::uint32_t, 4> block(std::uint64_t seed, std::uint64_t stream,
                                          std::uint64_t step) {
    std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                        static_cast<std::uint32_t>(seed >> 32)};
    for (int r = 0; r < 10; ++r) round_once(ctr, key);
    return ctr;
}

}  // namespace philox

// Uniform draw in [0, 1) from the 53 high bits of one Philox block.
inline double uniform_01(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) {
    auto b = philox::block(seed, stream, step);
    std::uint64_t x = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace chainpot

#endif  // CHAINPOT_RNG_HPP
