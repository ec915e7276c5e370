#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace flowgrad {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Stateless: the output is a pure function of (counter, key).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) noexcept;
};

/// Inverse of the standard normal CDF (Wichura, AS241 PPND16), relative
/// accuracy about 1e-16 on (0,1).
double normal_quantile(double p) noexcept;

/// Map 64 random bits to a uniform variate strictly inside (0,1).
inline double bits_to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Random-access stream of standard normal variates keyed by (seed, path_id).
///
/// Variate j uses Philox block j/2 with counter (block_lo, block_hi,
/// path_lo, path_hi) and key (seed_lo, seed_hi); lane j%2 picks which 64-bit
/// half of the block is transformed by the inverse CDF. Any sub-range of the
/// stream can therefore be regenerated bit-exactly on its own.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t path_id) noexcept;

    double at(std::uint64_t index) const noexcept;

    /// Fill `out` with variates first, first+1, ...
    void fill(std::uint64_t first, std::span<double> out) const noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t path_id() const noexcept { return path_id_; }

private:
    std::array<std::uint64_t, 2> block(std::uint64_t b) const noexcept;

    std::uint64_t seed_;
    std::uint64_t path_id_;
};

}  // namespace flowgrad
