#include "flowgrad/rng.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace flowgrad {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

namespace {

inline double central_quantile(double q) noexcept {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
}

double tail_quantile(double p, double q) noexcept {
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                   0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                   0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

}  // namespace

double normal_quantile(double p) noexcept {
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) return central_quantile(q);
    return tail_quantile(p, q);
}

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t path_id) noexcept : seed_(seed), path_id_(path_id) {}

std::array<std::uint64_t, 2> NormalStream::block(std::uint64_t b) const noexcept {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                                  static_cast<std::uint32_t>(path_id_), static_cast<std::uint32_t>(path_id_ >> 32)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    const auto out = Philox4x32::generate(ctr, key);
    return {(static_cast<std::uint64_t>(out[1]) << 32) | out[0], (static_cast<std::uint64_t>(out[3]) << 32) | out[2]};
}

double NormalStream::at(std::uint64_t index) const noexcept {
    const auto words = block(index / 2);
    return normal_quantile(bits_to_open_unit(words[index % 2]));
}

void NormalStream::fill(std::uint64_t first, std::span<double> out) const noexcept {
    std::size_t i = 0;
    std::uint64_t j = first;
    if (out.empty()) return;
    if (j % 2 == 1) {
        out[i++] = at(j++);
    }
    const std::size_t lo = i;
    std::vector<std::pair<std::size_t, double>> tails;
    for (; i + 1 < out.size(); i += 2, j += 2) {
        const auto words = block(j / 2);
        for (std::size_t h = 0; h < 2; ++h) {
            const double u = bits_to_open_unit(words[h]);
            if (std::fabs(u - 0.5) > 0.425) tails.emplace_back(i + h, u);
            out[i + h] = u;
        }
    }
    // Central branch for every slot in a vectorizable pass, then the tails.
    for (std::size_t k = lo; k < i; ++k) out[k] = central_quantile(out[k] - 0.5);
    for (const auto& [k, u] : tails) out[k] = tail_quantile(u, u - 0.5);
    if (i < out.size()) out[i] = at(j);
}

}  // namespace flowgrad
