#include "flowgrad/stats.hpp"

#include <algorithm>
#include <cmath>

namespace flowgrad {


double pairwise_sum(std::span<const double> v) noexcept {
    constexpr std::size_t kBlock = 32;
    if (v.size() <= kBlock) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

Estimate estimate(std::span<const double> samples) {
    Estimate e;
    e.n = samples.size();
    if (e.n == 0) return e;
    e.mean = pairwise_sum(samples) / static_cast<double>(e.n);
    if (e.n < 2) return e;
    std::vector<double> dev(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double d = samples[i] - e.mean;
        dev[i] = d * d;
    }
    const double var = pairwise_sum(dev) / static_cast<double>(e.n - 1);
    e.se = std::sqrt(var / static_cast<double>(e.n));
    return e;
}

double quantile(std::vector<double> samples, double q) {
    if (samples.empty()) return 0.0;
    std::sort(samples.begin(), samples.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(samples.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return samples[lo] + frac * (samples[hi] - samples[lo]);
}

void RunningStats::push(double x) noexcept {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
}

void RunningStats::merge(const RunningStats& other) noexcept {
    if (other.n_ == 0) return;
    if (n_ == 0) {
        *this = other;
        return;
    }
    const double total = static_cast<double>(n_ + other.n_);
    const double delta = other.mean_ - mean_;
    mean_ += delta * static_cast<double>(other.n_) / total;
    m2_ += other.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(other.n_) / total;
    n_ += other.n_;
}

double RunningStats::variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

Estimate RunningStats::estimate() const noexcept {
    return {mean_, n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0, n_};
}

}  // namespace flowgrad
