#pragma once

#include <cmath>
#include <cstdint>

namespace svgpkan {

// Counter-based generator: draw k of stream (seed) is a pure function of
// (seed, k), so sequences are reproducible across platforms and independent
// of call-site history. split() derives decorrelated child streams.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() {
        ++ctr_;
        return mix(seed_ + ctr_ * 0x9E3779B97F4A7C15ULL);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the pair partner is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Child stream k; children with distinct k are decorrelated from each
    // other and from the parent's own draw sequence.
    Rng split(std::uint64_t k) const { return Rng(mix(mix(seed_ ^ 0xA0761D6478BD642FULL) + (k + 1) * 0xE7037ED1A0B428DBULL)); }

    std::uint64_t seed() const { return seed_; }

    static std::uint64_t mix(std::uint64_t x) {
        x ^= x >> 30;
        x *= 0xBF58476D1CE4E5B9ULL;
        x ^= x >> 27;
        x *= 0x94D049BB133111EBULL;
        x ^= x >> 31;
        return x;
    }

  private:
    std::uint64_t seed_ = 0;
    std::uint64_t ctr_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace svgpkan
