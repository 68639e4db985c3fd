#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace alsim {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stable, order-sensitive derivation of independent sub-stream seeds.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    return splitmix64(base ^ splitmix64(salt + 0x9e3779b97f4a7c15ULL));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

// mt19937_64 plus hand-pinned transforms. The stdlib distributions are
// implementation-defined, which would break cross-stdlib reproducibility.
class rng {
public:
    explicit rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; u1 is kept in (0, 1] so the log stays finite.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform in [0, n). Modulo bias is < n / 2^64, irrelevant at these sizes.
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    // First k entries of a seeded Fisher-Yates pass; the draw order is the result order.
    std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> items,
                                                        std::size_t k) {
        if (k > items.size()) k = items.size();
        for (std::size_t i = 0; i < k; ++i) {
            std::swap(items[i], items[i + index(items.size() - i)]);
        }
        items.resize(k);
        return items;
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace alsim
