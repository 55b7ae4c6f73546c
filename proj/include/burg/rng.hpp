#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace burg {

/// Mixes a seed with up to two stream tags into a new well-spread seed.
/// Used to derive independent deterministic streams (shuffling, k-means,
/// initialization) from one master seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b = 0);

/// Seedable generator with a platform-stable mapping to doubles.
/// Two instances built from the same seed produce identical streams.
/// Gaussians come from Box-Muller so synthetic data stays reproducible
/// everywhere the underlying libm agrees.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01();

    double uniform(double lo, double hi);

    /// Unbiased integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);

    /// Standard normal draw (Box-Muller with cached spare).
    double gaussian();

    /// New generator seeded from this one's original seed and a tag.
    /// Independent of how many draws have been made.
    Rng derive(std::uint64_t tag) const { return Rng(mix_seed(seed_, tag)); }

    template <class T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
            std::swap(items[i], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace burg
