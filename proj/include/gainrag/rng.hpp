#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gainrag::rng {

// Deterministic sampling helpers. std::uniform_int_distribution and
// std::shuffle are implementation-defined, so artifacts would not be
// byte-identical across standard libraries; everything here consumes
// mt19937_64 output directly.

/// Unbiased integer in [0, n) via rejection sampling. n must be >= 1.
std::uint64_t uniform_below(std::mt19937_64& gen, std::uint64_t n);

/// Double in [0, 1) with 53 bits of precision.
double uniform_double(std::mt19937_64& gen);

/// Double in [lo, hi).
double uniform_range(std::mt19937_64& gen, double lo, double hi);

/// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& gen) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(gen, i));
        std::swap(items[i - 1], items[j]);
    }
}

/// k distinct indices sampled without replacement from [0, n), in selection
/// order. k must be <= n.
std::vector<std::size_t> sample_without_replacement(std::mt19937_64& gen, std::size_t n,
                                                    std::size_t k);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(const std::string& data);

/// Lowercase 16-digit hex rendering of a 64-bit value.
std::string hex64(std::uint64_t value);

/// Seed derived from a base seed and a string key, so per-item RNG streams
/// do not depend on processing order.
std::uint64_t derive_seed(std::uint64_t base_seed, const std::string& key);

} // namespace gainrag::rng
