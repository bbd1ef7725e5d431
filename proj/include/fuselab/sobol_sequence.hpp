#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fuselab/errors.hpp"
#include "fuselab/util/random.hpp"

namespace fuselab {

namespace detail {

struct SobolPolynomial {
    int degree;
    std::uint32_t poly;  // includes leading and trailing coefficient bits
    std::array<std::uint32_t, 8> initial;
};

// Joe & Kuo (new-joe-kuo-6.21201), first 40 dimensions.
inline constexpr std::array<SobolPolynomial, 40> kSobolTable{{
    {0, 1u, {1u}},
    {1, 3u, {1u}},
    {2, 7u, {1u, 3u}},
    {3, 11u, {1u, 3u, 1u}},
    {3, 13u, {1u, 1u, 1u}},
    {4, 19u, {1u, 1u, 3u, 3u}},
    {4, 25u, {1u, 3u, 5u, 13u}},
    {5, 37u, {1u, 1u, 5u, 5u, 17u}},
    {5, 41u, {1u, 1u, 5u, 5u, 5u}},
    {5, 47u, {1u, 1u, 7u, 11u, 19u}},
    {5, 55u, {1u, 1u, 5u, 1u, 1u}},
    {5, 59u, {1u, 1u, 1u, 3u, 11u}},
    {5, 61u, {1u, 3u, 5u, 5u, 31u}},
    {6, 67u, {1u, 3u, 3u, 9u, 7u, 49u}},
    {6, 91u, {1u, 1u, 1u, 15u, 21u, 21u}},
    {6, 97u, {1u, 3u, 1u, 13u, 27u, 49u}},
    {6, 103u, {1u, 1u, 1u, 15u, 7u, 5u}},
    {6, 109u, {1u, 3u, 1u, 15u, 13u, 25u}},
    {6, 115u, {1u, 1u, 5u, 5u, 19u, 61u}},
    {7, 131u, {1u, 3u, 7u, 11u, 23u, 15u, 103u}},
    {7, 137u, {1u, 3u, 7u, 13u, 13u, 15u, 69u}},
    {7, 143u, {1u, 1u, 3u, 13u, 7u, 35u, 63u}},
    {7, 145u, {1u, 3u, 5u, 9u, 1u, 25u, 53u}},
    {7, 157u, {1u, 3u, 1u, 13u, 9u, 35u, 107u}},
    {7, 167u, {1u, 3u, 1u, 5u, 27u, 61u, 31u}},
    {7, 171u, {1u, 1u, 5u, 11u, 19u, 41u, 61u}},
    {7, 185u, {1u, 3u, 5u, 3u, 3u, 13u, 69u}},
    {7, 191u, {1u, 1u, 7u, 13u, 1u, 19u, 1u}},
    {7, 193u, {1u, 3u, 7u, 5u, 13u, 19u, 59u}},
    {7, 203u, {1u, 1u, 3u, 9u, 25u, 29u, 41u}},
    {7, 211u, {1u, 3u, 5u, 13u, 23u, 1u, 55u}},
    {7, 213u, {1u, 3u, 7u, 3u, 13u, 59u, 17u}},
    {7, 229u, {1u, 3u, 1u, 3u, 5u, 53u, 69u}},
    {7, 239u, {1u, 1u, 5u, 5u, 23u, 33u, 13u}},
    {7, 241u, {1u, 1u, 7u, 7u, 1u, 61u, 123u}},
    {7, 247u, {1u, 1u, 7u, 9u, 13u, 61u, 49u}},
    {7, 253u, {1u, 3u, 3u, 5u, 3u, 55u, 33u}},
    {8, 285u, {1u, 3u, 1u, 15u, 31u, 13u, 49u, 245u}},
    {8, 299u, {1u, 3u, 5u, 15u, 31u, 59u, 63u, 97u}},
    {8, 301u, {1u, 3u, 1u, 11u, 11u, 11u, 77u, 249u}},
}};

inline std::uint32_t reverse_bits(std::uint32_t x) {
    x = ((x >> 1) & 0x55555555u) | ((x & 0x55555555u) << 1);
    x = ((x >> 2) & 0x33333333u) | ((x & 0x33333333u) << 2);
    x = ((x >> 4) & 0x0F0F0F0Fu) | ((x & 0x0F0F0F0Fu) << 4);
    x = ((x >> 8) & 0x00FF00FFu) | ((x & 0x00FF00FFu) << 8);
    return (x >> 16) | (x << 16);
}

// Hash-based nested uniform (Owen) scramble on the bit-reversed integer.
inline std::uint32_t owen_scramble(std::uint32_t x, std::uint32_t seed) {
    x = reverse_bits(x);
    x += seed;
    x ^= x * 0x6c50b47cu;
    x ^= x * 0xb82f1e52u;
    x ^= x * 0xc7afe638u;
    x ^= x * 0x8d22f6e6u;
    return reverse_bits(x);
}

}  // namespace detail

/// Gray-code ordered Sobol sequence in up to 40 dimensions with 32-bit
/// resolution. Unscrambled output matches the reference Joe-Kuo sequence
/// (first point is the origin).
class SobolSequence {
public:
    static constexpr std::size_t kMaxDimensions = detail::kSobolTable.size();
    static constexpr int kBits = 32;

    explicit SobolSequence(std::size_t dimensions, bool scramble = false, std::uint64_t seed = 0)
        : dimensions_(dimensions), scramble_(scramble), directions_(dimensions) {
        if (dimensions == 0 || dimensions > kMaxDimensions) {
            throw DomainError("SobolSequence: dimension must be in [1, " +
                              std::to_string(kMaxDimensions) + "], got " + std::to_string(dimensions));
        }
        for (std::size_t d = 0; d < dimensions; ++d) {
            directions_[d] = make_directions(d);
            scramble_seeds_.push_back(static_cast<std::uint32_t>(derive_seed(seed, d)));
        }
    }

    std::size_t dimensions() const { return dimensions_; }

    // Point number index of the sequence, each coordinate in [0, 1).
    std::vector<double> point(std::uint64_t index) const {
        std::vector<double> out(dimensions_);
        fill(index, out.data());
        return out;
    }

    void fill(std::uint64_t index, double* out) const {
        if (index >> kBits) throw DomainError("SobolSequence: index exceeds 2^32");
        const std::uint32_t gray = static_cast<std::uint32_t>(index ^ (index >> 1));
        for (std::size_t d = 0; d < dimensions_; ++d) {
            std::uint32_t x = 0;
            std::uint32_t g = gray;
            for (int bit = 0; g != 0; ++bit, g >>= 1) {
                if (g & 1u) x ^= directions_[d][static_cast<std::size_t>(bit)];
            }
            if (scramble_) x = detail::owen_scramble(x, scramble_seeds_[d]);
            out[d] = static_cast<double>(x) * 0x1.0p-32;
        }
    }

private:
    static std::array<std::uint32_t, kBits> make_directions(std::size_t d) {
        std::array<std::uint32_t, kBits> v{};
        const auto& entry = detail::kSobolTable[d];
        if (entry.degree == 0) {
            for (int k = 0; k < kBits; ++k) v[static_cast<std::size_t>(k)] = 1u << (kBits - 1 - k);
            return v;
        }
        const int s = entry.degree;
        std::array<std::uint64_t, kBits> m{};
        for (int k = 0; k < s; ++k) m[static_cast<std::size_t>(k)] = entry.initial[static_cast<std::size_t>(k)];
        for (int k = s; k < kBits; ++k) {
            std::uint64_t value = m[static_cast<std::size_t>(k - s)] ^ (m[static_cast<std::size_t>(k - s)] << s);
            for (int j = 1; j < s; ++j) {
                if ((entry.poly >> (s - j)) & 1u) value ^= m[static_cast<std::size_t>(k - j)] << j;
            }
            m[static_cast<std::size_t>(k)] = value;
        }
        for (int k = 0; k < kBits; ++k) {
            v[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(m[static_cast<std::size_t>(k)] << (kBits - 1 - k));
        }
        return v;
    }

    std::size_t dimensions_;
    bool scramble_;
    std::vector<std::array<std::uint32_t, kBits>> directions_;
    std::vector<std::uint32_t> scramble_seeds_;
};

}  // namespace fuselab
