#include <array>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "fuselab/sobol_sequence.hpp"

using fuselab::SobolSequence;

namespace {

// Reference points of the unscrambled Joe-Kuo sequence (Gray-code order),
// independently generated with a widely used scientific Python library.
struct RefPoint {
    std::size_t index;
    std::array<double, 6> u;
};

const RefPoint kRef6[] = {
    {0, {0, 0, 0, 0, 0, 0}},
    {1, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}},
    {2, {0.75, 0.25, 0.25, 0.25, 0.75, 0.75}},
    {3, {0.25, 0.75, 0.75, 0.75, 0.25, 0.25}},
    {5, {0.875, 0.875, 0.125, 0.375, 0.875, 0.625}},
    {7, {0.125, 0.625, 0.375, 0.125, 0.125, 0.375}},
    {11, {0.4375, 0.5625, 0.1875, 0.6875, 0.8125, 0.0625}},
    {15, {0.0625, 0.9375, 0.5625, 0.3125, 0.6875, 0.1875}},
};

}  // namespace

TEST(SobolSequence, MatchesReferencePoints) {
    SobolSequence seq(6);
    for (const auto& ref : kRef6) {
        const auto p = seq.point(ref.index);
        ASSERT_EQ(p.size(), 6u);
        for (std::size_t k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(p[k], ref.u[k]) << "index " << ref.index << " dim " << k;
    }
}

TEST(SobolSequence, HighDimensionsMatchReference) {
    const double expected[10] = {0.1474609375, 0.1455078125, 0.2958984375, 0.5927734375, 0.8017578125,
                                 0.7705078125, 0.8486328125, 0.8310546875, 0.3076171875, 0.4794921875};
    SobolSequence seq(40);
    const auto p = seq.point(1000);
    for (std::size_t k = 0; k < 10; ++k) EXPECT_DOUBLE_EQ(p[30 + k], expected[k]) << "dim " << 30 + k;
}

TEST(SobolSequence, EveryDyadicPrefixIsStratified) {
    // The first 2^m points put exactly one point in each interval of width 2^-m.
    for (std::size_t d : {1u, 5u, 13u, 40u}) {
        SobolSequence seq(d);
        const std::size_t n = 256;
        std::vector<std::vector<int>> hits(d, std::vector<int>(n, 0));
        for (std::size_t i = 0; i < n; ++i) {
            const auto p = seq.point(i);
            for (std::size_t k = 0; k < d; ++k) ++hits[k][static_cast<std::size_t>(p[k] * n)];
        }
        for (std::size_t k = 0; k < d; ++k) {
            for (std::size_t b = 0; b < n; ++b) ASSERT_EQ(hits[k][b], 1) << "dim " << k << " bin " << b;
        }
    }
}

TEST(SobolSequence, ScrambleKeepsStratificationAndDependsOnSeed) {
    SobolSequence a(5, true, 1);
    SobolSequence b(5, true, 2);
    const std::size_t n = 64;
    std::vector<std::vector<int>> hits(5, std::vector<int>(n, 0));
    bool differs = false;
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = a.point(i);
        const auto q = b.point(i);
        for (std::size_t k = 0; k < 5; ++k) {
            ASSERT_GE(p[k], 0.0);
            ASSERT_LT(p[k], 1.0);
            ++hits[k][static_cast<std::size_t>(p[k] * n)];
            differs = differs || p[k] != q[k];
        }
    }
    EXPECT_TRUE(differs);
    for (const auto& dim : hits) {
        for (int h : dim) EXPECT_EQ(h, 1);
    }
    SobolSequence a2(5, true, 1);
    EXPECT_EQ(a.point(17), a2.point(17));
}

TEST(SobolSequence, RejectsUnsupportedDimensions) {
    EXPECT_THROW(SobolSequence(0), fuselab::DomainError);
    EXPECT_THROW(SobolSequence(SobolSequence::kMaxDimensions + 1), fuselab::DomainError);
}
