#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "fuselab/analysis/metrics.hpp"
#include "fuselab/records.hpp"
#include "fuselab/synthetic.hpp"

using namespace fuselab;
using namespace fuselab::synthetic;

namespace {

std::string csv_bytes(const Campaign& c) {
    std::ostringstream out;
    write_cuboids(out, c.cuboids);
    write_tensile(out, c.tensile);
    return out.str();
}

}  // namespace

TEST(Campaign, ZeroNoiseEqualsGroundTruth) {
    CampaignSpec spec;
    spec.noise = {0, 0, 0, 0, 0};
    spec.seed = 4;
    const auto c = generate_campaign(spec);
    ASSERT_EQ(c.cuboids.size(), 270u);
    ASSERT_EQ(c.tensile.size(), 54u);
    for (const auto& r : c.cuboids) {
        EXPECT_EQ(r.hardness, c.truth.hardness(r.params));
        EXPECT_EQ(r.porosity, c.truth.porosity(r.params));
    }
    for (const auto& r : c.tensile) {
        EXPECT_EQ(r.yield_strength, c.truth.yield_strength(r.params));
        EXPECT_EQ(*r.ultimate_strength, c.truth.ultimate_strength(r.params));
        EXPECT_EQ(r.ductility, c.truth.ductility(r.params));
    }
}

TEST(Campaign, FixedSeedGivesIdenticalBytes) {
    CampaignSpec spec;
    spec.seed = 17;
    EXPECT_EQ(csv_bytes(generate_campaign(spec)), csv_bytes(generate_campaign(spec)));
    auto other = spec;
    other.seed = 18;
    EXPECT_NE(csv_bytes(generate_campaign(spec)), csv_bytes(generate_campaign(other)));
}

TEST(Campaign, HardnessAndYieldAreLinked) {
    CampaignSpec spec;
    spec.n_tensile = 270;
    spec.seed = 2;
    const auto c = generate_campaign(spec);
    std::vector<double> h, ys;
    for (const auto& t : c.tensile) {
        for (const auto& r : c.cuboids) {
            if (r.params == t.params) {
                h.push_back(r.hardness);
                ys.push_back(t.yield_strength);
            }
        }
    }
    ASSERT_EQ(h.size(), 270u);
    EXPECT_GT(analysis::pearson_matrix({"h", "ys"}, {h, ys}).r[0][1], 0.7);
}

TEST(Campaign, TensileSettingsAreCuboidSettings) {
    CampaignSpec spec;
    const auto c = generate_campaign(spec);
    std::set<std::size_t> used;
    for (const auto& t : c.tensile) {
        std::size_t match = c.cuboids.size();
        for (std::size_t i = 0; i < c.cuboids.size(); ++i) {
            if (c.cuboids[i].params == t.params) match = i;
        }
        ASSERT_LT(match, c.cuboids.size());
        EXPECT_TRUE(used.insert(match).second);
    }
}

TEST(Campaign, RecordNoiseIsStableUnderSampleCount) {
    CampaignSpec a, b;
    a.n_cuboid = 50;
    a.n_tensile = 10;
    b.n_cuboid = 120;
    b.n_tensile = 10;
    const auto ca = generate_campaign(a), cb = generate_campaign(b);
    for (std::size_t i = 0; i < 50; ++i) {
        EXPECT_EQ(ca.cuboids[i].params, cb.cuboids[i].params);
        EXPECT_EQ(ca.cuboids[i].hardness, cb.cuboids[i].hardness);
    }
}

TEST(Campaign, ReplicateMedianIsRecorded) {
    CampaignSpec spec;
    const auto c = generate_campaign(spec);
    for (const auto& t : c.tensile) {
        ASSERT_TRUE(t.replicates.has_value());
        std::vector<double> v;
        for (const auto& r : *t.replicates) v.push_back(r.yield_strength);
        std::sort(v.begin(), v.end());
        EXPECT_EQ(t.yield_strength, v[1]);
    }
}

TEST(Campaign, ResponsesArePlausible) {
    CampaignSpec spec;
    const auto c = generate_campaign(spec);
    for (const auto& r : c.cuboids) {
        EXPECT_GE(r.porosity, 0.0);
        EXPECT_LE(r.porosity, 1.0);
        EXPECT_GT(r.hardness, 150.0);
        EXPECT_LT(r.hardness, 500.0);
    }
    for (const auto& t : c.tensile) EXPECT_GE(*t.ultimate_strength, t.yield_strength);
}

TEST(GroundTruth, HardnessIsNotAFunctionOfVedAlone) {
    CampaignSpec spec;
    const auto c = generate_campaign(spec);
    // Two settings with equal VED but different power and speed.
    const auto p1 = ProcessParams::from_micrometres(200, 500, 40, 100, ScanRotation::deg90);
    const auto p2 = ProcessParams::from_micrometres(300, 750, 40, 100, ScanRotation::deg90);
    ASSERT_NEAR(compute_ved(p1), compute_ved(p2), 1e-9);
    EXPECT_GT(std::abs(c.truth.hardness(p1) - c.truth.hardness(p2)), 1.0);
}

TEST(GroundTruth, DuctilityRisesThenFallsWithYield) {
    CampaignSpec spec;
    const GroundTruth g(spec.family, spec.ranges);
    const auto& f = spec.family;
    // The yield strengths reached over the box straddle the ductility peak,
    // so ductility is non-monotone in yield strength on the data.
    double lo = 1e9, hi = -1e9;
    for (const auto& p : generate_doe(2000, spec.ranges, 3)) {
        lo = std::min(lo, g.yield_strength(p));
        hi = std::max(hi, g.yield_strength(p));
        const double bell = g.ductility(p) + f.e_p * g.porosity(p) - f.e0;
        const double d = (g.yield_strength(p) - f.e_peak) / f.e_width;
        EXPECT_NEAR(bell, f.e_amp * std::exp(-d * d), 1e-9);
    }
    EXPECT_LT(lo, f.e_peak - 0.5 * f.e_width);
    EXPECT_GT(hi, f.e_peak + 0.5 * f.e_width);
}

TEST(GroundTruth, RotationTermDefaultsToZero) {
    CampaignSpec spec;
    const GroundTruth g(spec.family, spec.ranges);
    const auto a = ProcessParams::from_micrometres(250, 800, 30, 90, ScanRotation::deg67);
    auto b = a;
    b.scan_rotation = ScanRotation::deg90;
    EXPECT_EQ(g.hardness(a), g.hardness(b));
    spec.family.h_rotation = 5.0;
    const GroundTruth r(spec.family, spec.ranges);
    EXPECT_NEAR(r.hardness(a) - r.hardness(b), 10.0, 1e-9);
}

TEST(CampaignSpec, JsonRoundTripAndValidation) {
    CampaignSpec spec;
    spec.seed = 99;
    spec.noise.hardness = 3.0;
    const auto back = spec_from_json(to_json(spec));
    EXPECT_EQ(to_json(back).dump(), to_json(spec).dump());
    EXPECT_EQ(spec_from_json(nlohmann::json{{"n_cuboid", 12}, {"n_tensile", 6}}).n_cuboid, 12u);
    EXPECT_THROW(spec_from_json(nlohmann::json{{"n_cuboid", 12}}), DomainError);
    EXPECT_THROW(spec_from_json(nlohmann::json{{"n_cubiod", 12}}), DataError);
    EXPECT_THROW(spec_from_json(nlohmann::json{{"noise", {{"hardnes", 1.0}}}}), DataError);
    CampaignSpec bad;
    bad.noise.yield = -1.0;
    EXPECT_THROW(generate_campaign(bad), DomainError);
    bad = CampaignSpec{};
    bad.n_tensile = 300;
    EXPECT_THROW(generate_campaign(bad), DomainError);
}
