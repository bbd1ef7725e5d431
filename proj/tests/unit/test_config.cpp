#include <cstdlib>
#include <string>

#include <gtest/gtest.h>

#include "fuselab/config.hpp"

using namespace fuselab;
using nlohmann::json;

TEST(Toml, ScalarsTablesAndComments) {
    const auto j = toml::parse(R"(
# top comment
seed = 42
name = "a \"quoted\" \t value"   # trailing
big = 1_000_000
ratio = 2.5e-3
neg = -7
flag = true
[train]
n_starts = 3
ys_hidden = [4, 4]
[porosity.extra]
"odd key" = false
dotted.inner = 0.5
)");
    EXPECT_EQ(j.at("seed"), 42);
    EXPECT_EQ(j.at("name"), "a \"quoted\" \t value");
    EXPECT_EQ(j.at("big"), 1000000);
    EXPECT_DOUBLE_EQ(j.at("ratio").get<double>(), 2.5e-3);
    EXPECT_EQ(j.at("neg"), -7);
    EXPECT_EQ(j.at("flag"), true);
    EXPECT_EQ(j.at("train").at("n_starts"), 3);
    EXPECT_EQ(j.at("train").at("ys_hidden"), json::array({4, 4}));
    EXPECT_EQ(j.at("porosity").at("extra").at("odd key"), false);
    EXPECT_DOUBLE_EQ(j.at("porosity").at("extra").at("dotted").at("inner").get<double>(), 0.5);
    EXPECT_TRUE(j.at("seed").is_number_integer());
    EXPECT_TRUE(j.at("ratio").is_number_float());
}

TEST(Toml, EmptyDocument) { EXPECT_EQ(toml::parse("\n# nothing\n"), json::object()); }

TEST(Toml, ErrorsCarryLineNumbers) {
    try {
        toml::parse("a = 1\na = 2\n", "run.toml");
        FAIL() << "duplicate key accepted";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("run.toml:2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(toml::parse("x = \n"), DataError);
    EXPECT_THROW(toml::parse("x = [1, 2\n"), DataError);
    EXPECT_THROW(toml::parse("x = \"open\n"), DataError);
    EXPECT_THROW(toml::parse("x = 1.2.3\n"), DataError);
    EXPECT_THROW(toml::parse("[t]\nk = 1\n[t]\n"), DataError);
    EXPECT_THROW(toml::parse_file("/nonexistent/run.toml"), DataError);
}

TEST(RunConfig, DefaultsRoundTripThroughApply) {
    const RunConfig d;
    EXPECT_EQ(to_json(apply_config(d, to_json(d))), to_json(d));
    EXPECT_EQ(to_json(apply_config(d, json::object())), to_json(d));
}

TEST(RunConfig, OverlayFromToml) {
    const auto c = apply_config(RunConfig{}, toml::parse(R"(
seed = 9
[train]
n_starts = 2
ef_hidden = [3]
[optimize]
ved_min = "off"
ys_min = 950
rank = "ys"
[porosity]
crop = [1, 2, 3, 4]
sigma = 1.5
)"));
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.n_starts, 2);
    EXPECT_EQ(c.ef_hidden, std::vector<std::size_t>{3});
    EXPECT_FALSE(c.filters.ved_min.has_value());
    EXPECT_EQ(c.filters.ved_max, 200.0);
    EXPECT_EQ(c.filters.ys_min, 950.0);
    EXPECT_EQ(c.rank_mode, "ys");
    EXPECT_EQ(c.margins.top, 1u);
    EXPECT_EQ(c.margins.right, 2u);
    EXPECT_EQ(c.margins.left, 3u);
    EXPECT_EQ(c.margins.bottom, 4u);
    EXPECT_EQ(c.sigma, 1.5);
    const auto h = c.hierarchy();
    EXPECT_EQ(h.fit.n_starts, 2);
    EXPECT_EQ(h.ef_mean.hidden, std::vector<std::size_t>{3});
}

TEST(RunConfig, RejectsUnknownKeysAndBadTypes) {
    EXPECT_THROW(apply_config(RunConfig{}, json{{"sed", 1}}), DataError);
    EXPECT_THROW(apply_config(RunConfig{}, json{{"train", {{"n_start", 1}}}}), DataError);
    EXPECT_THROW(apply_config(RunConfig{}, json{{"train", {{"n_starts", "many"}}}}), DataError);
    EXPECT_THROW(apply_config(RunConfig{}, json{{"optimize", {{"ys_min", "never"}}}}), DataError);
    EXPECT_THROW(apply_config(RunConfig{}, json{{"porosity", {{"crop", {1, 2}}}}}), DataError);
    EXPECT_THROW(apply_config(RunConfig{}, json::array()), DataError);
}

TEST(RunConfig, SeedFromEnvironment) {
    ::unsetenv("FUSELAB_SEED");
    EXPECT_EQ(seed_from_environment(7), 7u);
    ::setenv("FUSELAB_SEED", "123", 1);
    EXPECT_EQ(seed_from_environment(7), 123u);
    ::setenv("FUSELAB_SEED", "-3", 1);
    EXPECT_THROW(seed_from_environment(7), DataError);
    ::setenv("FUSELAB_SEED", "abc", 1);
    EXPECT_THROW(seed_from_environment(7), DataError);
    ::unsetenv("FUSELAB_SEED");
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ull);
}
