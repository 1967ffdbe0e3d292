#include <gtest/gtest.h>

#include <algorithm>
#include <string>

#include "edlab/config.hpp"

using namespace edlab;
using namespace edlab::config;

namespace {

bool has(const std::vector<Finding>& fs, const std::string& field, const std::string& fragment, bool error) {
    return std::any_of(fs.begin(), fs.end(), [&](const Finding& f) {
        return f.field == field && f.error == error && f.message.find(fragment) != std::string::npos;
    });
}

std::string config_path(const std::string& name) { return std::string(EDLAB_SOURCE_DIR) + "/configs/" + name; }

}  // namespace

TEST(Config, ShippedConfigsHaveNoFindings) {
    for (const char* name : {"simulate.ini", "sample.ini", "path_check.ini", "algebra_check.ini", "uniqueness_scan.ini",
                             "maxent_check.ini"}) {
        const auto findings = validate(config_path(name));
        for (const auto& f : findings) ADD_FAILURE() << name << ": " << f.str();
    }
}

TEST(Config, CanonicalPathCheckValues) {
    const auto [c, findings] = parse_file(config_path("path_check.ini"));
    EXPECT_TRUE(findings.empty());
    EXPECT_EQ(c.experiment, "path-check");
    EXPECT_EQ(c.n_sites, 2);
    EXPECT_EQ(c.background().name(), "rindler");
    EXPECT_EQ(c.path_check.eps.size(), 3u);
    EXPECT_EQ(c.path_check.xi.kind, Profile::Kind::sinusoidal);
    EXPECT_TRUE(c.constants().quantum());
}

TEST(Config, TooFewGridPoints) {
    const auto [c, findings] = parse_string("[grid]\npoints_per_axis = 8\n");
    EXPECT_TRUE(has(findings, "grid.points_per_axis", "points_per_axis below minimum 16", true));
}

TEST(Config, NarrowBoxWarnsAboutSupport) {
    const auto [c, findings] = parse_string("[grid]\nhalf_width = 3\n[state]\nwidth = 1\n");
    EXPECT_TRUE(has(findings, "grid.half_width", "increase grid.half_width", false));
    EXPECT_FALSE(std::any_of(findings.begin(), findings.end(), [](const Finding& f) { return f.error; }));
}

TEST(Config, UnknownSectionsAndKeys) {
    const auto [c, findings] = parse_string("[grid]\nhalfwidth = 3\n[colour]\nhue = 1\n");
    EXPECT_TRUE(has(findings, "grid.halfwidth", "unknown key", true));
    EXPECT_TRUE(has(findings, "colour", "unknown section", true));
}

TEST(Config, MalformedValues) {
    const auto [c, findings] = parse_string("[dynamics]\ndtau = fast\nmode = turbo\n[run]\nseed = -3\n");
    EXPECT_TRUE(has(findings, "dynamics.dtau", "expected a number", true));
    EXPECT_TRUE(has(findings, "dynamics.mode", "unknown value", true));
    EXPECT_TRUE(has(findings, "run.seed", "non-negative", true));
}

TEST(Config, ModeConsistency) {
    EXPECT_TRUE(has(parse_string("[dynamics]\nmode = hybrid\nlambda = 0.1\n").second, "dynamics.lambda", "hybrid", true));
    EXPECT_TRUE(has(parse_string("[dynamics]\nmode = wave\nlambda = 0\n").second, "dynamics.lambda", "wave", true));
}

TEST(Config, TabulatedLapseNeedsOneEntryPerSite) {
    const auto bad = parse_string("[lattice]\nn_sites = 2\n[foliation]\nlapse = tabulated\nlapse_table = 1\n");
    EXPECT_TRUE(has(bad.second, "foliation.lapse_table", "n_sites", true));
    const auto [c, findings] = parse_string("[lattice]\nn_sites = 2\n[foliation]\nlapse = tabulated\nlapse_table = 1, 0.5\n");
    EXPECT_TRUE(findings.empty());
    EXPECT_EQ(c.lapse.evaluate(2), (std::vector<double>{1.0, 0.5}));
}

TEST(Config, ScheduleFollowsDurationAndStep) {
    const auto [c, findings] = parse_string("[dynamics]\nT = 0.05\ndtau = 0.01\n[foliation]\nshift_value = 0.2\n");
    ASSERT_TRUE(findings.empty());
    const auto sch = c.schedule();
    ASSERT_EQ(sch.size(), 5u);
    EXPECT_DOUBLE_EQ(sch.front().dtau, 0.01);
    EXPECT_DOUBLE_EQ(sch.front().shift[0], 0.2);
    EXPECT_DOUBLE_EQ(sch.front().lapse[0], 1.0);
}

TEST(Config, InitialStateIsNormalized) {
    const auto [c, findings] = parse_string("[lattice]\nn_sites = 2\n[grid]\npoints_per_axis = 32\n[state]\ncenter = 0.5, -0.5\n");
    ASSERT_TRUE(findings.empty());
    EXPECT_NEAR(total_probability(c.initial_state(), c.grid()), 1.0, 1e-12);
}

TEST(Config, MissingFileIsAnError) { EXPECT_THROW(parse_file("/nonexistent/edlab.ini"), ConfigError); }
