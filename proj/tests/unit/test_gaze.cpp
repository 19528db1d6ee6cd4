#include <gtest/gtest.h>

#include <random>

#include "cxrtutor/errors.hpp"
#include "cxrtutor/gaze.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cxrtutor;

namespace {

// 100x100: left half split into two regions, right half background.
LobeMask half_mask() {
    LobeMask m;
    m.width = 100;
    m.height = 100;
    m.region_names = {"a", "b"};
    m.labels.assign(100 * 100, 0);
    for (int y = 0; y < 100; ++y) {
        for (int x = 0; x < 50; ++x) m.labels[y * 100 + x] = y < 50 ? 1 : 2;
    }
    return m;
}

std::vector<std::vector<std::string>> all_sequences(int max_len) {
    std::vector<std::vector<std::string>> out = {{}};
    std::vector<std::vector<std::string>> frontier = {{}};
    for (int len = 1; len <= max_len; ++len) {
        std::vector<std::vector<std::string>> next;
        for (const auto& s : frontier) {
            for (const char* t : {"x", "y", "z"}) {
                auto n = s;
                n.push_back(t);
                next.push_back(n);
            }
        }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return out;
}

}  // namespace

TEST(Gaze, CoverageHalfOfSixRegions) {
    const auto grid = fallback_zone_grid(600, 600);
    std::vector<Fixation> f = {{100, 100, 200, 0}, {400, 100, 200, 1}, {100, 300, 200, 2}};
    const auto g = compute_gaze_metrics(f, grid, fallback_region_names());
    EXPECT_DOUBLE_EQ(g.coverage_ratio, 0.5);
    EXPECT_EQ(g.unvisited_regions.size(), 3u);
}

TEST(Gaze, DwellRatioExample) {
    std::vector<Fixation> f = {{10, 10, 300, 0}, {80, 10, 700, 1}};
    const auto g = compute_gaze_metrics(f, half_mask(), {"a", "b"});
    EXPECT_DOUBLE_EQ(g.dwell_time_ratio, 0.3);
}

TEST(Gaze, SequenceScoreWorkedExample) {
    const std::vector<std::string> e = {"ru", "rm", "lu", "ll"};
    const std::vector<std::string> o = {"ru", "lu", "ll"};
    EXPECT_EQ(oracle::levenshtein(e, o), 1u);
    EXPECT_DOUBLE_EQ(sequence_score(e, o), 0.75);
}

TEST(Gaze, LevenshteinMatchesRecursiveOracleExhaustively) {
    const auto seqs = all_sequences(5);
    ASSERT_EQ(seqs.size(), 364u);
    for (const auto& a : seqs) {
        for (const auto& b : seqs) {
            ASSERT_EQ(levenshtein(a, b), oracle::levenshtein(a, b));
        }
    }
}

TEST(Gaze, ObservedSequenceCollapsesRunsAndSkipsBackground) {
    std::vector<Fixation> f = {{10, 10, 100, 0}, {12, 12, 100, 1}, {80, 80, 100, 2}, {10, 80, 100, 3}, {10, 10, 100, 4}};
    const auto d = map_fixations(f, half_mask());
    EXPECT_EQ(d.observed_sequence, (std::vector<std::string>{"a", "b", "a"}));
    EXPECT_DOUBLE_EQ(d.per_region_dwell.at("a"), 300.0);
}

TEST(Gaze, OrderIndexNotInputOrderDrivesSequence) {
    std::vector<Fixation> f = {{10, 80, 100, 1}, {10, 10, 100, 0}};
    EXPECT_EQ(map_fixations(f, half_mask()).observed_sequence, (std::vector<std::string>{"a", "b"}));
}

TEST(Gaze, OutOfBoundsFixationThrows) {
    EXPECT_THROW(map_fixations({{100, 5, 10, 0}}, half_mask()), OutOfBoundsFixation);
}

TEST(Gaze, MetricsBoundedAndCoverageMonotone) {
    std::mt19937_64 rng(21);
    const auto grid = fallback_zone_grid(200, 150);
    std::uniform_real_distribution<double> ux(0, 199.999), uy(0, 149.999), ud(1, 800);
    std::uniform_int_distribution<int> n(0, 25);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<Fixation> f;
        const int k = n(rng);
        double prev_cov = 0.0;
        for (int i = 0; i < k; ++i) {
            f.push_back({ux(rng), uy(rng), ud(rng), i});
            const auto g = compute_gaze_metrics(f, grid, fallback_region_names());
            for (double v : {g.coverage_ratio, g.dwell_time_ratio, g.sequence_score}) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
            EXPECT_GE(g.coverage_ratio, prev_cov);
            prev_cov = g.coverage_ratio;
        }
    }
}

TEST(Gaze, GuidanceNamesUnvisitedZonesAndNudges) {
    GazeMetrics g;
    g.unvisited_regions = {"right_lower"};
    g.sequence_score = 0.2;
    const auto lines = gaze_guidance(g, 0.5);
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_NE(lines[0].find("right lower zone"), std::string::npos);
    g.unvisited_regions = {"zone_3"};
    g.sequence_score = 0.9;
    const auto again = gaze_guidance(g, 0.5);
    ASSERT_EQ(again.size(), 1u);
    EXPECT_EQ(again[0].find("zone 3 zone"), std::string::npos);
}
