#include <gtest/gtest.h>

#include <random>

#include "cxrtutor/errors.hpp"
#include "cxrtutor/image.hpp"
#include "cxrtutor/similarity.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cxrtutor;

namespace {

CaseIndexEntry entry(const std::string& id, std::map<std::string, Point> centroids, bool devices) {
    CaseIndexEntry e;
    e.case_id = id;
    e.centroids = std::move(centroids);
    for (const auto& [l, p] : e.centroids) e.label_set.insert(l);
    e.support_devices = devices;
    return e;
}

}  // namespace

TEST(Similarity, CentroidOfLeftHalfBox) {
    const auto c = fixtures::make_case("c", {fixtures::finding("nodule", {0, 0, 50, 100})}, "/x/i.png", 100, 100);
    const auto e = index_entry(c);
    EXPECT_NEAR(e.centroids.at("nodule").x, 0.25, 1e-12);
    EXPECT_NEAR(e.centroids.at("nodule").y, 0.5, 1e-12);
}

TEST(Similarity, CentroidIsAreaWeighted) {
    auto f = fixtures::finding("nodule", {0, 0, 10, 10});
    f.boxes.push_back({50, 0, 80, 30, "nodule"});  // area 900 vs 100
    const auto c = fixtures::make_case("c", {f}, "/x/i.png", 100, 100);
    const double want_x = (5.0 * 100 + 65.0 * 900) / 1000.0 / 100.0;
    EXPECT_NEAR(index_entry(c).centroids.at("nodule").x, want_x, 1e-12);
}

TEST(Similarity, WorkedExample) {
    const double d = 0.2;  // shared-centroid distance is d * sqrt 2
    const auto a = entry("a", {{"A", {0.1, 0.1}}, {"B", {0.5, 0.5}}}, false);
    const auto b = entry("b", {{"A", {0.1 + d, 0.1 + d}}}, false);
    EXPECT_NEAR(similarity(a, b), 0.5 * 0.5 + 0.3 * 0.8 + 0.2 * 1.0, 1e-12);
    EXPECT_NEAR(similarity(a, b), 0.69, 1e-12);
}

TEST(Similarity, CasesWithoutFindings) {
    const auto empty = entry("e", {}, true);
    EXPECT_DOUBLE_EQ(similarity(empty, entry("f", {}, true)), 1.0);
    EXPECT_DOUBLE_EQ(similarity(empty, entry("g", {{"A", {0.5, 0.5}}}, true)), 0.2);
}

TEST(Similarity, DuplicateRanksFirstAtOne) {
    const auto a = entry("a", {{"A", {0.3, 0.4}}}, true);
    auto dup = a;
    dup.case_id = "z-dup";
    CaseIndex idx({a, entry("b", {{"A", {0.31, 0.4}}}, true), dup, entry("c", {{"B", {0.3, 0.4}}}, true)});
    const auto top = top_similar("a", idx, 3);
    ASSERT_FALSE(top.empty());
    EXPECT_EQ(top[0].case_id, "z-dup");
    EXPECT_DOUBLE_EQ(top[0].score, 1.0);
}

TEST(Similarity, TopKEqualsBruteForce) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> n_cases(1, 20), k_dist(1, 5);
    std::bernoulli_distribution coin(0.5);
    const std::vector<std::string> labels = {"A", "B", "C", "D"};
    for (int inst = 0; inst < 1000; ++inst) {
        std::vector<CaseIndexEntry> entries;
        const int n = n_cases(rng);
        for (int i = 0; i < n; ++i) {
            std::map<std::string, Point> cents;
            for (const auto& l : labels) {
                if (coin(rng)) cents[l] = {u(rng), u(rng)};
            }
            // coarse grid so ties happen and the id tie-break is exercised
            if (coin(rng)) {
                for (auto& [l, p] : cents) p = {std::round(p.x * 2) / 2, std::round(p.y * 2) / 2};
            }
            char id[16];
            std::snprintf(id, sizeof id, "c%02d", static_cast<int>(rng() % 100));
            if (std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.case_id == id; })) continue;
            entries.push_back(entry(id, cents, coin(rng)));
        }
        const CaseIndex idx(entries);
        const auto& q = entries[0];
        const int k = k_dist(rng);
        std::vector<std::pair<double, std::string>> all;
        for (const auto& e : entries) {
            if (e.case_id != q.case_id) all.push_back({oracle::similarity(q, e, 0.5, 0.3, 0.2), e.case_id});
        }
        std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first > y.first : x.second < y.second;
        });
        if (all.size() > static_cast<std::size_t>(k)) all.resize(k);
        const auto got = top_similar(q.case_id, idx, k);
        ASSERT_EQ(got.size(), all.size()) << inst;
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].case_id, all[i].second) << inst;
            EXPECT_NEAR(got[i].score, all[i].first, 1e-12);
        }
    }
}

TEST(Similarity, Errors) {
    const auto a = entry("a", {{"A", {0.3, 0.4}}}, true);
    EXPECT_THROW(top_similar("nope", CaseIndex({a}), 3), UnknownCase);
    const auto c = fixtures::make_case("dup", {}, "/x/i.png", 10, 10);
    EXPECT_THROW(build_index({c, c}), DuplicateCaseId);
}

TEST(Overlay, DeterministicStrokeAndNeutralName) {
    fixtures::TempDir tmp;
    fixtures::write_gray_png(tmp / "img.png", 40, 30, 100);
    const auto c = fixtures::make_case("ov", {fixtures::finding("nodule", {10, 10, 20, 20})}, tmp / "img.png", 40, 30);
    const auto p1 = render_overlay(c, "nodule", tmp / "a");
    const auto p2 = render_overlay(c, "nodule", tmp / "b");
    EXPECT_EQ(read_file_bytes(p1), read_file_bytes(p2));
    EXPECT_EQ(p1.filename().string().find("nodule"), std::string::npos);
    EXPECT_EQ(p1.filename(), overlay_file_name("ov", "nodule"));
    auto img = read_png_rgb(p1);
    EXPECT_EQ(img.at(10, 15)[0], 255);  // on the stroke
    EXPECT_EQ(img.at(15, 15)[0], 100);  // inside, untouched
    EXPECT_EQ(img.at(35, 25)[0], 100);
    EXPECT_THROW(render_overlay(c, "mass", tmp / "a"), UnknownLabel);
}

TEST(Overlay, StoreRendersOnce) {
    fixtures::TempDir tmp;
    fixtures::write_gray_png(tmp / "img.png", 40, 30);
    const auto c = fixtures::make_case("ov", {fixtures::finding("nodule", {10, 10, 20, 20})}, tmp / "img.png", 40, 30);
    OverlayStore store(tmp / "o");
    const auto p = store.get(c, "nodule");
    const auto t = std::filesystem::last_write_time(p);
    EXPECT_EQ(store.get(c, "nodule"), p);
    EXPECT_EQ(std::filesystem::last_write_time(p), t);
}
