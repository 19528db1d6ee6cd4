#include <gtest/gtest.h>

#include <fstream>

#include "cxrtutor/domain.hpp"
#include "cxrtutor/errors.hpp"
#include "cxrtutor/serialization.hpp"
#include "fixtures.hpp"

using namespace cxrtutor;

TEST(FallbackGrid, RowColumnGeometry) {
    const auto m = fallback_zone_grid(600, 600);
    EXPECT_EQ(m.region_at(100, 100), "right_upper");
    EXPECT_EQ(m.region_at(400, 500), "left_lower");
    EXPECT_EQ(m.region_count(), 6u);
}

TEST(FallbackGrid, EveryPixelBelongsToExactlyOneZone) {
    const auto m = fallback_zone_grid(37, 23);
    for (int y = 0; y < 23; ++y) {
        for (int x = 0; x < 37; ++x) {
            const int row = y * 3 / 23;
            const int col = x * 2 / 37;
            const std::string want = std::string(col == 0 ? "right_" : "left_") +
                                     (row == 0 ? "upper" : row == 1 ? "mid" : "lower");
            EXPECT_EQ(m.region_at(x, y), want) << x << "," << y;
        }
    }
}

TEST(CaseBundle, RoundTripsThroughDisk) {
    fixtures::TempDir tmp;
    fixtures::write_gray_png(tmp / "img.png", 64, 48);
    auto c = fixtures::make_case("c1", {fixtures::finding("nodule", {10, 10, 20, 20}, {{"size", "4 mm"}})},
                                 tmp / "img.png", 64, 48);
    write_case_bundle(c, tmp / "bundle");
    const auto loaded = load_case_bundle(tmp / "bundle");
    EXPECT_EQ(loaded.case_id, "c1");
    EXPECT_EQ(loaded.findings, c.findings);
    EXPECT_EQ(loaded.skills, c.skills);
    EXPECT_TRUE(std::filesystem::exists(tmp / "bundle" / "img.png"));
}

TEST(CaseBundle, DemoLibraryLoadsWithMasks) {
    const auto lib = fixtures::demo_library();
    ASSERT_EQ(lib.size(), 6u);
    for (const auto& c : lib) {
        ASSERT_TRUE(c.lobe_mask.has_value()) << c.case_id;
        EXPECT_EQ(c.lobe_mask->region_count(), 6u);
        EXPECT_EQ(c.lobe_mask->width, c.image_width);
    }
}

TEST(CaseBundle, RejectsBoxOutsideImage) {
    fixtures::TempDir tmp;
    fixtures::write_gray_png(tmp / "img.png", 64, 48);
    auto c = fixtures::make_case("c1", {fixtures::finding("nodule", {10, 10, 80, 20})}, tmp / "img.png", 64, 48);
    EXPECT_THROW(validate_case_bundle(c), InvariantViolation);
}

TEST(CaseBundle, MissingImageAndMalformedSidecar) {
    fixtures::TempDir tmp;
    std::filesystem::create_directories(tmp / "a");
    {
        std::ofstream(tmp / "a" / "case.json") << R"({"case_id":"a","image_path":"x.png","image_width":4,)"
                                                  R"("image_height":4,"findings":[]})";
    }
    EXPECT_THROW(load_case_bundle(tmp / "a"), MissingFile);
    std::filesystem::create_directories(tmp / "b");
    { std::ofstream(tmp / "b" / "case.json") << "{not json"; }
    EXPECT_THROW(load_case_bundle(tmp / "b"), MalformedSidecar);
    EXPECT_THROW(load_case_bundle(tmp / "nowhere"), MissingFile);
}

TEST(StudentTurnSchema, FieldPathsInErrors) {
    try {
        turn_from_json(json::parse(R"({"boxes":[[1,2,3]],"text":"x"})"));
        FAIL();
    } catch (const MalformedSidecar& e) {
        EXPECT_NE(std::string(e.what()).find("boxes[0]"), std::string::npos);
    }
    StudentTurn t;
    t.boxes.push_back({5, 5, 2, 9});
    EXPECT_NE(validate_turn(t, 10, 10).find("boxes[0]"), std::string::npos);
    t.boxes[0] = {1, 1, 4, 4};
    EXPECT_EQ(validate_turn(t, 10, 10), "");
    t.confidence = 1.5;
    EXPECT_NE(validate_turn(t, 10, 10).find("confidence"), std::string::npos);
}

TEST(StudentTurnSchema, JsonRoundTrip) {
    StudentTurn t;
    t.boxes.push_back({1, 2, 3, 4});
    t.fixations.push_back({5, 6, 120, 0});
    t.text = "a nodule";
    t.confidence = 0.8;
    t.requests.knowledge = true;
    t.turn_index = 3;
    EXPECT_EQ(turn_from_json(turn_to_json(t)), t);
}
