#include <gtest/gtest.h>

#include "cxrtutor/config.hpp"

using namespace cxrtutor;

TEST(Config, DefaultsMatchDocumentedValues) {
    const EngineConfig c;
    EXPECT_DOUBLE_EQ(c.iou_threshold, 0.6);
    EXPECT_DOUBLE_EQ(c.sequence_nudge_threshold, 0.5);
    EXPECT_DOUBLE_EQ(c.bkt.p_init, 0.2);
    EXPECT_DOUBLE_EQ(c.bkt.p_learn, 0.15);
    EXPECT_DOUBLE_EQ(c.bkt.p_guess, 0.2);
    EXPECT_DOUBLE_EQ(c.bkt.p_slip, 0.1);
    EXPECT_EQ(c.history_window, 6);
    EXPECT_EQ(c.similarity_k, 3);
    EXPECT_DOUBLE_EQ(c.routing.knowledge_mastery, 0.3);
    EXPECT_EQ(c.routing.reasoning_attempts, 5);
    EXPECT_EQ(c.routing.struggle_streak, 3);
    EXPECT_DOUBLE_EQ(c.routing.resolution_mastery, 0.8);
    EXPECT_DOUBLE_EQ(c.turn_timeout_s, 180.0);
    EXPECT_EQ(c.text.kind, "stub");
}

TEST(Config, ParsesKeysCommentsAndPaths) {
    const auto c = parse_config(R"(
# comment
focus.iou_threshold = 0.5
bkt.p_learn = 0.25
routing.knowledge_attempts = 4
knowledge.online = true
backends.text.kind = remote
backends.text.base_url = http://localhost:9000
backends.text.timeout_s = 2.5
server.sessions_dir = sess
ablation.disable = gaze,bkt
)",
                                "/base");
    EXPECT_DOUBLE_EQ(c.iou_threshold, 0.5);
    EXPECT_DOUBLE_EQ(c.bkt.p_learn, 0.25);
    EXPECT_EQ(c.routing.knowledge_attempts, 4);
    EXPECT_TRUE(c.knowledge_online);
    EXPECT_EQ(c.text.kind, "remote");
    EXPECT_EQ(c.text.endpoint.base_url, "http://localhost:9000");
    EXPECT_EQ(c.text.endpoint.timeout.count(), 2500);
    EXPECT_EQ(c.sessions_dir, std::filesystem::path("/base/sess"));
    EXPECT_EQ(c.ablation.name(), "-gaze,-bkt");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(parse_config("focus.iou = 0.5"), std::invalid_argument);
    EXPECT_THROW(parse_config("focus.iou_threshold = abc"), std::invalid_argument);
    EXPECT_THROW(parse_config("backends.text.kind = magic"), std::invalid_argument);
    EXPECT_THROW(parse_config("no equals sign"), std::invalid_argument);
    EXPECT_THROW(parse_config("bkt.p_slip = 0.9\nbkt.p_guess = 0.5"), std::invalid_argument);
    try {
        parse_config("\n\nbogus = 1");
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
    }
}

TEST(Config, Ablation) {
    EXPECT_EQ(parse_ablation("").name(), "full");
    EXPECT_TRUE(parse_ablation("reasoning").disabled(Component::reasoning));
    EXPECT_EQ(parse_ablation(" knowledge , gaze ").disable.size(), 2u);
    EXPECT_THROW(parse_ablation("vision"), std::invalid_argument);
    EXPECT_THROW(parse_component("sanitizer"), std::invalid_argument);
}
