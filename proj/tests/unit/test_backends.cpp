#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "cxrtutor/backends.hpp"
#include "cxrtutor/errors.hpp"
#include "cxrtutor/prompts.hpp"
#include "mock_server.hpp"

using namespace cxrtutor;
using json = nlohmann::json;

namespace {

TextGenRequest assessment_request(const std::string& student) {
    TextGenRequest r;
    r.system_prompt = prompts::assessment_system();
    r.user_messages.push_back("CASE_CATEGORIES: pleural finding | size/measurement\nFINDING_COUNT: 1\nSTUDENT_TEXT: " +
                              student);
    r.tag = "assessment";
    return r;
}

RemoteEndpoint endpoint(const fixtures::MockServer& s, const std::string& path) {
    RemoteEndpoint e;
    e.base_url = s.url();
    e.path = path;
    e.model = "m";
    e.timeout = std::chrono::milliseconds(2000);
    e.retries = 2;
    e.backoff = std::chrono::milliseconds(1);
    return e;
}

}  // namespace

TEST(Fnv, KnownVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(StubText, DeterministicAndKeywordDriven) {
    StubTextBackend a, b;
    const auto r1 = a.generate(assessment_request("There is an effusion."));
    const auto r2 = b.generate(assessment_request("There is an effusion."));
    EXPECT_EQ(r1.text, r2.text);
    bool found = false;
    const auto reinforced = prompts::field_value(r1.text, prompts::kAssessR, found);
    ASSERT_TRUE(found);
    EXPECT_NE(reinforced.find("pleural finding"), std::string::npos);
    const auto missing = prompts::field_value(r1.text, prompts::kAssessM, found);
    EXPECT_NE(missing.find("size/measurement"), std::string::npos);
}

TEST(StubText, InspectorSeesEveryRequest) {
    StubTextBackend s;
    std::vector<std::string> seen;
    s.set_inspector([&](const std::string& tag, const std::string& payload) { seen.push_back(tag + ":" + payload); });
    s.generate(assessment_request("hello"));
    ASSERT_EQ(seen.size(), 1u);
    EXPECT_NE(seen[0].find("STUDENT_TEXT: hello"), std::string::npos);
}

TEST(StubVision, FixedSkeletonAndByteCap) {
    StubVisionBackend v(16);
    VisionReasonRequest r;
    r.image = std::make_shared<std::vector<std::uint8_t>>(8, 1);
    r.context_text = "ctx";
    const auto a = v.reason(r);
    EXPECT_EQ(a.text, v.reason(r).text);
    EXPECT_NE(a.text.find("Step 1:"), std::string::npos);
    r.image = std::make_shared<std::vector<std::uint8_t>>(32, 1);
    EXPECT_THROW(v.reason(r), ImageTooLarge);
    r.image = std::make_shared<std::vector<std::uint8_t>>();
    EXPECT_THROW(v.reason(r), PreconditionViolation);
}

TEST(RemoteText, ChatCompletionsRoundTrip) {
    fixtures::MockServer s;
    json seen;
    std::string auth;
    s.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(R"({"choices":[{"message":{"content":"hi there"}}]})", "application/json");
    });
    s.start();
    auto e = endpoint(s, "/v1/chat/completions");
    e.api_key = "k";
    RemoteTextBackend b(e);
    const auto r = b.generate(assessment_request("x"));
    EXPECT_EQ(r.text, "hi there");
    EXPECT_EQ(r.backend_id, "remote-text");
    EXPECT_EQ(seen["messages"][0]["role"], "system");
    EXPECT_EQ(seen["messages"][1]["role"], "user");
    EXPECT_EQ(auth, "Bearer k");
}

TEST(RemoteText, RetriesServerErrorsThenSucceeds) {
    fixtures::MockServer s;
    std::atomic<int> calls{0};
    s.server().Post("/c", [&](const httplib::Request&, httplib::Response& res) {
        if (++calls < 3) {
            res.status = 503;
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"ok"}}]})", "application/json");
    });
    s.start();
    RemoteTextBackend b(endpoint(s, "/c"));
    EXPECT_EQ(b.generate(assessment_request("x")).text, "ok");
    EXPECT_EQ(calls.load(), 3);
}

TEST(RemoteText, ClientErrorIsNotRetried) {
    fixtures::MockServer s;
    std::atomic<int> calls{0};
    s.server().Post("/c", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 400;
    });
    s.start();
    RemoteTextBackend b(endpoint(s, "/c"));
    try {
        b.generate(assessment_request("x"));
        FAIL();
    } catch (const BackendHttpError& e) {
        EXPECT_EQ(e.status(), 400);
    }
    EXPECT_EQ(calls.load(), 1);
}

TEST(RemoteText, SlowServerTimesOut) {
    fixtures::MockServer s;
    s.server().Post("/c", [&](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(400));
        res.set_content(R"({"choices":[{"message":{"content":"late"}}]})", "application/json");
    });
    s.start();
    auto e = endpoint(s, "/c");
    e.timeout = std::chrono::milliseconds(100);
    e.retries = 0;
    RemoteTextBackend b(e);
    EXPECT_THROW(b.generate(assessment_request("x")), BackendTimeout);
}

TEST(RemoteText, MissingUrlIsMisconfigured) {
    RemoteTextBackend b(RemoteEndpoint{});
    EXPECT_THROW(b.generate(assessment_request("x")), BackendMisconfigured);
}

TEST(RemoteVision, SendsBase64Image) {
    fixtures::MockServer s;
    json seen;
    s.server().Post("/v1/reason", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        res.set_content(R"({"text":"reasoned"})", "application/json");
    });
    s.start();
    RemoteVisionBackend v(endpoint(s, "/v1/reason"), 1024);
    VisionReasonRequest r;
    r.image = std::make_shared<std::vector<std::uint8_t>>(std::vector<std::uint8_t>{'M', 'a', 'n'});
    r.context_text = "ctx";
    EXPECT_EQ(v.reason(r).text, "reasoned");
    EXPECT_EQ(seen["image_base64"], "TWFu");
    EXPECT_EQ(seen["prompt"], "ctx");
}
