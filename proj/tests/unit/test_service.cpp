#include <gtest/gtest.h>

#include <fstream>
#include <future>

#include "cxrtutor/service.hpp"
#include "fixtures.hpp"
#include "mock_server.hpp"

using namespace cxrtutor;

namespace {

class SlowText : public StubTextBackend {
public:
    explicit SlowText(std::chrono::milliseconds delay) : delay_(delay) {}

protected:
    BackendReply do_generate(const TextGenRequest& req) override {
        std::this_thread::sleep_for(delay_);
        return StubTextBackend::do_generate(req);
    }

private:
    std::chrono::milliseconds delay_;
};

Engine slow_engine(const fixtures::TempDir& tmp, std::chrono::milliseconds delay) {
    auto cfg = fixtures::stub_config(tmp.path());
    EngineServices s;
    s.text = std::make_shared<SlowText>(delay);
    s.vision = std::make_shared<StubVisionBackend>();
    s.clock = std::make_shared<VirtualClock>();
    return Engine(cfg, fixtures::demo_library(), s);
}

// A Service behind a real HttpServer on an ephemeral loopback port.
struct Harness {
    fixtures::TempDir tmp;
    Engine engine;
    Service service;
    HttpServer server;
    std::thread thread;
    std::unique_ptr<httplib::Client> client;
    int port = 0;

    explicit Harness(double timeout_s = 30, std::chrono::milliseconds delay = std::chrono::milliseconds(0))
        : engine(slow_engine(tmp, delay)), service(engine, tmp / "sessions", timeout_s, true), server(service) {
        port = server.bind_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen(); });
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
        client->set_read_timeout(30, 0);
        for (int i = 0; i < 100 && !client->Get("/cases"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ~Harness() {
        server.stop();
        thread.join();
        service.drain();
    }

    std::string create(const std::string& case_id) {
        auto r = client->Post("/sessions", json{{"case_id", case_id}}.dump(), "application/json");
        EXPECT_EQ(r->status, 201);
        return json::parse(r->body)["session_id"];
    }
    httplib::Result turn(const std::string& id, const json& body) {
        return client->Post("/sessions/" + id + "/turns", body.dump(), "application/json");
    }
};

json box_turn(std::vector<double> box, const std::string& text) {
    return {{"boxes", json::array({box})}, {"text", text}};
}

const std::vector<double> kPtx = {290, 90, 440, 190};

}  // namespace

TEST(Service, CreateSessionReturnsSanitizedSummary) {
    Harness h;
    auto r = h.client->Post("/sessions", R"({"case_id":"case-0004"})", "application/json");
    ASSERT_EQ(r->status, 201);
    const auto j = json::parse(r->body);
    EXPECT_EQ(j["case"]["case_id"], "case-0004");
    EXPECT_EQ(j["case"]["image_url"], "/cases/case-0004/image");
    EXPECT_EQ(j["case"]["finding_count"], 1);
    EXPECT_EQ(r->body.find("pneumothorax"), std::string::npos);
    EXPECT_EQ(h.service.session_count(), 1u);
}

TEST(Service, ErrorCodes) {
    Harness h;
    auto r = h.client->Post("/sessions", R"({"case_id":"case-9999"})", "application/json");
    EXPECT_EQ(r->status, 404);
    EXPECT_EQ(json::parse(r->body)["code"], "unknown_case");
    r = h.client->Post("/sessions", R"({"case":1})", "application/json");
    EXPECT_EQ(r->status, 422);
    EXPECT_EQ(json::parse(r->body)["field"], "case_id");

    r = h.turn("nope", box_turn(kPtx, "x"));
    EXPECT_EQ(r->status, 404);
    EXPECT_EQ(json::parse(r->body)["code"], "unknown_session");

    const auto id = h.create("case-0004");
    r = h.turn(id, {{"boxes", "not a list"}, {"text", "x"}});
    EXPECT_EQ(r->status, 422);
    EXPECT_EQ(json::parse(r->body)["code"], "schema_violation");
    EXPECT_TRUE(json::parse(r->body).contains("field"));
    r = h.turn(id, box_turn({50, 50, 10, 10}, "x"));
    EXPECT_EQ(r->status, 422);
    auto wrong_index = box_turn(kPtx, "x");
    wrong_index["turn_index"] = 4;
    r = h.turn(id, wrong_index);
    EXPECT_EQ(r->status, 422);
    EXPECT_EQ(json::parse(r->body)["field"], "turn_index");

    r = h.client->Get("/no/such/route");
    EXPECT_EQ(r->status, 404);
    EXPECT_EQ(json::parse(r->body)["code"], "not_found");
    EXPECT_EQ(h.client->Get("/overlays/..%2Fsecret")->status, 404);
}

TEST(Service, TurnsHistoryMasteryAndCompletion) {
    Harness h;
    const auto id = h.create("case-0004");
    auto r = h.turn(id, box_turn({20, 400, 80, 460}, "Something at the bottom?"));
    ASSERT_EQ(r->status, 200);
    auto j = json::parse(r->body);
    EXPECT_FALSE(j["gate_passed"]);
    EXPECT_EQ(j["route_log"], json::array({"focus_gate_failed"}));

    for (int i = 0; i < 2; ++i) {
        r = h.turn(id, box_turn(kPtx, "Left apical pneumothorax with a visible pleural line."));
        ASSERT_EQ(r->status, 200);
    }
    j = json::parse(r->body);
    EXPECT_TRUE(j["gate_passed"]);
    EXPECT_TRUE(j["reflection_mode"]);

    r = h.turn(id, box_turn(kPtx, "again"));
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(json::parse(r->body)["code"], "session_completed");

    r = h.client->Get("/sessions/" + id + "/history");
    ASSERT_EQ(r->status, 200);
    j = json::parse(r->body);
    EXPECT_TRUE(j["completed"]);
    ASSERT_EQ(j["turns"].size(), 3u);
    EXPECT_EQ(j["turns"][2]["turn_index"], 2);

    r = h.client->Get("/sessions/" + id + "/mastery");
    ASSERT_EQ(r->status, 200);
    j = json::parse(r->body);
    EXPECT_TRUE(j.contains("finding_1"));
    EXPECT_TRUE(j.contains("localization"));
    EXPECT_EQ(r->body.find("pneumothorax"), std::string::npos);

    r = h.client->Get("/sessions/" + id + "/similar");
    ASSERT_EQ(r->status, 200);
    j = json::parse(r->body);
    ASSERT_FALSE(j.empty());
    const std::string overlay = j[0]["overlay_path"];
    EXPECT_EQ(overlay.rfind("/overlays/", 0), 0u);
    auto img = h.client->Get(overlay);
    ASSERT_EQ(img->status, 200);
    EXPECT_EQ(img->get_header_value("Content-Type"), "image/png");
}

TEST(Service, CasesAndImages) {
    Harness h;
    auto r = h.client->Get("/cases");
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body).size(), 6u);
    r = h.client->Get("/cases/case-0001/image");
    ASSERT_EQ(r->status, 200);
    const auto want = read_file_bytes(fixtures::data_dir() / "cases" / "case-0001" / "image.png");
    EXPECT_EQ(r->body, std::string(want.begin(), want.end()));
    EXPECT_EQ(h.client->Get("/cases/nope/image")->status, 404);
}

TEST(Service, ConcurrentTurnIsRejected) {
    Harness h(30, std::chrono::milliseconds(400));
    const auto id = h.create("case-0004");
    auto first = std::async(std::launch::async, [&] {
        httplib::Client c2("127.0.0.1", h.port);
        c2.set_read_timeout(30, 0);
        return c2.Post("/sessions/" + id + "/turns", box_turn(kPtx, "first").dump(), "application/json")->status;
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(150));
    auto r = h.turn(id, box_turn(kPtx, "second"));
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(json::parse(r->body)["code"], "turn_in_flight");
    EXPECT_EQ(first.get(), 200);
}

TEST(Service, SlowTurnTimesOut) {
    Harness h(0.1, std::chrono::milliseconds(300));
    const auto id = h.create("case-0004");
    auto r = h.turn(id, box_turn(kPtx, "x"));
    EXPECT_EQ(r->status, 504);
    EXPECT_EQ(json::parse(r->body)["code"], "turn_timeout");
    h.service.drain();
    // The turn still completes and is recorded.
    r = h.client->Get("/sessions/" + id + "/history");
    EXPECT_EQ(json::parse(r->body)["turns"].size(), 1u);
}

TEST(Service, RestoreAfterRestart) {
    fixtures::TempDir tmp;
    auto engine = fixtures::demo_engine(tmp.path());
    std::string id;
    json before;
    {
        Service s(engine, tmp / "sessions", 30, false);
        id = s.create_session(R"({"case_id":"case-0001"})").json_body()["session_id"];
        ASSERT_EQ(s.submit_turn(id, box_turn({300, 150, 350, 200}, "round density").dump()).status, 200);
        before = s.history(id).json_body();
    }
    std::ofstream(tmp / "sessions" / "junk.log") << "garbage\n";
    Service s2(engine, tmp / "sessions", 30, false);
    EXPECT_EQ(s2.restore(), 1);
    EXPECT_EQ(s2.history(id).json_body(), before);
    EXPECT_EQ(s2.submit_turn(id, box_turn({300, 150, 350, 200}, "more").dump()).status, 200);
    EXPECT_EQ(s2.history(id).json_body()["turns"].size(), 2u);
}
