#include <gtest/gtest.h>

#include <fstream>

#include "cxrtutor/errors.hpp"
#include "cxrtutor/scripts.hpp"
#include "fixtures.hpp"

using namespace cxrtutor;

namespace {

json minimal_script() {
    return json::parse(R"({"case_id":"case-0004","turns":[{"boxes":[[290,90,440,190]],"text":"x"}]})");
}

}  // namespace

TEST(Scripts, ParseErrorsNameTheField) {
    auto j = minimal_script();
    EXPECT_NO_THROW(parse_script(j, "ok"));
    j["turns"][0]["turn_index"] = 3;
    try {
        parse_script(j, "bad");
        FAIL();
    } catch (const MalformedSidecar& e) {
        EXPECT_NE(std::string(e.what()).find("turns[0]"), std::string::npos) << e.what();
    }
    j = minimal_script();
    j.erase("case_id");
    EXPECT_THROW(parse_script(j, "bad"), MalformedSidecar);
    j = minimal_script();
    j["turns"][0]["boxes"] = "nope";
    EXPECT_THROW(parse_script(j, "bad"), MalformedSidecar);
    EXPECT_THROW(load_script("/nonexistent/script.json"), MissingFile);
}

TEST(Scripts, ShippedScriptsPassAndMatchGoldenRouteLogs) {
    fixtures::TempDir tmp;
    auto engine = fixtures::demo_engine(tmp.path());
    const auto scripts = load_scripts(fixtures::data_dir() / "scripts");
    ASSERT_EQ(scripts.size(), 5u);
    for (const auto& s : scripts) {
        const auto report = run_script(engine, s);
        EXPECT_TRUE(report.failures.empty()) << s.name << ": " << report.failures.front();
        EXPECT_TRUE(report.resolved) << s.name;
        std::ifstream in(fixtures::data_dir() / "golden" / (s.name + ".route_log.json"));
        const auto golden = json::parse(in);
        ASSERT_EQ(golden.size(), report.turns.size()) << s.name;
        for (std::size_t i = 0; i < report.turns.size(); ++i) {
            EXPECT_EQ(golden[i].get<std::vector<std::string>>(), report.turns[i].route_log) << s.name << " turn " << i;
        }
    }
}

TEST(Scripts, FailedExpectationIsReported) {
    fixtures::TempDir tmp;
    auto engine = fixtures::demo_engine(tmp.path());
    auto j = minimal_script();
    j["expected"] = json::parse(R"([{"turn":0,"gate_passed":false,"completed":true}])");
    const auto r = run_script(engine, parse_script(j, "f"));
    EXPECT_EQ(r.failures.size(), 2u);
    j["expected"] = json::parse(R"([{"turn":5,"completed":true}])");
    EXPECT_THROW(parse_script(j, "f"), MalformedSidecar);
}

TEST(Scripts, SummaryPenalisesUnresolved) {
    ScriptedSession s;
    s.turns.resize(4);
    ScriptReport done;
    done.resolved = true;
    done.turns_to_resolution = 2;
    ScriptReport open;
    const auto row = summarize("x", {done, open}, {s, s});
    EXPECT_DOUBLE_EQ(row.mean_turns_to_resolution, (2.0 + 5.0) / 2.0);
    EXPECT_DOUBLE_EQ(row.resolution_rate, 0.5);
    EXPECT_EQ(standard_ablations().size(), 5u);
    EXPECT_EQ(standard_ablations().front().name(), "full");
}

TEST(Scripts, IngestCopiesValidAndRejectsBrokenOrDuplicate) {
    fixtures::TempDir tmp;
    const auto src = tmp / "src";
    const auto lib = tmp / "lib";
    std::filesystem::create_directories(src / "broken");
    std::ofstream(src / "broken" / "case.json") << "{\"case_id\": 5}";
    std::filesystem::copy(fixtures::data_dir() / "cases" / "case-0002", src / "case-0002");

    auto r = ingest(src, lib);
    EXPECT_EQ(r.ingested, std::vector<std::string>{"case-0002"});
    ASSERT_EQ(r.failed.size(), 1u);
    EXPECT_NE(r.failed[0].first.find("broken"), std::string::npos);
    EXPECT_NO_THROW(load_case_bundle(lib / "case-0002"));
    std::ifstream idx(lib / "index.json");
    const auto index = json::parse(idx);
    EXPECT_EQ(index["format"], 1);
    EXPECT_EQ(index["cases"].size(), 1u);

    r = ingest(src / "case-0002", lib);
    EXPECT_TRUE(r.ingested.empty());
    EXPECT_EQ(r.failed.size(), 1u);
}
