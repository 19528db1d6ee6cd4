#include <gtest/gtest.h>

#include <fstream>

#include "cxrtutor/errors.hpp"
#include "cxrtutor/event_log.hpp"
#include "fixtures.hpp"

using namespace cxrtutor;

namespace {

struct Run {
    SessionState fresh;
    SessionState live;
    std::vector<std::string> lines;
};

Run run_session(Engine& engine) {
    Run r;
    r.fresh = engine.new_session("log-1", "case-0001");
    r.live = r.fresh;
    r.lines.push_back(header_line(r.fresh));
    const std::vector<std::pair<BoundingBox, std::string>> turns = {
        {{20, 20, 60, 60, std::nullopt}, "Not sure."},
        {{300, 150, 350, 200, std::nullopt}, "A small round density in the upper zone."},
        {{300, 150, 350, 200, std::nullopt}, "A 12 mm nodule, please explain. Similar cases?"},
    };
    for (const auto& [box, text] : turns) {
        auto t = fixtures::turn_with_box(box, text, r.live.turn_count);
        t.fixations = {{100, 60, 200, 0}, {400, 60, 250, 1}, {100, 250, 300, 2}};
        t.requests.similar_cases = r.live.turn_count == 2;
        const auto out = engine.process_turn(r.live, t);
        r.lines.push_back(turn_line(out, t));
        r.live = out.state;
    }
    return r;
}

}  // namespace

TEST(EventLog, ReplayEqualsLiveState) {
    fixtures::TempDir tmp;
    auto engine = fixtures::demo_engine(tmp.path());
    const auto r = run_session(engine);
    EXPECT_EQ(replay(r.lines, r.fresh), r.live);
    EXPECT_EQ(replay({}, r.fresh), r.fresh);
}

TEST(EventLog, StateJsonRoundTrip) {
    fixtures::TempDir tmp;
    auto engine = fixtures::demo_engine(tmp.path());
    const auto r = run_session(engine);
    EXPECT_EQ(session_from_json(to_json(r.live)), r.live);
    for (const auto& [turn, resp] : r.live.history) EXPECT_EQ(response_from_json(to_json(resp)), resp);
}

TEST(EventLog, WriterAndReaders) {
    fixtures::TempDir tmp;
    auto engine = fixtures::demo_engine(tmp.path());
    const auto r = run_session(engine);
    const auto path = tmp / "s.log";
    {
        EventLog log(path);
        for (const auto& l : r.lines) log.append(l);
    }
    EXPECT_EQ(read_log_lines(path), r.lines);
    EXPECT_EQ(read_log_header(path), (std::pair<std::string, std::string>{"log-1", "case-0001"}));
}

TEST(EventLog, CorruptLogsAreRejected) {
    fixtures::TempDir tmp;
    auto engine = fixtures::demo_engine(tmp.path());
    const auto r = run_session(engine);

    auto truncated = r.lines;
    truncated.back().resize(truncated.back().size() / 2);
    EXPECT_THROW(replay(truncated, r.fresh), CorruptLog);

    auto gap = r.lines;
    gap.erase(gap.begin() + 2);
    EXPECT_THROW(replay(gap, r.fresh), CorruptLog);

    auto wrong_case = r.lines;
    wrong_case[0] = header_line(engine.new_session("log-1", "case-0002"));
    EXPECT_THROW(replay(wrong_case, r.fresh), CorruptLog);

    auto no_header = std::vector<std::string>(r.lines.begin() + 1, r.lines.end());
    EXPECT_THROW(replay(no_header, r.fresh), CorruptLog);

    std::ofstream(tmp / "bad.log") << "not json\n";
    EXPECT_THROW(read_log_header(tmp / "bad.log"), CorruptLog);
}
