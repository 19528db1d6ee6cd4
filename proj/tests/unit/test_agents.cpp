#include <gtest/gtest.h>

#include <deque>

#include "cxrtutor/agents.hpp"
#include "cxrtutor/errors.hpp"
#include "fixtures.hpp"

using namespace cxrtutor;

namespace {

// Replies from a queue; records every request.
class ScriptedBackend : public TextBackend {
public:
    std::deque<std::string> replies;
    std::vector<TextGenRequest> requests;
    bool fail = false;
    std::string id() const override { return "scripted"; }

protected:
    BackendReply do_generate(const TextGenRequest& req) override {
        requests.push_back(req);
        if (fail) throw BackendHttpError(500, "down");
        std::string r = replies.empty() ? "" : replies.front();
        if (!replies.empty()) replies.pop_front();
        return {r, 0, id(), false};
    }
};

CaseBundle effusion_case() {
    return fixtures::make_case("a1", {fixtures::finding("pleural effusion", {10, 60, 40, 90}, {{"size", "2 cm"}})},
                               "/nonexistent/img.png", 100, 100);
}

const char* kGoodReply =
    "ASSESS_R: pleural finding\nASSESS_C: size/measurement = overstated\nASSESS_M: \nASSESS_I: Mostly right.";

}  // namespace

TEST(AssessmentParse, ReadsTaggedSections) {
    AssessmentAgent agent(std::make_shared<StubTextBackend>());
    const auto c = effusion_case();
    const auto a = agent.parse_reply(kGoodReply, sanitize_case(c));
    EXPECT_EQ(a.reinforcements, std::vector<std::string>{"pleural finding"});
    ASSERT_EQ(a.corrections.size(), 1u);
    EXPECT_EQ(a.corrections[0].category, "size/measurement");
    EXPECT_EQ(a.corrections[0].issue, "overstated");
    EXPECT_TRUE(a.missing.empty());
    EXPECT_EQ(a.impression, "Mostly right.");
}

TEST(AssessmentParse, DropsUnknownCategoriesAndRejectsMissingTags) {
    AssessmentAgent agent(std::make_shared<StubTextBackend>());
    const auto summary = sanitize_case(effusion_case());
    const auto a = agent.parse_reply("ASSESS_R: pleural effusion | pleural finding\nASSESS_C:\nASSESS_M:\nASSESS_I: x",
                                     summary);
    EXPECT_EQ(a.reinforcements, std::vector<std::string>{"pleural finding"});
    EXPECT_THROW(agent.parse_reply("ASSESS_R: x\nASSESS_I: y", summary), ParseFailure);
}

TEST(Assessment, RetriesOnceThenFallsBack) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->replies = {"garbage", "still garbage"};
    AssessmentAgent agent(backend);
    const auto c = effusion_case();
    const LeakDetector d(c);
    StudentTurn t;
    t.text = "hmm";
    SkillEvidence ev;
    ev.gate_passed = true;
    ev.gate_passed_labels = {"pleural effusion"};
    const auto a = agent.assess(t, c, sanitize_case(c), {}, ev, d, {});
    EXPECT_EQ(backend->requests.size(), 2u);
    EXPECT_EQ(a.impression, kUnparseableImpression);
    EXPECT_TRUE(a.reinforcements.empty());
    for (const auto& [skill, ok] : a.per_skill_correct) EXPECT_FALSE(ok) << skill;
}

TEST(Assessment, SecondAttemptCanSucceed) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->replies = {"garbage", kGoodReply};
    AssessmentAgent agent(backend);
    const auto c = effusion_case();
    StudentTurn t;
    t.text = "effusion";
    const auto a = agent.assess(t, c, sanitize_case(c), {}, {}, LeakDetector(c), {});
    EXPECT_EQ(a.impression, "Mostly right.");
}

TEST(Assessment, LeakingImpressionIsNeutralised) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->replies = {"ASSESS_R:\nASSESS_C:\nASSESS_M: pleural finding\nASSESS_I: You missed the pleural effusion."};
    AssessmentAgent agent(backend);
    const auto c = effusion_case();
    StudentTurn t;
    t.text = "nothing";
    const auto a = agent.assess(t, c, sanitize_case(c), {}, {}, LeakDetector(c), {});
    EXPECT_TRUE(detect_leaks(a.impression, c, {}).clean()) << a.impression;
}

TEST(Assessment, RequestCarriesNoGroundTruth) {
    AssessmentAgent agent(std::make_shared<StubTextBackend>());
    const auto c = effusion_case();
    StudentTurn t;
    t.text = "looks clear";
    const auto body = agent.request_body(t, sanitize_case(c), {{"earlier", "reply"}});
    EXPECT_TRUE(detect_leaks(body, c, student_uttered_terms({"looks clear", "earlier"})).clean()) << body;
    EXPECT_NE(body.find("STUDENT_TEXT: looks clear"), std::string::npos);
}

TEST(SkillCorrectness, Rules) {
    const auto c = fixtures::make_case(
        "k", {fixtures::finding("nodule", {1, 1, 5, 5}), fixtures::finding("pleural effusion", {10, 10, 20, 20})},
        "/nonexistent/img.png", 100, 100);
    AssessmentResult a;
    a.reinforcements = {"pleural finding"};
    a.corrections = {{"opacity-type finding", "not there"}};
    SkillEvidence ev;
    ev.gate_passed = true;
    ev.gate_passed_labels = {"nodule"};
    auto r = skill_correctness(a, c, ev);
    EXPECT_FALSE(r.at("nodule"));  // corrected category wins over the gate
    EXPECT_TRUE(r.at("pleural effusion"));
    EXPECT_TRUE(r.at("localization"));
    EXPECT_FALSE(r.contains("systematic-search"));
    ev.gaze = GazeMetrics{};
    ev.gaze->sequence_score = 0.5;
    r = skill_correctness(a, c, ev);
    EXPECT_TRUE(r.at("systematic-search"));
    ev.gaze->sequence_score = 0.49;
    EXPECT_FALSE(skill_correctness(a, c, ev).at("systematic-search"));
}

TEST(Socratic, NothingToCoachSkipsBackend) {
    auto backend = std::make_shared<ScriptedBackend>();
    SocraticAgent agent(backend);
    const auto c = effusion_case();
    const auto g = agent.coach(AssessmentResult{}, sanitize_case(c), "x", LeakDetector(c), {});
    EXPECT_TRUE(g.prompts.empty());
    EXPECT_TRUE(backend->requests.empty());
}

TEST(Socratic, LeakingPromptsDropped) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->replies = {"SOCRATIC: Is that a pleural effusion? | easy | probe\nSOCRATIC: What about the margins? | hard | probe"};
    SocraticAgent agent(backend);
    const auto c = effusion_case();
    AssessmentResult a;
    a.missing = {"pleural finding"};
    const auto g = agent.coach(a, sanitize_case(c), "x", LeakDetector(c), {});
    ASSERT_EQ(g.prompts.size(), 1u);
    EXPECT_EQ(g.prompts[0], "What about the margins?");
    EXPECT_EQ(g.difficulty, "easy");
}

TEST(Socratic, ParseDefaultsDifficulty) {
    const auto g = parse_socratic("SOCRATIC: Where? | unusual | probe");
    EXPECT_EQ(g.difficulty, "medium");
    EXPECT_EQ(g.prompts.size(), 1u);
}

TEST(Responder, LeakyDraftRegeneratedThenTemplated) {
    const auto c = effusion_case();
    const LeakDetector d(c);
    ComposeInputs in;
    in.assessment = AssessmentResult{{"pleural finding"}, {}, {}, "Good start.", {}};
    in.student_text = "x";

    auto backend = std::make_shared<ScriptedBackend>();
    backend->replies = {"RESPOND: The pleural effusion is 2 cm.", "RESPOND: Good start on the pleural space."};
    auto m = FacultyResponder(backend).compose(in, d, {});
    EXPECT_EQ(m.outcome, ComposeOutcome::regenerated);
    EXPECT_TRUE(d.is_safe(m.message, {}));

    backend->replies = {"RESPOND: pleural effusion", "RESPOND: 2 cm"};
    m = FacultyResponder(backend).compose(in, d, {});
    EXPECT_EQ(m.outcome, ComposeOutcome::templated);
    EXPECT_FALSE(m.message.empty());
    EXPECT_TRUE(d.is_safe(m.message, {}));

    backend->fail = true;
    m = FacultyResponder(backend).compose(in, d, {});
    EXPECT_EQ(m.outcome, ComposeOutcome::templated);
}

TEST(Responder, TemplateNeverEmpty) {
    const auto c = effusion_case();
    EXPECT_FALSE(template_message(ComposeInputs{}, LeakDetector(c), {}).empty());
}

TEST(Responder, ReflectionModeOmitsQuestions) {
    ComposeInputs in;
    in.socratic = SocraticGuidance{{"Why?"}, "medium", "probe"};
    in.reflection_mode = true;
    EXPECT_EQ(responder_request(in).find("SOCRATIC_QUESTIONS:"), std::string::npos);
    in.reflection_mode = false;
    EXPECT_NE(responder_request(in).find("SOCRATIC_QUESTIONS:"), std::string::npos);
}

TEST(History, WindowKeepsMostRecent) {
    std::vector<HistoryTurn> h;
    for (int i = 0; i < 5; ++i) h.push_back({"s" + std::to_string(i), "t" + std::to_string(i)});
    const auto r = render_history(h, 2);
    EXPECT_EQ(r.find("s2"), std::string::npos);
    EXPECT_NE(r.find("s3"), std::string::npos);
    EXPECT_NE(r.find("t4"), std::string::npos);
}
