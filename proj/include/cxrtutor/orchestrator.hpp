#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cxrtutor/agents.hpp"
#include "cxrtutor/backends.hpp"
#include "cxrtutor/bkt.hpp"
#include "cxrtutor/config.hpp"
#include "cxrtutor/domain.hpp"
#include "cxrtutor/knowledge.hpp"
#include "cxrtutor/sanitizer.hpp"
#include "cxrtutor/similarity.hpp"

namespace cxrtutor {

struct SessionState {
    std::string session_id;
    std::string case_id;
    int turn_count = 0;
    std::map<std::string, SkillState> skills;
    std::vector<std::pair<StudentTurn, TutorResponse>> history;
    std::set<std::string> resolved_findings;
    bool completed = false;
    std::map<std::string, int> consecutive_incorrect;
    bool operator==(const SessionState&) const = default;
};

// Rule names used in fired_rules and route_log.
namespace rules {
inline constexpr const char* kSocraticNeeded = "corrections_or_missing";
inline constexpr const char* kKnowledgeRequested = "knowledge_requested";
inline constexpr const char* kLowMasteryKnowledge = "low_mastery_knowledge";
inline constexpr const char* kFindingResolved = "finding_resolved";
inline constexpr const char* kReasoningRequested = "reasoning_requested";
inline constexpr const char* kLowMasteryReasoning = "low_mastery_reasoning";
inline constexpr const char* kSimilarRequested = "similar_cases_requested";
inline constexpr const char* kRepeatedStruggle = "repeated_struggle";
}  // namespace rules

inline constexpr const char* kGateFailedLog = "focus_gate_failed";

struct RouteSet {
    bool socratic = false;
    bool knowledge = false;
    bool reasoning = false;
    bool similarity = false;
    std::vector<std::string> fired_rules;
    bool operator==(const RouteSet&) const = default;
};

struct RoutingContext {
    RoutingThresholds thresholds;
    AblationConfig ablation;
    bool completed = false;                   // after this turn's resolution check
    std::vector<std::string> newly_resolved;  // finding labels resolved this turn
};

// Each rule is evaluated independently. Disabled components never fire and
// a disabled bkt turns the mastery-gated rules off.
RouteSet decide_routes(const std::optional<AssessmentResult>& assessment, const std::map<std::string, SkillState>& skills,
                       const StudentTurn& turn, const std::map<std::string, int>& consecutive_incorrect,
                       const RoutingContext& ctx);

struct ResolutionUpdate {
    std::set<std::string> resolved;
    std::vector<std::string> newly_resolved;
    bool completed = false;
};

// A finding resolves when its category was reinforced and its skill mastery
// is at or above the threshold; the case completes once every required
// finding has resolved.
ResolutionUpdate check_resolution(const CaseBundle& c, const std::map<std::string, SkillState>& skills,
                                  const std::set<std::string>& already_resolved, const AssessmentResult& assessment,
                                  double mastery_threshold, const CategoryTable& table = CategoryTable::defaults());

// Display name of a skill in learner-facing payloads. Finding skills are
// named by position ("finding_1") so the label never leaves the engine.
std::string display_skill(const CaseBundle& c, const std::string& skill_id);
std::map<std::string, MasteryEntry> display_mastery(const CaseBundle& c, const std::map<std::string, SkillState>& skills);

// Copy of the case's region mask with every region name that would leak
// replaced by "zone_<n>"; the expected sequence is renamed to match.
std::pair<LobeMask, std::vector<std::string>> display_regions(const CaseBundle& c, const LeakDetector& detector,
                                                              const UtteredTerms& uttered);

struct EngineServices {
    std::shared_ptr<TextBackend> text;
    std::shared_ptr<VisionBackend> vision;
    std::shared_ptr<HttpGetTransport> knowledge_transport;  // null: offline
    std::shared_ptr<KnowledgeClock> clock;
};

// Builds backends from the configuration: stub or remote text and vision
// clients, and an E-utilities transport when knowledge.online is set. With
// stub text and offline knowledge the clock is virtual, so every output is a
// pure function of the inputs.
EngineServices make_services(const EngineConfig& config);

struct TurnOutcome {
    SessionState state;
    TutorResponse response;
    RouteSet routes;
};

class Engine {
public:
    Engine(EngineConfig config, std::vector<CaseBundle> library, EngineServices services);

    const EngineConfig& config() const { return config_; }
    const CategoryTable& categories() const { return table_; }
    const CaseIndex& index() const { return index_; }
    const std::vector<CaseBundle>& library() const { return library_; }
    const CaseBundle& case_bundle(const std::string& case_id) const;  // throws UnknownCase
    bool has_case(const std::string& case_id) const;

    SessionState new_session(const std::string& session_id, const std::string& case_id) const;

    // Runs the fixed stage order. Throws SessionCompleted, TurnIndexMismatch
    // and PreconditionViolation (schema problems); backend failures only
    // remove sections from the response.
    TurnOutcome process_turn(const SessionState& state, const StudentTurn& turn);

    // Uttered terms of every student text in the session plus `current`.
    static UtteredTerms uttered_terms(const SessionState& state, const std::string& current);

    std::vector<SimilarCase> similar_cases(const CaseBundle& c, const LeakDetector& detector,
                                           const UtteredTerms& uttered);

    KnowledgeClient& knowledge() { return *knowledge_; }
    EngineServices& services() { return services_; }

private:
    TutorResponse gate_failure(SessionState& next, const StudentTurn& turn, const FocusResult& focus,
                               const std::vector<std::string>& gaze_guidance, const LeakDetector& detector,
                               const UtteredTerms& uttered);

    EngineConfig config_;
    CategoryTable table_;
    std::vector<CaseBundle> library_;
    std::map<std::string, std::size_t> by_id_;
    CaseIndex index_;
    EngineServices services_;
    std::unique_ptr<KnowledgeClient> knowledge_;
    std::unique_ptr<OverlayStore> overlays_;
    AssessmentAgent assessor_;
    SocraticAgent socratic_;
    FacultyResponder responder_;
};

// Loads every bundle directory under `dir` (sorted by name).
std::vector<CaseBundle> load_library(const std::filesystem::path& dir);

}  // namespace cxrtutor
