#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cxrtutor/backends.hpp"
#include "cxrtutor/bkt.hpp"
#include "cxrtutor/domain.hpp"
#include "cxrtutor/focus_gate.hpp"
#include "cxrtutor/gaze.hpp"
#include "cxrtutor/knowledge.hpp"
#include "cxrtutor/sanitizer.hpp"
#include "cxrtutor/similarity.hpp"

namespace cxrtutor {

struct Correction {
    std::string category;
    std::string issue;
    bool operator==(const Correction&) const = default;
};

struct AssessmentResult {
    std::vector<std::string> reinforcements;
    std::vector<Correction> corrections;
    std::vector<std::string> missing;
    std::string impression;
    std::map<std::string, bool> per_skill_correct;
    bool operator==(const AssessmentResult&) const = default;
};

inline constexpr const char* kUnparseableImpression = "unparseable";

struct SocraticGuidance {
    std::vector<std::string> prompts;
    std::string difficulty = "medium";  // easy | medium | hard
    std::string intent;
    bool operator==(const SocraticGuidance&) const = default;
};

struct TutorResponse {
    std::string message;
    std::optional<AssessmentResult> assessment;  // absent on gate failure
    std::optional<SocraticGuidance> socratic;
    std::vector<KnowledgeSnippet> knowledge;
    std::optional<GazeMetrics> gaze;
    std::vector<std::string> gaze_guidance;
    std::map<std::string, MasteryEntry> mastery;
    std::optional<std::string> reasoning_text;
    std::vector<SimilarCase> similar_cases;
    std::vector<std::string> route_log;
    bool reflection_mode = false;
    bool gate_passed = false;
    std::optional<DirectionalHint> focus_hint;
    double best_iou = 0.0;
    bool operator==(const TutorResponse&) const = default;
};

// One earlier exchange, oldest first.
struct HistoryTurn {
    std::string student_text;
    std::string tutor_message;
};

// Last `window` exchanges rendered as "STUDENT: .. / TUTOR: .." lines.
std::string render_history(const std::vector<HistoryTurn>& history, int window);

// Correctness of one skill for this turn: no correction touches its category,
// and the category was reinforced or the gate passed for the finding.
// "localization" follows the gate; "systematic-search" is only touched when
// gaze metrics exist and is correct when the sequence score reaches the
// nudge threshold.
struct SkillEvidence {
    std::vector<std::string> gate_passed_labels;
    bool gate_passed = false;
    std::optional<GazeMetrics> gaze;
    double sequence_threshold = kDefaultSequenceNudgeThreshold;
};
std::map<std::string, bool> skill_correctness(const AssessmentResult& assessment, const CaseBundle& c,
                                              const SkillEvidence& evidence,
                                              const CategoryTable& table = CategoryTable::defaults());

class AssessmentAgent {
public:
    AssessmentAgent(std::shared_ptr<TextBackend> backend, const CategoryTable& table = CategoryTable::defaults(),
                    int history_window = 6);

    // Grades the turn against the sanitised summary. A reply that fails to
    // parse is re-requested once; a second failure yields the conservative
    // fallback (nothing reinforced, every skill incorrect, impression
    // "unparseable"). Free-text parts of the reply that would leak are
    // replaced with neutral wording. BackendTimeout propagates.
    AssessmentResult assess(const StudentTurn& turn, const CaseBundle& c, const SanitizedCaseSummary& summary,
                            const std::vector<HistoryTurn>& history, const SkillEvidence& evidence,
                            const LeakDetector& detector, const UtteredTerms& uttered) const;

    // Throws ParseFailure when a tag is missing. Categories outside the
    // vocabulary are dropped. per_skill_correct is left empty.
    AssessmentResult parse_reply(const std::string& reply, const SanitizedCaseSummary& summary) const;

    std::string request_body(const StudentTurn& turn, const SanitizedCaseSummary& summary,
                             const std::vector<HistoryTurn>& history) const;

private:
    std::shared_ptr<TextBackend> backend_;
    CategoryTable table_;
    int history_window_;
};

class SocraticAgent {
public:
    explicit SocraticAgent(std::shared_ptr<TextBackend> backend) : backend_(std::move(backend)) {}

    // Nothing to coach (no missing, no corrections) returns empty prompts
    // without calling the backend. Prompts that would leak are dropped.
    SocraticGuidance coach(const AssessmentResult& assessment, const SanitizedCaseSummary& summary,
                           const std::string& student_text, const LeakDetector& detector,
                           const UtteredTerms& uttered) const;

private:
    std::shared_ptr<TextBackend> backend_;
};

// Parses "SOCRATIC: question | difficulty | intent" lines. Difficulty falls
// back to medium when absent or unknown.
SocraticGuidance parse_socratic(const std::string& reply);

struct ComposeInputs {
    std::optional<AssessmentResult> assessment;
    std::optional<SocraticGuidance> socratic;
    std::vector<KnowledgeSnippet> knowledge;
    std::vector<std::string> gaze_guidance;
    std::map<std::string, MasteryEntry> mastery;  // already aliased for display
    std::optional<std::string> reasoning_text;
    std::vector<SimilarCase> similar_cases;
    std::vector<std::string> focus_guidance;
    std::string student_text;
    bool reflection_mode = false;
};

enum class ComposeOutcome { generated, regenerated, templated };
std::string to_string(ComposeOutcome o);

struct ComposedMessage {
    std::string message;
    ComposeOutcome outcome = ComposeOutcome::generated;
};

class FacultyResponder {
public:
    explicit FacultyResponder(std::shared_ptr<TextBackend> backend) : backend_(std::move(backend)) {}

    // One generation; if the draft leaks, one stricter regeneration; then the
    // deterministic template. Backend errors go straight to the template.
    ComposedMessage compose(const ComposeInputs& in, const LeakDetector& detector, const UtteredTerms& uttered) const;

private:
    std::shared_ptr<TextBackend> backend_;
};

// Deterministic concatenation of the sections, filtered line by line through
// the detector. Never empty.
std::string template_message(const ComposeInputs& in, const LeakDetector& detector, const UtteredTerms& uttered);

// Responder request body; exposed so tests can inspect what leaves the engine.
std::string responder_request(const ComposeInputs& in);

}  // namespace cxrtutor
