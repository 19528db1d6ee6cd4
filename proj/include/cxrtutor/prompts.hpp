#pragma once

// Prompt templates and the line-tagged reply grammar shared by the agents and
// the stub backend. Bump kPromptVersion whenever a template changes shape.

#include <string>
#include <string_view>
#include <vector>

namespace cxrtutor::prompts {

inline constexpr std::string_view kPromptVersion = "v1";

// Reply tags.
inline constexpr std::string_view kAssessR = "ASSESS_R:";
inline constexpr std::string_view kAssessC = "ASSESS_C:";
inline constexpr std::string_view kAssessM = "ASSESS_M:";
inline constexpr std::string_view kAssessI = "ASSESS_I:";
inline constexpr std::string_view kSocratic = "SOCRATIC:";
inline constexpr std::string_view kRespond = "RESPOND:";
inline constexpr std::string_view kSummary = "SUMMARY:";

// Request field labels inside user messages.
inline constexpr std::string_view kCaseCategories = "CASE_CATEGORIES:";
inline constexpr std::string_view kFindingCount = "FINDING_COUNT:";
inline constexpr std::string_view kAnatomyHints = "ANATOMY_HINTS:";
inline constexpr std::string_view kStudentText = "STUDENT_TEXT:";
inline constexpr std::string_view kMissing = "MISSING:";
inline constexpr std::string_view kCorrections = "CORRECTIONS:";
inline constexpr std::string_view kMode = "MODE:";
inline constexpr std::string_view kTopic = "TOPIC:";

// Role markers a backend can key on.
inline constexpr std::string_view kRoleAssessment = "ROLE: assessment";
inline constexpr std::string_view kRoleSocratic = "ROLE: socratic";
inline constexpr std::string_view kRoleResponder = "ROLE: responder";
inline constexpr std::string_view kRoleKnowledgeFallback = "ROLE: knowledge-fallback";

std::string assessment_system();
std::string assessment_retry_note();
std::string socratic_system();
std::string responder_system(bool reflection, bool strict);
std::string knowledge_fallback_system();

// Joins list items with " | " after flattening newlines.
std::string join_items(const std::vector<std::string>& items);
// Splits a pipe-separated field list; trims and drops empty items.
std::vector<std::string> split_items(std::string_view field);
// Collapses newlines so a value fits on one tagged line.
std::string one_line(std::string_view text);

// Value after `tag` on the last line that starts with it; found=false when absent.
std::string field_value(std::string_view body, std::string_view tag, bool& found);
// Values of every line that starts with `tag`, in order.
std::vector<std::string> field_values(std::string_view body, std::string_view tag);

}  // namespace cxrtutor::prompts
