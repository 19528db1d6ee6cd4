#pragma once

// JSON forms of engine records and the per-session event log.
//
// A log is one JSON object per line. The first line is a header
//   {"type":"session","format":1,"session_id":..,"case_id":..}
// and every turn appends
//   {"type":"turn","turn":n,"student_turn":..,"route_set":..,"tutor_response":..,
//    "skill_states_after":..,"resolved_after":..,"completed_after":..,
//    "consecutive_incorrect_after":..}

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "cxrtutor/orchestrator.hpp"
#include "cxrtutor/serialization.hpp"

namespace cxrtutor {

json to_json(const AssessmentResult& a);
AssessmentResult assessment_from_json(const json& j);
json to_json(const SocraticGuidance& g);
SocraticGuidance socratic_from_json(const json& j);
json to_json(const KnowledgeSnippet& s);
KnowledgeSnippet snippet_from_json(const json& j);
json to_json(const GazeMetrics& g);
GazeMetrics gaze_from_json(const json& j);
json to_json(const SimilarCase& s);
SimilarCase similar_from_json(const json& j);
json to_json(const std::map<std::string, MasteryEntry>& m);
std::map<std::string, MasteryEntry> mastery_from_json(const json& j);
json to_json(const TutorResponse& r);
TutorResponse response_from_json(const json& j);
json to_json(const SkillState& s);
SkillState skill_from_json(const json& j);
json to_json(const RouteSet& r);
RouteSet routes_from_json(const json& j);
json to_json(const SessionState& s);
SessionState session_from_json(const json& j);

std::string header_line(const SessionState& fresh);
std::string turn_line(const TurnOutcome& outcome, const StudentTurn& turn);

// Rebuilds the state from log lines on top of `fresh` (the session as
// created). An empty log returns `fresh`. Throws CorruptLog naming the line.
SessionState replay(const std::vector<std::string>& lines, const SessionState& fresh);

// Reads the header of a log file: {session_id, case_id}. Throws CorruptLog.
std::pair<std::string, std::string> read_log_header(const std::filesystem::path& path);
std::vector<std::string> read_log_lines(const std::filesystem::path& path);

// Append-only writer; each record is written with a single call and flushed.
class EventLog {
public:
    explicit EventLog(std::filesystem::path path);
    ~EventLog();
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    void append(const std::string& line);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::FILE* file_ = nullptr;
    std::mutex mutex_;
};

}  // namespace cxrtutor
