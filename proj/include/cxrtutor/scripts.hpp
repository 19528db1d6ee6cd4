#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cxrtutor/orchestrator.hpp"
#include "cxrtutor/serialization.hpp"

namespace cxrtutor {

// Per-turn checks a script can carry. Mastery keys use display names
// ("finding_1", "localization").
struct TurnExpectation {
    int turn = 0;
    std::optional<bool> gate_passed;
    std::vector<std::string> route_log_includes;
    std::vector<std::string> route_log_excludes;
    std::map<std::string, double> mastery_min;
    std::map<std::string, double> mastery_max;
    std::optional<bool> completed;
};

struct ScriptedSession {
    std::string name;
    std::string case_id;
    std::vector<StudentTurn> turns;
    std::vector<TurnExpectation> expected;
};

// Throws MalformedSidecar with a field path; turn_index, when given, must
// equal the turn's position.
ScriptedSession parse_script(const json& j, const std::string& name);
ScriptedSession load_script(const std::filesystem::path& path);
// *.json files in dir, sorted by file name.
std::vector<ScriptedSession> load_scripts(const std::filesystem::path& dir);

struct TurnReport {
    int turn = 0;
    bool gate_passed = false;
    double best_iou = 0.0;
    std::vector<std::string> route_log;
    std::map<std::string, MasteryEntry> mastery;  // display names
    std::vector<std::string> resolved;            // display names
    bool completed = false;
    std::string message_digest;  // FNV-1a of the message
};

struct ScriptReport {
    std::string script;
    std::string config;
    std::vector<TurnReport> turns;
    bool resolved = false;
    std::optional<int> turns_to_resolution;
    std::vector<std::string> failures;
};

// Runs every turn through a fresh session. Turns after completion are
// skipped and reported as a failure only if the script expects them.
ScriptReport run_script(Engine& engine, const ScriptedSession& script);

json to_json(const TurnReport& t, const std::string& script, const std::string& config);
json summary_json(const ScriptReport& r);
// JSON lines followed by "# " table lines.
std::string render_report(const std::vector<ScriptReport>& reports);

struct AblationRow {
    std::string config;
    double mean_turns_to_resolution = 0.0;
    double resolution_rate = 0.0;
    int scripts = 0;
};

// Unresolved scripts count as (turns in script + 1) so a configuration that
// never resolves cannot look faster than one that does.
AblationRow summarize(const std::string& config, const std::vector<ScriptReport>& reports,
                      const std::vector<ScriptedSession>& scripts);
std::string render_ablation(const std::vector<AblationRow>& rows);

// Full, then one row per single-component disable.
std::vector<AblationConfig> standard_ablations();

struct IngestResult {
    std::vector<std::string> ingested;                        // case ids
    std::vector<std::pair<std::string, std::string>> failed;  // source dir, reason
};

// Validates every bundle directory under `source` (or `source` itself when it
// holds a case.json), copies the valid ones into library/<case_id> and
// rewrites library/index.json from the whole library. A case id already in
// the library counts as a failure.
IngestResult ingest(const std::filesystem::path& source, const std::filesystem::path& library);

json index_to_json(const CaseIndex& index);

}  // namespace cxrtutor
