#include "cxrtutor/event_log.hpp"

#include <fstream>

#include "cxrtutor/errors.hpp"

namespace fs = std::filesystem;

namespace cxrtutor {

namespace {

constexpr int kLogFormat = 1;

json string_list(const std::vector<std::string>& v) { return json(v); }

std::vector<std::string> strings_from(const json& j) { return j.get<std::vector<std::string>>(); }

Direction parse_direction(const std::string& s) {
    for (auto d : {Direction::N, Direction::NE, Direction::E, Direction::SE, Direction::S, Direction::SW, Direction::W,
                   Direction::NW}) {
        if (to_string(d) == s) return d;
    }
    throw MalformedSidecar("unknown direction " + s);
}

SnippetSource parse_source(const std::string& s) {
    if (s == "pubmed") return SnippetSource::pubmed;
    if (s == "fallback") return SnippetSource::fallback;
    throw MalformedSidecar("unknown snippet source " + s);
}

}  // namespace

json to_json(const AssessmentResult& a) {
    json corrections = json::array();
    for (const auto& c : a.corrections) corrections.push_back({{"category", c.category}, {"issue", c.issue}});
    return {{"reinforcements", string_list(a.reinforcements)},
            {"corrections", corrections},
            {"missing", string_list(a.missing)},
            {"impression", a.impression},
            {"per_skill_correct", a.per_skill_correct}};
}

AssessmentResult assessment_from_json(const json& j) {
    AssessmentResult a;
    a.reinforcements = strings_from(j.at("reinforcements"));
    for (const auto& c : j.at("corrections")) a.corrections.push_back({c.at("category"), c.at("issue")});
    a.missing = strings_from(j.at("missing"));
    a.impression = j.at("impression");
    a.per_skill_correct = j.at("per_skill_correct").get<std::map<std::string, bool>>();
    return a;
}

json to_json(const SocraticGuidance& g) {
    return {{"prompts", string_list(g.prompts)}, {"difficulty", g.difficulty}, {"intent", g.intent}};
}

SocraticGuidance socratic_from_json(const json& j) {
    return {strings_from(j.at("prompts")), j.at("difficulty"), j.at("intent")};
}

json to_json(const KnowledgeSnippet& s) {
    return {{"topic", s.topic},
            {"text", s.text},
            {"source", to_string(s.source)},
            {"citation_id", s.citation_id ? json(*s.citation_id) : json(nullptr)},
            {"retrieved_at", s.retrieved_at}};
}

KnowledgeSnippet snippet_from_json(const json& j) {
    KnowledgeSnippet s;
    s.topic = j.at("topic");
    s.text = j.at("text");
    s.source = parse_source(j.at("source"));
    if (!j.at("citation_id").is_null()) s.citation_id = j.at("citation_id").get<std::string>();
    s.retrieved_at = j.at("retrieved_at");
    return s;
}

json to_json(const GazeMetrics& g) {
    return {{"coverage_ratio", g.coverage_ratio},
            {"dwell_time_ratio", g.dwell_time_ratio},
            {"sequence_score", g.sequence_score},
            {"per_region_dwell", g.per_region_dwell},
            {"observed_sequence", string_list(g.observed_sequence)},
            {"unvisited_regions", string_list(g.unvisited_regions)}};
}

GazeMetrics gaze_from_json(const json& j) {
    GazeMetrics g;
    g.coverage_ratio = j.at("coverage_ratio");
    g.dwell_time_ratio = j.at("dwell_time_ratio");
    g.sequence_score = j.at("sequence_score");
    g.per_region_dwell = j.at("per_region_dwell").get<std::map<std::string, double>>();
    g.observed_sequence = strings_from(j.at("observed_sequence"));
    g.unvisited_regions = strings_from(j.at("unvisited_regions"));
    return g;
}

json to_json(const SimilarCase& s) {
    return {{"case_id", s.case_id},
            {"score", s.score},
            {"shared_labels", string_list(s.shared_labels)},
            {"overlay_path", s.overlay_path}};
}

SimilarCase similar_from_json(const json& j) {
    return {j.at("case_id"), j.at("score"), strings_from(j.at("shared_labels")), j.at("overlay_path")};
}

json to_json(const std::map<std::string, MasteryEntry>& m) {
    json out = json::object();
    for (const auto& [skill, e] : m) out[skill] = {{"mastery", e.mastery}, {"attempts", e.attempts}};
    return out;
}

std::map<std::string, MasteryEntry> mastery_from_json(const json& j) {
    std::map<std::string, MasteryEntry> m;
    for (const auto& [skill, e] : j.items()) m[skill] = {e.at("mastery"), e.at("attempts")};
    return m;
}

json to_json(const TutorResponse& r) {
    json knowledge = json::array();
    for (const auto& k : r.knowledge) knowledge.push_back(to_json(k));
    json similar = json::array();
    for (const auto& s : r.similar_cases) similar.push_back(to_json(s));
    json hint = nullptr;
    if (r.focus_hint) {
        hint = {{"direction", to_string(r.focus_hint->direction)},
                {"magnitude", to_string(r.focus_hint->magnitude)},
                {"phrase", describe(r.focus_hint->direction)}};
    }
    return {{"message", r.message},
            {"assessment", r.assessment ? to_json(*r.assessment) : json(nullptr)},
            {"socratic", r.socratic ? to_json(*r.socratic) : json(nullptr)},
            {"knowledge", knowledge},
            {"gaze", r.gaze ? to_json(*r.gaze) : json(nullptr)},
            {"gaze_guidance", string_list(r.gaze_guidance)},
            {"mastery", to_json(r.mastery)},
            {"reasoning_text", r.reasoning_text ? json(*r.reasoning_text) : json(nullptr)},
            {"similar_cases", similar},
            {"route_log", string_list(r.route_log)},
            {"reflection_mode", r.reflection_mode},
            {"gate_passed", r.gate_passed},
            {"focus_hint", hint},
            {"best_iou", r.best_iou}};
}

TutorResponse response_from_json(const json& j) {
    TutorResponse r;
    r.message = j.at("message");
    if (!j.at("assessment").is_null()) r.assessment = assessment_from_json(j.at("assessment"));
    if (!j.at("socratic").is_null()) r.socratic = socratic_from_json(j.at("socratic"));
    for (const auto& k : j.at("knowledge")) r.knowledge.push_back(snippet_from_json(k));
    if (!j.at("gaze").is_null()) r.gaze = gaze_from_json(j.at("gaze"));
    r.gaze_guidance = strings_from(j.at("gaze_guidance"));
    r.mastery = mastery_from_json(j.at("mastery"));
    if (!j.at("reasoning_text").is_null()) r.reasoning_text = j.at("reasoning_text").get<std::string>();
    for (const auto& s : j.at("similar_cases")) r.similar_cases.push_back(similar_from_json(s));
    r.route_log = strings_from(j.at("route_log"));
    r.reflection_mode = j.at("reflection_mode");
    r.gate_passed = j.at("gate_passed");
    if (const auto& h = j.at("focus_hint"); !h.is_null()) {
        r.focus_hint = DirectionalHint{parse_direction(h.at("direction")),
                                       h.at("magnitude") == "far" ? Magnitude::far : Magnitude::near};
    }
    r.best_iou = j.at("best_iou");
    return r;
}

json to_json(const SkillState& s) {
    json history = json::array();
    for (const auto& h : s.history) {
        history.push_back({{"turn_index", h.turn_index},
                           {"correct", h.correct},
                           {"confidence", h.confidence},
                           {"gaze_available", h.gaze_available}});
    }
    return {{"skill_id", s.skill_id},
            {"prior", s.prior},
            {"attempts", s.attempts},
            {"last_posterior", s.last_posterior ? json(*s.last_posterior) : json(nullptr)},
            {"history", history}};
}

SkillState skill_from_json(const json& j) {
    SkillState s;
    s.skill_id = j.at("skill_id");
    s.prior = j.at("prior");
    s.attempts = j.at("attempts");
    if (!j.at("last_posterior").is_null()) s.last_posterior = j.at("last_posterior").get<double>();
    for (const auto& h : j.at("history")) {
        s.history.push_back({h.at("turn_index"), h.at("correct"), h.at("confidence"), h.at("gaze_available")});
    }
    return s;
}

json to_json(const RouteSet& r) {
    return {{"socratic", r.socratic},
            {"knowledge", r.knowledge},
            {"reasoning", r.reasoning},
            {"similarity", r.similarity},
            {"fired_rules", string_list(r.fired_rules)}};
}

RouteSet routes_from_json(const json& j) {
    return {j.at("socratic"), j.at("knowledge"), j.at("reasoning"), j.at("similarity"),
            strings_from(j.at("fired_rules"))};
}

namespace {

json skills_json(const std::map<std::string, SkillState>& skills) {
    json out = json::object();
    for (const auto& [id, s] : skills) out[id] = to_json(s);
    return out;
}

std::map<std::string, SkillState> skills_from(const json& j) {
    std::map<std::string, SkillState> out;
    for (const auto& [id, s] : j.items()) out[id] = skill_from_json(s);
    return out;
}

}  // namespace

json to_json(const SessionState& s) {
    json history = json::array();
    for (const auto& [turn, response] : s.history) {
        history.push_back({{"student_turn", turn_to_json(turn)}, {"tutor_response", to_json(response)}});
    }
    return {{"session_id", s.session_id},
            {"case_id", s.case_id},
            {"turn_count", s.turn_count},
            {"skills", skills_json(s.skills)},
            {"history", history},
            {"resolved_findings", s.resolved_findings},
            {"completed", s.completed},
            {"consecutive_incorrect", s.consecutive_incorrect}};
}

SessionState session_from_json(const json& j) {
    SessionState s;
    s.session_id = j.at("session_id");
    s.case_id = j.at("case_id");
    s.turn_count = j.at("turn_count");
    s.skills = skills_from(j.at("skills"));
    for (const auto& h : j.at("history")) {
        s.history.emplace_back(turn_from_json(h.at("student_turn")), response_from_json(h.at("tutor_response")));
    }
    s.resolved_findings = j.at("resolved_findings").get<std::set<std::string>>();
    s.completed = j.at("completed");
    s.consecutive_incorrect = j.at("consecutive_incorrect").get<std::map<std::string, int>>();
    return s;
}

// ---------------------------------------------------------------------------

std::string header_line(const SessionState& fresh) {
    return json{{"type", "session"}, {"format", kLogFormat}, {"session_id", fresh.session_id}, {"case_id", fresh.case_id}}
        .dump();
}

std::string turn_line(const TurnOutcome& outcome, const StudentTurn& turn) {
    const auto& s = outcome.state;
    return json{{"type", "turn"},
                {"turn", turn.turn_index},
                {"student_turn", turn_to_json(turn)},
                {"route_set", to_json(outcome.routes)},
                {"tutor_response", to_json(outcome.response)},
                {"skill_states_after", skills_json(s.skills)},
                {"resolved_after", s.resolved_findings},
                {"completed_after", s.completed},
                {"consecutive_incorrect_after", s.consecutive_incorrect}}
        .dump();
}

SessionState replay(const std::vector<std::string>& lines, const SessionState& fresh) {
    SessionState s = fresh;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line_no = i + 1;
        if (lines[i].empty()) throw CorruptLog(line_no, "empty line");
        json j;
        try {
            j = json::parse(lines[i]);
        } catch (const json::exception& e) {
            throw CorruptLog(line_no, e.what());
        }
        try {
            const std::string type = j.at("type");
            if (type == "session") {
                if (i != 0) throw CorruptLog(line_no, "header after the first line");
                if (j.at("format") != kLogFormat) throw CorruptLog(line_no, "unsupported log format");
                if (j.at("session_id") != fresh.session_id || j.at("case_id") != fresh.case_id) {
                    throw CorruptLog(line_no, "header does not match the session");
                }
                continue;
            }
            if (type != "turn") throw CorruptLog(line_no, "unknown record type " + type);
            if (i == 0) throw CorruptLog(line_no, "missing session header");
            if (j.at("turn") != s.turn_count) throw CorruptLog(line_no, "turn out of sequence");
            if (s.completed) throw CorruptLog(line_no, "turn recorded after completion");
            auto turn = turn_from_json(j.at("student_turn"));
            auto response = response_from_json(j.at("tutor_response"));
            s.skills = skills_from(j.at("skill_states_after"));
            s.resolved_findings = j.at("resolved_after").get<std::set<std::string>>();
            s.completed = j.at("completed_after");
            s.consecutive_incorrect = j.at("consecutive_incorrect_after").get<std::map<std::string, int>>();
            s.history.emplace_back(std::move(turn), std::move(response));
            ++s.turn_count;
        } catch (const CorruptLog&) {
            throw;
        } catch (const std::exception& e) {
            throw CorruptLog(line_no, e.what());
        }
    }
    return s;
}

std::vector<std::string> read_log_lines(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile("cannot open event log " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < content.size()) {
        auto nl = content.find('\n', start);
        if (nl == std::string::npos) {
            // A final record without its newline was cut off mid-write.
            throw CorruptLog(lines.size() + 1, "truncated final record");
        }
        lines.push_back(content.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::pair<std::string, std::string> read_log_header(const fs::path& path) {
    std::ifstream in(path);
    std::string line;
    if (!in || !std::getline(in, line)) throw CorruptLog(1, "missing header in " + path.string());
    try {
        const auto j = json::parse(line);
        if (j.at("type") != "session") throw CorruptLog(1, "first record is not a header");
        return {j.at("session_id"), j.at("case_id")};
    } catch (const json::exception& e) {
        throw CorruptLog(1, e.what());
    }
}

EventLog::EventLog(fs::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    file_ = std::fopen(path_.c_str(), "ab");
    if (!file_) throw MissingFile("cannot open event log " + path_.string() + " for writing");
}

EventLog::~EventLog() {
    if (file_) std::fclose(file_);
}

void EventLog::append(const std::string& line) {
    std::lock_guard lock(mutex_);
    const std::string record = line + "\n";
    if (std::fwrite(record.data(), 1, record.size(), file_) != record.size() || std::fflush(file_) != 0) {
        throw Error("failed to append to event log " + path_.string());
    }
}

}  // namespace cxrtutor
