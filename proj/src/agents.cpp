#include "cxrtutor/agents.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "cxrtutor/errors.hpp"
#include "cxrtutor/prompts.hpp"

namespace cxrtutor {

namespace p = prompts;

namespace {

std::string tagged(std::string_view tag, const std::string& value) {
    return std::string(tag) + " " + value + "\n";
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool is_difficulty(const std::string& s) { return s == "easy" || s == "medium" || s == "hard"; }

std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        auto line = trim(text.substr(start, nl - start));
        if (!line.empty()) out.push_back(std::move(line));
        start = nl + 1;
    }
    return out;
}

std::string correction_item(const Correction& c) {
    return c.issue.empty() ? c.category : c.category + " = " + c.issue;
}

}  // namespace

std::string render_history(const std::vector<HistoryTurn>& history, int window) {
    const auto n = history.size();
    const auto first = window <= 0 ? n : (n > static_cast<std::size_t>(window) ? n - window : 0);
    std::string out;
    for (auto i = first; i < n; ++i) {
        out += "STUDENT: " + p::one_line(history[i].student_text) + "\n";
        out += "TUTOR: " + p::one_line(history[i].tutor_message) + "\n";
    }
    return out;
}

std::map<std::string, bool> skill_correctness(const AssessmentResult& assessment, const CaseBundle& c,
                                              const SkillEvidence& evidence, const CategoryTable& table) {
    const auto summary = sanitize_case(c, table);
    auto has = [](const std::vector<std::string>& v, const std::string& s) {
        return std::find(v.begin(), v.end(), s) != v.end();
    };
    std::map<std::string, bool> out;
    for (const auto& skill : c.skills) {
        if (skill == kLocalizationSkill) {
            out[skill] = evidence.gate_passed;
            continue;
        }
        if (skill == kSystematicSearchSkill) {
            if (evidence.gaze) out[skill] = evidence.gaze->sequence_score >= evidence.sequence_threshold;
            continue;
        }
        for (std::size_t i = 0; i < c.findings.size(); ++i) {
            if (c.findings[i].label != skill) continue;
            const auto& category = summary.finding_categories[i];
            const bool corrected = std::any_of(assessment.corrections.begin(), assessment.corrections.end(),
                                               [&](const Correction& k) { return k.category == category; });
            const bool supported = has(assessment.reinforcements, category) || has(evidence.gate_passed_labels, skill);
            out[skill] = !corrected && supported;
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

AssessmentAgent::AssessmentAgent(std::shared_ptr<TextBackend> backend, const CategoryTable& table,
                                 int history_window)
    : backend_(std::move(backend)), table_(table), history_window_(history_window) {}

std::string AssessmentAgent::request_body(const StudentTurn& turn, const SanitizedCaseSummary& summary,
                                          const std::vector<HistoryTurn>& history) const {
    std::string body;
    body += tagged(p::kCaseCategories, p::join_items(summary.categories));
    body += tagged(p::kFindingCount, std::to_string(summary.finding_count));
    body += tagged(p::kAnatomyHints, p::join_items(summary.anatomy_hints));
    const auto past = render_history(history, history_window_);
    if (!past.empty()) body += "HISTORY:\n" + past;
    body += tagged(p::kStudentText, p::one_line(turn.text));
    return body;
}

AssessmentResult AssessmentAgent::parse_reply(const std::string& reply, const SanitizedCaseSummary& summary) const {
    bool r = false, c = false, m = false, i = false;
    const auto rv = p::field_value(reply, p::kAssessR, r);
    const auto cv = p::field_value(reply, p::kAssessC, c);
    const auto mv = p::field_value(reply, p::kAssessM, m);
    const auto iv = p::field_value(reply, p::kAssessI, i);
    if (!(r && c && m && i)) throw ParseFailure("assessment reply is missing a tagged section");

    std::set<std::string> vocabulary(table_.vocabulary());
    vocabulary.insert(summary.categories.begin(), summary.categories.end());
    auto categories = [&vocabulary](const std::string& field) {
        std::vector<std::string> out;
        for (auto& item : p::split_items(field)) {
            if (vocabulary.contains(item) && std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
        }
        return out;
    };

    AssessmentResult a;
    a.reinforcements = categories(rv);
    a.missing = categories(mv);
    for (const auto& item : p::split_items(cv)) {
        Correction k;
        const auto eq = item.find('=');
        k.category = trim(item.substr(0, eq));
        if (eq != std::string::npos) k.issue = trim(item.substr(eq + 1));
        if (vocabulary.contains(k.category)) a.corrections.push_back(std::move(k));
    }
    a.impression = iv;
    return a;
}

AssessmentResult AssessmentAgent::assess(const StudentTurn& turn, const CaseBundle& c,
                                         const SanitizedCaseSummary& summary, const std::vector<HistoryTurn>& history,
                                         const SkillEvidence& evidence, const LeakDetector& detector,
                                         const UtteredTerms& uttered) const {
    TextGenRequest req;
    req.system_prompt = p::assessment_system();
    req.user_messages.push_back(request_body(turn, summary, history));
    req.tag = "assessment";

    AssessmentResult result;
    bool parsed = false;
    for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
        if (attempt == 1) req.user_messages.push_back(p::assessment_retry_note());
        const auto reply = backend_->generate(req);
        try {
            result = parse_reply(reply.text, summary);
            parsed = true;
        } catch (const ParseFailure&) {
        }
    }
    if (!parsed) {
        result = {};
        result.missing = summary.categories;
        result.impression = kUnparseableImpression;
        for (const auto& skill : c.skills) {
            if (skill != kSystematicSearchSkill || evidence.gaze) result.per_skill_correct[skill] = false;
        }
        return result;
    }

    for (auto& k : result.corrections) {
        if (!detector.is_safe(k.issue, uttered)) k.issue = "needs another look";
    }
    if (result.impression.empty() || !detector.is_safe(result.impression, uttered)) {
        result.impression = std::to_string(result.reinforcements.size()) + " of " +
                            std::to_string(summary.categories.size()) + " case elements addressed.";
    }
    result.per_skill_correct = skill_correctness(result, c, evidence, table_);
    return result;
}

// ---------------------------------------------------------------------------

SocraticGuidance parse_socratic(const std::string& reply) {
    SocraticGuidance g;
    bool first = true;
    for (const auto& value : p::field_values(reply, p::kSocratic)) {
        const auto parts = p::split_items(value);
        if (parts.empty()) continue;
        g.prompts.push_back(parts[0]);
        if (first) {
            if (parts.size() > 1 && is_difficulty(parts[1])) g.difficulty = parts[1];
            if (parts.size() > 2) g.intent = parts[2];
            first = false;
        }
    }
    return g;
}

SocraticGuidance SocraticAgent::coach(const AssessmentResult& assessment, const SanitizedCaseSummary& summary,
                                      const std::string& student_text, const LeakDetector& detector,
                                      const UtteredTerms& uttered) const {
    if (assessment.missing.empty() && assessment.corrections.empty()) return {};

    std::vector<std::string> corrections;
    for (const auto& k : assessment.corrections) corrections.push_back(correction_item(k));
    std::string body;
    body += tagged(p::kCaseCategories, p::join_items(summary.categories));
    body += tagged(p::kMissing, p::join_items(assessment.missing));
    body += tagged(p::kCorrections, p::join_items(corrections));
    body += tagged(p::kStudentText, p::one_line(student_text));

    TextGenRequest req;
    req.system_prompt = p::socratic_system();
    req.user_messages.push_back(std::move(body));
    req.tag = "socratic";
    auto parsed = parse_socratic(backend_->generate(req).text);

    SocraticGuidance out;
    out.difficulty = parsed.difficulty;
    out.intent = detector.is_safe(parsed.intent, uttered) ? parsed.intent : "";
    for (auto& q : parsed.prompts) {
        if (detector.is_safe(q, uttered)) out.prompts.push_back(std::move(q));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string to_string(ComposeOutcome o) {
    switch (o) {
        case ComposeOutcome::generated: return "generated";
        case ComposeOutcome::regenerated: return "regenerated";
        case ComposeOutcome::templated: return "templated";
    }
    return "unknown";
}

std::string responder_request(const ComposeInputs& in) {
    std::string body;
    body += tagged(p::kMode, in.reflection_mode ? "reflection" : "tutoring");
    if (in.assessment) {
        body += tagged("IMPRESSION:", p::one_line(in.assessment->impression));
        body += tagged("REINFORCED:", p::join_items(in.assessment->reinforcements));
        std::vector<std::string> corrections;
        for (const auto& k : in.assessment->corrections) corrections.push_back(correction_item(k));
        body += tagged("CORRECTIONS:", p::join_items(corrections));
    }
    if (in.socratic && !in.reflection_mode) body += tagged("SOCRATIC_QUESTIONS:", p::join_items(in.socratic->prompts));
    std::vector<std::string> knowledge;
    for (const auto& k : in.knowledge) {
        knowledge.push_back(k.citation_id ? k.text + " [PMID " + *k.citation_id + "]" : k.text);
    }
    if (!knowledge.empty()) body += tagged("KNOWLEDGE:", p::join_items(knowledge));
    if (!in.gaze_guidance.empty()) body += tagged("GAZE:", p::join_items(in.gaze_guidance));
    if (in.reasoning_text) body += tagged("REASONING:", p::join_items(lines_of(*in.reasoning_text)));
    std::vector<std::string> similar;
    for (const auto& s : in.similar_cases) similar.push_back(s.case_id + " (score " + format_score(s.score) + ")");
    if (!similar.empty()) body += tagged("SIMILAR:", p::join_items(similar));
    std::vector<std::string> progress;
    for (const auto& [skill, m] : in.mastery) progress.push_back(skill + " " + format_score(m.mastery));
    if (!progress.empty()) body += tagged("MASTERY:", p::join_items(progress));
    body += tagged(p::kStudentText, p::one_line(in.student_text));
    return body;
}

std::string template_message(const ComposeInputs& in, const LeakDetector& detector, const UtteredTerms& uttered) {
    std::vector<std::string> lines;
    for (const auto& f : in.focus_guidance) lines.push_back(f);
    if (in.reflection_mode) lines.emplace_back("Well done, this case is complete.");
    if (in.assessment) {
        if (!in.assessment->impression.empty()) lines.push_back("Overall: " + in.assessment->impression);
        if (!in.assessment->reinforcements.empty()) {
            std::string s = "You addressed:";
            for (std::size_t i = 0; i < in.assessment->reinforcements.size(); ++i) {
                s += (i ? ", " : " ") + in.assessment->reinforcements[i];
            }
            lines.push_back(s + ".");
        }
        for (const auto& k : in.assessment->corrections) lines.push_back("Reconsider: " + correction_item(k) + ".");
    }
    if (in.socratic && !in.reflection_mode) {
        for (const auto& q : in.socratic->prompts) lines.push_back(q);
    }
    for (const auto& k : in.knowledge) lines.push_back("Background: " + p::one_line(k.text));
    for (const auto& g : in.gaze_guidance) lines.push_back("Search pattern: " + g + ".");
    if (in.reasoning_text) {
        for (const auto& l : lines_of(*in.reasoning_text)) lines.push_back("Reasoning guide: " + l);
    }
    for (const auto& s : in.similar_cases) {
        lines.push_back("Compare with case " + s.case_id + " (score " + format_score(s.score) + ").");
    }
    if (in.reflection_mode) lines.emplace_back("Next step: take the same systematic approach to a new case.");

    std::string joined;
    for (const auto& l : lines) joined += l + "\n";
    auto safe = keep_safe_lines(joined, detector, uttered);
    while (!safe.empty() && safe.back() == '\n') safe.pop_back();
    if (safe.empty()) safe = "Keep going: review the image systematically and submit your next read.";
    return safe;
}

ComposedMessage FacultyResponder::compose(const ComposeInputs& in, const LeakDetector& detector,
                                          const UtteredTerms& uttered) const {
    TextGenRequest req;
    req.user_messages.push_back(responder_request(in));
    req.tag = "responder";
    for (int attempt = 0; attempt < 2; ++attempt) {
        req.system_prompt = p::responder_system(in.reflection_mode, attempt == 1);
        std::string draft;
        try {
            const auto reply = backend_->generate(req);
            const auto values = p::field_values(reply.text, p::kRespond);
            for (const auto& v : values) {
                if (!v.empty()) draft += (draft.empty() ? "" : "\n") + v;
            }
            if (values.empty()) draft = trim(reply.text);
        } catch (const InvariantViolation&) {
            throw;
        } catch (const Error&) {
            break;
        }
        if (!draft.empty() && detector.is_safe(draft, uttered)) {
            return {draft, attempt == 0 ? ComposeOutcome::generated : ComposeOutcome::regenerated};
        }
    }
    return {template_message(in, detector, uttered), ComposeOutcome::templated};
}

}  // namespace cxrtutor
