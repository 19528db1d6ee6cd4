#include "cxrtutor/prompts.hpp"

#include <sstream>

namespace cxrtutor::prompts {
namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string header(std::string_view role) {
    return std::string(role) + "\nPROMPT_VERSION: " + std::string(kPromptVersion) + "\n";
}

}  // namespace

std::string assessment_system() {
    return header(kRoleAssessment) +
           "You grade a radiology trainee's chest radiograph interpretation against a sanitized case "
           "summary. Use only the listed case categories; never state values, measurements, locations "
           "or finding names the trainee has not written.\n"
           "Reply with exactly four lines:\n"
           "ASSESS_R: categories the trainee addressed correctly, separated by |\n"
           "ASSESS_C: corrections written as category = issue, separated by |\n"
           "ASSESS_M: case categories the trainee has not addressed, separated by |\n"
           "ASSESS_I: a one-sentence overall impression\n";
}

std::string assessment_retry_note() {
    return "Your previous reply could not be parsed. Reply again using exactly the four tagged lines "
           "ASSESS_R:, ASSESS_C:, ASSESS_M: and ASSESS_I:.";
}

std::string socratic_system() {
    return header(kRoleSocratic) +
           "You coach a radiology trainee with open-ended questions. Refer to themes by the given "
           "categories only and never reveal values or answers.\n"
           "Reply with one line per question: SOCRATIC: question | difficulty (easy, medium or hard) | "
           "pedagogical intent\n";
}

std::string responder_system(bool reflection, bool strict) {
    std::string s = header(kRoleResponder) +
                    "You are an attending radiologist writing one feedback message to a trainee. Weave "
                    "the provided sections into natural prose. Prefix every line with RESPOND:.\n";
    if (reflection) {
        s += "The case is complete: give concise encouragement and next-step planning. Do not ask new "
             "questions.\n";
    }
    if (strict) {
        s += "STRICT: a previous draft revealed hidden case details. Use only the wording of the "
             "provided sections; do not mention any measurement, location, descriptor or finding name.\n";
    }
    return s;
}

std::string knowledge_fallback_system() {
    return header(kRoleKnowledgeFallback) +
           "Write a short teaching summary (at most three sentences) on the given topic for a radiology "
           "trainee. Keep it general: do not describe any specific patient, measurement or location. "
           "Prefix the summary with SUMMARY:.\n";
}

std::string one_line(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) out += (c == '\n' || c == '\r') ? ' ' : c;
    return out;
}

std::string join_items(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) out += " | ";
        auto flat = one_line(item);
        for (auto& c : flat) {
            if (c == '|') c = '/';
        }
        out += flat;
    }
    return out;
}

std::vector<std::string> split_items(std::string_view field) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= field.size()) {
        auto bar = field.find('|', start);
        if (bar == std::string_view::npos) bar = field.size();
        auto item = trim(field.substr(start, bar - start));
        if (!item.empty()) out.push_back(std::move(item));
        start = bar + 1;
    }
    return out;
}

std::string field_value(std::string_view body, std::string_view tag, bool& found) {
    found = false;
    std::string value;
    std::istringstream in{std::string(body)};
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.rfind(tag, 0) == 0) {
            found = true;
            value = trim(std::string_view(t).substr(tag.size()));
        }
    }
    return value;
}

std::vector<std::string> field_values(std::string_view body, std::string_view tag) {
    std::vector<std::string> out;
    std::istringstream in{std::string(body)};
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.rfind(tag, 0) == 0) out.push_back(trim(std::string_view(t).substr(tag.size())));
    }
    return out;
}

}  // namespace cxrtutor::prompts
