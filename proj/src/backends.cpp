#include "cxrtutor/backends.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <thread>

#include "cxrtutor/errors.hpp"
#include "cxrtutor/prompts.hpp"

namespace cxrtutor {

using json = nlohmann::json;
namespace p = prompts;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ms(Clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

void log_reply(const std::string& tag, const BackendReply& r) {
    spdlog::debug("backend reply tag={} backend={} latency_ms={} cached={}", tag, r.backend_id, r.latency_ms,
                  r.from_cache);
}

// Length-prefixed so ("ab","c") and ("a","bc") hash differently.
std::uint64_t request_hash(const TextGenRequest& req) {
    std::string buf;
    auto put = [&buf](const std::string& s) {
        buf += std::to_string(s.size());
        buf += ':';
        buf += s;
    };
    put(req.system_prompt);
    for (const auto& m : req.user_messages) put(m);
    return fnv1a64(buf);
}

std::string joined_user(const TextGenRequest& req) {
    std::string body;
    for (const auto& m : req.user_messages) {
        body += m;
        body += '\n';
    }
    return body;
}

bool contains(std::string_view hay, std::string_view needle) { return hay.find(needle) != std::string_view::npos; }

bool has_tokens(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > hay.size()) return false;
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

bool asks_for_help(const std::vector<std::string>& tokens) {
    return std::find(tokens.begin(), tokens.end(), "why") != tokens.end() ||
           std::find(tokens.begin(), tokens.end(), "help") != tokens.end();
}

template <std::size_t N>
const char* pick(const char* const (&options)[N], std::uint64_t h) {
    return options[h % N];
}

}  // namespace

// ---------------------------------------------------------------------------

BackendReply TextBackend::generate(const TextGenRequest& req) {
    if (req.user_messages.empty()) throw PreconditionViolation("text request without user messages");
    {
        std::lock_guard lock(inspector_mutex_);
        if (inspector_) inspector_(req.tag, req.system_prompt + "\n" + joined_user(req));
    }
    const auto start = Clock::now();
    auto reply = do_generate(req);
    reply.latency_ms = std::max<std::int64_t>(reply.latency_ms, elapsed_ms(start));
    if (reply.backend_id.empty()) reply.backend_id = id();
    log_reply(req.tag, reply);
    return reply;
}

void TextBackend::set_inspector(RequestInspector inspector) {
    std::lock_guard lock(inspector_mutex_);
    inspector_ = std::move(inspector);
}

BackendReply VisionBackend::reason(const VisionReasonRequest& req) {
    if (!req.image || req.image->empty()) throw PreconditionViolation("vision request with an empty image");
    {
        std::lock_guard lock(inspector_mutex_);
        if (inspector_) inspector_(req.tag, req.context_text);
    }
    const auto start = Clock::now();
    auto reply = do_reason(req);
    reply.latency_ms = std::max<std::int64_t>(reply.latency_ms, elapsed_ms(start));
    if (reply.backend_id.empty()) reply.backend_id = id();
    log_reply(req.tag, reply);
    return reply;
}

void VisionBackend::set_inspector(RequestInspector inspector) {
    std::lock_guard lock(inspector_mutex_);
    inspector_ = std::move(inspector);
}

// ---------------------------------------------------------------------------
// Stub text backend

StubTextBackend::StubTextBackend(const CategoryTable& table) : table_(table) {}

BackendReply StubTextBackend::do_generate(const TextGenRequest& req) {
    const auto h = request_hash(req);
    const auto body = joined_user(req);
    std::string text;
    if (contains(req.system_prompt, p::kRoleAssessment)) {
        text = assess_reply(body);
    } else if (contains(req.system_prompt, p::kRoleSocratic)) {
        text = socratic_reply(body, h);
    } else if (contains(req.system_prompt, p::kRoleResponder)) {
        bool found = false;
        const bool reflection = p::field_value(body, p::kMode, found) == "reflection";
        text = respond_reply(body, h, reflection);
    } else if (contains(req.system_prompt, p::kRoleKnowledgeFallback)) {
        text = fallback_summary_reply(body, h);
    } else {
        text = "RESPOND: Noted. (ref " + hex64(h).substr(0, 8) + ")";
    }
    return {text, 0, id(), false};
}

std::string StubTextBackend::assess_reply(const std::string& body) const {
    bool found = false;
    const auto case_categories = p::split_items(p::field_value(body, p::kCaseCategories, found));
    const auto student = p::field_value(body, p::kStudentText, found);
    const auto tokens = normalize_tokens(student);

    std::vector<std::string> mentioned;
    std::vector<std::string> mentioned_labels;  // categories reached through a finding name
    auto mention = [&mentioned](const std::string& category) {
        if (std::find(mentioned.begin(), mentioned.end(), category) == mentioned.end()) mentioned.push_back(category);
    };
    for (const auto& [label, category] : table_.labels()) {
        if (has_tokens(tokens, normalize_tokens(label))) {
            mention(category);
            if (std::find(mentioned_labels.begin(), mentioned_labels.end(), category) == mentioned_labels.end()) {
                mentioned_labels.push_back(category);
            }
        }
    }
    for (const auto& [keyword, category] : table_.keywords()) {
        if (has_tokens(tokens, normalize_tokens(keyword))) mention(category);
    }
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        if (is_number_token(tokens[i]) && is_unit_token(tokens[i + 1])) mention(kMeasurementCategory);
    }
    for (const auto& category : case_categories) {
        if (has_tokens(tokens, normalize_tokens(category))) mention(category);
    }

    std::vector<std::string> reinforced, missing, corrections;
    for (const auto& category : case_categories) {
        if (std::find(mentioned.begin(), mentioned.end(), category) != mentioned.end()) reinforced.push_back(category);
        else missing.push_back(category);
    }
    for (const auto& category : mentioned_labels) {
        if (std::find(case_categories.begin(), case_categories.end(), category) == case_categories.end()) {
            corrections.push_back(category + " = not supported by this image");
        }
    }
    std::string impression;
    if (case_categories.empty()) {
        impression = "No gradable elements were provided.";
    } else if (reinforced.size() == case_categories.size() && corrections.empty()) {
        impression = "All case elements were addressed.";
    } else {
        impression = std::to_string(reinforced.size()) + " of " + std::to_string(case_categories.size()) +
                     " case elements addressed" + (corrections.empty() ? "." : ", with points to reconsider.");
    }
    return std::string(p::kAssessR) + " " + p::join_items(reinforced) + "\n" + std::string(p::kAssessC) + " " +
           p::join_items(corrections) + "\n" + std::string(p::kAssessM) + " " + p::join_items(missing) + "\n" +
           std::string(p::kAssessI) + " " + impression + "\n";
}

std::string StubTextBackend::socratic_reply(const std::string& body, std::uint64_t h) const {
    bool found = false;
    const auto missing = p::split_items(p::field_value(body, p::kMissing, found));
    const auto corrections = p::split_items(p::field_value(body, p::kCorrections, found));
    const auto student_tokens = normalize_tokens(p::field_value(body, p::kStudentText, found));

    static const char* const kProbe[] = {
        "What do you notice about the %s in this image?",
        "How would you describe the %s here?",
        "Which features of the %s deserve a closer look?",
    };
    static const char* const kChallenge[] = {
        "What features would support a %s, and what argues against it?",
        "If you were to defend a %s, which image evidence would you point to?",
    };
    auto fill = [](const char* pattern, const std::string& theme) {
        std::string s(pattern);
        s.replace(s.find("%s"), 2, theme);
        return s;
    };
    auto theme_of = [](std::string category) {
        std::replace(category.begin(), category.end(), '/', ' ');
        return category;
    };

    std::string difficulty = corrections.empty() ? (missing.size() > 1 ? "medium" : "easy") : "hard";
    std::vector<std::string> lines;
    if (asks_for_help(student_tokens)) {
        lines.push_back("Which part of the image would you revisit first, and what would you look for there? | easy | scaffold");
    }
    for (std::size_t i = 0; i < corrections.size(); ++i) {
        const auto category = corrections[i].substr(0, corrections[i].find('='));
        std::string c = category;
        while (!c.empty() && c.back() == ' ') c.pop_back();
        lines.push_back(fill(pick(kChallenge, h + i), theme_of(c)) + " | " + difficulty + " | challenge");
    }
    for (std::size_t i = 0; i < missing.size(); ++i) {
        lines.push_back(fill(pick(kProbe, h + i), theme_of(missing[i])) + " | " + difficulty + " | probe");
    }
    std::string out;
    for (const auto& l : lines) out += std::string(p::kSocratic) + " " + l + "\n";
    return out;
}

std::string StubTextBackend::respond_reply(const std::string& body, std::uint64_t h, bool reflection) const {
    bool found = false;
    auto field = [&](std::string_view tag) { return p::split_items(p::field_value(body, tag, found)); };
    auto joined = [](const std::vector<std::string>& items) {
        std::string s;
        for (const auto& i : items) s += (s.empty() ? "" : "; ") + i;
        return s;
    };
    const auto impression = p::field_value(body, "IMPRESSION:", found);
    const auto student_tokens = normalize_tokens(p::field_value(body, p::kStudentText, found));

    std::vector<std::string> lines;
    if (reflection) {
        static const char* const kOpen[] = {
            "Excellent work: you have resolved the findings in this case.",
            "Well done, this case is complete.",
        };
        lines.emplace_back(pick(kOpen, h));
        if (!impression.empty()) lines.push_back("Overall: " + impression);
        for (const auto& k : field("KNOWLEDGE:")) lines.push_back("For consolidation of learning: " + k);
        const auto progress = field("MASTERY:");
        if (!progress.empty()) lines.push_back("Progress: " + joined(progress) + ".");
        lines.emplace_back("Next step: take the same systematic approach to a new case.");
    } else {
        static const char* const kOpen[] = {
            "Thanks for walking me through your read.",
            "Good effort on this film.",
            "Let's review what you submitted.",
        };
        lines.emplace_back(pick(kOpen, h));
        if (asks_for_help(student_tokens)) lines.emplace_back("Let's work through it together, one zone at a time.");
        if (!impression.empty()) lines.push_back("Overall: " + impression);
        const auto reinforced = field("REINFORCED:");
        if (!reinforced.empty()) lines.push_back("You addressed: " + joined(reinforced) + ".");
        for (const auto& c : field("CORRECTIONS:")) lines.push_back("Reconsider: " + c + ".");
        for (const auto& q : field("SOCRATIC_QUESTIONS:")) lines.push_back(q);
        for (const auto& k : field("KNOWLEDGE:")) lines.push_back("Background: " + k);
        for (const auto& g : field("GAZE:")) lines.push_back("Search pattern: " + g + ".");
        for (const auto& r : field("REASONING:")) lines.push_back("Reasoning guide: " + r);
        const auto similar = field("SIMILAR:");
        if (!similar.empty()) lines.push_back("Similar cases to compare: " + joined(similar) + ".");
        const auto progress = field("MASTERY:");
        if (!progress.empty()) lines.push_back("Progress: " + joined(progress) + ".");
    }
    std::string out;
    for (const auto& l : lines) out += std::string(p::kRespond) + " " + l + "\n";
    return out;
}

std::string StubTextBackend::fallback_summary_reply(const std::string& body, std::uint64_t h) const {
    bool found = false;
    const auto topic = p::field_value(body, p::kTopic, found);
    static const char* const kLead[] = {
        "A structured review helps when studying %s.",
        "Reading %s well depends on a consistent approach.",
    };
    std::string lead(pick(kLead, h));
    lead.replace(lead.find("%s"), 2, topic.empty() ? "chest radiographs" : topic);
    return std::string(p::kSummary) + " " + lead +
           " Compare both sides, check every zone against its counterpart, and correlate the appearance "
           "with the clinical question before committing to an impression.\n";
}

// ---------------------------------------------------------------------------
// Stub vision backend

BackendReply StubVisionBackend::do_reason(const VisionReasonRequest& req) {
    if (req.image->size() > max_image_bytes_) throw ImageTooLarge("image exceeds the vision byte cap");
    const auto h = fnv1a64(req.context_text);
    static const char* const kOrders[][4] = {
        {"Confirm projection, rotation and inspiration", "Trace the airway, mediastinal contours and both hila",
         "Compare each lung zone with its counterpart", "Review the pleural margins, diaphragm and bones"},
        {"Check technical adequacy first", "Compare upper, middle and lower zones side by side",
         "Inspect the cardiac and mediastinal silhouettes", "Finish with the review areas behind the heart and below the diaphragm"},
        {"Assess image quality and positioning", "Sweep the lungs from apex to base on each side",
         "Look at the heart size and the mediastinum", "Check lines, tubes and the skeleton"},
    };
    const auto& order = kOrders[h % 3];
    std::string text;
    for (int i = 0; i < 4; ++i) text += "Step " + std::to_string(i + 1) + ": " + order[i] + ".\n";
    text += "Step 5: Relate what you see in the region you marked to your written impression.\n";
    text += "Trace id: " + hex64(h).substr(0, 8);
    return {text, 0, id(), false};
}

// ---------------------------------------------------------------------------
// Remote clients

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (i < bytes.size()) {
        unsigned v = bytes[i] << 16;
        if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += (i + 1 < bytes.size()) ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::string post_json_with_retries(const RemoteEndpoint& endpoint, const std::string& body) {
    if (endpoint.base_url.empty()) throw BackendMisconfigured("remote backend has no base URL");
    httplib::Client client(endpoint.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

    auto backoff = endpoint.backoff;
    bool timed_out = false;
    int last_status = 0;
    std::string last_error;
    for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        auto res = client.Post(endpoint.path, headers, body, "application/json");
        if (!res) {
            const auto err = res.error();
            timed_out = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout ||
                        err == httplib::Error::Write;
            last_error = httplib::to_string(err);
            continue;
        }
        timed_out = false;
        last_status = res->status;
        if (res->status >= 200 && res->status < 300) return res->body;
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status < 500 && res->status != 429) break;
    }
    if (timed_out) throw BackendTimeout("request to " + endpoint.base_url + endpoint.path + " timed out");
    throw BackendHttpError(last_status, "request to " + endpoint.base_url + endpoint.path + " failed: " + last_error);
}

RemoteTextBackend::RemoteTextBackend(RemoteEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

BackendReply RemoteTextBackend::do_generate(const TextGenRequest& req) {
    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", req.system_prompt}});
    for (const auto& m : req.user_messages) messages.push_back({{"role", "user"}, {"content", m}});
    json body = {{"model", endpoint_.model},
                 {"messages", messages},
                 {"temperature", req.temperature},
                 {"max_tokens", req.max_tokens}};
    const auto raw = post_json_with_retries(endpoint_, body.dump());
    try {
        const auto reply = json::parse(raw);
        return {reply.at("choices").at(0).at("message").at("content").get<std::string>(), 0, id(), false};
    } catch (const json::exception& e) {
        throw BackendHttpError(200, std::string("unexpected chat-completions reply: ") + e.what());
    }
}

RemoteVisionBackend::RemoteVisionBackend(RemoteEndpoint endpoint, std::size_t max_image_bytes)
    : endpoint_(std::move(endpoint)), max_image_bytes_(max_image_bytes) {}

BackendReply RemoteVisionBackend::do_reason(const VisionReasonRequest& req) {
    if (req.image->size() > max_image_bytes_) throw ImageTooLarge("image exceeds the vision byte cap");
    json body = {{"model", endpoint_.model}, {"prompt", req.context_text}, {"image_base64", base64_encode(*req.image)}};
    const auto raw = post_json_with_retries(endpoint_, body.dump());
    try {
        return {json::parse(raw).at("text").get<std::string>(), 0, id(), false};
    } catch (const json::exception& e) {
        throw BackendHttpError(200, std::string("unexpected vision reply: ") + e.what());
    }
}

}  // namespace cxrtutor
