#include "cxrtutor/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "cxrtutor/errors.hpp"

namespace fs = std::filesystem;

namespace cxrtutor {

std::string to_string(Component c) {
    switch (c) {
        case Component::gaze: return "gaze";
        case Component::bkt: return "bkt";
        case Component::reasoning: return "reasoning";
        case Component::knowledge: return "knowledge";
    }
    return "unknown";
}

Component parse_component(const std::string& name) {
    if (name == "gaze") return Component::gaze;
    if (name == "bkt") return Component::bkt;
    if (name == "reasoning") return Component::reasoning;
    if (name == "knowledge") return Component::knowledge;
    throw std::invalid_argument("unknown component '" + name + "'");
}

std::string AblationConfig::name() const {
    if (disable.empty()) return "full";
    std::string s;
    for (auto c : disable) s += (s.empty() ? "-" : ",-") + to_string(c);
    return s;
}

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("not a number");
    return d;
}

std::int64_t to_int(const std::string& v) {
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("not an integer");
    return out;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("not a boolean");
}

std::chrono::milliseconds seconds_ms(const std::string& v) {
    return std::chrono::milliseconds(static_cast<std::int64_t>(to_double(v) * 1000.0));
}

}  // namespace

AblationConfig parse_ablation(const std::string& list) {
    AblationConfig a;
    std::stringstream in(list);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) a.disable.insert(parse_component(item));
    }
    return a;
}

const BktParams& EngineConfig::params_for(const std::string& skill_id) const {
    auto it = bkt_overrides.find(skill_id);
    return it == bkt_overrides.end() ? bkt : it->second;
}

EngineConfig parse_config(std::string_view text, const fs::path& base_dir) {
    EngineConfig c;
    c.text.endpoint.path = "/v1/chat/completions";
    c.text.endpoint.timeout = std::chrono::seconds(30);
    c.vision.endpoint.path = "/v1/reason";
    c.vision.endpoint.timeout = std::chrono::seconds(120);

    auto path = [&base_dir](const std::string& v) -> fs::path {
        fs::path p(v);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    auto backend_key = [&](BackendSettings& b, const std::string& k, const std::string& v) {
        if (k == "kind") {
            if (v != "stub" && v != "remote") throw std::invalid_argument("kind must be stub or remote");
            b.kind = v;
        } else if (k == "base_url") b.endpoint.base_url = v;
        else if (k == "path") b.endpoint.path = v;
        else if (k == "api_key") b.endpoint.api_key = v;
        else if (k == "model") b.endpoint.model = v;
        else if (k == "timeout_s") b.endpoint.timeout = seconds_ms(v);
        else if (k == "retries") b.endpoint.retries = static_cast<int>(to_int(v));
        else if (k == "backoff_ms") b.endpoint.backoff = std::chrono::milliseconds(to_int(v));
        else if (k == "max_image_bytes") b.max_image_bytes = static_cast<std::size_t>(to_int(v));
        else return false;
        return true;
    };

    const std::map<std::string, std::function<void(const std::string&)>> setters = {
        {"focus.iou_threshold", [&](const std::string& v) { c.iou_threshold = to_double(v); }},
        {"gaze.sequence_nudge_threshold", [&](const std::string& v) { c.sequence_nudge_threshold = to_double(v); }},
        {"bkt.p_init", [&](const std::string& v) { c.bkt.p_init = to_double(v); }},
        {"bkt.p_learn", [&](const std::string& v) { c.bkt.p_learn = to_double(v); }},
        {"bkt.p_guess", [&](const std::string& v) { c.bkt.p_guess = to_double(v); }},
        {"bkt.p_slip", [&](const std::string& v) { c.bkt.p_slip = to_double(v); }},
        {"agents.history_window", [&](const std::string& v) { c.history_window = static_cast<int>(to_int(v)); }},
        {"knowledge.online", [&](const std::string& v) { c.knowledge_online = to_bool(v); }},
        {"knowledge.base_url", [&](const std::string& v) { c.knowledge_base_url = v; }},
        {"knowledge.timeout_s", [&](const std::string& v) { c.knowledge_timeout_ms = seconds_ms(v).count(); }},
        {"knowledge.max_results", [&](const std::string& v) { c.knowledge.max_results = static_cast<int>(to_int(v)); }},
        {"knowledge.ttl_hours", [&](const std::string& v) { c.knowledge.ttl_hours = to_double(v); }},
        {"knowledge.cache_path", [&](const std::string& v) {
             if (v.empty()) c.knowledge.cache_path.reset();
             else c.knowledge.cache_path = path(v);
         }},
        {"knowledge.min_interval_ms", [&](const std::string& v) { c.knowledge.min_interval_ms = to_int(v); }},
        {"knowledge.retries", [&](const std::string& v) { c.knowledge.retries = static_cast<int>(to_int(v)); }},
        {"knowledge.backoff_ms", [&](const std::string& v) { c.knowledge.backoff_ms = to_int(v); }},
        {"knowledge.api_key", [&](const std::string& v) { c.knowledge.api_key = v; }},
        {"similarity.k", [&](const std::string& v) { c.similarity_k = static_cast<int>(to_int(v)); }},
        {"similarity.w_label", [&](const std::string& v) { c.similarity_weights.label = to_double(v); }},
        {"similarity.w_spatial", [&](const std::string& v) { c.similarity_weights.spatial = to_double(v); }},
        {"similarity.w_meta", [&](const std::string& v) { c.similarity_weights.meta = to_double(v); }},
        {"similarity.overlay_dir", [&](const std::string& v) { c.overlay_dir = path(v); }},
        {"routing.knowledge_mastery", [&](const std::string& v) { c.routing.knowledge_mastery = to_double(v); }},
        {"routing.knowledge_attempts", [&](const std::string& v) { c.routing.knowledge_attempts = static_cast<int>(to_int(v)); }},
        {"routing.reasoning_mastery", [&](const std::string& v) { c.routing.reasoning_mastery = to_double(v); }},
        {"routing.reasoning_attempts", [&](const std::string& v) { c.routing.reasoning_attempts = static_cast<int>(to_int(v)); }},
        {"routing.struggle_streak", [&](const std::string& v) { c.routing.struggle_streak = static_cast<int>(to_int(v)); }},
        {"resolution.mastery_threshold", [&](const std::string& v) { c.routing.resolution_mastery = to_double(v); }},
        {"server.port", [&](const std::string& v) { c.server_port = static_cast<int>(to_int(v)); }},
        {"server.turn_timeout_s", [&](const std::string& v) { c.turn_timeout_s = to_double(v); }},
        {"server.sessions_dir", [&](const std::string& v) { c.sessions_dir = path(v); }},
        {"server.static_dir", [&](const std::string& v) { c.static_dir = v.empty() ? fs::path() : path(v); }},
        {"server.leak_assert", [&](const std::string& v) { c.leak_assert = to_bool(v); }},
        {"library.dir", [&](const std::string& v) { c.library_dir = path(v); }},
        {"sanitizer.category_map", [&](const std::string& v) { c.category_map = v.empty() ? fs::path() : path(v); }},
        {"ablation.disable", [&](const std::string& v) { c.ablation = parse_ablation(v); }},
    };

    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = trim(t.substr(0, eq));
        const auto value = trim(t.substr(eq + 1));
        try {
            if (auto it = setters.find(key); it != setters.end()) {
                it->second(value);
            } else if (key.rfind("backends.text.", 0) == 0 && backend_key(c.text, key.substr(14), value)) {
            } else if (key.rfind("backends.vision.", 0) == 0 && backend_key(c.vision, key.substr(16), value)) {
            } else if (key.rfind("bkt.skill.", 0) == 0) {
                // bkt.skill.<skill id>.<param>
                const auto rest = key.substr(10);
                const auto dot = rest.rfind('.');
                if (dot == std::string::npos) throw std::invalid_argument("expected bkt.skill.<id>.<param>");
                auto [it, inserted] = c.bkt_overrides.try_emplace(rest.substr(0, dot), c.bkt);
                const auto param = rest.substr(dot + 1);
                const double d = to_double(value);
                if (param == "p_init") it->second.p_init = d;
                else if (param == "p_learn") it->second.p_learn = d;
                else if (param == "p_guess") it->second.p_guess = d;
                else if (param == "p_slip") it->second.p_slip = d;
                else throw std::invalid_argument("unknown parameter " + param);
            } else {
                throw std::invalid_argument("unknown key");
            }
        } catch (const std::exception& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + " (" + key + "): " + e.what());
        }
    }

    if (!c.bkt.valid()) throw std::invalid_argument("bkt parameters are out of range");
    for (const auto& [skill, params] : c.bkt_overrides) {
        if (!params.valid()) throw std::invalid_argument("bkt parameters for " + skill + " are out of range");
    }
    const auto& w = c.similarity_weights;
    if (w.label < 0 || w.spatial < 0 || w.meta < 0 || std::abs(w.label + w.spatial + w.meta - 1.0) > 1e-9) {
        throw std::invalid_argument("similarity weights must be non-negative and sum to 1");
    }
    if (c.similarity_k < 1) throw std::invalid_argument("similarity.k must be at least 1");
    return c;
}

EngineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

void apply_environment(EngineConfig& config) {
    auto fill = [](std::string& target, const char* var) {
        if (!target.empty()) return;
        if (const char* v = std::getenv(var)) target = v;
    };
    fill(config.text.endpoint.base_url, "CXRTUTOR_TEXT_URL");
    fill(config.text.endpoint.api_key, "CXRTUTOR_TEXT_API_KEY");
    fill(config.vision.endpoint.base_url, "CXRTUTOR_VISION_URL");
    fill(config.vision.endpoint.api_key, "CXRTUTOR_VISION_API_KEY");
    fill(config.knowledge.api_key, "NCBI_API_KEY");
}

}  // namespace cxrtutor
