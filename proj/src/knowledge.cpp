#include "cxrtutor/knowledge.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <thread>

#include "cxrtutor/errors.hpp"
#include "cxrtutor/prompts.hpp"

namespace cxrtutor {

using json = nlohmann::json;

std::string to_string(SnippetSource s) { return s == SnippetSource::pubmed ? "pubmed" : "fallback"; }

std::string truncate_at_sentence(const std::string& text, std::size_t limit) {
    if (text.size() <= limit) return text;
    const auto window = text.substr(0, limit);
    std::size_t cut = std::string::npos;
    for (std::size_t i = 0; i < window.size(); ++i) {
        const char c = window[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == window.size() || window[i + 1] == ' ')) cut = i + 1;
    }
    if (cut != std::string::npos && cut > 0) return window.substr(0, cut);
    const auto space = window.find_last_of(' ');
    if (space != std::string::npos && space > 0) return window.substr(0, space);
    return window;
}

// ---------------------------------------------------------------------------
// Transport and clocks

HttplibGetTransport::HttplibGetTransport(std::string base_url, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
    const auto scheme = base_url.find("://");
    const auto path_start = base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
        scheme_host_ = base_url;
    } else {
        scheme_host_ = base_url.substr(0, path_start);
        path_prefix_ = base_url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
}

HttpResult HttplibGetTransport::get(const std::string& path_and_query) {
    httplib::Client client(scheme_host_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    auto res = client.Get(path_prefix_ + path_and_query);
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->body};
}

std::int64_t SystemClock::now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void SystemClock::sleep_ms(std::int64_t ms) {
    if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

std::int64_t VirtualClock::now_ms() {
    std::lock_guard lock(mutex_);
    return now_;
}

void VirtualClock::sleep_ms(std::int64_t ms) { advance(ms); }

void VirtualClock::advance(std::int64_t ms) {
    std::lock_guard lock(mutex_);
    if (ms > 0) now_ += ms;
}

// ---------------------------------------------------------------------------
// Parsing

std::string url_encode(const std::string& s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else if (c == ' ') {
            out += '+';
        } else {
            out += '%';
            out += kHex[c >> 4];
            out += kHex[c & 15];
        }
    }
    return out;
}

std::vector<std::string> parse_esearch_ids(const std::string& body) {
    std::vector<std::string> ids;
    try {
        const auto j = json::parse(body);
        for (const auto& id : j.at("esearchresult").at("idlist")) ids.push_back(id.get<std::string>());
    } catch (const json::exception& e) {
        throw UpstreamHttpError(std::string("malformed esearch reply: ") + e.what());
    }
    return ids;
}

namespace {

std::string decode_entities(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out += s[i];
            continue;
        }
        const auto semi = s.find(';', i);
        if (semi == std::string::npos || semi - i > 10) {
            out += s[i];
            continue;
        }
        const auto name = s.substr(i + 1, semi - i - 1);
        if (name == "amp") out += '&';
        else if (name == "lt") out += '<';
        else if (name == "gt") out += '>';
        else if (name == "quot") out += '"';
        else if (name == "apos") out += '\'';
        else if (!name.empty() && name[0] == '#') {
            const long code = name.size() > 1 && (name[1] == 'x' || name[1] == 'X') ? std::stol(name.substr(2), nullptr, 16)
                                                                                 : std::stol(name.substr(1));
            // ASCII passes through; anything wider becomes a space.
            out += (code > 0 && code < 128) ? static_cast<char>(code) : ' ';
        } else {
            out += s.substr(i, semi - i + 1);
        }
        i = semi;
    }
    return out;
}

std::string strip_tags(const std::string& s) {
    std::string out;
    bool in_tag = false;
    for (char c : s) {
        if (c == '<') in_tag = true;
        else if (c == '>') in_tag = false;
        else if (!in_tag) out += c;
    }
    return out;
}

std::string squeeze_spaces(const std::string& s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

// Inner text of every <tag ...>...</tag> element inside [from, to).
std::vector<std::string> elements(const std::string& xml, const std::string& tag, std::size_t from, std::size_t to) {
    std::vector<std::string> out;
    const std::string open = "<" + tag;
    const std::string close = "</" + tag + ">";
    std::size_t pos = from;
    while (true) {
        auto start = xml.find(open, pos);
        if (start == std::string::npos || start >= to) break;
        const char after = xml[start + open.size()];
        if (after != '>' && after != ' ') {
            pos = start + open.size();
            continue;
        }
        const auto body = xml.find('>', start);
        const auto end = xml.find(close, body);
        if (body == std::string::npos || end == std::string::npos || end > to) break;
        out.push_back(xml.substr(body + 1, end - body - 1));
        pos = end + close.size();
    }
    return out;
}

}  // namespace

std::vector<PubmedAbstract> parse_efetch_abstracts(const std::string& xml) {
    std::vector<PubmedAbstract> out;
    const std::string open = "<PubmedArticle>";
    const std::string close = "</PubmedArticle>";
    std::size_t pos = 0;
    while (true) {
        const auto start = xml.find(open, pos);
        if (start == std::string::npos) break;
        const auto end = xml.find(close, start);
        if (end == std::string::npos) break;
        PubmedAbstract a;
        const auto pmids = elements(xml, "PMID", start, end);
        if (!pmids.empty()) a.pmid = squeeze_spaces(strip_tags(pmids.front()));
        const auto titles = elements(xml, "ArticleTitle", start, end);
        if (!titles.empty()) a.title = squeeze_spaces(decode_entities(strip_tags(titles.front())));
        std::string abstract;
        for (const auto& part : elements(xml, "AbstractText", start, end)) {
            if (!abstract.empty()) abstract += ' ';
            abstract += part;
        }
        a.abstract = squeeze_spaces(decode_entities(strip_tags(abstract)));
        if (!a.pmid.empty()) out.push_back(std::move(a));
        pos = end + close.size();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Client

KnowledgeClient::KnowledgeClient(KnowledgeConfig config, std::shared_ptr<HttpGetTransport> transport,
                                 std::shared_ptr<TextBackend> fallback_backend, std::shared_ptr<KnowledgeClock> clock)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      fallback_backend_(std::move(fallback_backend)),
      clock_(std::move(clock)) {
    load_cache();
}

std::size_t KnowledgeClient::upstream_requests() const {
    std::lock_guard lock(upstream_mutex_);
    return upstream_requests_;
}

HttpResult KnowledgeClient::upstream_get(const std::string& path_and_query) {
    // Serialised so the spacing rule holds across every session.
    std::lock_guard lock(upstream_mutex_);
    HttpResult result;
    std::int64_t backoff = config_.backoff_ms;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        if (attempt > 0) {
            clock_->sleep_ms(backoff);
            backoff *= 2;
        }
        if (any_upstream_) {
            const auto wait = last_upstream_ms_ + config_.min_interval_ms - clock_->now_ms();
            if (wait > 0) clock_->sleep_ms(wait);
        }
        last_upstream_ms_ = clock_->now_ms();
        any_upstream_ = true;
        ++upstream_requests_;
        result = transport_->get(path_and_query);
        if (result.status >= 200 && result.status < 300) return result;
        if (result.status != 0 && result.status < 500 && result.status != 429) break;
    }
    throw UpstreamHttpError("E-utilities request failed (status " + std::to_string(result.status) + ")");
}

std::vector<KnowledgeSnippet> KnowledgeClient::search_and_fetch(const std::string& topic, int max_results) {
    std::string key_param = config_.api_key.empty() ? "" : "&api_key=" + url_encode(config_.api_key);
    const auto search = upstream_get("/esearch.fcgi?db=pubmed&retmode=json&retmax=" + std::to_string(max_results) +
                                     "&term=" + url_encode(topic) + key_param);
    auto ids = parse_esearch_ids(search.body);
    if (ids.size() > static_cast<std::size_t>(max_results)) ids.resize(max_results);
    if (ids.empty()) return {};
    std::string id_list;
    for (const auto& id : ids) id_list += (id_list.empty() ? "" : ",") + id;
    const auto fetch = upstream_get("/efetch.fcgi?db=pubmed&retmode=xml&rettype=abstract&id=" + id_list + key_param);
    const auto now = clock_->now_ms();
    std::vector<KnowledgeSnippet> out;
    for (const auto& a : parse_efetch_abstracts(fetch.body)) {
        const auto& text = a.abstract.empty() ? a.title : a.abstract;
        if (text.empty()) continue;
        out.push_back({topic, truncate_at_sentence(text), SnippetSource::pubmed, a.pmid, now});
        if (out.size() == static_cast<std::size_t>(max_results)) break;
    }
    return out;
}

std::vector<KnowledgeSnippet> KnowledgeClient::fallback(const std::string& topic, const SnippetFilter& keep) {
    if (!fallback_backend_) {
        spdlog::warn("knowledge fallback unavailable for topic '{}': no text backend", topic);
        return {};
    }
    try {
        TextGenRequest req;
        req.system_prompt = prompts::knowledge_fallback_system();
        req.user_messages = {std::string(prompts::kTopic) + " " + prompts::one_line(topic)};
        req.tag = "knowledge-fallback";
        req.max_tokens = 200;
        const auto reply = fallback_backend_->generate(req);
        bool found = false;
        auto text = prompts::field_value(reply.text, prompts::kSummary, found);
        if (!found) text = prompts::one_line(reply.text);
        text = truncate_at_sentence(text);
        if (text.empty() || (keep && !keep(text))) {
            spdlog::info("knowledge fallback for topic '{}' dropped by the leak guard", topic);
            return {};
        }
        return {{topic, text, SnippetSource::fallback, std::nullopt, clock_->now_ms()}};
    } catch (const InvariantViolation&) {
        throw;
    } catch (const Error& e) {
        spdlog::warn("knowledge fallback failed for topic '{}': {}", topic, e.what());
        return {};
    }
}

KnowledgeResult KnowledgeClient::fetch_snippets(const std::string& topic, int max_results, const SnippetFilter& keep) {
    if (topic.empty()) throw PreconditionViolation("knowledge topic must not be empty");
    if (max_results < 1) throw PreconditionViolation("max_results must be at least 1");
    const auto key = normalize_text(topic);
    const auto ttl_ms = static_cast<std::int64_t>(config_.ttl_hours * 3600.0 * 1000.0);

    auto filtered = [&](const std::vector<KnowledgeSnippet>& in) {
        std::vector<KnowledgeSnippet> out;
        for (const auto& s : in) {
            if (out.size() == static_cast<std::size_t>(max_results)) break;
            if (!keep || keep(s.text)) out.push_back(s);
        }
        return out;
    };

    std::optional<CacheEntry> stale;
    {
        std::lock_guard lock(cache_mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            if (clock_->now_ms() - it->second.fetched_at < ttl_ms) {
                return {filtered(it->second.snippets), true, false};
            }
            stale = it->second;
        }
    }

    KnowledgeResult result;
    if (transport_) {
        try {
            auto fetched = search_and_fetch(topic, std::max(max_results, config_.max_results));
            if (!fetched.empty()) {
                {
                    std::lock_guard lock(cache_mutex_);
                    cache_[key] = {clock_->now_ms(), fetched};
                    persist_cache();
                }
                result.snippets = filtered(fetched);
                return result;
            }
        } catch (const UpstreamHttpError& e) {
            spdlog::warn("PubMed lookup failed for topic '{}': {}", topic, e.what());
            result.upstream_failed = true;
            if (stale) return {filtered(stale->snippets), true, true};
        }
    }
    result.snippets = fallback(topic, keep);
    if (result.snippets.size() > static_cast<std::size_t>(max_results)) result.snippets.resize(max_results);
    return result;
}

void KnowledgeClient::load_cache() {
    if (!config_.cache_path || !std::filesystem::exists(*config_.cache_path)) return;
    try {
        std::ifstream in(*config_.cache_path);
        const auto j = json::parse(in);
        for (const auto& [key, entry] : j.at("entries").items()) {
            CacheEntry e;
            e.fetched_at = entry.at("fetched_at").get<std::int64_t>();
            for (const auto& s : entry.at("snippets")) {
                KnowledgeSnippet k;
                k.topic = s.at("topic").get<std::string>();
                k.text = s.at("text").get<std::string>();
                k.source = SnippetSource::pubmed;
                k.citation_id = s.at("citation_id").get<std::string>();
                k.retrieved_at = s.at("retrieved_at").get<std::int64_t>();
                e.snippets.push_back(std::move(k));
            }
            cache_[key] = std::move(e);
        }
    } catch (const std::exception& e) {
        spdlog::warn("ignoring unreadable knowledge cache {}: {}", config_.cache_path->string(), e.what());
        cache_.clear();
    }
}

void KnowledgeClient::persist_cache() {
    if (!config_.cache_path) return;
    json entries = json::object();
    for (const auto& [key, e] : cache_) {
        json snippets = json::array();
        for (const auto& s : e.snippets) {
            snippets.push_back({{"topic", s.topic},
                                {"text", s.text},
                                {"citation_id", s.citation_id.value_or("")},
                                {"retrieved_at", s.retrieved_at}});
        }
        entries[key] = {{"fetched_at", e.fetched_at}, {"snippets", snippets}};
    }
    const auto& path = *config_.cache_path;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        out << json{{"version", 1}, {"entries", entries}}.dump(1) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------

std::string topic_for_skill(const std::string& skill_id, const CaseBundle& c, const CategoryTable& table) {
    if (skill_id == kLocalizationSkill) return "chest radiograph search pattern";
    if (skill_id == kSystematicSearchSkill) return "systematic review of chest radiographs";
    const auto summary = sanitize_case(c, table);
    for (std::size_t i = 0; i < c.findings.size(); ++i) {
        if (c.findings[i].label == skill_id) return summary.finding_categories[i] + " chest radiograph interpretation";
    }
    throw UnknownSkill("skill '" + skill_id + "' is not tracked for case " + c.case_id);
}

}  // namespace cxrtutor
