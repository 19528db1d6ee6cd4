#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cxrtutor/backends.hpp"
#include "cxrtutor/domain.hpp"
#include "cxrtutor/sanitizer.hpp"

namespace cxrtutor {

enum class SnippetSource { pubmed, fallback };
std::string to_string(SnippetSource s);

struct KnowledgeSnippet {
    std::string topic;
    std::string text;  // at most kSnippetLimit characters
    SnippetSource source = SnippetSource::pubmed;
    std::optional<std::string> citation_id;  // PMID, present iff source == pubmed
    std::int64_t retrieved_at = 0;           // unix milliseconds
    bool operator==(const KnowledgeSnippet&) const = default;
};

inline constexpr std::size_t kSnippetLimit = 600;

// Cuts text to at most `limit` characters, preferring the last sentence end
// that fits; falls back to a word boundary.
std::string truncate_at_sentence(const std::string& text, std::size_t limit = kSnippetLimit);

struct HttpResult {
    int status = 0;  // 0 means the request never completed
    std::string body;
};

class HttpGetTransport {
public:
    virtual ~HttpGetTransport() = default;
    virtual HttpResult get(const std::string& path_and_query) = 0;
};

class HttplibGetTransport : public HttpGetTransport {
public:
    HttplibGetTransport(std::string base_url, std::chrono::milliseconds timeout);
    HttpResult get(const std::string& path_and_query) override;

private:
    std::string scheme_host_;
    std::string path_prefix_;
    std::chrono::milliseconds timeout_;
};

class KnowledgeClock {
public:
    virtual ~KnowledgeClock() = default;
    virtual std::int64_t now_ms() = 0;
    virtual void sleep_ms(std::int64_t ms) = 0;
};

class SystemClock : public KnowledgeClock {
public:
    std::int64_t now_ms() override;
    void sleep_ms(std::int64_t ms) override;
};

// Advances only when slept on; for tests and deterministic replays.
class VirtualClock : public KnowledgeClock {
public:
    explicit VirtualClock(std::int64_t start_ms = 1'700'000'000'000) : now_(start_ms) {}
    std::int64_t now_ms() override;
    void sleep_ms(std::int64_t ms) override;
    void advance(std::int64_t ms);

private:
    std::mutex mutex_;
    std::int64_t now_;
};

struct KnowledgeConfig {
    int max_results = 3;
    double ttl_hours = 24.0;
    std::optional<std::filesystem::path> cache_path;
    std::int64_t min_interval_ms = 350;
    int retries = 2;
    std::int64_t backoff_ms = 500;
    std::string api_key;
};

struct KnowledgeResult {
    std::vector<KnowledgeSnippet> snippets;
    bool from_cache = false;
    bool upstream_failed = false;
};

// Accepts a candidate snippet text; returns false to drop it.
using SnippetFilter = std::function<bool(const std::string&)>;

// E-utilities client: esearch (ids) then efetch (abstracts), with a
// write-through on-disk cache keyed by normalised topic, a global minimum
// spacing between upstream calls, and a guarded text-backend fallback when
// the search comes back empty.
class KnowledgeClient {
public:
    // transport may be null (offline: every topic goes to the fallback).
    KnowledgeClient(KnowledgeConfig config, std::shared_ptr<HttpGetTransport> transport,
                    std::shared_ptr<TextBackend> fallback_backend,
                    std::shared_ptr<KnowledgeClock> clock = std::make_shared<SystemClock>());

    KnowledgeResult fetch_snippets(const std::string& topic, int max_results, const SnippetFilter& keep = {});
    KnowledgeResult fetch_snippets(const std::string& topic) { return fetch_snippets(topic, config_.max_results); }

    std::size_t upstream_requests() const;
    const KnowledgeConfig& config() const { return config_; }

private:
    struct CacheEntry {
        std::int64_t fetched_at = 0;
        std::vector<KnowledgeSnippet> snippets;
    };

    HttpResult upstream_get(const std::string& path_and_query);
    std::vector<KnowledgeSnippet> search_and_fetch(const std::string& topic, int max_results);
    std::vector<KnowledgeSnippet> fallback(const std::string& topic, const SnippetFilter& keep);
    void load_cache();
    void persist_cache();  // caller holds cache_mutex_

    KnowledgeConfig config_;
    std::shared_ptr<HttpGetTransport> transport_;
    std::shared_ptr<TextBackend> fallback_backend_;
    std::shared_ptr<KnowledgeClock> clock_;

    mutable std::mutex cache_mutex_;
    std::map<std::string, CacheEntry> cache_;

    mutable std::mutex upstream_mutex_;
    std::int64_t last_upstream_ms_ = 0;
    bool any_upstream_ = false;
    std::size_t upstream_requests_ = 0;
};

// Parses the id list out of an esearch JSON reply.
std::vector<std::string> parse_esearch_ids(const std::string& body);

struct PubmedAbstract {
    std::string pmid;
    std::string title;
    std::string abstract;
};
// Extracts PMID, title and abstract text from an efetch PubmedArticleSet XML reply.
std::vector<PubmedAbstract> parse_efetch_abstracts(const std::string& xml);

std::string url_encode(const std::string& s);

// "<finding category> chest radiograph interpretation" for finding skills and
// fixed topics for the synthetic skills. Throws UnknownSkill.
std::string topic_for_skill(const std::string& skill_id, const CaseBundle& c,
                            const CategoryTable& table = CategoryTable::defaults());

}  // namespace cxrtutor
