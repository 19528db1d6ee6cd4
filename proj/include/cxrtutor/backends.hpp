#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "cxrtutor/sanitizer.hpp"

namespace cxrtutor {

// FNV-1a, 64 bit. Stable across processes and platforms.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

struct TextGenRequest {
    std::string system_prompt;
    std::vector<std::string> user_messages;
    double temperature = 0.0;
    int max_tokens = 512;
    std::string tag;  // agent name, for logging
};

struct VisionReasonRequest {
    std::shared_ptr<const std::vector<std::uint8_t>> image;
    std::string context_text;
    std::string tag;
};

struct BackendReply {
    std::string text;
    std::int64_t latency_ms = 0;
    std::string backend_id;
    bool from_cache = false;
};

// Receives every outbound request before it is sent; the engine installs a
// leak check here in debug and test builds.
using RequestInspector = std::function<void(const std::string& tag, const std::string& payload)>;

class TextBackend {
public:
    virtual ~TextBackend() = default;
    BackendReply generate(const TextGenRequest& req);
    void set_inspector(RequestInspector inspector);
    virtual std::string id() const = 0;

protected:
    virtual BackendReply do_generate(const TextGenRequest& req) = 0;

private:
    std::mutex inspector_mutex_;
    RequestInspector inspector_;
};

class VisionBackend {
public:
    virtual ~VisionBackend() = default;
    BackendReply reason(const VisionReasonRequest& req);
    void set_inspector(RequestInspector inspector);
    virtual std::string id() const = 0;

protected:
    virtual BackendReply do_reason(const VisionReasonRequest& req) = 0;

private:
    std::mutex inspector_mutex_;
    RequestInspector inspector_;
};

// Deterministic text backend. The reply depends only on the request text: the
// system prompt selects the agent role, the rule table drives the content, and
// the FNV-1a hash of the request picks phrasing variants.
class StubTextBackend : public TextBackend {
public:
    explicit StubTextBackend(const CategoryTable& table = CategoryTable::defaults());
    std::string id() const override { return "stub-text"; }

protected:
    BackendReply do_generate(const TextGenRequest& req) override;

private:
    std::string assess_reply(const std::string& body) const;
    std::string socratic_reply(const std::string& body, std::uint64_t h) const;
    std::string respond_reply(const std::string& body, std::uint64_t h, bool reflection) const;
    std::string fallback_summary_reply(const std::string& body, std::uint64_t h) const;

    CategoryTable table_;
};

// Fixed-template reasoning skeleton keyed by the hash of the context text.
class StubVisionBackend : public VisionBackend {
public:
    explicit StubVisionBackend(std::size_t max_image_bytes = 64u << 20) : max_image_bytes_(max_image_bytes) {}
    std::string id() const override { return "stub-vision"; }

protected:
    BackendReply do_reason(const VisionReasonRequest& req) override;

private:
    std::size_t max_image_bytes_;
};

struct RemoteEndpoint {
    std::string base_url;  // scheme://host[:port]
    std::string path;      // e.g. /v1/chat/completions
    std::string api_key;
    std::string model;
    std::chrono::milliseconds timeout{30000};
    int retries = 2;
    std::chrono::milliseconds backoff{200};  // doubles after each failed attempt
};

// Chat-completions style client:
//   POST {model, messages:[{role, content}], temperature, max_tokens}
//   reply choices[0].message.content
class RemoteTextBackend : public TextBackend {
public:
    explicit RemoteTextBackend(RemoteEndpoint endpoint);
    std::string id() const override { return "remote-text"; }

protected:
    BackendReply do_generate(const TextGenRequest& req) override;

private:
    RemoteEndpoint endpoint_;
};

// Vision endpoint:
//   POST {image_base64, prompt, model}
//   reply {text}
class RemoteVisionBackend : public VisionBackend {
public:
    RemoteVisionBackend(RemoteEndpoint endpoint, std::size_t max_image_bytes);
    std::string id() const override { return "remote-vision"; }

protected:
    BackendReply do_reason(const VisionReasonRequest& req) override;

private:
    RemoteEndpoint endpoint_;
    std::size_t max_image_bytes_;
};

// POSTs a JSON body with bounded retries and exponential backoff. Retries on
// connection errors and 5xx. Throws BackendTimeout or BackendHttpError.
std::string post_json_with_retries(const RemoteEndpoint& endpoint, const std::string& body);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

}  // namespace cxrtutor
