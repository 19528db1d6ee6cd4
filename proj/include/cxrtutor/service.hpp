#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "cxrtutor/event_log.hpp"
#include "cxrtutor/orchestrator.hpp"

namespace cxrtutor {

// Error codes returned as {"code":..,"message":..}.
namespace api_codes {
inline constexpr const char* kUnknownCase = "unknown_case";
inline constexpr const char* kUnknownSession = "unknown_session";
inline constexpr const char* kSessionCompleted = "session_completed";
inline constexpr const char* kSchemaViolation = "schema_violation";
inline constexpr const char* kTurnInFlight = "turn_in_flight";
inline constexpr const char* kTurnTimeout = "turn_timeout";
inline constexpr const char* kNotFound = "not_found";
inline constexpr const char* kLeakDetected = "leak_detected";
inline constexpr const char* kInternal = "internal_error";
}  // namespace api_codes

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;

    json json_body() const { return json::parse(body); }
};

ApiResponse api_error(int status, const std::string& code, const std::string& message,
                      const std::string& field = "");

// Session registry plus the request handlers. Handlers are plain functions
// of (path parameters, body) so they can be exercised without a socket.
class Service {
public:
    Service(Engine& engine, std::filesystem::path sessions_dir, double turn_timeout_s, bool leak_assert);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Replays every sessions_dir/*.log; returns the number restored.
    // Unreadable logs are skipped with a warning.
    int restore();

    ApiResponse create_session(const std::string& body);
    ApiResponse submit_turn(const std::string& session_id, const std::string& body);
    ApiResponse mastery(const std::string& session_id);
    ApiResponse similar(const std::string& session_id);
    ApiResponse history(const std::string& session_id);
    ApiResponse list_cases() const;
    ApiResponse case_image(const std::string& case_id) const;
    ApiResponse overlay(const std::string& file_name) const;

    std::size_t session_count() const;
    // Blocks until no turn is running.
    void drain();

private:
    struct Slot {
        std::atomic<bool> busy{false};
        std::mutex state_mutex;
        SessionState state;
        std::unique_ptr<EventLog> log;
    };

    std::shared_ptr<Slot> find(const std::string& session_id) const;
    std::string new_session_id();
    ApiResponse checked(const ApiResponse& r, const SessionState& s, const std::string& extra_text = "") const;

    Engine& engine_;
    std::filesystem::path sessions_dir_;
    double turn_timeout_s_;
    bool leak_assert_;
    std::mutex engine_mutex_;
    mutable std::mutex slots_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> slots_;
    std::mutex inflight_mutex_;
    std::condition_variable inflight_cv_;
    int inflight_ = 0;
};

// Binds host:port and serves until stop() is called from another thread.
class HttpServer {
public:
    HttpServer(Service& service, std::filesystem::path static_dir = {});
    ~HttpServer();

    // Returns false when the address cannot be bound.
    bool bind(const std::string& host, int port);
    int bind_any_port(const std::string& host);
    void listen();  // blocks
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace cxrtutor
