#include "cxrtutor/service.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <future>
#include <random>
#include <thread>

#include "cxrtutor/errors.hpp"
#include "cxrtutor/image.hpp"
#include "cxrtutor/sanitizer.hpp"

namespace fs = std::filesystem;

namespace cxrtutor {

namespace {

ApiResponse ok_json(const json& j, int status = 200) {
    return {status, "application/json", j.dump()};
}

// Learner-facing copy of a similar case: the overlay is addressed by URL.
json similar_json(const SimilarCase& s) {
    json j = to_json(s);
    if (!s.overlay_path.empty()) j["overlay_path"] = "/overlays/" + fs::path(s.overlay_path).filename().string();
    return j;
}

json response_json(const TutorResponse& r, int turn_index) {
    json j = to_json(r);
    json similar = json::array();
    for (const auto& s : r.similar_cases) similar.push_back(similar_json(s));
    j["similar_cases"] = similar;
    j["turn_index"] = turn_index;
    return j;
}

json summary_json(const CaseBundle& c, const CategoryTable& table) {
    const auto summary = sanitize_case(c, table);
    return {{"case_id", c.case_id},
            {"image_width", c.image_width},
            {"image_height", c.image_height},
            {"categories", summary.categories},
            {"finding_count", summary.finding_count},
            {"anatomy_hints", summary.anatomy_hints},
            {"image_url", "/cases/" + c.case_id + "/image"}};
}

bool plain_file_name(const std::string& name) {
    return !name.empty() && name.find('/') == std::string::npos && name.find('\\') == std::string::npos &&
           name != "." && name != "..";
}

}  // namespace

ApiResponse api_error(int status, const std::string& code, const std::string& message, const std::string& field) {
    json j = {{"code", code}, {"message", message}};
    if (!field.empty()) j["field"] = field;
    return {status, "application/json", j.dump()};
}

Service::Service(Engine& engine, fs::path sessions_dir, double turn_timeout_s, bool leak_assert)
    : engine_(engine), sessions_dir_(std::move(sessions_dir)), turn_timeout_s_(turn_timeout_s), leak_assert_(leak_assert) {
    fs::create_directories(sessions_dir_);
}

Service::~Service() { drain(); }

void Service::drain() {
    std::unique_lock lock(inflight_mutex_);
    inflight_cv_.wait(lock, [this] { return inflight_ == 0; });
}

int Service::restore() {
    std::vector<fs::path> logs;
    for (const auto& entry : fs::directory_iterator(sessions_dir_)) {
        if (entry.is_regular_file() && entry.path().extension() == ".log") logs.push_back(entry.path());
    }
    std::sort(logs.begin(), logs.end());
    int restored = 0;
    for (const auto& path : logs) {
        try {
            const auto [session_id, case_id] = read_log_header(path);
            auto slot = std::make_shared<Slot>();
            slot->state = replay(read_log_lines(path), engine_.new_session(session_id, case_id));
            slot->log = std::make_unique<EventLog>(path);
            std::lock_guard lock(slots_mutex_);
            slots_[session_id] = std::move(slot);
            ++restored;
        } catch (const Error& e) {
            spdlog::warn("skipping session log {}: {}", path.string(), e.what());
        }
    }
    return restored;
}

std::size_t Service::session_count() const {
    std::lock_guard lock(slots_mutex_);
    return slots_.size();
}

std::shared_ptr<Service::Slot> Service::find(const std::string& session_id) const {
    std::lock_guard lock(slots_mutex_);
    auto it = slots_.find(session_id);
    return it == slots_.end() ? nullptr : it->second;
}

std::string Service::new_session_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    for (;;) {
        const auto id = hex64(rng());
        std::lock_guard lock(slots_mutex_);
        if (!slots_.count(id)) return id;
    }
}

ApiResponse Service::checked(const ApiResponse& r, const SessionState& s, const std::string& extra_text) const {
    if (!leak_assert_ || r.status >= 400) return r;
    const auto& c = engine_.case_bundle(s.case_id);
    const auto uttered = Engine::uttered_terms(s, extra_text);
    const auto report = detect_leaks(r.body, c, uttered, engine_.categories());
    if (report.clean()) return r;
    spdlog::error("response for session {} leaks '{}'", s.session_id, report.leaks.front().offending_substring);
    return api_error(500, api_codes::kLeakDetected, "response withheld");
}

ApiResponse Service::create_session(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        return api_error(422, api_codes::kSchemaViolation, "body is not JSON", "");
    }
    if (!j.is_object() || !j.contains("case_id") || !j["case_id"].is_string()) {
        return api_error(422, api_codes::kSchemaViolation, "case_id: expected a string", "case_id");
    }
    const std::string case_id = j["case_id"];
    if (!engine_.has_case(case_id)) return api_error(404, api_codes::kUnknownCase, "no case " + case_id);

    auto slot = std::make_shared<Slot>();
    const auto id = new_session_id();
    slot->state = engine_.new_session(id, case_id);
    slot->log = std::make_unique<EventLog>(sessions_dir_ / (id + ".log"));
    slot->log->append(header_line(slot->state));
    {
        std::lock_guard lock(slots_mutex_);
        slots_[id] = slot;
    }
    const auto& c = engine_.case_bundle(case_id);
    return checked(ok_json({{"session_id", id}, {"case", summary_json(c, engine_.categories())}}, 201), slot->state);
}

ApiResponse Service::submit_turn(const std::string& session_id, const std::string& body) {
    auto slot = find(session_id);
    if (!slot) return api_error(404, api_codes::kUnknownSession, "no session " + session_id);

    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        return api_error(422, api_codes::kSchemaViolation, "body is not JSON");
    }
    StudentTurn turn;
    try {
        turn = turn_from_json(j);
    } catch (const MalformedSidecar& e) {
        const std::string what = e.what();
        return api_error(422, api_codes::kSchemaViolation, what, what.substr(0, what.find(':')));
    }

    bool expected = false;
    if (!slot->busy.compare_exchange_strong(expected, true)) {
        return api_error(409, api_codes::kTurnInFlight, "a turn is already being processed for this session");
    }
    SessionState state;
    {
        std::lock_guard lock(slot->state_mutex);
        state = slot->state;
    }
    if (state.completed) {
        slot->busy = false;
        return api_error(409, api_codes::kSessionCompleted, "session is completed");
    }
    if (j.contains("turn_index") && turn.turn_index != state.turn_count) {
        slot->busy = false;
        return api_error(422, api_codes::kSchemaViolation,
                         "turn_index: expected " + std::to_string(state.turn_count), "turn_index");
    }
    turn.turn_index = state.turn_count;

    // The worker owns the busy flag; a timed-out turn still finishes and is
    // logged, and the next turn is refused until it does.
    auto promise = std::make_shared<std::promise<ApiResponse>>();
    auto future = promise->get_future();
    {
        std::lock_guard lock(inflight_mutex_);
        ++inflight_;
    }
    std::thread([this, slot, state, turn, promise] {
        ApiResponse result;
        try {
            TurnOutcome outcome;
            {
                std::lock_guard lock(engine_mutex_);
                outcome = engine_.process_turn(state, turn);
            }
            slot->log->append(turn_line(outcome, turn));
            {
                std::lock_guard lock(slot->state_mutex);
                slot->state = outcome.state;
            }
            result = checked(ok_json(response_json(outcome.response, turn.turn_index)), outcome.state);
        } catch (const PreconditionViolation& e) {
            const std::string what = e.what();
            result = api_error(422, api_codes::kSchemaViolation, what, what.substr(0, what.find(':')));
        } catch (const SessionCompleted& e) {
            result = api_error(409, api_codes::kSessionCompleted, e.what());
        } catch (const InvariantViolation& e) {
            spdlog::error("turn for session {} violated an invariant: {}", state.session_id, e.what());
            result = api_error(500, api_codes::kLeakDetected, "response withheld");
        } catch (const std::exception& e) {
            spdlog::error("turn for session {} failed: {}", state.session_id, e.what());
            result = api_error(500, api_codes::kInternal, "turn failed");
        }
        slot->busy = false;
        promise->set_value(std::move(result));
        std::lock_guard lock(inflight_mutex_);
        if (--inflight_ == 0) inflight_cv_.notify_all();
    }).detach();

    const auto wait = std::chrono::duration<double>(turn_timeout_s_);
    if (future.wait_for(wait) != std::future_status::ready) {
        return api_error(504, api_codes::kTurnTimeout, "turn did not finish in time");
    }
    return future.get();
}

ApiResponse Service::mastery(const std::string& session_id) {
    auto slot = find(session_id);
    if (!slot) return api_error(404, api_codes::kUnknownSession, "no session " + session_id);
    std::lock_guard lock(slot->state_mutex);
    const auto& c = engine_.case_bundle(slot->state.case_id);
    return checked(ok_json(to_json(display_mastery(c, slot->state.skills))), slot->state);
}

ApiResponse Service::similar(const std::string& session_id) {
    auto slot = find(session_id);
    if (!slot) return api_error(404, api_codes::kUnknownSession, "no session " + session_id);
    SessionState state;
    {
        std::lock_guard lock(slot->state_mutex);
        state = slot->state;
    }
    const auto& c = engine_.case_bundle(state.case_id);
    const LeakDetector detector(c, engine_.categories());
    const auto uttered = Engine::uttered_terms(state, "");
    std::vector<SimilarCase> cases;
    try {
        std::lock_guard lock(engine_mutex_);
        cases = engine_.similar_cases(c, detector, uttered);
    } catch (const Error& e) {
        spdlog::warn("similar cases for session {} unavailable: {}", session_id, e.what());
    }
    json out = json::array();
    for (const auto& s : cases) out.push_back(similar_json(s));
    return checked(ok_json(out), state);
}

ApiResponse Service::history(const std::string& session_id) {
    auto slot = find(session_id);
    if (!slot) return api_error(404, api_codes::kUnknownSession, "no session " + session_id);
    std::lock_guard lock(slot->state_mutex);
    const auto& s = slot->state;
    json turns = json::array();
    for (std::size_t i = 0; i < s.history.size(); ++i) {
        const auto& [turn, response] = s.history[i];
        turns.push_back({{"turn_index", static_cast<int>(i)},
                         {"student_turn", turn_to_json(turn)},
                         {"tutor_response", response_json(response, static_cast<int>(i))}});
    }
    const auto& c = engine_.case_bundle(s.case_id);
    json out = {{"session_id", s.session_id},
                {"case", summary_json(c, engine_.categories())},
                {"completed", s.completed},
                {"turns", turns}};
    return checked(ok_json(out), s);
}

ApiResponse Service::list_cases() const {
    json out = json::array();
    for (const auto& c : engine_.library()) {
        out.push_back({{"case_id", c.case_id},
                       {"image_width", c.image_width},
                       {"image_height", c.image_height},
                       {"image_url", "/cases/" + c.case_id + "/image"}});
    }
    return ok_json(out);
}

ApiResponse Service::case_image(const std::string& case_id) const {
    if (!engine_.has_case(case_id)) return api_error(404, api_codes::kUnknownCase, "no case " + case_id);
    const auto bytes = read_file_bytes(engine_.case_bundle(case_id).image_file());
    return {200, "image/png", std::string(bytes.begin(), bytes.end())};
}

ApiResponse Service::overlay(const std::string& file_name) const {
    const auto path = engine_.config().overlay_dir / file_name;
    if (!plain_file_name(file_name) || !fs::is_regular_file(path)) {
        return api_error(404, api_codes::kNotFound, "no overlay " + file_name);
    }
    const auto bytes = read_file_bytes(path);
    return {200, "image/png", std::string(bytes.begin(), bytes.end())};
}

struct HttpServer::Impl {
    Service& service;
    httplib::Server server;

    explicit Impl(Service& s) : service(s) {}
};

namespace {

void reply(httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
}

}  // namespace

HttpServer::HttpServer(Service& service, fs::path static_dir) : impl_(std::make_unique<Impl>(service)) {
    auto& srv = impl_->server;
    auto& svc = impl_->service;
    srv.Post("/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.create_session(req.body));
    });
    srv.Post(R"(/sessions/([^/]+)/turns)", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.submit_turn(req.matches[1], req.body));
    });
    srv.Get(R"(/sessions/([^/]+)/mastery)", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.mastery(req.matches[1]));
    });
    srv.Get(R"(/sessions/([^/]+)/similar)", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.similar(req.matches[1]));
    });
    srv.Get(R"(/sessions/([^/]+)/history)", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.history(req.matches[1]));
    });
    srv.Get("/cases", [&svc](const httplib::Request&, httplib::Response& res) { reply(res, svc.list_cases()); });
    srv.Get(R"(/cases/([^/]+)/image)", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.case_image(req.matches[1]));
    });
    srv.Get(R"(/overlays/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.overlay(req.matches[1]));
    });
    if (!static_dir.empty() && fs::is_directory(static_dir)) srv.set_mount_point("/", static_dir.string());
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            const auto r = api_error(res.status, res.status == 404 ? api_codes::kNotFound : api_codes::kInternal,
                                     res.status == 404 ? "no such route" : "request failed");
            res.set_content(r.body, r.content_type);
        }
    });
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "request failed";
        try {
            if (ep) std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            spdlog::error("unhandled error: {}", e.what());
        }
        reply(res, api_error(500, api_codes::kInternal, what));
    });
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

int HttpServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace cxrtutor
