#include "cxrtutor/scripts.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "cxrtutor/errors.hpp"

namespace fs = std::filesystem;

namespace cxrtutor {

namespace {

std::vector<std::string> string_array(const json& j, const std::string& path) {
    if (!j.is_array()) throw MalformedSidecar(path + ": expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_string()) throw MalformedSidecar(field_path(path, i) + ": expected a string");
        out.push_back(j[i]);
    }
    return out;
}

std::map<std::string, double> number_map(const json& j, const std::string& path) {
    if (!j.is_object()) throw MalformedSidecar(path + ": expected an object");
    std::map<std::string, double> out;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_number()) throw MalformedSidecar(field_path(path, k) + ": expected a number");
        out[k] = v;
    }
    return out;
}

std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

ScriptedSession parse_script(const json& j, const std::string& name) {
    if (!j.is_object()) throw MalformedSidecar("script: expected an object");
    ScriptedSession s;
    s.name = j.value("name", name);
    if (!j.contains("case_id") || !j["case_id"].is_string()) throw MalformedSidecar("case_id: expected a string");
    s.case_id = j["case_id"];
    if (!j.contains("turns") || !j["turns"].is_array()) throw MalformedSidecar("turns: expected an array");
    for (std::size_t i = 0; i < j["turns"].size(); ++i) {
        const auto path = field_path("turns", i);
        const auto& tj = j["turns"][i];
        auto turn = turn_from_json(tj, path);
        if (tj.is_object() && tj.contains("turn_index") && turn.turn_index != static_cast<int>(i)) {
            throw MalformedSidecar(field_path(path, "turn_index") + ": turn indices must be contiguous from 0");
        }
        turn.turn_index = static_cast<int>(i);
        s.turns.push_back(std::move(turn));
    }
    if (auto it = j.find("expected"); it != j.end()) {
        if (!it->is_array()) throw MalformedSidecar("expected: expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto path = field_path("expected", i);
            const auto& e = (*it)[i];
            if (!e.is_object() || !e.contains("turn") || !e["turn"].is_number_integer()) {
                throw MalformedSidecar(field_path(path, "turn") + ": expected an integer");
            }
            TurnExpectation x;
            x.turn = e["turn"];
            if (x.turn < 0 || x.turn >= static_cast<int>(s.turns.size())) {
                throw MalformedSidecar(field_path(path, "turn") + ": no such turn");
            }
            if (e.contains("gate_passed")) x.gate_passed = e["gate_passed"].get<bool>();
            if (e.contains("completed")) x.completed = e["completed"].get<bool>();
            if (e.contains("route_log_includes")) {
                x.route_log_includes = string_array(e["route_log_includes"], field_path(path, "route_log_includes"));
            }
            if (e.contains("route_log_excludes")) {
                x.route_log_excludes = string_array(e["route_log_excludes"], field_path(path, "route_log_excludes"));
            }
            if (e.contains("mastery_min")) x.mastery_min = number_map(e["mastery_min"], field_path(path, "mastery_min"));
            if (e.contains("mastery_max")) x.mastery_max = number_map(e["mastery_max"], field_path(path, "mastery_max"));
            s.expected.push_back(std::move(x));
        }
    }
    return s;
}

ScriptedSession load_script(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open script " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw MalformedSidecar(path.string() + ": " + e.what());
    }
    try {
        return parse_script(j, path.stem().string());
    } catch (const MalformedSidecar& e) {
        throw MalformedSidecar(path.string() + ": " + e.what());
    }
}

std::vector<ScriptedSession> load_scripts(const fs::path& dir) {
    std::vector<fs::path> files;
    if (fs::is_directory(dir)) {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<ScriptedSession> out;
    for (const auto& f : files) out.push_back(load_script(f));
    return out;
}

ScriptReport run_script(Engine& engine, const ScriptedSession& script) {
    ScriptReport report;
    report.script = script.name;
    report.config = engine.config().ablation.name();
    auto state = engine.new_session("replay-" + script.name, script.case_id);
    const auto& c = engine.case_bundle(script.case_id);

    for (const auto& turn : script.turns) {
        if (state.completed) break;
        auto outcome = engine.process_turn(state, turn);
        state = std::move(outcome.state);
        const auto& r = outcome.response;
        TurnReport t;
        t.turn = turn.turn_index;
        t.gate_passed = r.gate_passed;
        t.best_iou = r.best_iou;
        t.route_log = r.route_log;
        t.mastery = display_mastery(c, state.skills);
        for (const auto& label : state.resolved_findings) t.resolved.push_back(display_skill(c, label));
        std::sort(t.resolved.begin(), t.resolved.end());
        t.completed = state.completed;
        t.message_digest = hex64(fnv1a64(r.message));
        report.turns.push_back(std::move(t));
        if (state.completed && !report.resolved) {
            report.resolved = true;
            report.turns_to_resolution = turn.turn_index + 1;
        }
    }

    for (const auto& x : script.expected) {
        const auto prefix = script.name + " turn " + std::to_string(x.turn) + ": ";
        if (x.turn >= static_cast<int>(report.turns.size())) {
            report.failures.push_back(prefix + "not run (session completed earlier)");
            continue;
        }
        const auto& t = report.turns[x.turn];
        if (x.gate_passed && *x.gate_passed != t.gate_passed) {
            report.failures.push_back(prefix + "gate_passed is " + (t.gate_passed ? "true" : "false"));
        }
        if (x.completed && *x.completed != t.completed) {
            report.failures.push_back(prefix + "completed is " + (t.completed ? "true" : "false"));
        }
        for (const auto& e : x.route_log_includes) {
            if (std::find(t.route_log.begin(), t.route_log.end(), e) == t.route_log.end()) {
                report.failures.push_back(prefix + "route_log lacks " + e);
            }
        }
        for (const auto& e : x.route_log_excludes) {
            if (std::find(t.route_log.begin(), t.route_log.end(), e) != t.route_log.end()) {
                report.failures.push_back(prefix + "route_log has " + e);
            }
        }
        for (const auto& [skill, bound] : x.mastery_min) {
            auto it = t.mastery.find(skill);
            if (it == t.mastery.end() || it->second.mastery < bound) {
                report.failures.push_back(prefix + "mastery of " + skill + " below " + fixed(bound, 4));
            }
        }
        for (const auto& [skill, bound] : x.mastery_max) {
            auto it = t.mastery.find(skill);
            if (it == t.mastery.end() || it->second.mastery > bound) {
                report.failures.push_back(prefix + "mastery of " + skill + " above " + fixed(bound, 4));
            }
        }
    }
    return report;
}

json to_json(const TurnReport& t, const std::string& script, const std::string& config) {
    json mastery = json::object();
    for (const auto& [skill, e] : t.mastery) mastery[skill] = {{"mastery", e.mastery}, {"attempts", e.attempts}};
    return {{"type", "turn"},
            {"script", script},
            {"config", config},
            {"turn", t.turn},
            {"gate_passed", t.gate_passed},
            {"best_iou", t.best_iou},
            {"route_log", t.route_log},
            {"mastery", mastery},
            {"resolved", t.resolved},
            {"completed", t.completed},
            {"message_digest", t.message_digest}};
}

json summary_json(const ScriptReport& r) {
    return {{"type", "summary"},
            {"script", r.script},
            {"config", r.config},
            {"turns_run", r.turns.size()},
            {"resolved", r.resolved},
            {"turns_to_resolution", r.turns_to_resolution ? json(*r.turns_to_resolution) : json(nullptr)},
            {"failures", r.failures}};
}

std::string render_report(const std::vector<ScriptReport>& reports) {
    std::string out;
    for (const auto& r : reports) {
        for (const auto& t : r.turns) out += to_json(t, r.script, r.config).dump() + "\n";
        out += summary_json(r).dump() + "\n";
    }
    char line[256];
    std::snprintf(line, sizeof line, "# %-28s %-5s %-6s %-5s %s\n", "script", "turn", "gate", "done", "route_log");
    out += line;
    for (const auto& r : reports) {
        for (const auto& t : r.turns) {
            std::string routes;
            for (const auto& e : t.route_log) {
                if (e.rfind("route:", 0) == 0 || e == kGateFailedLog || e.rfind("resolved:", 0) == 0) {
                    routes += (routes.empty() ? "" : " ") + e;
                }
            }
            std::snprintf(line, sizeof line, "# %-28s %-5d %-6s %-5s %s\n", r.script.c_str(), t.turn,
                          t.gate_passed ? "pass" : "FAIL", t.completed ? "yes" : "no", routes.c_str());
            out += line;
        }
        for (const auto& f : r.failures) out += "# assertion failed: " + f + "\n";
    }
    return out;
}

AblationRow summarize(const std::string& config, const std::vector<ScriptReport>& reports,
                      const std::vector<ScriptedSession>& scripts) {
    AblationRow row;
    row.config = config;
    row.scripts = static_cast<int>(reports.size());
    if (reports.empty()) return row;
    double turns = 0.0;
    int resolved = 0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (reports[i].turns_to_resolution) {
            turns += *reports[i].turns_to_resolution;
            ++resolved;
        } else {
            turns += static_cast<double>(scripts[i].turns.size() + 1);
        }
    }
    row.mean_turns_to_resolution = turns / static_cast<double>(reports.size());
    row.resolution_rate = static_cast<double>(resolved) / static_cast<double>(reports.size());
    return row;
}

std::string render_ablation(const std::vector<AblationRow>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += json{{"type", "ablation"},
                    {"config", r.config},
                    {"scripts", r.scripts},
                    {"mean_turns_to_resolution", r.mean_turns_to_resolution},
                    {"resolution_rate", r.resolution_rate}}
                   .dump() +
               "\n";
    }
    char line[160];
    std::snprintf(line, sizeof line, "# %-14s %8s %12s %10s\n", "config", "scripts", "mean_turns", "resolved");
    out += line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "# %-14s %8d %12s %10s\n", r.config.c_str(), r.scripts,
                      fixed(r.mean_turns_to_resolution, 2).c_str(), fixed(r.resolution_rate, 2).c_str());
        out += line;
    }
    return out;
}

std::vector<AblationConfig> standard_ablations() {
    std::vector<AblationConfig> out(1);
    for (auto c : {Component::gaze, Component::bkt, Component::reasoning, Component::knowledge}) {
        AblationConfig a;
        a.disable.insert(c);
        out.push_back(a);
    }
    return out;
}

json index_to_json(const CaseIndex& index) {
    json out = json::array();
    for (const auto& e : index.entries()) {
        json centroids = json::object();
        for (const auto& [label, p] : e.centroids) centroids[label] = {p.x, p.y};
        out.push_back({{"case_id", e.case_id},
                       {"labels", e.label_set},
                       {"centroids", centroids},
                       {"support_devices", e.support_devices}});
    }
    return {{"format", 1}, {"cases", out}};
}

IngestResult ingest(const fs::path& source, const fs::path& library) {
    IngestResult result;
    std::vector<fs::path> dirs;
    if (fs::exists(source / "case.json")) {
        dirs.push_back(source);
    } else if (fs::is_directory(source)) {
        for (const auto& entry : fs::directory_iterator(source)) {
            if (entry.is_directory()) dirs.push_back(entry.path());
        }
    } else {
        throw MissingFile("no such directory " + source.string());
    }
    std::sort(dirs.begin(), dirs.end());

    fs::create_directories(library);
    auto existing = load_library(library);
    std::set<std::string> ids;
    for (const auto& c : existing) ids.insert(c.case_id);

    for (const auto& dir : dirs) {
        try {
            auto bundle = load_case_bundle(dir);
            if (!ids.insert(bundle.case_id).second) throw DuplicateCaseId("case id " + bundle.case_id + " already exists");
            write_case_bundle(bundle, library / bundle.case_id);
            result.ingested.push_back(bundle.case_id);
        } catch (const Error& e) {
            result.failed.emplace_back(dir.string(), e.what());
        }
    }

    const auto index = build_index(load_library(library));
    const auto tmp = library / "index.json.tmp";
    {
        std::ofstream out(tmp);
        out << index_to_json(index).dump(2) << "\n";
        if (!out) throw ImageWriteError("cannot write " + tmp.string());
    }
    fs::rename(tmp, library / "index.json");
    return result;
}

}  // namespace cxrtutor
