// cxrtutor: replay, ablate, ingest and serve.
//
// Exit codes: 0 success, 1 a run finished but something failed (assertion,
// bundle, bind), 2 bad input (config, script, arguments).

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <iostream>

#include "cxrtutor/config.hpp"
#include "cxrtutor/errors.hpp"
#include "cxrtutor/orchestrator.hpp"
#include "cxrtutor/scripts.hpp"
#include "cxrtutor/service.hpp"

namespace fs = std::filesystem;
using namespace cxrtutor;

namespace {

struct Common {
    std::string config;
    std::string library;
    std::string overlay_dir;
};

EngineConfig load(const Common& o) {
    EngineConfig c = o.config.empty() ? EngineConfig{} : load_config(o.config);
    apply_environment(c);
    if (!o.library.empty()) c.library_dir = o.library;
    if (!o.overlay_dir.empty()) c.overlay_dir = o.overlay_dir;
    return c;
}

std::vector<ScriptedSession> scripts_from(const std::vector<std::string>& paths) {
    std::vector<ScriptedSession> out;
    for (const auto& p : paths) {
        if (fs::is_directory(p)) {
            auto more = load_scripts(p);
            out.insert(out.end(), more.begin(), more.end());
        } else {
            out.push_back(load_script(p));
        }
    }
    return out;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    out << text;
    if (!out) throw ImageWriteError("cannot write " + out_path);
}

HttpServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chest radiograph tutoring engine"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config, "engine configuration file");
    app.add_option("--library", common.library, "case library directory");
    app.add_option("--overlay-dir", common.overlay_dir, "where overlay images are written");

    auto* replay_cmd = app.add_subcommand("replay", "run scripted sessions and print a report");
    std::vector<std::string> replay_scripts;
    std::string replay_out;
    std::string replay_ablation;
    replay_cmd->add_option("scripts", replay_scripts, "script files or directories")->required();
    replay_cmd->add_option("--out", replay_out, "write the report here instead of stdout");
    replay_cmd->add_option("--disable", replay_ablation, "comma-separated components to disable");

    auto* ablate_cmd = app.add_subcommand("ablate", "compare component ablations over scripted sessions");
    std::vector<std::string> ablate_scripts;
    std::string ablate_out;
    ablate_cmd->add_option("scripts", ablate_scripts, "script files or directories")->required();
    ablate_cmd->add_option("--out", ablate_out, "write the table here instead of stdout");

    auto* ingest_cmd = app.add_subcommand("ingest", "validate bundles and add them to the library");
    std::string ingest_source;
    ingest_cmd->add_option("source", ingest_source, "bundle directory or directory of bundles")->required();

    auto* serve_cmd = app.add_subcommand("serve", "run the HTTP API");
    std::string host = "127.0.0.1";
    int port = -1;
    serve_cmd->add_option("--host", host, "address to bind");
    serve_cmd->add_option("--port", port, "port to bind (default from config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        EngineConfig config = load(common);

        if (*replay_cmd) {
            if (!replay_ablation.empty()) config.ablation = parse_ablation(replay_ablation);
            const auto scripts = scripts_from(replay_scripts);
            Engine engine(config, load_library(config.library_dir), make_services(config));
            std::vector<ScriptReport> reports;
            bool failed = false;
            for (const auto& s : scripts) {
                if (!engine.has_case(s.case_id)) throw MalformedSidecar(s.name + ": unknown case " + s.case_id);
                reports.push_back(run_script(engine, s));
                failed = failed || !reports.back().failures.empty();
            }
            emit(render_report(reports), replay_out);
            return failed ? 1 : 0;
        }

        if (*ablate_cmd) {
            const auto scripts = scripts_from(ablate_scripts);
            const auto library = load_library(config.library_dir);
            std::vector<AblationRow> rows;
            for (const auto& ablation : standard_ablations()) {
                auto c = config;
                c.ablation = ablation;
                Engine engine(c, library, make_services(c));
                std::vector<ScriptReport> reports;
                for (const auto& s : scripts) {
                    if (!engine.has_case(s.case_id)) throw MalformedSidecar(s.name + ": unknown case " + s.case_id);
                    reports.push_back(run_script(engine, s));
                }
                rows.push_back(summarize(ablation.name(), reports, scripts));
            }
            emit(render_ablation(rows), ablate_out);
            return 0;
        }

        if (*ingest_cmd) {
            const auto result = ingest(ingest_source, config.library_dir);
            for (const auto& id : result.ingested) std::cout << "ingested " << id << "\n";
            for (const auto& [dir, why] : result.failed) std::cerr << "rejected " << dir << ": " << why << "\n";
            return result.failed.empty() ? 0 : 1;
        }

        if (*serve_cmd) {
            if (port < 0) port = config.server_port;
            Engine engine(config, load_library(config.library_dir), make_services(config));
            Service service(engine, config.sessions_dir, config.turn_timeout_s, config.leak_assert);
            const int restored = service.restore();
            HttpServer server(service, config.static_dir);
            if (!server.bind(host, port)) {
                std::cerr << "cannot bind " << host << ":" << port << " (address in use?)\n";
                return 1;
            }
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            spdlog::info("serving {} cases on {}:{} ({} sessions restored)", engine.library().size(), host, port,
                         restored);
            server.listen();
            g_server = nullptr;
            return 0;
        }
    } catch (const MalformedSidecar& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const MissingFile& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
