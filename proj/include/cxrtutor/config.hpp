#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "cxrtutor/backends.hpp"
#include "cxrtutor/bkt.hpp"
#include "cxrtutor/knowledge.hpp"
#include "cxrtutor/similarity.hpp"

namespace cxrtutor {

struct RoutingThresholds {
    double knowledge_mastery = 0.3;
    int knowledge_attempts = 3;
    double reasoning_mastery = 0.2;
    int reasoning_attempts = 5;
    int struggle_streak = 3;
    double resolution_mastery = 0.8;
};

enum class Component { gaze, bkt, reasoning, knowledge };
std::string to_string(Component c);
// Throws std::invalid_argument for names outside {gaze, bkt, reasoning, knowledge}.
Component parse_component(const std::string& name);

struct AblationConfig {
    std::set<Component> disable;
    bool disabled(Component c) const { return disable.contains(c); }
    std::string name() const;  // "full" or "-gaze,-bkt"
    bool operator==(const AblationConfig&) const = default;
};
// Comma separated component list; empty string is the full configuration.
AblationConfig parse_ablation(const std::string& list);

struct BackendSettings {
    std::string kind = "stub";  // stub | remote
    RemoteEndpoint endpoint;
    std::size_t max_image_bytes = 32u << 20;
};

struct EngineConfig {
    double iou_threshold = 0.6;
    double sequence_nudge_threshold = 0.5;
    BktParams bkt;
    std::map<std::string, BktParams> bkt_overrides;  // per skill id
    int history_window = 6;

    BackendSettings text;
    BackendSettings vision;

    bool knowledge_online = false;
    std::string knowledge_base_url = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
    std::int64_t knowledge_timeout_ms = 10000;
    KnowledgeConfig knowledge;

    int similarity_k = 3;
    SimilarityWeights similarity_weights;
    std::filesystem::path overlay_dir = "overlays";

    RoutingThresholds routing;

    int server_port = 8080;
    double turn_timeout_s = 180.0;
    std::filesystem::path sessions_dir = "sessions";
    std::filesystem::path static_dir;
    bool leak_assert = false;

    std::filesystem::path library_dir = "data/cases";
    std::filesystem::path category_map;  // empty: built-in table

    AblationConfig ablation;

    const BktParams& params_for(const std::string& skill_id) const;
};

// "key = value" lines, '#' comments. Relative paths resolve against base_dir.
// Unknown keys and malformed values throw std::invalid_argument naming the line.
EngineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
EngineConfig load_config(const std::filesystem::path& path);

// Fills backend URLs and keys left empty in the file from CXRTUTOR_TEXT_URL,
// CXRTUTOR_TEXT_API_KEY, CXRTUTOR_VISION_URL, CXRTUTOR_VISION_API_KEY and
// NCBI_API_KEY.
void apply_environment(EngineConfig& config);

}  // namespace cxrtutor
