#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cxrtutor {

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

// Axis-aligned box in image-pixel coordinates.
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;
    std::optional<std::string> label;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    Point center() const { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }
    bool has_positive_area() const { return x_min < x_max && y_min < y_max; }
    bool within(int image_width, int image_height) const;

    bool operator==(const BoundingBox&) const = default;
};

struct Fixation {
    double x = 0.0;
    double y = 0.0;
    double duration = 0.0;  // milliseconds
    int order_index = 0;
    bool operator==(const Fixation&) const = default;
};

// Raster label map: 0 is background, i in 1..K names region_names[i-1].
struct LobeMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> labels;  // row-major, width*height
    std::vector<std::string> region_names;

    std::uint8_t at(int x, int y) const {
        return labels[static_cast<std::size_t>(y) * width + x];
    }
    // Region name at pixel, empty when background.
    std::string region_at(int x, int y) const;
    std::size_t region_count() const { return region_names.size(); }

    bool operator==(const LobeMask&) const = default;
};

struct Descriptor {
    std::string key;
    std::string value;
    bool operator==(const Descriptor&) const = default;
};

struct GroundTruthFinding {
    std::string label;
    std::vector<BoundingBox> boxes;
    std::vector<Descriptor> descriptors;
    bool required_for_resolution = true;
    bool operator==(const GroundTruthFinding&) const = default;
};

struct CaseBundle {
    std::string case_id;
    std::filesystem::path directory;   // bundle directory the case was loaded from
    std::filesystem::path image_path;  // relative to directory, as written in case.json
    int image_width = 0;
    int image_height = 0;
    std::vector<GroundTruthFinding> findings;
    std::optional<LobeMask> lobe_mask;
    std::vector<std::string> expected_sequence;
    std::map<std::string, std::string> metadata;
    std::vector<std::string> skills;

    std::filesystem::path image_file() const { return directory / image_path; }
    bool support_devices() const;
    const GroundTruthFinding* find_finding(const std::string& label) const;
    // Region set used for gaze analytics: the ingested mask or the fallback grid.
    LobeMask effective_mask() const;

    bool operator==(const CaseBundle&) const = default;
};

struct TurnRequests {
    bool reasoning = false;
    bool knowledge = false;
    bool similar_cases = false;
    bool operator==(const TurnRequests&) const = default;
};

struct StudentTurn {
    std::vector<BoundingBox> boxes;
    std::vector<Fixation> fixations;
    std::string text;
    double confidence = 0.5;
    TurnRequests requests;
    int turn_index = 0;
    bool operator==(const StudentTurn&) const = default;
};

inline constexpr const char* kLocalizationSkill = "localization";
inline constexpr const char* kSystematicSearchSkill = "systematic-search";

// Region order of the 3x2 fallback grid, also the default expected sequence.
const std::vector<std::string>& fallback_region_names();

// 3 rows x 2 columns; "right_*" occupies the viewer-left half.
LobeMask fallback_zone_grid(int image_width, int image_height);

// Loads <dir>/case.json (+ image, + optional lobe_mask.png) and validates it.
CaseBundle load_case_bundle(const std::filesystem::path& dir);

// Writes case.json and lobe_mask.png (when present) into dir. The image file
// is copied from bundle.image_path unless it already lives at the target.
void write_case_bundle(const CaseBundle& bundle, const std::filesystem::path& dir);

// Checks every CaseBundle invariant; throws InvariantViolation naming the
// first one that fails.
void validate_case_bundle(const CaseBundle& bundle);

// Skill ids for a case: finding labels plus the two synthetic skills.
std::vector<std::string> default_skills(const std::vector<GroundTruthFinding>& findings);

}  // namespace cxrtutor
