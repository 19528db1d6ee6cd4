#pragma once

#include <map>
#include <string>
#include <vector>

#include "cxrtutor/domain.hpp"

namespace cxrtutor {

struct RegionDwell {
    std::map<std::string, double> per_region_dwell;  // milliseconds
    std::vector<std::string> observed_sequence;      // run-length collapsed, background omitted
};

struct GazeMetrics {
    double coverage_ratio = 0.0;
    double dwell_time_ratio = 0.0;
    double sequence_score = 0.0;
    std::map<std::string, double> per_region_dwell;
    std::vector<std::string> observed_sequence;
    std::vector<std::string> unvisited_regions;  // in mask order
    bool operator==(const GazeMetrics&) const = default;
};

inline constexpr double kDefaultSequenceNudgeThreshold = 0.5;

// Single-pixel lookup at the fixation centre. Throws OutOfBoundsFixation.
RegionDwell map_fixations(const std::vector<Fixation>& fixations, const LobeMask& mask);

double coverage_ratio(const std::map<std::string, double>& per_region_dwell, std::size_t region_count);
double dwell_time_ratio(const std::map<std::string, double>& per_region_dwell,
                        const std::vector<Fixation>& fixations);

// Unit-cost edit distance over region-name tokens.
std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);
double sequence_score(const std::vector<std::string>& expected, const std::vector<std::string>& observed);

GazeMetrics compute_gaze_metrics(const std::vector<Fixation>& fixations, const LobeMask& mask,
                                 const std::vector<std::string>& expected_sequence);

// "right_upper" -> "right upper".
std::string region_display_name(const std::string& region);

// One "consider the <region> ..." line per unvisited region, plus a
// systematic-search nudge when the sequence score is below the threshold.
std::vector<std::string> gaze_guidance(const GazeMetrics& metrics,
                                       double nudge_threshold = kDefaultSequenceNudgeThreshold);

}  // namespace cxrtutor
