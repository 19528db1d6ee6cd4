#include "cxrtutor/gaze.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cxrtutor/errors.hpp"

namespace cxrtutor {

RegionDwell map_fixations(const std::vector<Fixation>& fixations, const LobeMask& mask) {
    std::vector<const Fixation*> ordered;
    ordered.reserve(fixations.size());
    for (const auto& f : fixations) ordered.push_back(&f);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const Fixation* a, const Fixation* b) { return a->order_index < b->order_index; });

    RegionDwell out;
    for (const auto* f : ordered) {
        const auto px = static_cast<long>(std::floor(f->x));
        const auto py = static_cast<long>(std::floor(f->y));
        if (px < 0 || py < 0 || px >= mask.width || py >= mask.height) {
            throw OutOfBoundsFixation("fixation " + std::to_string(f->order_index) + " outside the mask");
        }
        const auto region = mask.region_at(static_cast<int>(px), static_cast<int>(py));
        if (region.empty()) continue;
        out.per_region_dwell[region] += f->duration;
        if (out.observed_sequence.empty() || out.observed_sequence.back() != region) {
            out.observed_sequence.push_back(region);
        }
    }
    return out;
}

double coverage_ratio(const std::map<std::string, double>& per_region_dwell, std::size_t region_count) {
    if (region_count == 0) return 0.0;
    const auto visited = std::count_if(per_region_dwell.begin(), per_region_dwell.end(),
                                       [](const auto& kv) { return kv.second > 0; });
    return std::min(1.0, static_cast<double>(visited) / static_cast<double>(region_count));
}

double dwell_time_ratio(const std::map<std::string, double>& per_region_dwell,
                        const std::vector<Fixation>& fixations) {
    double total = 0.0;
    for (const auto& f : fixations) total += f.duration;
    if (fixations.empty() || total <= 0) return 0.0;
    double regional = 0.0;
    for (const auto& [_, ms] : per_region_dwell) regional += ms;
    return std::clamp(regional / total, 0.0, 1.0);
}

std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double sequence_score(const std::vector<std::string>& expected, const std::vector<std::string>& observed) {
    const auto longest = std::max(expected.size(), observed.size());
    if (longest == 0) return 1.0;
    if (observed.empty()) return 0.0;
    return 1.0 - static_cast<double>(levenshtein(expected, observed)) / static_cast<double>(longest);
}

GazeMetrics compute_gaze_metrics(const std::vector<Fixation>& fixations, const LobeMask& mask,
                                 const std::vector<std::string>& expected_sequence) {
    auto dwell = map_fixations(fixations, mask);
    GazeMetrics m;
    m.coverage_ratio = coverage_ratio(dwell.per_region_dwell, mask.region_count());
    m.dwell_time_ratio = dwell_time_ratio(dwell.per_region_dwell, fixations);
    m.sequence_score = sequence_score(expected_sequence, dwell.observed_sequence);
    for (const auto& region : mask.region_names) {
        auto it = dwell.per_region_dwell.find(region);
        if (it == dwell.per_region_dwell.end() || it->second <= 0) m.unvisited_regions.push_back(region);
    }
    m.per_region_dwell = std::move(dwell.per_region_dwell);
    m.observed_sequence = std::move(dwell.observed_sequence);
    return m;
}

std::string region_display_name(const std::string& region) {
    std::string out = region;
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

std::vector<std::string> gaze_guidance(const GazeMetrics& metrics, double nudge_threshold) {
    std::vector<std::string> lines;
    for (const auto& region : metrics.unvisited_regions) {
        auto name = region_display_name(region);
        if (name.find("zone") == std::string::npos) name += " zone";
        lines.push_back("consider the " + name + ", which you have not yet inspected");
    }
    if (metrics.sequence_score < nudge_threshold) {
        lines.push_back("try a consistent systematic search, sweeping each zone in a fixed order");
    }
    return lines;
}

}  // namespace cxrtutor
