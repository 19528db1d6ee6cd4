#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cxrtutor/domain.hpp"

namespace cxrtutor {

enum class Direction { N, NE, E, SE, S, SW, W, NW };
enum class Magnitude { near, far };

std::string to_string(Direction d);
std::string to_string(Magnitude m);
// Plain-language phrase for learner messages ("up, toward 12 o'clock").
std::string describe(Direction d);

struct DirectionalHint {
    Direction direction = Direction::N;
    Magnitude magnitude = Magnitude::near;
    bool operator==(const DirectionalHint&) const = default;
};

struct FocusMatch {
    std::size_t student_box_index = 0;
    std::string finding_label;
    std::size_t gt_box_index = 0;  // index of the box within the finding
    double iou = 0.0;
    bool operator==(const FocusMatch&) const = default;
};

struct FocusResult {
    bool passed = false;
    std::vector<FocusMatch> matches;
    double best_iou = 0.0;
    std::optional<DirectionalHint> guidance;

    // Labels of findings with at least one matched pair at or above threshold.
    std::vector<std::string> passed_labels(double threshold) const;
    bool operator==(const FocusResult&) const = default;
};

inline constexpr double kDefaultIouThreshold = 0.6;

// Intersection over union. Throws ZeroAreaBox for degenerate inputs.
double iou(const BoundingBox& a, const BoundingBox& b);

// One-to-one greedy matching of student boxes against every ground-truth box,
// taken in descending IoU order; ties fall back to (student index, finding
// order, box order). Pairs with zero overlap are never matched.
FocusResult validate_focus(const std::vector<BoundingBox>& student_boxes,
                           const std::vector<GroundTruthFinding>& findings, double threshold,
                           int image_width, int image_height);

// Eight 45 degree sectors centred on the compass axes in image coordinates
// (y grows downward, N is toward smaller y). Boundary angles resolve
// clockwise. Magnitude is far when the distance exceeds a quarter of the
// image diagonal.
DirectionalHint direction_between(Point from, Point to, double image_diag);

}  // namespace cxrtutor
