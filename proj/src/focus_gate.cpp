#include "cxrtutor/focus_gate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "cxrtutor/errors.hpp"

namespace cxrtutor {

std::string to_string(Direction d) {
    switch (d) {
        case Direction::N: return "N";
        case Direction::NE: return "NE";
        case Direction::E: return "E";
        case Direction::SE: return "SE";
        case Direction::S: return "S";
        case Direction::SW: return "SW";
        case Direction::W: return "W";
        case Direction::NW: return "NW";
    }
    return "N";
}

std::string to_string(Magnitude m) { return m == Magnitude::far ? "far" : "near"; }

std::string describe(Direction d) {
    // Clock-face wording keeps laterality words out of learner messages.
    switch (d) {
        case Direction::N: return "up, toward 12 o'clock";
        case Direction::NE: return "up and across, toward half past one";
        case Direction::E: return "across, toward 3 o'clock";
        case Direction::SE: return "down and across, toward half past four";
        case Direction::S: return "down, toward 6 o'clock";
        case Direction::SW: return "down and across, toward half past seven";
        case Direction::W: return "across, toward 9 o'clock";
        case Direction::NW: return "up and across, toward half past ten";
    }
    return "up, toward 12 o'clock";
}

std::vector<std::string> FocusResult::passed_labels(double threshold) const {
    std::vector<std::string> out;
    for (const auto& m : matches) {
        if (m.iou >= threshold &&
            std::find(out.begin(), out.end(), m.finding_label) == out.end()) {
            out.push_back(m.finding_label);
        }
    }
    return out;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    if (!a.has_positive_area() || !b.has_positive_area()) throw ZeroAreaBox("iou of a zero-area box");
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0 || iy <= 0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

DirectionalHint direction_between(Point from, Point to, double image_diag) {
    const double dx = to.x - from.x;
    const double dy = to.y - from.y;
    if (dx == 0.0 && dy == 0.0) throw ZeroDistance("centroids coincide");
    // Counter-clockwise angle with "up" positive.
    double angle = std::atan2(-dy, dx) * 180.0 / std::numbers::pi;
    if (angle < 0) angle += 360.0;
    // Sector k spans (45k - 22.5, 45k + 22.5]; the closed upper edge sends
    // boundary angles to the clockwise neighbour.
    const int sector = static_cast<int>(std::ceil((angle - 22.5) / 45.0)) % 8;
    static constexpr Direction kCounterClockwise[8] = {Direction::E,  Direction::NE, Direction::N,
                                                       Direction::NW, Direction::W,  Direction::SW,
                                                       Direction::S,  Direction::SE};
    DirectionalHint hint;
    hint.direction = kCounterClockwise[(sector + 8) % 8];
    hint.magnitude = std::hypot(dx, dy) > 0.25 * image_diag ? Magnitude::far : Magnitude::near;
    return hint;
}

namespace {

struct Candidate {
    double iou;
    std::size_t student;
    std::size_t finding;
    std::size_t box;
};

std::optional<DirectionalHint> guidance_from(Point origin,
                                             const std::vector<GroundTruthFinding>& findings,
                                             double diag) {
    struct Target {
        double dist;
        std::size_t finding;
        std::size_t box;
        Point c;
    };
    std::vector<Target> targets;
    for (std::size_t f = 0; f < findings.size(); ++f) {
        for (std::size_t b = 0; b < findings[f].boxes.size(); ++b) {
            const auto c = findings[f].boxes[b].center();
            targets.push_back({std::hypot(c.x - origin.x, c.y - origin.y), f, b, c});
        }
    }
    std::sort(targets.begin(), targets.end(), [](const Target& l, const Target& r) {
        return std::tie(l.dist, l.finding, l.box) < std::tie(r.dist, r.finding, r.box);
    });
    for (const auto& t : targets) {
        if (t.dist > 0.0) return direction_between(origin, t.c, diag);
    }
    return std::nullopt;
}

}  // namespace

FocusResult validate_focus(const std::vector<BoundingBox>& student_boxes,
                           const std::vector<GroundTruthFinding>& findings, double threshold,
                           int image_width, int image_height) {
    FocusResult result;
    std::vector<Candidate> candidates;
    std::vector<double> best_per_student(student_boxes.size(), 0.0);
    for (std::size_t s = 0; s < student_boxes.size(); ++s) {
        for (std::size_t f = 0; f < findings.size(); ++f) {
            for (std::size_t b = 0; b < findings[f].boxes.size(); ++b) {
                const double v = iou(student_boxes[s], findings[f].boxes[b]);
                best_per_student[s] = std::max(best_per_student[s], v);
                if (v > 0.0) candidates.push_back({v, s, f, b});
            }
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& l, const Candidate& r) {
        if (l.iou != r.iou) return l.iou > r.iou;
        return std::tie(l.student, l.finding, l.box) < std::tie(r.student, r.finding, r.box);
    });

    std::vector<bool> student_used(student_boxes.size(), false);
    std::vector<std::vector<bool>> gt_used(findings.size());
    for (std::size_t f = 0; f < findings.size(); ++f) gt_used[f].assign(findings[f].boxes.size(), false);
    for (const auto& c : candidates) {
        if (student_used[c.student] || gt_used[c.finding][c.box]) continue;
        student_used[c.student] = true;
        gt_used[c.finding][c.box] = true;
        result.matches.push_back({c.student, findings[c.finding].label, c.box, c.iou});
        result.best_iou = std::max(result.best_iou, c.iou);
    }
    result.passed = result.best_iou >= threshold && !result.matches.empty();
    if (result.passed) return result;

    const double diag = std::hypot(static_cast<double>(image_width), static_cast<double>(image_height));
    const Point image_center{image_width / 2.0, image_height / 2.0};
    Point origin = image_center;
    if (!student_boxes.empty()) {
        std::size_t best = 0;
        for (std::size_t s = 1; s < student_boxes.size(); ++s) {
            if (best_per_student[s] > best_per_student[best]) best = s;
        }
        origin = student_boxes[best].center();
    }
    result.guidance = guidance_from(origin, findings, diag);
    if (!result.guidance) result.guidance = guidance_from(image_center, findings, diag);
    // Every target sits exactly at the image centre and under the box.
    if (!result.guidance) result.guidance = DirectionalHint{Direction::N, Magnitude::near};
    return result;
}

}  // namespace cxrtutor
