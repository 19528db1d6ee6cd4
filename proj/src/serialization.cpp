#include "cxrtutor/serialization.hpp"

#include <set>

#include "cxrtutor/errors.hpp"

namespace cxrtutor {
namespace {

double number_at(const json& j, const std::string& path) {
    if (!j.is_number()) throw MalformedSidecar(path + ": expected a number");
    return j.get<double>();
}

const json& member(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) throw MalformedSidecar(field_path(path, key) + ": missing field");
    return *it;
}

}  // namespace

std::string field_path(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

std::string field_path(const std::string& parent, std::size_t index) {
    return parent + "[" + std::to_string(index) + "]";
}

json box_to_array(const BoundingBox& box) {
    return json::array({box.x_min, box.y_min, box.x_max, box.y_max});
}

BoundingBox box_from_json(const json& j, const std::string& path) {
    BoundingBox box;
    if (j.is_array()) {
        if (j.size() != 4) throw MalformedSidecar(path + ": expected [x_min, y_min, x_max, y_max]");
        box.x_min = number_at(j[0], field_path(path, "x_min"));
        box.y_min = number_at(j[1], field_path(path, "y_min"));
        box.x_max = number_at(j[2], field_path(path, "x_max"));
        box.y_max = number_at(j[3], field_path(path, "y_max"));
        return box;
    }
    if (!j.is_object()) throw MalformedSidecar(path + ": expected a box array or object");
    box.x_min = number_at(member(j, "x_min", path), field_path(path, "x_min"));
    box.y_min = number_at(member(j, "y_min", path), field_path(path, "y_min"));
    box.x_max = number_at(member(j, "x_max", path), field_path(path, "x_max"));
    box.y_max = number_at(member(j, "y_max", path), field_path(path, "y_max"));
    if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw MalformedSidecar(field_path(path, "label") + ": expected a string");
        box.label = it->get<std::string>();
    }
    return box;
}

json fixation_to_json(const Fixation& f) {
    return {{"x", f.x}, {"y", f.y}, {"duration", f.duration}, {"order_index", f.order_index}};
}

Fixation fixation_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) throw MalformedSidecar(path + ": expected an object");
    Fixation f;
    f.x = number_at(member(j, "x", path), field_path(path, "x"));
    f.y = number_at(member(j, "y", path), field_path(path, "y"));
    f.duration = number_at(member(j, "duration", path), field_path(path, "duration"));
    const auto& order = member(j, "order_index", path);
    if (!order.is_number_integer()) {
        throw MalformedSidecar(field_path(path, "order_index") + ": expected an integer");
    }
    f.order_index = order.get<int>();
    return f;
}

json turn_to_json(const StudentTurn& turn) {
    json boxes = json::array();
    for (const auto& b : turn.boxes) {
        json box = {{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}};
        if (b.label) box["label"] = *b.label;
        boxes.push_back(std::move(box));
    }
    json fixations = json::array();
    for (const auto& f : turn.fixations) fixations.push_back(fixation_to_json(f));
    json requests = json::array();
    if (turn.requests.reasoning) requests.push_back("reasoning");
    if (turn.requests.knowledge) requests.push_back("knowledge");
    if (turn.requests.similar_cases) requests.push_back("similar_cases");
    return {{"boxes", boxes},           {"fixations", fixations},
            {"text", turn.text},        {"confidence", turn.confidence},
            {"requests", requests},     {"turn_index", turn.turn_index}};
}

StudentTurn turn_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) throw MalformedSidecar((path.empty() ? "body" : path) + ": expected an object");
    StudentTurn turn;
    if (auto it = j.find("boxes"); it != j.end()) {
        const auto p = field_path(path, "boxes");
        if (!it->is_array()) throw MalformedSidecar(p + ": expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            turn.boxes.push_back(box_from_json((*it)[i], field_path(p, i)));
        }
    }
    if (auto it = j.find("fixations"); it != j.end() && !it->is_null()) {
        const auto p = field_path(path, "fixations");
        if (!it->is_array()) throw MalformedSidecar(p + ": expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            turn.fixations.push_back(fixation_from_json((*it)[i], field_path(p, i)));
        }
    }
    if (auto it = j.find("text"); it != j.end()) {
        if (!it->is_string()) throw MalformedSidecar(field_path(path, "text") + ": expected a string");
        turn.text = it->get<std::string>();
    }
    if (auto it = j.find("confidence"); it != j.end() && !it->is_null()) {
        turn.confidence = number_at(*it, field_path(path, "confidence"));
    }
    if (auto it = j.find("requests"); it != j.end() && !it->is_null()) {
        const auto p = field_path(path, "requests");
        if (!it->is_array()) throw MalformedSidecar(p + ": expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& r = (*it)[i];
            const std::string name = r.is_string() ? r.get<std::string>() : "";
            if (name == "reasoning") turn.requests.reasoning = true;
            else if (name == "knowledge") turn.requests.knowledge = true;
            else if (name == "similar_cases") turn.requests.similar_cases = true;
            else throw MalformedSidecar(field_path(p, i) + ": unknown request flag");
        }
    }
    if (auto it = j.find("turn_index"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer()) {
            throw MalformedSidecar(field_path(path, "turn_index") + ": expected an integer");
        }
        turn.turn_index = it->get<int>();
    }
    return turn;
}

std::string validate_turn(const StudentTurn& turn, int image_width, int image_height) {
    for (std::size_t i = 0; i < turn.boxes.size(); ++i) {
        const auto& b = turn.boxes[i];
        const auto p = field_path("boxes", i);
        if (!(b.x_min < b.x_max)) return field_path(p, "x_min") + ": must be less than x_max";
        if (!(b.y_min < b.y_max)) return field_path(p, "y_min") + ": must be less than y_max";
        if (!b.within(image_width, image_height)) return p + ": lies outside the image";
    }
    std::set<int> orders;
    for (std::size_t i = 0; i < turn.fixations.size(); ++i) {
        const auto& f = turn.fixations[i];
        const auto p = field_path("fixations", i);
        if (!(f.duration > 0)) return field_path(p, "duration") + ": must be positive";
        if (f.order_index < 0) return field_path(p, "order_index") + ": must be non-negative";
        if (!orders.insert(f.order_index).second) return field_path(p, "order_index") + ": duplicate";
        if (f.x < 0 || f.y < 0 || f.x >= image_width || f.y >= image_height) {
            return p + ": lies outside the image";
        }
    }
    if (!orders.empty() && *orders.rbegin() != static_cast<int>(orders.size()) - 1) {
        return "fixations: order_index values must be contiguous from 0";
    }
    if (!(turn.confidence >= 0.0 && turn.confidence <= 1.0)) return "confidence: must lie in [0, 1]";
    return {};
}

json case_to_json(const CaseBundle& bundle) {
    json findings = json::array();
    for (const auto& f : bundle.findings) {
        json boxes = json::array();
        for (const auto& b : f.boxes) boxes.push_back(box_to_array(b));
        json descriptors = json::array();
        for (const auto& d : f.descriptors) descriptors.push_back({{"key", d.key}, {"value", d.value}});
        findings.push_back({{"label", f.label},
                            {"boxes", boxes},
                            {"descriptors", descriptors},
                            {"required_for_resolution", f.required_for_resolution}});
    }
    json metadata = json::object();
    for (const auto& [k, v] : bundle.metadata) {
        if (v == "true") metadata[k] = true;
        else if (v == "false") metadata[k] = false;
        else metadata[k] = v;
    }
    json out = {{"case_id", bundle.case_id},
                {"image_path", bundle.image_path.generic_string()},
                {"image_width", bundle.image_width},
                {"image_height", bundle.image_height},
                {"findings", findings},
                {"expected_sequence", bundle.expected_sequence},
                {"metadata", metadata},
                {"skills", bundle.skills}};
    if (bundle.lobe_mask) {
        out["lobe_mask"] = {{"path", "lobe_mask.png"}, {"region_names", bundle.lobe_mask->region_names}};
    }
    return out;
}

}  // namespace cxrtutor
