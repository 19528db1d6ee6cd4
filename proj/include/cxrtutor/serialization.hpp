#pragma once

// JSON encodings shared by the case bundle format, the event log and the
// HTTP API.

#include <nlohmann/json.hpp>

#include <string>

#include "cxrtutor/domain.hpp"

namespace cxrtutor {

using json = nlohmann::json;

// Thrown (as MalformedSidecar or a caller-chosen type) with a field path such
// as "findings[0].boxes[1]".
std::string field_path(const std::string& parent, const std::string& key);
std::string field_path(const std::string& parent, std::size_t index);

json box_to_array(const BoundingBox& box);
// Accepts [x_min, y_min, x_max, y_max] or {"x_min": .., ..., "label": ..}.
BoundingBox box_from_json(const json& j, const std::string& path);

json fixation_to_json(const Fixation& f);
Fixation fixation_from_json(const json& j, const std::string& path);

json turn_to_json(const StudentTurn& turn);
// Parses a learner submission. turn_index is taken from the body when present.
// Structural problems throw MalformedSidecar with the offending field path;
// domain checks (box order, fixation duration) are left to validate_turn.
StudentTurn turn_from_json(const json& j, const std::string& path = "");

// Returns an empty string when the turn is valid, else "<field path>: <reason>".
std::string validate_turn(const StudentTurn& turn, int image_width, int image_height);

json case_to_json(const CaseBundle& bundle);

}  // namespace cxrtutor
