#include "cxrtutor/domain.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "cxrtutor/errors.hpp"
#include "cxrtutor/image.hpp"
#include "cxrtutor/serialization.hpp"

namespace fs = std::filesystem;

namespace cxrtutor {

bool BoundingBox::within(int image_width, int image_height) const {
    return x_min >= 0 && y_min >= 0 && x_max <= image_width && y_max <= image_height;
}

std::string LobeMask::region_at(int x, int y) const {
    const auto v = at(x, y);
    if (v == 0 || v > region_names.size()) return {};
    return region_names[v - 1];
}

bool CaseBundle::support_devices() const {
    auto it = metadata.find("support_devices");
    return it != metadata.end() && it->second == "true";
}

const GroundTruthFinding* CaseBundle::find_finding(const std::string& label) const {
    for (const auto& f : findings) {
        if (f.label == label) return &f;
    }
    return nullptr;
}

LobeMask CaseBundle::effective_mask() const {
    if (lobe_mask) return *lobe_mask;
    return fallback_zone_grid(image_width, image_height);
}

const std::vector<std::string>& fallback_region_names() {
    static const std::vector<std::string> names = {"right_upper", "left_upper", "right_mid",
                                                   "left_mid",    "right_lower", "left_lower"};
    return names;
}

LobeMask fallback_zone_grid(int image_width, int image_height) {
    LobeMask mask;
    mask.width = image_width;
    mask.height = image_height;
    mask.region_names = fallback_region_names();
    mask.labels.resize(static_cast<std::size_t>(image_width) * image_height);
    for (int y = 0; y < image_height; ++y) {
        // Integer splitting keeps every band within one pixel of the ideal size.
        const int row = std::min(2, (3 * y) / image_height);
        for (int x = 0; x < image_width; ++x) {
            const int col = std::min(1, (2 * x) / image_width);
            mask.labels[static_cast<std::size_t>(y) * image_width + x] =
                static_cast<std::uint8_t>(row * 2 + col + 1);
        }
    }
    return mask;
}

std::vector<std::string> default_skills(const std::vector<GroundTruthFinding>& findings) {
    std::vector<std::string> skills;
    for (const auto& f : findings) {
        if (std::find(skills.begin(), skills.end(), f.label) == skills.end()) skills.push_back(f.label);
    }
    skills.emplace_back(kLocalizationSkill);
    skills.emplace_back(kSystematicSearchSkill);
    return skills;
}

void validate_case_bundle(const CaseBundle& b) {
    if (b.case_id.empty()) throw InvariantViolation("empty case_id");
    if (b.image_width <= 0 || b.image_height <= 0) throw InvariantViolation("non-positive image size");
    if (b.findings.empty()) throw InvariantViolation("case has no findings");
    for (const auto& f : b.findings) {
        if (f.label.empty()) throw InvariantViolation("empty finding label");
        if (f.boxes.empty()) throw InvariantViolation("finding '" + f.label + "' has no box");
        for (const auto& box : f.boxes) {
            if (!box.has_positive_area()) throw InvariantViolation("zero-area box in finding '" + f.label + "'");
            if (!box.within(b.image_width, b.image_height)) {
                throw InvariantViolation("box outside image in finding '" + f.label + "'");
            }
        }
    }
    const auto mask_names = b.lobe_mask ? b.lobe_mask->region_names : fallback_region_names();
    if (b.lobe_mask) {
        const auto& m = *b.lobe_mask;
        if (m.region_names.empty()) throw InvariantViolation("lobe mask has no regions");
        if (std::set<std::string>(m.region_names.begin(), m.region_names.end()).size() !=
            m.region_names.size()) {
            throw InvariantViolation("duplicate region name in lobe mask");
        }
        if (m.width != b.image_width || m.height != b.image_height) {
            throw InvariantViolation("lobe mask size differs from image");
        }
        if (m.labels.size() != static_cast<std::size_t>(m.width) * m.height) {
            throw InvariantViolation("lobe mask raster size mismatch");
        }
        for (auto v : m.labels) {
            if (v > m.region_names.size()) throw InvariantViolation("lobe mask value out of range");
        }
    }
    for (const auto& region : b.expected_sequence) {
        if (std::find(mask_names.begin(), mask_names.end(), region) == mask_names.end()) {
            throw InvariantViolation("unknown region '" + region + "' in expected_sequence");
        }
    }
}

namespace {

const json& require(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw MalformedSidecar(std::string(key) + ": missing field");
    return *it;
}

std::vector<std::string> string_list(const json& j, const std::string& path) {
    if (!j.is_array()) throw MalformedSidecar(path + ": expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_string()) throw MalformedSidecar(field_path(path, i) + ": expected a string");
        out.push_back(j[i].get<std::string>());
    }
    return out;
}

int positive_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw MalformedSidecar(path + ": expected an integer");
    return j.get<int>();
}

GroundTruthFinding finding_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) throw MalformedSidecar(path + ": expected an object");
    GroundTruthFinding f;
    const auto& label = j.find("label");
    if (label == j.end() || !label->is_string()) throw MalformedSidecar(field_path(path, "label") + ": expected a string");
    f.label = label->get<std::string>();
    const auto boxes = j.find("boxes");
    if (boxes == j.end() || !boxes->is_array()) {
        throw MalformedSidecar(field_path(path, "boxes") + ": expected an array");
    }
    for (std::size_t i = 0; i < boxes->size(); ++i) {
        f.boxes.push_back(box_from_json((*boxes)[i], field_path(field_path(path, "boxes"), i)));
        if (!f.boxes.back().label) f.boxes.back().label = f.label;
    }
    if (auto d = j.find("descriptors"); d != j.end()) {
        const auto dp = field_path(path, "descriptors");
        if (d->is_object()) {
            for (const auto& [k, v] : d->items()) {
                if (!v.is_string()) throw MalformedSidecar(field_path(dp, k) + ": expected a string");
                f.descriptors.push_back({k, v.get<std::string>()});
            }
        } else if (d->is_array()) {
            for (std::size_t i = 0; i < d->size(); ++i) {
                const auto& item = (*d)[i];
                const auto ip = field_path(dp, i);
                if (!item.is_object() || !item.contains("key") || !item.contains("value") ||
                    !item["key"].is_string() || !item["value"].is_string()) {
                    throw MalformedSidecar(ip + ": expected {\"key\": string, \"value\": string}");
                }
                f.descriptors.push_back({item["key"].get<std::string>(), item["value"].get<std::string>()});
            }
        } else {
            throw MalformedSidecar(dp + ": expected an array");
        }
    }
    if (auto r = j.find("required_for_resolution"); r != j.end()) {
        if (!r->is_boolean()) {
            throw MalformedSidecar(field_path(path, "required_for_resolution") + ": expected a boolean");
        }
        f.required_for_resolution = r->get<bool>();
    }
    return f;
}

}  // namespace

CaseBundle load_case_bundle(const fs::path& dir) {
    const auto sidecar = dir / "case.json";
    if (!fs::exists(sidecar)) throw MissingFile("missing " + sidecar.string());
    json j;
    {
        std::ifstream in(sidecar);
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw MalformedSidecar("case.json: " + std::string(e.what()));
        }
    }
    if (!j.is_object()) throw MalformedSidecar("case.json: expected an object");

    CaseBundle b;
    b.directory = dir;
    const auto& id = require(j, "case_id");
    if (!id.is_string()) throw MalformedSidecar("case_id: expected a string");
    b.case_id = id.get<std::string>();
    const auto& image = require(j, "image_path");
    if (!image.is_string()) throw MalformedSidecar("image_path: expected a string");
    b.image_path = image.get<std::string>();
    b.image_width = positive_int(require(j, "image_width"), "image_width");
    b.image_height = positive_int(require(j, "image_height"), "image_height");

    const auto& findings = require(j, "findings");
    if (!findings.is_array()) throw MalformedSidecar("findings: expected an array");
    for (std::size_t i = 0; i < findings.size(); ++i) {
        b.findings.push_back(finding_from_json(findings[i], field_path("findings", i)));
    }

    if (auto m = j.find("lobe_mask"); m != j.end() && !m->is_null()) {
        if (!m->is_object()) throw MalformedSidecar("lobe_mask: expected an object");
        LobeMask mask;
        mask.region_names = string_list(require(*m, "region_names"), "lobe_mask.region_names");
        std::string rel = "lobe_mask.png";
        if (auto p = m->find("path"); p != m->end()) {
            if (!p->is_string()) throw MalformedSidecar("lobe_mask.path: expected a string");
            rel = p->get<std::string>();
        }
        const auto mask_file = dir / rel;
        if (!fs::exists(mask_file)) throw MissingFile("missing " + mask_file.string());
        mask.labels = read_png_indices(mask_file, mask.width, mask.height);
        b.lobe_mask = std::move(mask);
    }

    if (auto e = j.find("expected_sequence"); e != j.end() && !e->is_null()) {
        b.expected_sequence = string_list(*e, "expected_sequence");
    } else {
        b.expected_sequence = b.lobe_mask ? b.lobe_mask->region_names : fallback_region_names();
    }

    if (auto m = j.find("metadata"); m != j.end() && !m->is_null()) {
        if (!m->is_object()) throw MalformedSidecar("metadata: expected an object");
        for (const auto& [k, v] : m->items()) {
            if (v.is_string()) b.metadata[k] = v.get<std::string>();
            else if (v.is_boolean()) b.metadata[k] = v.get<bool>() ? "true" : "false";
            else if (v.is_number()) b.metadata[k] = v.dump();
            else throw MalformedSidecar(field_path("metadata", k) + ": expected a scalar");
        }
    }
    if (!b.metadata.contains("support_devices")) b.metadata["support_devices"] = "false";

    if (auto s = j.find("skills"); s != j.end() && !s->is_null()) {
        b.skills = string_list(*s, "skills");
    } else {
        b.skills = default_skills(b.findings);
    }

    const auto image_file = b.image_file();
    if (!fs::exists(image_file)) throw MissingFile("missing image " + image_file.string());
    const auto info = read_png_info(image_file);
    if (info.width != b.image_width || info.height != b.image_height) {
        throw InvariantViolation("image dimensions differ from case.json");
    }

    validate_case_bundle(b);
    return b;
}

void write_case_bundle(const CaseBundle& bundle, const fs::path& dir) {
    fs::create_directories(dir);
    const auto target_image = dir / bundle.image_path;
    const auto source_image = bundle.image_file();
    if (fs::exists(source_image) &&
        (!fs::exists(target_image) || !fs::equivalent(source_image, target_image))) {
        fs::create_directories(target_image.parent_path());
        fs::copy_file(source_image, target_image, fs::copy_options::overwrite_existing);
    }
    if (bundle.lobe_mask) {
        write_png_indexed(bundle.lobe_mask->labels, bundle.lobe_mask->width, bundle.lobe_mask->height,
                          dir / "lobe_mask.png");
    }
    const auto tmp = dir / "case.json.tmp";
    {
        std::ofstream out(tmp);
        out << case_to_json(bundle).dump(2) << '\n';
        if (!out) throw ImageWriteError("failed writing " + tmp.string());
    }
    fs::rename(tmp, dir / "case.json");
}

}  // namespace cxrtutor
