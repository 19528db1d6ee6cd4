#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cxrtutor/config.hpp"
#include "cxrtutor/domain.hpp"
#include "cxrtutor/image.hpp"
#include "cxrtutor/orchestrator.hpp"

namespace fixtures {

namespace fs = std::filesystem;

inline fs::path source_dir() { return CXRTUTOR_SOURCE_DIR; }
inline fs::path data_dir() { return source_dir() / "data"; }

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "cxrtutor-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& p) const { return path_ / p; }

private:
    fs::path path_;
};

inline void write_gray_png(const fs::path& path, int w, int h, std::uint8_t value = 90) {
    cxrtutor::RgbImage img;
    img.width = w;
    img.height = h;
    img.pixels.assign(static_cast<std::size_t>(w) * h * 3, value);
    cxrtutor::write_png_rgb(img, path);
}

inline cxrtutor::GroundTruthFinding finding(const std::string& label, cxrtutor::BoundingBox box,
                                            std::vector<cxrtutor::Descriptor> descriptors = {}) {
    cxrtutor::GroundTruthFinding f;
    f.label = label;
    box.label = label;
    f.boxes.push_back(box);
    f.descriptors = std::move(descriptors);
    return f;
}

// In-memory bundle whose image lives at `image` (shared across cases).
inline cxrtutor::CaseBundle make_case(const std::string& id, std::vector<cxrtutor::GroundTruthFinding> findings,
                                      const fs::path& image, int w, int h, bool devices = false) {
    cxrtutor::CaseBundle c;
    c.case_id = id;
    c.directory = image.parent_path();
    c.image_path = image.filename();
    c.image_width = w;
    c.image_height = h;
    c.findings = std::move(findings);
    c.expected_sequence = cxrtutor::fallback_region_names();
    c.metadata["support_devices"] = devices ? "true" : "false";
    c.skills = cxrtutor::default_skills(c.findings);
    return c;
}

// Stub backends, offline knowledge, overlays under `scratch`.
inline cxrtutor::EngineConfig stub_config(const fs::path& scratch) {
    cxrtutor::EngineConfig c;
    c.overlay_dir = scratch / "overlays";
    c.sessions_dir = scratch / "sessions";
    c.library_dir = data_dir() / "cases";
    return c;
}

inline std::vector<cxrtutor::CaseBundle> demo_library() { return cxrtutor::load_library(data_dir() / "cases"); }

inline cxrtutor::Engine demo_engine(const fs::path& scratch, cxrtutor::AblationConfig ablation = {}) {
    auto c = stub_config(scratch);
    c.ablation = ablation;
    return cxrtutor::Engine(c, demo_library(), cxrtutor::make_services(c));
}

inline cxrtutor::StudentTurn turn_with_box(const cxrtutor::BoundingBox& b, const std::string& text, int index) {
    cxrtutor::StudentTurn t;
    t.boxes.push_back(b);
    t.text = text;
    t.turn_index = index;
    return t;
}

}  // namespace fixtures
