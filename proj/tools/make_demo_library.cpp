// Writes a small synthetic case library: procedurally drawn frontal films
// with lung-zone masks and boxed findings. Output is byte-identical across
// runs.
//
//   make_demo_library <out_dir>

#include <cmath>
#include <filesystem>
#include <iostream>

#include "cxrtutor/domain.hpp"
#include "cxrtutor/errors.hpp"
#include "cxrtutor/image.hpp"

namespace fs = std::filesystem;
using namespace cxrtutor;

namespace {

constexpr int kSize = 512;

struct Spec {
    std::string id;
    std::vector<GroundTruthFinding> findings;
    bool support_devices = false;
};

GroundTruthFinding finding(const std::string& label, BoundingBox box, std::vector<Descriptor> descriptors) {
    GroundTruthFinding f;
    f.label = label;
    box.label = label;
    f.boxes.push_back(box);
    f.descriptors = std::move(descriptors);
    return f;
}

bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
    const double dx = (x - cx) / rx;
    const double dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
}

// Viewer-left ellipse is the patient's right lung.
int lung_at(int x, int y) {
    if (in_ellipse(x, y, 150, 270, 95, 190)) return 0;
    if (in_ellipse(x, y, 362, 270, 95, 190)) return 1;
    return -1;
}

LobeMask zone_mask() {
    LobeMask m;
    m.width = kSize;
    m.height = kSize;
    m.region_names = {"right_upper", "right_middle", "right_lower", "left_upper", "left_middle", "left_lower"};
    m.labels.assign(static_cast<std::size_t>(kSize) * kSize, 0);
    for (int y = 0; y < kSize; ++y) {
        for (int x = 0; x < kSize; ++x) {
            const int lung = lung_at(x, y);
            if (lung < 0) continue;
            const int third = std::clamp((y - 80) * 3 / 380, 0, 2);
            m.labels[static_cast<std::size_t>(y) * kSize + x] = static_cast<std::uint8_t>(lung * 3 + third + 1);
        }
    }
    return m;
}

RgbImage film(const Spec& s) {
    RgbImage img;
    img.width = kSize;
    img.height = kSize;
    img.pixels.resize(static_cast<std::size_t>(kSize) * kSize * 3);
    for (int y = 0; y < kSize; ++y) {
        for (int x = 0; x < kSize; ++x) {
            double v = 150.0 + 40.0 * std::cos((x - 256) / 180.0);
            if (lung_at(x, y) >= 0) v = 55.0 + 0.08 * y;
            if (std::abs(x - 256) < 40 && y > 120) v = 200.0;
            // ribs
            if (lung_at(x, y) >= 0 && static_cast<int>(y + 0.25 * std::abs(x - 256)) % 42 < 5) v += 35.0;
            for (const auto& f : s.findings) {
                for (const auto& b : f.boxes) {
                    const auto c = b.center();
                    if (in_ellipse(x, y, c.x, c.y, b.width() / 2.0, b.height() / 2.0)) v = std::max(v, 175.0);
                }
            }
            if (s.support_devices && std::abs(x - 262) < 3 && y < 300) v = 250.0;
            const auto g = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            const auto i = (static_cast<std::size_t>(y) * kSize + x) * 3;
            img.pixels[i] = img.pixels[i + 1] = img.pixels[i + 2] = g;
        }
    }
    return img;
}

std::vector<Spec> specs() {
    return {
        {"case-0001",
         {finding("nodule", {300, 150, 350, 200}, {{"size", "12 mm"}, {"location", "left upper lobe"}}),
          finding("pleural effusion", {70, 380, 210, 460}, {{"laterality", "right"}})},
         false},
        {"case-0002", {finding("nodule", {310, 160, 362, 212}, {{"size", "10 mm"}})}, false},
        {"case-0003", {finding("cardiomegaly", {170, 240, 350, 420}, {{"density", "enlarged silhouette"}})}, true},
        {"case-0004", {finding("pneumothorax", {290, 90, 440, 190}, {{"location", "left apex"}})}, true},
        {"case-0005",
         {finding("consolidation", {90, 250, 200, 360}, {{"lobe", "right lower lobe"}}),
          finding("pleural effusion", {60, 390, 200, 460}, {{"size", "small"}})},
         false},
        {"case-0006",
         {finding("nodule", {120, 140, 170, 190}, {{"size", "8 mm"}}),
          finding("cardiomegaly", {175, 240, 345, 415}, {})},
         true},
    };
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_demo_library <out_dir>\n";
        return 2;
    }
    const fs::path out = argv[1];
    try {
        const auto mask = zone_mask();
        for (const auto& s : specs()) {
            const auto dir = out / s.id;
            fs::create_directories(dir);
            write_png_rgb(film(s), dir / "image.png");
            CaseBundle b;
            b.case_id = s.id;
            b.directory = dir;
            b.image_path = "image.png";
            b.image_width = kSize;
            b.image_height = kSize;
            b.findings = s.findings;
            b.lobe_mask = mask;
            b.expected_sequence = mask.region_names;
            b.metadata["support_devices"] = s.support_devices ? "true" : "false";
            b.skills = default_skills(b.findings);
            validate_case_bundle(b);
            write_case_bundle(b, dir);
            std::cout << "wrote " << (dir / "case.json").string() << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
