#include "cxrtutor/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <system_error>

#include "cxrtutor/backends.hpp"
#include "cxrtutor/errors.hpp"
#include "cxrtutor/image.hpp"

namespace fs = std::filesystem;

namespace cxrtutor {

CaseIndex::CaseIndex(std::vector<CaseIndexEntry> entries) : entries_(std::move(entries)) {}

const CaseIndexEntry* CaseIndex::find(const std::string& case_id) const {
    for (const auto& e : entries_) {
        if (e.case_id == case_id) return &e;
    }
    return nullptr;
}

CaseIndexEntry index_entry(const CaseBundle& c) {
    CaseIndexEntry e;
    e.case_id = c.case_id;
    e.support_devices = c.support_devices();
    std::map<std::string, std::pair<Point, double>> acc;  // weighted sum, total area
    for (const auto& f : c.findings) {
        e.label_set.insert(f.label);
        auto& [sum, area] = acc[f.label];
        for (const auto& b : f.boxes) {
            const auto center = b.center();
            sum.x += center.x * b.area();
            sum.y += center.y * b.area();
            area += b.area();
        }
    }
    for (const auto& [label, a] : acc) {
        const auto& [sum, area] = a;
        e.centroids[label] = {sum.x / area / c.image_width, sum.y / area / c.image_height};
    }
    return e;
}

CaseIndex build_index(const std::vector<CaseBundle>& cases) {
    std::vector<CaseIndexEntry> entries;
    std::set<std::string> seen;
    for (const auto& c : cases) {
        if (!seen.insert(c.case_id).second) throw DuplicateCaseId("duplicate case id " + c.case_id);
        entries.push_back(index_entry(c));
    }
    return CaseIndex(std::move(entries));
}

double similarity(const CaseIndexEntry& a, const CaseIndexEntry& b, const SimilarityWeights& w) {
    std::vector<std::string> shared;
    std::set_intersection(a.label_set.begin(), a.label_set.end(), b.label_set.begin(), b.label_set.end(),
                          std::back_inserter(shared));
    const auto union_size = a.label_set.size() + b.label_set.size() - shared.size();
    // Two cases without findings match fully on labels and space.
    const double jaccard = union_size == 0 ? 1.0 : static_cast<double>(shared.size()) / union_size;

    double spatial = union_size == 0 ? 1.0 : 0.0;
    if (!shared.empty()) {
        for (const auto& label : shared) {
            const auto& pa = a.centroids.at(label);
            const auto& pb = b.centroids.at(label);
            spatial += 1.0 - std::hypot(pa.x - pb.x, pa.y - pb.y) / std::numbers::sqrt2;
        }
        spatial /= static_cast<double>(shared.size());
    }
    const double meta = a.support_devices == b.support_devices ? 1.0 : 0.0;
    return std::clamp(w.label * jaccard + w.spatial * spatial + w.meta * meta, 0.0, 1.0);
}

std::vector<SimilarCase> top_similar(const std::string& query_case_id, const CaseIndex& index, int k,
                                     const SimilarityWeights& w) {
    const auto* query = index.find(query_case_id);
    if (!query) throw UnknownCase("case " + query_case_id + " is not indexed");
    std::vector<SimilarCase> scored;
    for (const auto& e : index.entries()) {
        if (e.case_id == query_case_id) continue;
        SimilarCase s;
        s.case_id = e.case_id;
        s.score = similarity(*query, e, w);
        std::set_intersection(query->label_set.begin(), query->label_set.end(), e.label_set.begin(),
                              e.label_set.end(), std::back_inserter(s.shared_labels));
        scored.push_back(std::move(s));
    }
    std::sort(scored.begin(), scored.end(), [](const SimilarCase& l, const SimilarCase& r) {
        if (l.score != r.score) return l.score > r.score;
        return l.case_id < r.case_id;
    });
    if (scored.size() > static_cast<std::size_t>(std::max(k, 0))) scored.resize(std::max(k, 0));
    return scored;
}

std::string overlay_file_name(const std::string& case_id, const std::string& finding_label) {
    // Hashed so the file name never spells out the finding.
    return case_id + "_" + hex64(fnv1a64(finding_label)).substr(0, 12) + ".png";
}

fs::path render_overlay(const CaseBundle& c, const std::string& finding_label, const fs::path& out_dir) {
    const auto* finding = c.find_finding(finding_label);
    if (!finding) throw UnknownLabel("case " + c.case_id + " has no finding '" + finding_label + "'");
    auto image = read_png_rgb(c.image_file());

    constexpr int kStroke = 3;
    auto paint = [&image](int x, int y) {
        if (x < 0 || y < 0 || x >= image.width || y >= image.height) return;
        auto* px = image.at(x, y);
        px[0] = 255;
        px[1] = 32;
        px[2] = 32;
    };
    for (const auto& b : finding->boxes) {
        const int x0 = static_cast<int>(std::floor(b.x_min));
        const int y0 = static_cast<int>(std::floor(b.y_min));
        const int x1 = static_cast<int>(std::ceil(b.x_max)) - 1;
        const int y1 = static_cast<int>(std::ceil(b.y_max)) - 1;
        for (int t = 0; t < kStroke; ++t) {
            for (int x = x0; x <= x1; ++x) {
                paint(x, y0 + t);
                paint(x, y1 - t);
            }
            for (int y = y0; y <= y1; ++y) {
                paint(x0 + t, y);
                paint(x1 - t, y);
            }
        }
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ImageWriteError("cannot create overlay directory " + out_dir.string());
    const auto target = out_dir / overlay_file_name(c.case_id, finding_label);
    auto tmp = target;
    tmp += ".tmp" + hex64(fnv1a64(target.string() + std::to_string(reinterpret_cast<std::uintptr_t>(&image))));
    write_png_rgb(image, tmp);
    fs::rename(tmp, target, ec);
    if (ec) throw ImageWriteError("cannot move overlay into place: " + ec.message());
    return target;
}

fs::path OverlayStore::get(const CaseBundle& c, const std::string& finding_label) {
    const auto key = c.case_id + '\n' + finding_label;
    {
        std::lock_guard lock(mutex_);
        if (auto it = rendered_.find(key); it != rendered_.end() && fs::exists(it->second)) return it->second;
    }
    auto path = render_overlay(c, finding_label, out_dir_);
    std::lock_guard lock(mutex_);
    rendered_[key] = path;
    return path;
}

}  // namespace cxrtutor
