#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "cxrtutor/domain.hpp"

namespace cxrtutor {

struct CaseIndexEntry {
    std::string case_id;
    std::set<std::string> label_set;
    std::map<std::string, Point> centroids;  // normalised to [0,1]^2
    bool support_devices = false;
    bool operator==(const CaseIndexEntry&) const = default;
};

class CaseIndex {
public:
    CaseIndex() = default;
    explicit CaseIndex(std::vector<CaseIndexEntry> entries);

    const std::vector<CaseIndexEntry>& entries() const { return entries_; }
    const CaseIndexEntry* find(const std::string& case_id) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

private:
    std::vector<CaseIndexEntry> entries_;
};

struct SimilarityWeights {
    double label = 0.5;
    double spatial = 0.3;
    double meta = 0.2;
};

struct SimilarCase {
    std::string case_id;
    double score = 0.0;
    std::vector<std::string> shared_labels;
    std::string overlay_path;
    bool operator==(const SimilarCase&) const = default;
};

// Centroid of a label: area-weighted mean of its box centres, normalised by
// the image size. Throws DuplicateCaseId.
CaseIndex build_index(const std::vector<CaseBundle>& cases);
CaseIndexEntry index_entry(const CaseBundle& c);

// w_label * Jaccard + w_spatial * mean over shared labels of
// (1 - centroid distance / sqrt 2) + w_meta * [support devices agree].
double similarity(const CaseIndexEntry& a, const CaseIndexEntry& b, const SimilarityWeights& w = {});

// k best other cases, score descending then case_id ascending. overlay_path
// is left empty. Throws UnknownCase.
std::vector<SimilarCase> top_similar(const std::string& query_case_id, const CaseIndex& index, int k = 3,
                                     const SimilarityWeights& w = {});

// Copy of the case image with a 3-pixel stroke traced around every box of the
// finding. Output bytes depend only on the inputs. Throws UnknownLabel or
// ImageWriteError.
std::filesystem::path render_overlay(const CaseBundle& c, const std::string& finding_label,
                                     const std::filesystem::path& out_dir);

// Renders each overlay once and reuses the file afterwards.
class OverlayStore {
public:
    explicit OverlayStore(std::filesystem::path out_dir) : out_dir_(std::move(out_dir)) {}
    std::filesystem::path get(const CaseBundle& c, const std::string& finding_label);
    const std::filesystem::path& directory() const { return out_dir_; }

private:
    std::filesystem::path out_dir_;
    std::mutex mutex_;
    std::map<std::string, std::filesystem::path> rendered_;
};

std::string overlay_file_name(const std::string& case_id, const std::string& finding_label);

}  // namespace cxrtutor
