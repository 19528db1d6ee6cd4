#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cxrtutor/domain.hpp"

namespace cxrtutor {

// Versioned label/descriptor -> category vocabulary. Keys are matched after
// normalisation, so "Pleural Effusion" and "pleural effusions" share an entry.
class CategoryTable {
public:
    static const CategoryTable& defaults();
    // Flat "kind.key = category" text table; see data/category_map.txt.
    static CategoryTable parse(std::string_view text);
    static CategoryTable load(const std::filesystem::path& path);

    int version() const { return version_; }
    std::string label_category(const std::string& label) const;
    std::string descriptor_category(const std::string& key) const;
    bool known_label(const std::string& label) const;

    // Every category the table can emit.
    const std::set<std::string>& vocabulary() const { return vocabulary_; }
    // Normalised finding labels known to the table, in table order.
    const std::vector<std::pair<std::string, std::string>>& labels() const { return labels_; }
    // Extra cue words per category (used by keyword-driven stubs).
    const std::vector<std::pair<std::string, std::string>>& keywords() const { return keywords_; }

private:
    int version_ = 1;
    std::vector<std::pair<std::string, std::string>> labels_;
    std::vector<std::pair<std::string, std::string>> descriptors_;
    std::vector<std::pair<std::string, std::string>> keywords_;
    std::string default_label_ = "other finding";
    std::string default_descriptor_ = "finding characteristic";
    std::set<std::string> vocabulary_;
};

inline constexpr const char* kMeasurementCategory = "size/measurement";
inline constexpr const char* kLocationCategory = "location/laterality";

// Lower-cased tokens: letter runs (with plural stemming), numbers (with an
// optional decimal part) and the percent sign. Everything else separates.
std::vector<std::string> normalize_tokens(std::string_view text);
std::string normalize_text(std::string_view text);  // tokens joined by single spaces
bool is_number_token(const std::string& token);
bool is_unit_token(const std::string& token);

struct SanitizedCaseSummary {
    std::vector<std::string> categories;
    int finding_count = 0;
    std::vector<std::string> anatomy_hints;
    // Category of each finding label, parallel to the case's findings.
    std::vector<std::string> finding_categories;
    bool operator==(const SanitizedCaseSummary&) const = default;
};

SanitizedCaseSummary sanitize_case(const CaseBundle& c, const CategoryTable& table = CategoryTable::defaults());

enum class LeakSource { measurement, location, descriptor, label };
std::string to_string(LeakSource s);

struct Leak {
    std::string offending_substring;
    LeakSource source = LeakSource::descriptor;
    bool operator==(const Leak&) const = default;
};

struct LeakReport {
    std::vector<Leak> leaks;
    bool clean() const { return leaks.empty(); }
};

using UtteredTerms = std::set<std::string>;

// Precomputed ground-truth vocabulary of one case.
class LeakDetector {
public:
    explicit LeakDetector(const CaseBundle& c, const CategoryTable& table = CategoryTable::defaults());
    LeakReport detect(std::string_view text, const UtteredTerms& uttered) const;
    bool is_safe(std::string_view text, const UtteredTerms& uttered) const {
        return detect(text, uttered).clean();
    }

private:
    struct Term {
        std::vector<std::string> tokens;
        std::string joined;
        LeakSource source;
    };
    std::vector<Term> terms_;
};

LeakReport detect_leaks(std::string_view text, const CaseBundle& c, const UtteredTerms& student_uttered,
                        const CategoryTable& table = CategoryTable::defaults());

// Union of normalised tokens and number+unit bigrams over every student text.
UtteredTerms student_uttered_terms(const std::vector<std::string>& texts);
void add_uttered_terms(UtteredTerms& terms, std::string_view text);

// Keeps only lines that pass the detector; used to strip unsafe content from
// free text before it reaches a learner.
std::string keep_safe_lines(std::string_view text, const LeakDetector& detector, const UtteredTerms& uttered);

}  // namespace cxrtutor
