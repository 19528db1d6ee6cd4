#include "cxrtutor/sanitizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "cxrtutor/errors.hpp"
#include "embedded_category_map.hpp"

namespace cxrtutor {
namespace {

std::string stem(std::string word) {
    const auto n = word.size();
    if (n <= 3) return word;
    if (word.ends_with("ies") && n > 4) return word.substr(0, n - 3) + "y";
    if (word.ends_with("sses") || word.ends_with("xes") || word.ends_with("ches") ||
        word.ends_with("shes")) {
        return word.substr(0, n - 2);
    }
    if (word.ends_with("s") && !word.ends_with("ss") && !word.ends_with("us")) return word.substr(0, n - 1);
    return word;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

const std::string* lookup(const std::vector<std::pair<std::string, std::string>>& table, const std::string& key) {
    const auto norm = normalize_text(key);
    for (const auto& [k, v] : table) {
        if (k == norm) return &v;
    }
    return nullptr;
}

bool contains_sequence(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > hay.size()) return false;
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

std::vector<std::string> normalize_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    const auto n = text.size();
    auto is_alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
    auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
    while (i < n) {
        const char c = text[i];
        if (is_alpha(c)) {
            std::string word;
            while (i < n && is_alpha(text[i])) word += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i++])));
            tokens.push_back(stem(std::move(word)));
        } else if (is_digit(c)) {
            std::string num;
            while (i < n && is_digit(text[i])) num += text[i++];
            if (i + 1 < n && (text[i] == '.' || text[i] == ',') && is_digit(text[i + 1])) {
                num += '.';
                ++i;
                while (i < n && is_digit(text[i])) num += text[i++];
            }
            tokens.push_back(std::move(num));
        } else if (c == '%') {
            tokens.emplace_back("%");
            ++i;
        } else {
            ++i;
        }
    }
    return tokens;
}

std::string normalize_text(std::string_view text) { return join(normalize_tokens(text)); }

bool is_number_token(const std::string& token) {
    return !token.empty() && std::isdigit(static_cast<unsigned char>(token.front())) != 0;
}

bool is_unit_token(const std::string& token) { return token == "mm" || token == "cm" || token == "%"; }

// ---------------------------------------------------------------------------
// CategoryTable

const CategoryTable& CategoryTable::defaults() {
    static const CategoryTable table = parse(kEmbeddedCategoryMap);
    return table;
}

CategoryTable CategoryTable::parse(std::string_view text) {
    CategoryTable t;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw MalformedSidecar("category map line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = trim(std::string_view(stripped).substr(0, eq));
        const auto value = trim(std::string_view(stripped).substr(eq + 1));
        if (key == "version") {
            t.version_ = std::stoi(value);
            continue;
        }
        const auto dot = key.find('.');
        if (dot == std::string::npos || value.empty()) {
            throw MalformedSidecar("category map line " + std::to_string(line_no) + ": expected kind.key = category");
        }
        const auto kind = key.substr(0, dot);
        const auto name = normalize_text(key.substr(dot + 1));
        if (kind == "label") t.labels_.emplace_back(name, value);
        else if (kind == "descriptor") t.descriptors_.emplace_back(name, value);
        else if (kind == "keyword") t.keywords_.emplace_back(name, value);
        else if (kind == "default" && name == "label") t.default_label_ = value;
        else if (kind == "default" && name == "descriptor") t.default_descriptor_ = value;
        else throw MalformedSidecar("category map line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    t.vocabulary_.insert(t.default_label_);
    t.vocabulary_.insert(t.default_descriptor_);
    for (const auto* table : {&t.labels_, &t.descriptors_, &t.keywords_}) {
        for (const auto& [_, v] : *table) t.vocabulary_.insert(v);
    }
    return t;
}

CategoryTable CategoryTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open category map " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string CategoryTable::label_category(const std::string& label) const {
    if (const auto* v = lookup(labels_, label)) return *v;
    return default_label_;
}

std::string CategoryTable::descriptor_category(const std::string& key) const {
    if (const auto* v = lookup(descriptors_, key)) return *v;
    return default_descriptor_;
}

bool CategoryTable::known_label(const std::string& label) const { return lookup(labels_, label) != nullptr; }

// ---------------------------------------------------------------------------
// Leak detection

std::string to_string(LeakSource s) {
    switch (s) {
        case LeakSource::measurement: return "measurement";
        case LeakSource::location: return "location";
        case LeakSource::descriptor: return "descriptor";
        case LeakSource::label: return "label";
    }
    return "descriptor";
}

LeakDetector::LeakDetector(const CaseBundle& c, const CategoryTable& table) {
    auto add = [this](const std::string& raw, LeakSource source) {
        auto tokens = normalize_tokens(raw);
        if (tokens.empty()) return;
        auto joined = join(tokens);
        for (const auto& t : terms_) {
            if (t.joined == joined) return;
        }
        terms_.push_back({std::move(tokens), std::move(joined), source});
    };
    for (const auto& f : c.findings) {
        add(f.label, LeakSource::label);
        for (const auto& d : f.descriptors) {
            const auto category = table.descriptor_category(d.key);
            const auto tokens = normalize_tokens(d.value);
            for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
                if (is_number_token(tokens[i]) && is_unit_token(tokens[i + 1])) {
                    add(tokens[i] + " " + tokens[i + 1], LeakSource::measurement);
                }
            }
            if (category == kMeasurementCategory) add(d.value, LeakSource::measurement);
            else if (category == kLocationCategory) add(d.value, LeakSource::location);
            else add(d.value, LeakSource::descriptor);
        }
    }
}

LeakReport LeakDetector::detect(std::string_view text, const UtteredTerms& uttered) const {
    LeakReport report;
    const auto tokens = normalize_tokens(text);
    auto was_uttered = [&uttered](const std::vector<std::string>& term_tokens, const std::string& joined) {
        if (uttered.contains(joined)) return true;
        return std::all_of(term_tokens.begin(), term_tokens.end(),
                           [&uttered](const std::string& t) { return uttered.contains(t); });
    };
    auto flag = [&report](const std::string& s, LeakSource src) {
        for (const auto& l : report.leaks) {
            if (l.offending_substring == s) return;
        }
        report.leaks.push_back({s, src});
    };
    for (const auto& term : terms_) {
        if (contains_sequence(tokens, term.tokens) && !was_uttered(term.tokens, term.joined)) {
            flag(term.joined, term.source);
        }
    }
    // Any measurement, not only ground-truth ones, counts as a value echo.
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        if (is_number_token(tokens[i]) && is_unit_token(tokens[i + 1])) {
            const std::vector<std::string> pair{tokens[i], tokens[i + 1]};
            const auto joined = tokens[i] + " " + tokens[i + 1];
            if (!was_uttered(pair, joined)) flag(joined, LeakSource::measurement);
        }
    }
    return report;
}

LeakReport detect_leaks(std::string_view text, const CaseBundle& c, const UtteredTerms& student_uttered,
                        const CategoryTable& table) {
    return LeakDetector(c, table).detect(text, student_uttered);
}

void add_uttered_terms(UtteredTerms& terms, std::string_view text) {
    const auto tokens = normalize_tokens(text);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        terms.insert(tokens[i]);
        if (i + 1 < tokens.size() && is_number_token(tokens[i]) && is_unit_token(tokens[i + 1])) {
            terms.insert(tokens[i] + " " + tokens[i + 1]);
        }
    }
}

UtteredTerms student_uttered_terms(const std::vector<std::string>& texts) {
    UtteredTerms terms;
    for (const auto& t : texts) add_uttered_terms(terms, t);
    return terms;
}

std::string keep_safe_lines(std::string_view text, const LeakDetector& detector, const UtteredTerms& uttered) {
    std::string out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!detector.is_safe(line, uttered)) continue;
        if (!out.empty()) out += '\n';
        out += line;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sanitisation

SanitizedCaseSummary sanitize_case(const CaseBundle& c, const CategoryTable& table) {
    const LeakDetector detector(c, table);
    const UtteredTerms nothing;
    auto safe_or = [&](const std::string& category, const std::string& fallback) {
        return detector.is_safe(category, nothing) ? category : fallback;
    };
    auto push_unique = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };

    SanitizedCaseSummary s;
    s.finding_count = static_cast<int>(c.findings.size());
    for (const auto& f : c.findings) {
        const auto category = safe_or(table.label_category(f.label), "finding");
        s.finding_categories.push_back(category);
        push_unique(s.categories, category);
    }
    for (const auto& f : c.findings) {
        for (const auto& d : f.descriptors) push_unique(s.categories, safe_or(table.descriptor_category(d.key), "finding characteristic"));
    }
    for (const auto& f : c.findings) {
        for (const auto& b : f.boxes) {
            // Viewer-left is the patient's right.
            const auto hint = b.center().x < c.image_width / 2.0 ? "right hemithorax" : "left hemithorax";
            if (detector.is_safe(hint, nothing)) push_unique(s.anatomy_hints, hint);
        }
    }
    return s;
}

}  // namespace cxrtutor
