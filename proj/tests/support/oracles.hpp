#pragma once

// Reference implementations written from the definitions, kept apart from
// the engine code they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cxrtutor/domain.hpp"
#include "cxrtutor/similarity.hpp"

namespace oracle {

struct BktOut {
    double a, b, posterior, next;
};

inline BktOut bkt(double prior, bool correct, double learn, double guess, double slip) {
    const double a = correct ? prior * (1.0 - slip) : prior * slip;
    const double b = correct ? (1.0 - prior) * guess : (1.0 - prior) * (1.0 - guess);
    const double post = a / (a + b);
    return {a, b, post, post + (1.0 - post) * learn};
}

inline double iou(double ax0, double ay0, double ax1, double ay1, double bx0, double by0, double bx1, double by1) {
    const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = iw * ih;
    const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    return inter / uni;
}

inline double iou(const cxrtutor::BoundingBox& a, const cxrtutor::BoundingBox& b) {
    return iou(a.x_min, a.y_min, a.x_max, a.y_max, b.x_min, b.y_min, b.x_max, b.y_max);
}

// Every one-to-one matching of rows to columns over positive weights; returns
// the matching whose weights, sorted descending, are lexicographically
// largest. Greedy descending selection must reach the same vector when
// weights are distinct.
inline std::vector<double> best_sorted_matching(const std::vector<std::vector<double>>& w) {
    const std::size_t rows = w.size();
    const std::size_t cols = rows ? w[0].size() : 0;
    std::vector<double> best;
    std::vector<bool> used(cols, false);
    std::vector<double> cur;
    std::function<void(std::size_t)> go = [&](std::size_t r) {
        if (r == rows) {
            auto v = cur;
            std::sort(v.rbegin(), v.rend());
            if (std::lexicographical_compare(best.begin(), best.end(), v.begin(), v.end())) best = v;
            return;
        }
        go(r + 1);
        for (std::size_t c = 0; c < cols; ++c) {
            if (used[c] || !(w[r][c] > 0.0)) continue;
            used[c] = true;
            cur.push_back(w[r][c]);
            go(r + 1);
            cur.pop_back();
            used[c] = false;
        }
    };
    go(0);
    return best;
}

// Top-down recursion with memo over suffix positions.
inline std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    std::function<std::size_t(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) -> std::size_t {
        if (i == a.size()) return b.size() - j;
        if (j == b.size()) return a.size() - i;
        auto key = std::make_pair(i, j);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        std::size_t r = std::min({d(i + 1, j) + 1, d(i, j + 1) + 1, d(i + 1, j + 1) + (a[i] == b[j] ? 0u : 1u)});
        memo[key] = r;
        return r;
    };
    return d(0, 0);
}

inline double sequence_score(const std::vector<std::string>& e, const std::vector<std::string>& o) {
    const auto n = std::max(e.size(), o.size());
    if (n == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein(e, o)) / static_cast<double>(n);
}

inline double similarity(const cxrtutor::CaseIndexEntry& a, const cxrtutor::CaseIndexEntry& b, double wl, double ws,
                         double wm) {
    std::set<std::string> inter, uni = a.label_set;
    for (const auto& l : b.label_set) {
        uni.insert(l);
        if (a.label_set.count(l)) inter.insert(l);
    }
    // Two empty label sets count as identical in both terms.
    const double jac = uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    double spatial = uni.empty() ? 1.0 : 0.0;
    if (!inter.empty()) {
        for (const auto& l : inter) {
            const auto pa = a.centroids.at(l);
            const auto pb = b.centroids.at(l);
            spatial += 1.0 - std::hypot(pa.x - pb.x, pa.y - pb.y) / std::sqrt(2.0);
        }
        spatial /= static_cast<double>(inter.size());
    }
    const double meta = a.support_devices == b.support_devices ? 1.0 : 0.0;
    return std::clamp(wl * jac + ws * spatial + wm * meta, 0.0, 1.0);
}

}  // namespace oracle
