#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cxrtutor {

struct BktParams {
    double p_init = 0.2;
    double p_learn = 0.15;
    double p_guess = 0.2;
    double p_slip = 0.1;

    // Every probability in (0,1) and p_guess + p_slip < 1.
    bool valid() const;
    bool operator==(const BktParams&) const = default;
};

struct BktObservation {
    std::string skill_id;
    bool correct = false;
    double confidence = 0.5;
    bool gaze_available = false;
    int turn_index = 0;
    bool operator==(const BktObservation&) const = default;
};

struct SkillHistoryEntry {
    int turn_index = 0;
    bool correct = false;
    double confidence = 0.5;
    bool gaze_available = false;
    bool operator==(const SkillHistoryEntry&) const = default;
};

struct SkillState {
    std::string skill_id;
    double prior = 0.2;  // P(L_t | t-1), the prior for the next observation
    int attempts = 0;
    std::optional<double> last_posterior;
    std::vector<SkillHistoryEntry> history;

    static SkillState fresh(std::string skill_id, const BktParams& params);
    bool operator==(const SkillState&) const = default;
};

// Intermediate terms of one update, exposed for tests and logging.
struct BktStep {
    double evidence_learned = 0.0;    // A_t
    double evidence_unlearned = 0.0;  // B_t
    double posterior = 0.0;           // P(L_t | C_t)
    double next_prior = 0.0;          // P(L_{t+1})
};

// Only correctness enters the update; confidence and gaze availability are
// carried into history for routing.
BktStep bkt_step(double prior, bool correct, const BktParams& params);

// Throws SkillMismatch when obs.skill_id differs from state.skill_id.
SkillState bkt_update(const SkillState& state, const BktObservation& obs, const BktParams& params);

// last_posterior when an observation has been seen, else the prior.
double mastery(const SkillState& state);

struct MasteryEntry {
    double mastery = 0.0;
    int attempts = 0;
    bool operator==(const MasteryEntry&) const = default;
};

// Sorted by skill id.
std::map<std::string, MasteryEntry> mastery_overview(const std::map<std::string, SkillState>& states);

// Rebuilds a skill state by replaying its history from p_init.
SkillState replay_skill(const std::string& skill_id, const std::vector<SkillHistoryEntry>& history,
                        const BktParams& params);

}  // namespace cxrtutor
