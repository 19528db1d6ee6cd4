#include "cxrtutor/bkt.hpp"

#include <algorithm>

#include "cxrtutor/errors.hpp"

namespace cxrtutor {

bool BktParams::valid() const {
    auto open_unit = [](double p) { return p > 0.0 && p < 1.0; };
    return open_unit(p_init) && open_unit(p_learn) && open_unit(p_guess) && open_unit(p_slip) &&
           p_guess + p_slip < 1.0;
}

SkillState SkillState::fresh(std::string skill_id, const BktParams& params) {
    SkillState s;
    s.skill_id = std::move(skill_id);
    s.prior = params.p_init;
    return s;
}

BktStep bkt_step(double prior, bool correct, const BktParams& params) {
    BktStep step;
    // The exponents in the textbook form only select one factor, so branch
    // instead of calling pow.
    if (correct) {
        step.evidence_learned = (1.0 - params.p_slip) * prior;
        step.evidence_unlearned = params.p_guess * (1.0 - prior);
    } else {
        step.evidence_learned = params.p_slip * prior;
        step.evidence_unlearned = (1.0 - params.p_guess) * (1.0 - prior);
    }
    const double total = step.evidence_learned + step.evidence_unlearned;
    step.posterior = total > 0.0 ? std::clamp(step.evidence_learned / total, 0.0, 1.0) : prior;
    step.next_prior = std::clamp(step.posterior + (1.0 - step.posterior) * params.p_learn, 0.0, 1.0);
    return step;
}

SkillState bkt_update(const SkillState& state, const BktObservation& obs, const BktParams& params) {
    if (state.skill_id != obs.skill_id) {
        throw SkillMismatch("observation for '" + obs.skill_id + "' applied to '" + state.skill_id + "'");
    }
    const auto step = bkt_step(state.prior, obs.correct, params);
    SkillState next = state;
    next.prior = step.next_prior;
    next.last_posterior = step.posterior;
    next.attempts = state.attempts + 1;
    next.history.push_back({obs.turn_index, obs.correct, obs.confidence, obs.gaze_available});
    return next;
}

double mastery(const SkillState& state) { return state.last_posterior.value_or(state.prior); }

std::map<std::string, MasteryEntry> mastery_overview(const std::map<std::string, SkillState>& states) {
    std::map<std::string, MasteryEntry> out;
    for (const auto& [id, s] : states) out.emplace(id, MasteryEntry{mastery(s), s.attempts});
    return out;
}

SkillState replay_skill(const std::string& skill_id, const std::vector<SkillHistoryEntry>& history,
                        const BktParams& params) {
    auto state = SkillState::fresh(skill_id, params);
    for (const auto& h : history) {
        state = bkt_update(state, {skill_id, h.correct, h.confidence, h.gaze_available, h.turn_index}, params);
    }
    return state;
}

}  // namespace cxrtutor
