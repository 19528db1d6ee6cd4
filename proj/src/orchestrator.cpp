#include "cxrtutor/orchestrator.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>

#include "cxrtutor/errors.hpp"
#include "cxrtutor/image.hpp"
#include "cxrtutor/prompts.hpp"
#include "cxrtutor/serialization.hpp"

namespace fs = std::filesystem;

namespace cxrtutor {

namespace {

// Set for the duration of process_turn so request inspectors can check
// outbound payloads against the session's case.
thread_local const LeakDetector* t_detector = nullptr;
thread_local const UtteredTerms* t_uttered = nullptr;

struct LeakScope {
    LeakScope(const LeakDetector& d, const UtteredTerms& u) {
        t_detector = &d;
        t_uttered = &u;
    }
    ~LeakScope() {
        t_detector = nullptr;
        t_uttered = nullptr;
    }
};

void assert_no_leak(const std::string& tag, const std::string& payload) {
    if (!t_detector) return;
    const auto report = t_detector->detect(payload, *t_uttered);
    if (!report.clean()) {
        throw InvariantViolation("outbound " + tag + " request leaks '" + report.leaks.front().offending_substring + "'");
    }
}

std::string format2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

CategoryTable table_for(const EngineConfig& config) {
    return config.category_map.empty() ? CategoryTable::defaults() : CategoryTable::load(config.category_map);
}

}  // namespace

// ---------------------------------------------------------------------------

RouteSet decide_routes(const std::optional<AssessmentResult>& assessment, const std::map<std::string, SkillState>& skills,
                       const StudentTurn& turn, const std::map<std::string, int>& consecutive_incorrect,
                       const RoutingContext& ctx) {
    RouteSet r;
    auto fire = [&r](bool& flag, const char* rule) {
        flag = true;
        r.fired_rules.emplace_back(rule);
    };
    const auto& t = ctx.thresholds;
    const bool mastery_rules = !ctx.ablation.disabled(Component::bkt);
    auto any_skill = [&skills](double below, int min_attempts) {
        return std::any_of(skills.begin(), skills.end(), [&](const auto& kv) {
            return kv.second.attempts >= min_attempts && mastery(kv.second) < below;
        });
    };

    if (assessment && !ctx.completed && (!assessment->corrections.empty() || !assessment->missing.empty())) {
        fire(r.socratic, rules::kSocraticNeeded);
    }
    if (!ctx.ablation.disabled(Component::knowledge)) {
        if (turn.requests.knowledge) fire(r.knowledge, rules::kKnowledgeRequested);
        if (mastery_rules && any_skill(t.knowledge_mastery, t.knowledge_attempts)) {
            fire(r.knowledge, rules::kLowMasteryKnowledge);
        }
        if (!ctx.newly_resolved.empty()) fire(r.knowledge, rules::kFindingResolved);
    }
    if (!ctx.ablation.disabled(Component::reasoning)) {
        if (turn.requests.reasoning) fire(r.reasoning, rules::kReasoningRequested);
        if (mastery_rules && any_skill(t.reasoning_mastery, t.reasoning_attempts)) {
            fire(r.reasoning, rules::kLowMasteryReasoning);
        }
    }
    if (turn.requests.similar_cases) fire(r.similarity, rules::kSimilarRequested);
    if (std::any_of(consecutive_incorrect.begin(), consecutive_incorrect.end(),
                    [&t](const auto& kv) { return kv.second >= t.struggle_streak; })) {
        fire(r.similarity, rules::kRepeatedStruggle);
    }
    return r;
}

ResolutionUpdate check_resolution(const CaseBundle& c, const std::map<std::string, SkillState>& skills,
                                  const std::set<std::string>& already_resolved, const AssessmentResult& assessment,
                                  double mastery_threshold, const CategoryTable& table) {
    const auto summary = sanitize_case(c, table);
    ResolutionUpdate u;
    u.resolved = already_resolved;
    for (std::size_t i = 0; i < c.findings.size(); ++i) {
        const auto& label = c.findings[i].label;
        if (u.resolved.contains(label)) continue;
        const auto& category = summary.finding_categories[i];
        const bool reinforced = std::find(assessment.reinforcements.begin(), assessment.reinforcements.end(),
                                          category) != assessment.reinforcements.end();
        auto it = skills.find(label);
        if (reinforced && it != skills.end() && mastery(it->second) >= mastery_threshold) {
            u.resolved.insert(label);
            u.newly_resolved.push_back(label);
        }
    }
    u.completed = std::all_of(c.findings.begin(), c.findings.end(), [&u](const GroundTruthFinding& f) {
        return !f.required_for_resolution || u.resolved.contains(f.label);
    });
    return u;
}

std::string display_skill(const CaseBundle& c, const std::string& skill_id) {
    for (std::size_t i = 0; i < c.findings.size(); ++i) {
        if (c.findings[i].label == skill_id) return "finding_" + std::to_string(i + 1);
    }
    return skill_id;
}

std::map<std::string, MasteryEntry> display_mastery(const CaseBundle& c, const std::map<std::string, SkillState>& skills) {
    std::map<std::string, MasteryEntry> out;
    for (const auto& [skill, entry] : mastery_overview(skills)) out[display_skill(c, skill)] = entry;
    return out;
}

std::pair<LobeMask, std::vector<std::string>> display_regions(const CaseBundle& c, const LeakDetector& detector,
                                                              const UtteredTerms& uttered) {
    auto mask = c.effective_mask();
    auto expected = c.expected_sequence;
    for (std::size_t i = 0; i < mask.region_names.size(); ++i) {
        auto& name = mask.region_names[i];
        if (detector.is_safe(region_display_name(name), uttered)) continue;
        const auto alias = "zone_" + std::to_string(i + 1);
        std::replace(expected.begin(), expected.end(), name, alias);
        name = alias;
    }
    return {std::move(mask), std::move(expected)};
}

// ---------------------------------------------------------------------------

EngineServices make_services(const EngineConfig& config) {
    EngineServices s;
    const auto table = table_for(config);
    if (config.text.kind == "remote") s.text = std::make_shared<RemoteTextBackend>(config.text.endpoint);
    else s.text = std::make_shared<StubTextBackend>(table);
    if (config.vision.kind == "remote") {
        s.vision = std::make_shared<RemoteVisionBackend>(config.vision.endpoint, config.vision.max_image_bytes);
    } else {
        s.vision = std::make_shared<StubVisionBackend>(config.vision.max_image_bytes);
    }
    if (config.knowledge_online) {
        s.knowledge_transport = std::make_shared<HttplibGetTransport>(
            config.knowledge_base_url, std::chrono::milliseconds(config.knowledge_timeout_ms));
    }
    if (config.text.kind == "stub" && !config.knowledge_online) s.clock = std::make_shared<VirtualClock>();
    else s.clock = std::make_shared<SystemClock>();
    return s;
}

std::vector<CaseBundle> load_library(const fs::path& dir) {
    std::vector<CaseBundle> cases;
    if (!fs::exists(dir)) return cases;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "case.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) cases.push_back(load_case_bundle(d));
    return cases;
}

Engine::Engine(EngineConfig config, std::vector<CaseBundle> library, EngineServices services)
    : config_(std::move(config)),
      table_(table_for(config_)),
      library_(std::move(library)),
      index_(build_index(library_)),
      services_(std::move(services)),
      assessor_(services_.text, table_, config_.history_window),
      socratic_(services_.text),
      responder_(services_.text) {
    if (!services_.text || !services_.vision) throw BackendMisconfigured("engine needs a text and a vision backend");
    if (!services_.clock) services_.clock = std::make_shared<SystemClock>();
    for (std::size_t i = 0; i < library_.size(); ++i) by_id_[library_[i].case_id] = i;
    knowledge_ = std::make_unique<KnowledgeClient>(config_.knowledge, services_.knowledge_transport, services_.text,
                                                   services_.clock);
    overlays_ = std::make_unique<OverlayStore>(config_.overlay_dir);
    if (config_.leak_assert) {
        services_.text->set_inspector(assert_no_leak);
        services_.vision->set_inspector(assert_no_leak);
    }
}

bool Engine::has_case(const std::string& case_id) const { return by_id_.contains(case_id); }

const CaseBundle& Engine::case_bundle(const std::string& case_id) const {
    auto it = by_id_.find(case_id);
    if (it == by_id_.end()) throw UnknownCase("unknown case " + case_id);
    return library_[it->second];
}

SessionState Engine::new_session(const std::string& session_id, const std::string& case_id) const {
    const auto& c = case_bundle(case_id);
    SessionState s;
    s.session_id = session_id;
    s.case_id = case_id;
    for (const auto& skill : c.skills) s.skills[skill] = SkillState::fresh(skill, config_.params_for(skill));
    return s;
}

UtteredTerms Engine::uttered_terms(const SessionState& state, const std::string& current) {
    UtteredTerms terms;
    for (const auto& [turn, response] : state.history) add_uttered_terms(terms, turn.text);
    add_uttered_terms(terms, current);
    return terms;
}

std::vector<SimilarCase> Engine::similar_cases(const CaseBundle& c, const LeakDetector& detector,
                                               const UtteredTerms& uttered) {
    auto top = top_similar(c.case_id, index_, config_.similarity_k, config_.similarity_weights);
    for (auto& s : top) {
        const auto& other = case_bundle(s.case_id);
        if (!other.findings.empty()) {
            const auto& label = s.shared_labels.empty() ? other.findings.front().label : s.shared_labels.front();
            s.overlay_path = overlays_->get(other, label).generic_string();
        }
        // Shared labels are the query case's own findings; show categories.
        std::vector<std::string> categories;
        for (const auto& label : s.shared_labels) {
            auto category = table_.label_category(label);
            if (!detector.is_safe(category, uttered)) category = "finding";
            if (std::find(categories.begin(), categories.end(), category) == categories.end()) {
                categories.push_back(category);
            }
        }
        s.shared_labels = std::move(categories);
    }
    return top;
}

TutorResponse Engine::gate_failure(SessionState& next, const StudentTurn& turn, const FocusResult& focus,
                                   const std::vector<std::string>& gaze_guidance, const LeakDetector& detector,
                                   const UtteredTerms& uttered) {
    TutorResponse r;
    r.route_log = {kGateFailedLog};
    r.best_iou = focus.best_iou;
    r.focus_hint = focus.guidance;

    if (!config_.ablation.disabled(Component::bkt)) {
        if (auto it = next.skills.find(kLocalizationSkill); it != next.skills.end()) {
            BktObservation obs{kLocalizationSkill, false, turn.confidence, !turn.fixations.empty(), turn.turn_index};
            it->second = bkt_update(it->second, obs, config_.params_for(kLocalizationSkill));
        }
    }
    if (next.skills.contains(kLocalizationSkill)) ++next.consecutive_incorrect[kLocalizationSkill];

    ComposeInputs in;
    if (turn.boxes.empty()) {
        in.focus_guidance.emplace_back("Mark the region you want to discuss with a box before describing it.");
    } else {
        in.focus_guidance.push_back("Your box does not yet overlap the area that needs attention closely enough "
                                    "(best overlap " + format2(focus.best_iou) + ").");
    }
    if (focus.guidance) {
        in.focus_guidance.push_back(std::string("Try moving your box ") + describe(focus.guidance->direction) +
                                    (focus.guidance->magnitude == Magnitude::far ? ", quite a long way."
                                                                                 : ", only a short distance."));
    }
    r.gaze_guidance = gaze_guidance;
    in.gaze_guidance = gaze_guidance;
    r.message = template_message(in, detector, uttered);
    return r;
}

TurnOutcome Engine::process_turn(const SessionState& state, const StudentTurn& turn) {
    if (state.completed) throw SessionCompleted("session " + state.session_id + " is already completed");
    if (turn.turn_index != state.turn_count) {
        throw TurnIndexMismatch("expected turn " + std::to_string(state.turn_count) + ", got " +
                                std::to_string(turn.turn_index));
    }
    const auto& c = case_bundle(state.case_id);
    if (auto problem = validate_turn(turn, c.image_width, c.image_height); !problem.empty()) {
        throw PreconditionViolation(problem);
    }

    const auto uttered = uttered_terms(state, turn.text);
    const LeakDetector detector(c, table_);
    LeakScope scope(detector, uttered);
    const auto& ablation = config_.ablation;

    TurnOutcome out;
    out.state = state;
    auto& next = out.state;
    auto& r = out.response;

    // (1) focus gate
    const auto focus = validate_focus(turn.boxes, c.findings, config_.iou_threshold, c.image_width, c.image_height);

    // (2) gaze analytics, reported on both paths
    std::optional<GazeMetrics> gaze;
    std::vector<std::string> guidance;
    if (!turn.fixations.empty() && !ablation.disabled(Component::gaze)) {
        const auto [mask, expected] = display_regions(c, detector, uttered);
        gaze = compute_gaze_metrics(turn.fixations, mask, expected);
        for (auto& line : gaze_guidance(*gaze, config_.sequence_nudge_threshold)) {
            if (detector.is_safe(line, uttered)) guidance.push_back(std::move(line));
        }
    }

    if (!focus.passed) {
        r = gate_failure(next, turn, focus, guidance, detector, uttered);
        r.gaze = gaze;
    } else {
        r.gate_passed = true;
        r.best_iou = focus.best_iou;
        r.gaze = gaze;
        r.gaze_guidance = guidance;
        r.route_log.emplace_back("focus_gate_passed");
        if (gaze) r.route_log.emplace_back("gaze_metrics");

        // (3) assessment
        SkillEvidence evidence;
        evidence.gate_passed = true;
        evidence.gate_passed_labels = focus.passed_labels(config_.iou_threshold);
        evidence.gaze = gaze;
        evidence.sequence_threshold = config_.sequence_nudge_threshold;
        const auto summary = sanitize_case(c, table_);
        std::vector<HistoryTurn> history;
        for (const auto& [t, resp] : state.history) history.push_back({t.text, resp.message});

        std::optional<AssessmentResult> assessment;
        std::map<std::string, bool> correctness;
        try {
            assessment = assessor_.assess(turn, c, summary, history, evidence, detector, uttered);
            correctness = assessment->per_skill_correct;
            r.route_log.emplace_back(assessment->impression == kUnparseableImpression ? "assessment_fallback"
                                                                                     : "assessment");
        } catch (const InvariantViolation&) {
            throw;
        } catch (const Error& e) {
            spdlog::warn("assessment unavailable for session {}: {}", state.session_id, e.what());
            r.route_log.emplace_back("assessment_unavailable");
            correctness = skill_correctness(AssessmentResult{}, c, evidence, table_);
            for (auto it = correctness.begin(); it != correctness.end();) {
                if (it->first == kLocalizationSkill || it->first == kSystematicSearchSkill) ++it;
                else it = correctness.erase(it);
            }
        }
        r.assessment = assessment;
        if (r.assessment) {
            std::map<std::string, bool> shown;
            for (const auto& [skill, correct] : r.assessment->per_skill_correct) shown[display_skill(c, skill)] = correct;
            r.assessment->per_skill_correct = std::move(shown);
        }

        // (4) mastery
        const bool bkt_on = !ablation.disabled(Component::bkt);
        for (const auto& [skill, correct] : correctness) {
            auto it = next.skills.find(skill);
            if (it == next.skills.end()) continue;
            if (bkt_on) {
                BktObservation obs{skill, correct, turn.confidence, gaze.has_value(), turn.turn_index};
                it->second = bkt_update(it->second, obs, config_.params_for(skill));
            }
            auto& streak = next.consecutive_incorrect[skill];
            streak = correct ? 0 : streak + 1;
        }
        r.route_log.emplace_back(bkt_on ? "bkt_update" : "bkt_frozen");

        RoutingContext ctx;
        ctx.thresholds = config_.routing;
        ctx.ablation = ablation;
        if (assessment) {
            auto res = check_resolution(c, next.skills, next.resolved_findings, *assessment,
                                        config_.routing.resolution_mastery, table_);
            next.resolved_findings = std::move(res.resolved);
            next.completed = res.completed;
            ctx.newly_resolved = res.newly_resolved;
            for (const auto& label : res.newly_resolved) r.route_log.push_back("resolved:" + display_skill(c, label));
        }
        ctx.completed = next.completed;

        // (5) routing
        out.routes = decide_routes(assessment, next.skills, turn, next.consecutive_incorrect, ctx);
        for (const auto& rule : out.routes.fired_rules) r.route_log.push_back("route:" + rule);

        // (6) routed agents
        if (out.routes.socratic && assessment) {
            try {
                r.socratic = socratic_.coach(*assessment, summary, turn.text, detector, uttered);
                r.route_log.emplace_back("socratic");
            } catch (const InvariantViolation&) {
                throw;
            } catch (const Error& e) {
                spdlog::warn("socratic agent unavailable: {}", e.what());
                r.route_log.emplace_back("socratic_unavailable");
            }
        }
        if (out.routes.knowledge) {
            // Topic: a finding resolved this turn, else the weakest skill.
            std::string skill;
            if (!ctx.newly_resolved.empty()) {
                skill = ctx.newly_resolved.front();
            } else {
                double lowest = 2.0;
                for (const auto& [id, s] : next.skills) {
                    const bool finding = c.find_finding(id) != nullptr;
                    const double m = mastery(s);
                    if (finding && m < lowest) {
                        lowest = m;
                        skill = id;
                    }
                }
                if (skill.empty()) skill = kLocalizationSkill;
            }
            try {
                const auto topic = topic_for_skill(skill, c, table_);
                auto result = knowledge_->fetch_snippets(topic, config_.knowledge.max_results,
                                                         [&](const std::string& text) {
                                                             return detector.is_safe(text, uttered);
                                                         });
                r.knowledge = std::move(result.snippets);
                r.route_log.emplace_back(r.knowledge.empty() ? "knowledge_empty" : "knowledge");
            } catch (const InvariantViolation&) {
                throw;
            } catch (const Error& e) {
                spdlog::warn("knowledge agent unavailable: {}", e.what());
                r.route_log.emplace_back("knowledge_unavailable");
            }
        }
        if (out.routes.reasoning) {
            try {
                VisionReasonRequest req;
                req.image = std::make_shared<const std::vector<std::uint8_t>>(read_file_bytes(c.image_file()));
                req.context_text = std::string(prompts::kCaseCategories) + " " + prompts::join_items(summary.categories) +
                                   "\n" + std::string(prompts::kStudentText) + " " + prompts::one_line(turn.text);
                req.tag = "reasoning";
                const auto reply = services_.vision->reason(req);
                auto safe = keep_safe_lines(reply.text, detector, uttered);
                if (!safe.empty()) r.reasoning_text = std::move(safe);
                r.route_log.emplace_back("reasoning");
            } catch (const InvariantViolation&) {
                throw;
            } catch (const Error& e) {
                spdlog::warn("reasoning agent unavailable: {}", e.what());
                r.route_log.emplace_back("reasoning_unavailable");
            }
        }
        if (out.routes.similarity) {
            try {
                r.similar_cases = similar_cases(c, detector, uttered);
                r.route_log.emplace_back("similarity");
            } catch (const InvariantViolation&) {
                throw;
            } catch (const Error& e) {
                spdlog::warn("similarity agent unavailable: {}", e.what());
                r.route_log.emplace_back("similarity_unavailable");
            }
        }

        // (7) faculty response
        r.reflection_mode = next.completed;
        r.mastery = display_mastery(c, next.skills);
        ComposeInputs in;
        in.assessment = r.assessment;
        in.socratic = r.socratic;
        in.knowledge = r.knowledge;
        in.gaze_guidance = r.gaze_guidance;
        in.mastery = r.mastery;
        in.reasoning_text = r.reasoning_text;
        in.similar_cases = r.similar_cases;
        in.student_text = turn.text;
        in.reflection_mode = r.reflection_mode;
        const auto composed = responder_.compose(in, detector, uttered);
        r.message = composed.message;
        r.route_log.push_back("compose:" + to_string(composed.outcome));
        if (next.completed) r.route_log.emplace_back("completed");
    }

    // (8) finalize; the caller persists the event
    next.history.emplace_back(turn, r);
    ++next.turn_count;
    return out;
}

}  // namespace cxrtutor
