#include "kppo/candidate_filter.hpp"

#include "kppo/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <set>

namespace kppo {

int advantage(std::uint8_t bit_new, std::uint8_t bit_old) {
    return static_cast<int>(bit_new != 0) - static_cast<int>(bit_old != 0);
}

namespace {

void require_aligned(const CorrectnessVector& a, const CorrectnessVector& b) {
    if (a.instance_ids != b.instance_ids || a.bits.size() != b.bits.size() || a.bits.size() != a.instance_ids.size()) {
        throw ContractError("correctness vectors cover different instance windows");
    }
}

} // namespace

int delta_score(const CorrectnessVector& vec_new, const CorrectnessVector& vec_old) {
    require_aligned(vec_new, vec_old);
    int sum = 0;
    for (std::size_t i = 0; i < vec_new.bits.size(); ++i) sum += advantage(vec_new.bits[i], vec_old.bits[i]);
    return sum;
}

int divergence(const CorrectnessVector& vec_new, const CorrectnessVector& vec_old) {
    require_aligned(vec_new, vec_old);
    int d = 0;
    for (std::size_t i = 0; i < vec_new.bits.size(); ++i) d += (vec_new.bits[i] != 0) != (vec_old.bits[i] != 0);
    return d;
}

std::vector<std::size_t> filter_candidates(std::span<const ScoredCandidate> cands, std::size_t width) {
    if (width < 1) throw ConfigError("beam width must be >= 1");
    std::vector<std::size_t> ranking;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (cands[i].delta_s > 0) ranking.push_back(i);
    }
    std::stable_sort(ranking.begin(), ranking.end(), [&](std::size_t a, std::size_t b) {
        if (cands[a].delta_s != cands[b].delta_s) return cands[a].delta_s > cands[b].delta_s;
        return cands[a].divergence < cands[b].divergence;
    });
    if (ranking.size() > width) ranking.resize(width);

    std::set<std::string> chosen;
    for (auto i : ranking) chosen.insert(cands[i].fingerprint);
    for (std::size_t i = 0; i < cands.size() && ranking.size() < width; ++i) {
        if (!cands[i].identity || chosen.contains(cands[i].fingerprint)) continue;
        chosen.insert(cands[i].fingerprint);
        ranking.push_back(i);
    }
    return ranking;
}

std::vector<PromptDocument> select_beam(std::span<const CandidatePair> pairs, std::size_t width) {
    std::vector<ScoredCandidate> scored;
    scored.reserve(pairs.size());
    for (const auto& p : pairs) scored.push_back(p.score);
    std::vector<PromptDocument> beam;
    for (auto i : filter_candidates(scored, width)) beam.push_back(pairs[i].candidate);
    return beam;
}

void TrajectoryLog::validate() const {
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& s = steps[i];
        if (i > 0 && s.step <= steps[i - 1].step) throw ContractError("trajectory step indices must increase");
        if (s.previous_bits.size() != s.batch_ids.size() || s.selected_bits.size() != s.batch_ids.size()) {
            throw ContractError("trajectory step " + std::to_string(s.step) + " has bits misaligned with its batch");
        }
    }
}

double learning_gain(const TrajectoryLog& log) {
    if (log.steps.empty()) throw DomainError("learning gain is undefined for an empty trajectory");
    log.validate();
    double total = 0.0;
    for (const auto& s : log.steps) {
        if (s.batch_ids.empty()) throw DomainError("learning gain is undefined for an empty batch");
        int sum = 0;
        for (std::size_t i = 0; i < s.batch_ids.size(); ++i) sum += advantage(s.selected_bits[i], s.previous_bits[i]);
        total += static_cast<double>(sum) / static_cast<double>(s.batch_ids.size());
    }
    return total / static_cast<double>(log.steps.size());
}

void to_json(nlohmann::json& j, const TrajectoryStep& s) {
    j = nlohmann::json{
        {"kind", "step"},
        {"step", s.step},
        {"batch_ids", s.batch_ids},
        {"previous_fingerprint", s.previous_fingerprint},
        {"selected_fingerprint", s.selected_fingerprint},
        {"previous_bits", s.previous_bits},
        {"selected_bits", s.selected_bits},
        {"window_size", s.window_size},
        {"window_correct", s.window_correct},
        {"selected_delta_s", s.selected_delta_s},
        {"selected_divergence", s.selected_divergence},
        {"candidates", s.candidates},
        {"skipped_slots", s.skipped_slots},
        {"local_violations", s.local_violations},
        {"global_violations", s.global_violations},
        {"prompt_chars", s.prompt_chars},
    };
}

void from_json(const nlohmann::json& j, TrajectoryStep& s) {
    j.at("step").get_to(s.step);
    j.at("batch_ids").get_to(s.batch_ids);
    j.at("previous_fingerprint").get_to(s.previous_fingerprint);
    j.at("selected_fingerprint").get_to(s.selected_fingerprint);
    j.at("previous_bits").get_to(s.previous_bits);
    j.at("selected_bits").get_to(s.selected_bits);
    s.window_size = j.value("window_size", std::size_t{0});
    s.window_correct = j.value("window_correct", std::size_t{0});
    s.selected_delta_s = j.value("selected_delta_s", 0);
    s.selected_divergence = j.value("selected_divergence", 0);
    s.candidates = j.value("candidates", std::size_t{0});
    s.skipped_slots = j.value("skipped_slots", std::size_t{0});
    s.local_violations = j.value("local_violations", std::size_t{0});
    s.global_violations = j.value("global_violations", std::size_t{0});
    s.prompt_chars = j.value("prompt_chars", std::size_t{0});
}

} // namespace kppo
