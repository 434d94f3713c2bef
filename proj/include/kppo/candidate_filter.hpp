#pragma once

#include "kppo/knowledge_tree.hpp"
#include "kppo/task_eval.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kppo {

// f(p', x, y) - f(p, x, y).
int advantage(std::uint8_t bit_new, std::uint8_t bit_old);

// Summed advantage over the shared window. Throws ContractError on misaligned ids.
int delta_score(const CorrectnessVector& vec_new, const CorrectnessVector& vec_old);

// Number of positions whose correctness bit differs.
int divergence(const CorrectnessVector& vec_new, const CorrectnessVector& vec_old);

struct ScoredCandidate {
    std::string fingerprint;
    int delta_s = 0;
    int divergence = 0;
    bool identity = false;  // (p, p) pair carrying a beam parent
};

// Indices into `cands` forming the next beam: positive-gain candidates by
// descending gain, then ascending divergence, then insertion order; the
// remainder is filled with identity pairs in insertion order, skipping
// fingerprints already selected. Throws ConfigError if width < 1.
std::vector<std::size_t> filter_candidates(std::span<const ScoredCandidate> cands, std::size_t width);

struct CandidatePair {
    PromptDocument candidate;
    PromptDocument parent;
    std::size_t parent_index = 0;
    ScoredCandidate score;
};

std::vector<PromptDocument> select_beam(std::span<const CandidatePair> pairs, std::size_t width);

struct TrajectoryStep {
    std::size_t step = 0;
    std::vector<std::string> batch_ids;
    std::string previous_fingerprint;
    std::string selected_fingerprint;
    std::vector<std::uint8_t> previous_bits;  // batch bits under the previous selected prompt
    std::vector<std::uint8_t> selected_bits;  // batch bits under the newly selected prompt

    // Reporting fields.
    std::size_t window_size = 0;
    std::size_t window_correct = 0;
    int selected_delta_s = 0;
    int selected_divergence = 0;
    std::size_t candidates = 0;
    std::size_t skipped_slots = 0;
    std::size_t local_violations = 0;
    std::size_t global_violations = 0;
    std::size_t prompt_chars = 0;
};

struct TrajectoryLog {
    std::vector<TrajectoryStep> steps;

    void validate() const;
};

// Mean over steps of the per-batch fraction of instances whose bit improved
// minus those that regressed. Throws DomainError on an empty trajectory.
double learning_gain(const TrajectoryLog& log);

void to_json(nlohmann::json& j, const TrajectoryStep& s);
void from_json(const nlohmann::json& j, TrajectoryStep& s);

} // namespace kppo
