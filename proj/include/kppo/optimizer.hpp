#pragma once

#include "kppo/candidate_filter.hpp"
#include "kppo/config.hpp"
#include "kppo/dataset_store.hpp"
#include "kppo/knowledge_tree.hpp"
#include "kppo/llm_gateway.hpp"
#include "kppo/task_eval.hpp"
#include "kppo/templates.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kppo {

struct SamplerState {
    std::uint64_t epoch = 0;
    std::size_t cursor = 0;
    friend bool operator==(const SamplerState&, const SamplerState&) = default;
};

// Chooses which training instances form the next batch.
class BatchSampler {
public:
    virtual ~BatchSampler() = default;
    virtual std::vector<std::size_t> next(SamplerState& state, std::size_t batch_size) const = 0;
};

// Without-replacement sampling over seeded per-epoch permutations. When fewer
// than batch_size instances remain in an epoch the remainder is skipped.
class EpochSampler : public BatchSampler {
public:
    EpochSampler(std::size_t pool_size, std::uint64_t seed);
    std::vector<std::size_t> next(SamplerState& state, std::size_t batch_size) const override;

private:
    std::size_t pool_size_;
    std::uint64_t seed_;
};

struct RunState {
    std::vector<PromptDocument> beam;
    std::vector<std::string> bank;  // instance ids in sampling order
    std::size_t step = 0;
    TrajectoryLog trajectory;
    SamplerState sampler;
};

struct Failure {
    Instance instance;
    std::string output;
};

struct Gradient {
    std::string explanation;
    std::string gap_analysis;
    std::string modification;
    std::vector<std::string> source_failures;
};

// Splits a reply on the "Error Explanation:", "Knowledge Gap Analysis:" and
// "Modification:" labels; nullopt unless all three are nonempty.
std::optional<Gradient> parse_gradient(std::string_view reply);

// Text between the last <prompt>...</prompt> pair, or the reply with code
// fences removed when no tags are present.
std::string extract_prompt_text(std::string_view reply);

std::string format_failures(const PromptTemplates& templates, std::span<const Failure> failures);
std::string format_violations(const PromptTemplates& templates, const KnowledgeTree& tree, const ViolationReport& report);

class Optimizer {
public:
    Optimizer(RunConfig config, std::vector<Instance> train, PromptTemplates templates, LlmGateway& gateway,
              Evaluator& evaluator);

    const RunConfig& config() const noexcept { return config_; }
    void set_sampler(std::unique_ptr<BatchSampler> sampler) { sampler_ = std::move(sampler); }

    RunState initial_state(PromptDocument initial) const;

    // Draws the next batch and appends it to the bank.
    std::vector<Instance> sample_batch(RunState& state) const;
    // Window = last `window` bank entries.
    std::vector<Instance> recent_window(const RunState& state) const;

    std::vector<Failure> collect_failures(const PromptDocument& doc, std::span<const Instance> batch);
    std::optional<Gradient> generate_gradient(const PromptDocument& doc, std::span<const Failure> failures,
                                              std::uint64_t seed);
    std::optional<PromptDocument> generate_candidate(const PromptDocument& doc, std::span<const Failure> failures,
                                                     const Gradient& gradient, const ViolationReport& issues,
                                                     std::uint64_t seed);

    // One full iteration; the input state is left untouched.
    RunState run_step(const RunState& state);

    struct Selection {
        std::size_t index = 0;
        double accuracy = 0.0;
        std::vector<double> accuracies;
    };
    Selection final_select(std::span<const PromptDocument> beam, std::span<const Instance> validation);

private:
    const Instance& instance(const std::string& id) const;
    ChatRequest optimizer_request(std::string content, std::uint64_t seed) const;

    RunConfig config_;
    std::vector<Instance> train_;
    std::unordered_map<std::string, std::size_t> train_index_;
    PromptTemplates templates_;
    LlmGateway& gateway_;
    Evaluator& evaluator_;
    std::unique_ptr<BatchSampler> sampler_;
};

} // namespace kppo
