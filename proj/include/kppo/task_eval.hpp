#pragma once

#include "kppo/knowledge_tree.hpp"
#include "kppo/llm_gateway.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kppo {

struct AnswerOption {
    std::string label;
    std::string text;
    friend bool operator==(const AnswerOption&, const AnswerOption&) = default;
};

enum class Split { unspecified, train, val, test };

std::string to_string(Split split);
Split split_from_string(const std::string& s);

struct Instance {
    std::string id;
    std::string question;
    std::vector<AnswerOption> options;
    std::string gold;
    Split split = Split::unspecified;

    std::vector<std::string> labels() const;
    friend bool operator==(const Instance&, const Instance&) = default;
};

// Throws SchemaError if gold is not an option label or labels repeat.
void validate_instance(const Instance& inst);

struct TaskInstruction {
    std::string template_text;  // contains {question} and {options} exactly once
    std::string answer_marker = "Final Answer:";

    void validate() const;
};

TaskInstruction default_task_instruction();

// System message = rendered prompt; user message = filled instruction.
std::vector<ChatMessage> build_messages(const PromptDocument& doc, const Instance& inst, const TaskInstruction& instr);
std::vector<ChatMessage> build_messages(std::string system_text, const Instance& inst, const TaskInstruction& instr);

// "A. text" lines, one per option.
std::string format_options(const Instance& inst);

// Last marker followed by a label wins; otherwise the last standalone label
// token; otherwise nullopt (scores 0).
std::optional<std::string> extract_answer(std::string_view raw, std::span<const std::string> labels,
                                          std::string_view answer_marker);

struct CorrectnessVector {
    std::vector<std::string> instance_ids;
    std::vector<std::uint8_t> bits;
    std::string prompt_fingerprint;

    std::size_t size() const noexcept { return bits.size(); }
    double accuracy() const noexcept;
    std::size_t correct() const noexcept;
};

std::string prompt_fingerprint(const PromptDocument& doc);
std::string prompt_fingerprint(std::string_view rendered);

struct EvalRecord {
    std::string prompt_fingerprint;
    std::string instance_id;
    std::uint8_t bit = 0;
    std::string raw_output_digest;
};

std::string eval_record_line(const EvalRecord& record);

// (fingerprint, instance id) -> bit. Safe for concurrent use.
class EvalCache {
public:
    std::optional<std::uint8_t> lookup(const std::string& fingerprint, const std::string& instance_id) const;
    void insert(EvalRecord record);
    std::size_t size() const;

    void load(const std::filesystem::path& path, std::optional<std::size_t> limit = std::nullopt);
    // Records inserted since the last call, in insertion order.
    std::vector<EvalRecord> take_pending();

private:
    static std::string key(const std::string& fp, const std::string& id) { return fp + '\x1f' + id; }

    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, std::uint8_t> bits_;
    std::vector<EvalRecord> pending_;
};

struct TargetSettings {
    double temperature = 0.0;
    std::optional<std::uint64_t> seed = 0;
    int max_output = 512;
};

struct InstanceOutcome {
    std::uint8_t bit = 0;
    std::string raw_output;
    std::optional<std::string> answer;
};

// Runs prompts on instances through the target model and scores them.
class Evaluator {
public:
    Evaluator(LlmGateway& gateway, TaskInstruction instruction, EvalCache& cache, TargetSettings settings = {},
              std::size_t parallelism = 4);

    // One target call (possibly served by the gateway cache); records the bit.
    InstanceOutcome run_one(const std::string& system_text, const std::string& fingerprint, const Instance& inst);

    // Cache-aware evaluation fanned out over instances with OpenMP.
    CorrectnessVector evaluate(const PromptDocument& doc, std::span<const Instance> instances);
    // Serial reference path; same results as evaluate().
    CorrectnessVector evaluate_serial(const PromptDocument& doc, std::span<const Instance> instances);

    // Outcomes including raw outputs, for failure analysis.
    std::vector<InstanceOutcome> run_all(const PromptDocument& doc, std::span<const Instance> instances);

    const TaskInstruction& instruction() const noexcept { return instruction_; }
    std::size_t parallelism() const noexcept { return parallelism_; }

private:
    LlmGateway& gateway_;
    TaskInstruction instruction_;
    EvalCache& cache_;
    TargetSettings settings_;
    std::size_t parallelism_;
};

} // namespace kppo
