#pragma once

#include "kppo/config.hpp"
#include "kppo/dataset_store.hpp"
#include "kppo/llm_gateway.hpp"
#include "kppo/optimizer.hpp"
#include "kppo/task_eval.hpp"
#include "kppo/templates.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace kppo {

// Files kept in a run directory.
struct RunPaths {
    std::filesystem::path dir;

    std::filesystem::path checkpoint() const { return dir / "checkpoint.json"; }
    std::filesystem::path trajectory() const { return dir / "trajectory.jsonl"; }
    std::filesystem::path responses() const { return dir / "responses.jsonl"; }
    std::filesystem::path eval_cache() const { return dir / "eval_cache.jsonl"; }
    std::filesystem::path response_cache() const { return dir / "response_cache.jsonl"; }
    std::filesystem::path final_prompt() const { return dir / "final_prompt.txt"; }
    std::filesystem::path report_json() const { return dir / "report.json"; }
    std::filesystem::path report_text() const { return dir / "report.txt"; }
};

// Everything a run needs, loaded and wired. Building it makes no model calls.
struct Session {
    RunConfig config;
    Dataset data;
    Splits splits;
    PromptDocument initial;
    PromptTemplates templates;
    std::unique_ptr<LlmGateway> gateway;
    std::unique_ptr<EvalCache> eval_cache;
    std::unique_ptr<Evaluator> evaluator;
    std::unique_ptr<Optimizer> optimizer;
};

// Throws ConfigError for anything wrong in the config, task, data, prompt or
// templates, and for a missing API key when an http adapter is configured.
Session prepare_session(const RunConfig& config);

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> run_dir;
    // Stop once this many steps are checkpointed, as if the process died.
    std::optional<std::size_t> stop_after_step;
};

struct FinalRecord {
    std::size_t selected_index = 0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::vector<double> beam_val_accuracies;
    std::string fingerprint;
    std::size_t prompt_chars = 0;
};

nlohmann::json final_to_json(const FinalRecord& f);
FinalRecord final_from_json(const nlohmann::json& j);

struct RunOutcome {
    RunPaths paths;
    std::size_t step = 0;
    bool finished = false;
    std::optional<FinalRecord> final;
};

RunOutcome start_run(const std::filesystem::path& config_path, const RunOptions& options = {});

// Continues from a checkpoint. The config it names must still hash to the
// recorded digest; otherwise ConfigError. Unreadable checkpoints raise
// CheckpointError.
RunOutcome resume_run(const std::filesystem::path& checkpoint_path, const RunOptions& options = {});

struct Checkpoint {
    int version = 1;
    std::string config_digest;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::size_t step = 0;
    std::vector<std::string> beam;  // rendered prompts
    std::vector<std::string> bank;
    SamplerState sampler;
    std::optional<TrajectoryStep> last_step;
    std::size_t trajectory_lines = 0;
    std::size_t response_lines = 0;
    std::size_t eval_cache_lines = 0;
    std::size_t response_cache_entries = 0;
};

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
Checkpoint read_checkpoint(const std::filesystem::path& path);

} // namespace kppo
