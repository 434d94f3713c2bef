#pragma once

#include "kppo/dataset_store.hpp"
#include "kppo/llm_gateway.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace kppo {

struct ModelEndpoint {
    // http | scripted | fact_gated | fact_optimizer
    std::string adapter = "http";
    std::string base_url;
    std::string model;
    std::string api_key_env = "KPPO_API_KEY";
    std::string script;  // scripted adapter JSONL
    double temperature = 0.0;
    std::optional<std::uint64_t> seed = 0;
    int max_output = 1024;
    std::size_t max_in_flight = 4;
    double timeout_seconds = 120.0;
};

struct RunConfig {
    // Optimization hyperparameters.
    std::size_t batch_size = 5;
    std::size_t window = 10;
    std::size_t iterations = 60;
    std::size_t candidates_per_parent = 4;
    std::size_t beam_width = 2;

    // Pruning.
    bool pruning = false;
    std::size_t max_children = 16;
    double max_balance = 8.0;

    std::uint64_t seed = 0;
    std::size_t prompt_char_budget = 8000;
    std::size_t parallelism = 4;

    std::string split_mode = "random";  // random | field
    std::uint64_t split_seed = 0;
    SplitSizes split_sizes{};
    bool val_as_test = false;

    ModelEndpoint optimizer = default_optimizer();
    ModelEndpoint target{};
    RetryPolicy retry{};

    // Paths as written in the file, resolved against base_dir.
    std::string task;
    std::string initial_prompt;
    std::string templates_dir;
    std::string fixture;
    std::string run_dir = "run";
    std::filesystem::path base_dir;

    static ModelEndpoint default_optimizer();

    std::filesystem::path resolve(const std::string& p) const;
    // Throws ConfigError. Warns when window < batch size.
    void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& cfg);

// Digest over every setting that influences results (run_dir excluded).
std::string config_digest(const RunConfig& cfg);

} // namespace kppo
