#pragma once

#include "kppo/candidate_filter.hpp"
#include "kppo/llm_gateway.hpp"
#include "kppo/run.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace kppo {

struct StepSummary {
    std::size_t step = 0;
    std::size_t window_size = 0;
    std::size_t window_correct = 0;
    double window_accuracy = 0.0;
    int delta_s = 0;
    int divergence = 0;
    std::size_t candidates = 0;
    std::size_t skipped_slots = 0;
    std::size_t local_violations = 0;
    std::size_t global_violations = 0;
    std::size_t prompt_chars = 0;
};

struct RunReport {
    std::vector<StepSummary> steps;
    std::optional<double> learning_gain;  // absent for a zero-step run
    TokenTotals tokens;
    std::size_t calls = 0;
    std::size_t cache_hits = 0;
    std::optional<FinalRecord> final;
};

// Pure function of the two logs; makes no model calls.
RunReport build_report(const TrajectoryLog& trajectory, const std::optional<FinalRecord>& final,
                       std::span<const ResponseRecord> responses);

struct TrajectoryFile {
    TrajectoryLog log;
    std::optional<FinalRecord> final;
};

// Parses trajectory.jsonl ("step" and "final" lines). Throws CheckpointError.
TrajectoryFile load_trajectory(const std::filesystem::path& path, std::optional<std::size_t> limit = std::nullopt);

RunReport report_from_run_dir(const std::filesystem::path& dir);

nlohmann::json report_to_json(const RunReport& report);
std::string report_to_text(const RunReport& report);

// Writes report.json and report.txt into the run directory.
RunReport write_report(const RunPaths& paths);

} // namespace kppo
