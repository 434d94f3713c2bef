#pragma once

#include "kppo/task_eval.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kppo {

struct Dataset {
    std::string name;
    std::vector<Instance> instances;
    TaskInstruction instruction;
};

// Strict JSONL loader: every malformed line is reported (with its line number)
// in a single SchemaError. Duplicate ids are rejected.
Dataset load_jsonl(const std::filesystem::path& path);

Instance instance_from_json(const std::string& line);
std::string instance_to_json(const Instance& inst);

// Task file: {"name", "instruction_template", "answer_marker", "data"}; the
// data path is resolved relative to the task file.
Dataset load_task(const std::filesystem::path& task_path);

struct SplitSizes {
    std::size_t train = 150;
    std::size_t val = 50;
    std::size_t test = 100;
};

struct Splits {
    std::vector<Instance> train;
    std::vector<Instance> val;
    std::vector<Instance> test;
};

// Seeded shuffle then contiguous cut. With val_as_test, the test split is the
// validation split.
Splits split(const Dataset& data, std::uint64_t seed, SplitSizes sizes, bool val_as_test = false);

// Uses the per-instance split field; instances without one are rejected.
Splits split_by_field(const Dataset& data, bool val_as_test = false);

// Deterministic Fisher-Yates permutation of [0, n).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

} // namespace kppo
