#pragma once

#include "kppo/llm_gateway.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace kppo::fixtures {

// One synthetic question whose correct answer depends on a single fact.
struct FactRule {
    std::string question;
    std::string fact;
    std::string gold;
    std::string wrong;
};

struct FactFixture {
    std::string answer_marker = "Final Answer:";
    std::vector<std::string> facts;
    std::vector<FactRule> rules;

    static FactFixture load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

// Target double: answers gold iff the rule's fact appears in the system
// message, otherwise the rule's wrong label.
std::shared_ptr<ScriptedAdapter> make_fact_gated_target(FactFixture fixture);

struct ScriptedOptimizerOptions {
    bool honor_violations = true;
    std::string facts_topic = "Key Facts";
};

// Optimizer double. Gradient requests name one fact that the shown failures
// need and the current prompt lacks (chosen by the request seed); candidate
// requests return the current prompt plus that fact as a note, trimming
// non-fact notes of any topic flagged in a violations section.
std::shared_ptr<ScriptedAdapter> make_fact_optimizer(FactFixture fixture, ScriptedOptimizerOptions options = {});

struct FixtureSpec {
    std::size_t facts = 5;
    std::size_t questions_per_fact = 5;
    std::size_t train_per_fact = 3;  // remainder goes to validation
    std::size_t filler_children = 0;  // > 0 adds an over-branched "Background" topic
    std::size_t iterations = 10;
    std::size_t batch_size = 5;
    std::size_t window = 10;
    std::size_t candidates_per_parent = 2;
    std::size_t beam_width = 2;
    bool pruning = false;
    std::uint64_t seed = 7;
};

struct FixtureFiles {
    std::filesystem::path config;
    std::filesystem::path task;
    std::filesystem::path data;
    std::filesystem::path fixture;
    std::filesystem::path initial_prompt;
};

// Writes a self-contained offline run (task, data, fixture, initial prompt,
// config) into `dir`.
FixtureFiles write_fact_fixture(const std::filesystem::path& dir, const FixtureSpec& spec = {});

} // namespace kppo::fixtures
