#include "kppo/config.hpp"
#include "kppo/error.hpp"
#include "kppo/util.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace kppo;
using kppo::testing::TempDir;

TEST(Config, DefaultsMatchPublishedSettings) {
    RunConfig c;
    EXPECT_EQ(c.batch_size, 5u);
    EXPECT_EQ(c.window, 10u);
    EXPECT_EQ(c.iterations, 60u);
    EXPECT_EQ(c.candidates_per_parent, 4u);
    EXPECT_EQ(c.beam_width, 2u);
    EXPECT_EQ(c.max_children, 16u);
    EXPECT_DOUBLE_EQ(c.max_balance, 8.0);
    EXPECT_EQ(c.prompt_char_budget, 8000u);
    EXPECT_FALSE(c.pruning);
    EXPECT_EQ(c.split_sizes.train, 150u);
    EXPECT_EQ(c.split_sizes.val, 50u);
    EXPECT_EQ(c.split_sizes.test, 100u);
    EXPECT_DOUBLE_EQ(c.target.temperature, 0.0);
    EXPECT_EQ(c.target.api_key_env, "KPPO_API_KEY");
}

TEST(Config, EmptyJsonKeepsDefaults) {
    auto c = config_from_json(nlohmann::json::object());
    RunConfig d;
    EXPECT_EQ(config_to_json(c), config_to_json(d));
}

TEST(Config, ParsesSections) {
    TempDir dir;
    write_file_atomic(dir / "run.json", R"({
      "task": "task.json", "initial_prompt": "p.md", "seed": 9,
      "optimization": {"batch_size": 3, "window": 6, "iterations": 2, "candidates_per_parent": 1, "beam_width": 3},
      "pruning": {"enabled": true, "max_children": 4, "max_balance": 2.5},
      "split": {"mode": "field", "val_as_test": true},
      "models": {"target": {"adapter": "scripted", "script": "t.jsonl", "seed": null}},
      "retry": {"max_attempts": 2, "base_delay_ms": 10, "max_delay_ms": 20}
    })");
    auto c = load_config(dir / "run.json");
    EXPECT_EQ(c.batch_size, 3u);
    EXPECT_EQ(c.window, 6u);
    EXPECT_EQ(c.iterations, 2u);
    EXPECT_EQ(c.beam_width, 3u);
    EXPECT_TRUE(c.pruning);
    EXPECT_EQ(c.max_children, 4u);
    EXPECT_DOUBLE_EQ(c.max_balance, 2.5);
    EXPECT_EQ(c.split_mode, "field");
    EXPECT_TRUE(c.val_as_test);
    EXPECT_EQ(c.target.adapter, "scripted");
    EXPECT_FALSE(c.target.seed.has_value());
    EXPECT_EQ(c.retry.max_attempts, 2);
    EXPECT_EQ(c.resolve(c.task), std::filesystem::absolute(dir / "task.json"));
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(config_from_json(config_to_json(c), c.base_dir).seed, 9u);
}

TEST(Config, ValidationErrors) {
    RunConfig c;
    c.task = "t.json";
    EXPECT_NO_THROW(c.validate());
    auto bad = c;
    bad.batch_size = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = c;
    bad.max_balance = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = c;
    bad.target.adapter = "carrier-pigeon";
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = c;
    bad.task.clear();
    EXPECT_THROW(bad.validate(), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json::array()), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"optimization", 5}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"optimization", {{"batch_size", "five"}}}}), ConfigError);
}

TEST(Config, UnreadableFile) {
    TempDir dir;
    EXPECT_THROW(load_config(dir / "none.json"), ConfigError);
    write_file_atomic(dir / "broken.json", "{ \"task\": ");
    EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
}

TEST(Config, DigestTracksResultAffectingSettings) {
    RunConfig c;
    c.task = "t.json";
    auto d = config_digest(c);
    auto other = c;
    other.run_dir = "elsewhere";
    other.parallelism = 1;
    other.retry.max_attempts = 9;
    EXPECT_EQ(config_digest(other), d);
    other = c;
    other.seed = 1;
    EXPECT_NE(config_digest(other), d);
    other = c;
    other.window = 11;
    EXPECT_NE(config_digest(other), d);
}
