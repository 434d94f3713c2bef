#include "kppo/config.hpp"

#include "kppo/error.hpp"
#include "kppo/util.hpp"

#include <set>

namespace kppo {

using nlohmann::json;

ModelEndpoint RunConfig::default_optimizer() {
    ModelEndpoint e;
    e.temperature = 0.7;
    e.max_output = 4096;
    return e;
}

std::filesystem::path RunConfig::resolve(const std::string& p) const {
    std::filesystem::path path(p);
    if (path.is_relative() && !base_dir.empty()) return base_dir / path;
    return path;
}

void RunConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
    };
    positive(batch_size, "batch_size");
    positive(window, "window");
    positive(candidates_per_parent, "candidates_per_parent");
    positive(beam_width, "beam_width");
    positive(max_children, "max_children");
    positive(parallelism, "parallelism");
    positive(prompt_char_budget, "prompt_char_budget");
    if (!(max_balance > 0.0)) throw ConfigError("max_balance must be > 0");
    if (split_mode != "random" && split_mode != "field") throw ConfigError("split.mode must be 'random' or 'field'");
    if (task.empty()) throw ConfigError("config is missing 'task'");
    if (retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
    for (const auto* m : {&optimizer, &target}) {
        static const std::set<std::string> known{"http", "scripted", "fact_gated", "fact_optimizer"};
        if (!known.contains(m->adapter)) throw ConfigError("unknown adapter '" + m->adapter + "'");
        if (m->temperature < 0.0) throw ConfigError("temperature must be >= 0");
    }
    if (window < batch_size) {
        log_warning("window (" + std::to_string(window) + ") is smaller than batch_size (" + std::to_string(batch_size) +
                    ")");
    }
}

namespace {

ModelEndpoint endpoint_from_json(const json& j, ModelEndpoint e) {
    e.adapter = j.value("adapter", e.adapter);
    e.base_url = j.value("base_url", e.base_url);
    e.model = j.value("model", e.model);
    e.api_key_env = j.value("api_key_env", e.api_key_env);
    e.script = j.value("script", e.script);
    e.temperature = j.value("temperature", e.temperature);
    if (auto it = j.find("seed"); it != j.end()) {
        e.seed = it->is_null() ? std::nullopt : std::optional<std::uint64_t>(it->get<std::uint64_t>());
    }
    e.max_output = j.value("max_output", e.max_output);
    e.max_in_flight = j.value("max_in_flight", e.max_in_flight);
    e.timeout_seconds = j.value("timeout_seconds", e.timeout_seconds);
    return e;
}

json endpoint_to_json(const ModelEndpoint& e) {
    return {
        {"adapter", e.adapter},
        {"base_url", e.base_url},
        {"model", e.model},
        {"api_key_env", e.api_key_env},
        {"script", e.script},
        {"temperature", e.temperature},
        {"seed", e.seed ? json(*e.seed) : json(nullptr)},
        {"max_output", e.max_output},
        {"max_in_flight", e.max_in_flight},
        {"timeout_seconds", e.timeout_seconds},
    };
}

const json& section(const json& j, const char* name) {
    static const json empty = json::object();
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return empty;
    if (!it->is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
    return *it;
}

} // namespace

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    c.base_dir = base_dir;
    try {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        c.task = j.value("task", c.task);
        c.initial_prompt = j.value("initial_prompt", c.initial_prompt);
        c.templates_dir = j.value("templates_dir", c.templates_dir);
        c.fixture = j.value("fixture", c.fixture);
        c.run_dir = j.value("run_dir", c.run_dir);
        c.seed = j.value("seed", c.seed);

        const auto& opt = section(j, "optimization");
        c.batch_size = opt.value("batch_size", c.batch_size);
        c.window = opt.value("window", c.window);
        c.iterations = opt.value("iterations", c.iterations);
        c.candidates_per_parent = opt.value("candidates_per_parent", c.candidates_per_parent);
        c.beam_width = opt.value("beam_width", c.beam_width);
        c.prompt_char_budget = opt.value("prompt_char_budget", c.prompt_char_budget);
        c.parallelism = opt.value("parallelism", c.parallelism);

        const auto& pr = section(j, "pruning");
        c.pruning = pr.value("enabled", c.pruning);
        c.max_children = pr.value("max_children", c.max_children);
        c.max_balance = pr.value("max_balance", c.max_balance);

        const auto& sp = section(j, "split");
        c.split_mode = sp.value("mode", c.split_mode);
        c.split_seed = sp.value("seed", c.split_seed);
        c.split_sizes.train = sp.value("train", c.split_sizes.train);
        c.split_sizes.val = sp.value("val", c.split_sizes.val);
        c.split_sizes.test = sp.value("test", c.split_sizes.test);
        c.val_as_test = sp.value("val_as_test", c.val_as_test);

        const auto& models = section(j, "models");
        c.optimizer = endpoint_from_json(section(models, "optimizer"), c.optimizer);
        c.target = endpoint_from_json(section(models, "target"), c.target);

        const auto& retry = section(j, "retry");
        c.retry.max_attempts = retry.value("max_attempts", c.retry.max_attempts);
        c.retry.base_delay = std::chrono::milliseconds(retry.value("base_delay_ms", c.retry.base_delay.count()));
        c.retry.max_delay = std::chrono::milliseconds(retry.value("max_delay_ms", c.retry.max_delay.count()));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    auto abs = std::filesystem::absolute(path);
    return config_from_json(j, abs.parent_path());
}

json config_to_json(const RunConfig& c) {
    return {
        {"task", c.task},
        {"initial_prompt", c.initial_prompt},
        {"templates_dir", c.templates_dir},
        {"fixture", c.fixture},
        {"run_dir", c.run_dir},
        {"seed", c.seed},
        {"optimization",
         {{"batch_size", c.batch_size},
          {"window", c.window},
          {"iterations", c.iterations},
          {"candidates_per_parent", c.candidates_per_parent},
          {"beam_width", c.beam_width},
          {"prompt_char_budget", c.prompt_char_budget},
          {"parallelism", c.parallelism}}},
        {"pruning", {{"enabled", c.pruning}, {"max_children", c.max_children}, {"max_balance", c.max_balance}}},
        {"split",
         {{"mode", c.split_mode},
          {"seed", c.split_seed},
          {"train", c.split_sizes.train},
          {"val", c.split_sizes.val},
          {"test", c.split_sizes.test},
          {"val_as_test", c.val_as_test}}},
        {"models", {{"optimizer", endpoint_to_json(c.optimizer)}, {"target", endpoint_to_json(c.target)}}},
        {"retry",
         {{"max_attempts", c.retry.max_attempts},
          {"base_delay_ms", c.retry.base_delay.count()},
          {"max_delay_ms", c.retry.max_delay.count()}}},
    };
}

std::string config_digest(const RunConfig& cfg) {
    auto j = config_to_json(cfg);
    j.erase("run_dir");
    // Parallelism and retry timing change scheduling, not results.
    j["optimization"].erase("parallelism");
    j.erase("retry");
    return sha256_hex(j.dump());
}

} // namespace kppo
