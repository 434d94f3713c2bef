#include "kppo/run.hpp"

#include "kppo/error.hpp"
#include "kppo/fixtures.hpp"
#include "kppo/http_adapter.hpp"
#include "kppo/report.hpp"
#include "kppo/util.hpp"

#include <algorithm>
#include <cstdlib>

namespace kppo {

using nlohmann::json;

namespace {

std::shared_ptr<ChatAdapter> build_adapter(const RunConfig& cfg, const ModelEndpoint& e, ModelRole role) {
    const auto who = to_string(role);
    if (e.adapter == "http") {
        if (e.base_url.empty()) throw ConfigError(who + " model: base_url is required for the http adapter");
        if (e.model.empty()) throw ConfigError(who + " model: model name is required for the http adapter");
        const char* key = std::getenv(e.api_key_env.c_str());
        if (!key || !*key) throw ConfigError(who + " model: environment variable " + e.api_key_env + " is not set");
        return std::make_shared<HttpChatAdapter>(HttpEndpoint{e.base_url, "/v1/chat/completions", e.model, key,
                                                              e.timeout_seconds});
    }
    if (e.adapter == "scripted") {
        auto a = std::make_shared<ScriptedAdapter>();
        if (!e.script.empty()) a->load_script(cfg.resolve(e.script));
        return a;
    }
    if (cfg.fixture.empty()) throw ConfigError(who + " model: adapter '" + e.adapter + "' needs a 'fixture' file");
    auto fx = fixtures::FactFixture::load(cfg.resolve(cfg.fixture));
    if (e.adapter == "fact_gated") return fixtures::make_fact_gated_target(std::move(fx));
    return fixtures::make_fact_optimizer(std::move(fx));
}

std::vector<std::string> nonempty_lines(const std::filesystem::path& path) {
    std::vector<std::string> out;
    if (!std::filesystem::exists(path)) return out;
    for (auto& line : split_lines(read_file(path))) {
        if (!trim(line).empty()) out.push_back(std::move(line));
    }
    return out;
}

// Drops lines written after the checkpoint, e.g. by a step that never finished.
void truncate_lines(const std::filesystem::path& path, std::size_t keep) {
    auto lines = nonempty_lines(path);
    if (lines.size() < keep) {
        throw CheckpointError(path.string() + " has " + std::to_string(lines.size()) + " records, checkpoint expects " +
                              std::to_string(keep));
    }
    std::string out;
    for (std::size_t i = 0; i < keep; ++i) out += lines[i] + "\n";
    write_file_atomic(path, out);
}

struct Driver {
    Session& session;
    RunPaths paths;
    Checkpoint ckpt;

    // Records of one step are written sorted so that thread scheduling does
    // not change file contents.
    void flush_logs() {
        std::vector<std::string> evals;
        for (const auto& r : session.eval_cache->take_pending()) evals.push_back(eval_record_line(r));
        append_sorted(paths.eval_cache(), evals);
        ckpt.eval_cache_lines += evals.size();
        std::vector<std::string> responses;
        for (const auto& r : session.gateway->log().take_pending()) responses.push_back(record_to_line(r));
        append_sorted(paths.responses(), responses);
        ckpt.response_lines += responses.size();
        auto& cache = session.gateway->cache();
        cache.sort_from(ckpt.response_cache_entries);
        cache.save(paths.response_cache());
        ckpt.response_cache_entries = cache.size();
    }

    static void append_sorted(const std::filesystem::path& path, std::vector<std::string>& lines) {
        if (lines.empty()) return;
        std::sort(lines.begin(), lines.end());
        std::string out;
        for (const auto& l : lines) out += l + "\n";
        append_file(path, out);
    }

    // Logs first, checkpoint last: a checkpoint never points past durable data.
    void persist(const RunState& state) {
        flush_logs();
        if (state.step > 0) {
            append_file(paths.trajectory(), json(state.trajectory.steps.back()).dump() + "\n");
            ++ckpt.trajectory_lines;
            ckpt.last_step = state.trajectory.steps.back();
        }
        ckpt.step = state.step;
        ckpt.beam.clear();
        for (const auto& d : state.beam) ckpt.beam.push_back(render_prompt(d));
        ckpt.bank = state.bank;
        ckpt.sampler = state.sampler;
        write_file_atomic(paths.checkpoint(), checkpoint_to_json(ckpt).dump(2) + "\n");
    }

    RunOutcome drive(RunState state, const RunOptions& options) {
        const auto total = session.config.iterations;
        for (;;) {
            if (options.stop_after_step && state.step >= *options.stop_after_step) return {paths, state.step, false, {}};
            if (state.step >= total) break;
            state = session.optimizer->run_step(state);
            persist(state);
        }

        auto sel = session.optimizer->final_select(state.beam, session.splits.val);
        const auto& chosen = state.beam[sel.index];
        FinalRecord fin;
        fin.selected_index = sel.index;
        fin.val_accuracy = sel.accuracy;
        fin.beam_val_accuracies = sel.accuracies;
        fin.test_accuracy = session.splits.test.empty()
                                ? 0.0
                                : session.evaluator->evaluate(chosen, session.splits.test).accuracy();
        const auto rendered = render_prompt(chosen);
        fin.fingerprint = prompt_fingerprint(rendered);
        fin.prompt_chars = rendered.size();

        flush_logs();
        append_file(paths.trajectory(), final_to_json(fin).dump() + "\n");
        write_file_atomic(paths.final_prompt(), rendered);
        write_report(paths);
        return {paths, state.step, true, fin};
    }
};

std::vector<PromptDocument> parse_beam(const std::vector<std::string>& rendered) {
    std::vector<PromptDocument> beam;
    for (const auto& text : rendered) beam.push_back(parse_prompt(text));
    return beam;
}

} // namespace

Session prepare_session(const RunConfig& config) {
    Session s;
    s.config = config;
    s.config.validate();
    const auto& cfg = s.config;

    s.data = load_task(cfg.resolve(cfg.task));
    s.splits = cfg.split_mode == "field" ? split_by_field(s.data, cfg.val_as_test)
                                         : split(s.data, cfg.split_seed, cfg.split_sizes, cfg.val_as_test);
    if (s.splits.train.empty()) throw ConfigError("training split is empty");
    if (s.splits.val.empty()) throw ConfigError("validation split is empty");
    if (s.splits.train.size() < cfg.batch_size) {
        throw ConfigError("batch_size " + std::to_string(cfg.batch_size) + " exceeds the training split (" +
                          std::to_string(s.splits.train.size()) + ")");
    }

    if (cfg.initial_prompt.empty()) throw ConfigError("config is missing 'initial_prompt'");
    try {
        s.initial = parse_prompt(read_file(cfg.resolve(cfg.initial_prompt)));
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    render_prompt(s.initial);  // rejects headings too deep to render

    s.templates = cfg.templates_dir.empty() ? PromptTemplates::defaults() : PromptTemplates::load(cfg.resolve(cfg.templates_dir));
    s.templates.validate();

    s.gateway = std::make_unique<LlmGateway>(cfg.retry);
    s.gateway->set_adapter(ModelRole::optimizer, build_adapter(cfg, cfg.optimizer, ModelRole::optimizer),
                           cfg.optimizer.max_in_flight);
    s.gateway->set_adapter(ModelRole::target, build_adapter(cfg, cfg.target, ModelRole::target), cfg.target.max_in_flight);

    s.eval_cache = std::make_unique<EvalCache>();
    s.evaluator = std::make_unique<Evaluator>(*s.gateway, s.data.instruction, *s.eval_cache,
                                              TargetSettings{cfg.target.temperature, cfg.target.seed, cfg.target.max_output},
                                              cfg.parallelism);
    s.optimizer = std::make_unique<Optimizer>(cfg, s.splits.train, s.templates, *s.gateway, *s.evaluator);
    return s;
}

json final_to_json(const FinalRecord& f) {
    return {{"kind", "final"},
            {"selected_index", f.selected_index},
            {"val_accuracy", f.val_accuracy},
            {"test_accuracy", f.test_accuracy},
            {"beam_val_accuracies", f.beam_val_accuracies},
            {"fingerprint", f.fingerprint},
            {"prompt_chars", f.prompt_chars}};
}

FinalRecord final_from_json(const json& j) {
    FinalRecord f;
    j.at("selected_index").get_to(f.selected_index);
    j.at("val_accuracy").get_to(f.val_accuracy);
    j.at("test_accuracy").get_to(f.test_accuracy);
    j.at("beam_val_accuracies").get_to(f.beam_val_accuracies);
    j.at("fingerprint").get_to(f.fingerprint);
    j.at("prompt_chars").get_to(f.prompt_chars);
    return f;
}

json checkpoint_to_json(const Checkpoint& c) {
    return {{"version", c.version},
            {"config_digest", c.config_digest},
            {"config_path", c.config_path},
            {"seed", c.seed ? json(*c.seed) : json(nullptr)},
            {"step", c.step},
            {"beam", c.beam},
            {"bank", c.bank},
            {"sampler", {{"epoch", c.sampler.epoch}, {"cursor", c.sampler.cursor}}},
            {"last_step", c.last_step ? json(*c.last_step) : json(nullptr)},
            {"counts",
             {{"trajectory", c.trajectory_lines},
              {"responses", c.response_lines},
              {"eval_cache", c.eval_cache_lines},
              {"response_cache", c.response_cache_entries}}}};
}

Checkpoint checkpoint_from_json(const json& j) {
    Checkpoint c;
    j.at("version").get_to(c.version);
    if (c.version != 1) throw CheckpointError("unsupported checkpoint version " + std::to_string(c.version));
    j.at("config_digest").get_to(c.config_digest);
    j.at("config_path").get_to(c.config_path);
    if (!j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    j.at("step").get_to(c.step);
    j.at("beam").get_to(c.beam);
    j.at("bank").get_to(c.bank);
    j.at("sampler").at("epoch").get_to(c.sampler.epoch);
    j.at("sampler").at("cursor").get_to(c.sampler.cursor);
    if (!j.at("last_step").is_null()) c.last_step = j.at("last_step").get<TrajectoryStep>();
    const auto& n = j.at("counts");
    n.at("trajectory").get_to(c.trajectory_lines);
    n.at("responses").get_to(c.response_lines);
    n.at("eval_cache").get_to(c.eval_cache_lines);
    n.at("response_cache").get_to(c.response_cache_entries);
    if (c.beam.empty()) throw CheckpointError("checkpoint has an empty beam");
    return c;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw CheckpointError(e.what());
    }
    try {
        return checkpoint_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
        throw CheckpointError(path.string() + ": parse error at byte offset " + std::to_string(e.byte) + ": " + e.what());
    } catch (const json::exception& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
}

RunOutcome start_run(const std::filesystem::path& config_path, const RunOptions& options) {
    auto cfg = load_config(config_path);
    if (options.seed) cfg.seed = *options.seed;
    auto session = prepare_session(cfg);

    RunPaths paths{options.run_dir ? *options.run_dir : cfg.resolve(cfg.run_dir)};
    std::filesystem::create_directories(paths.dir);
    for (const auto& p : {paths.checkpoint(), paths.trajectory(), paths.responses(), paths.eval_cache(),
                          paths.response_cache(), paths.final_prompt(), paths.report_json(), paths.report_text()}) {
        std::filesystem::remove(p);
    }

    Checkpoint ckpt;
    ckpt.config_digest = config_digest(session.config);
    ckpt.config_path = std::filesystem::absolute(config_path).lexically_normal().string();
    ckpt.seed = options.seed;

    // Canonical form, so a resumed beam renders exactly as the live one.
    auto initial = parse_prompt(render_prompt(session.initial));
    Driver d{session, paths, std::move(ckpt)};
    auto state = session.optimizer->initial_state(std::move(initial));
    d.persist(state);
    return d.drive(std::move(state), options);
}

RunOutcome resume_run(const std::filesystem::path& checkpoint_path, const RunOptions& options) {
    auto ckpt = read_checkpoint(checkpoint_path);
    auto cfg = load_config(ckpt.config_path);
    const auto seed = options.seed ? options.seed : ckpt.seed;
    if (seed) cfg.seed = *seed;
    const auto digest = config_digest(cfg);
    if (digest != ckpt.config_digest) {
        throw ConfigError("config " + ckpt.config_path + " no longer matches the checkpoint (digest " + digest +
                          ", checkpoint " + ckpt.config_digest + "); refusing to resume");
    }
    ckpt.seed = seed;
    auto session = prepare_session(cfg);

    RunPaths paths{options.run_dir ? *options.run_dir : std::filesystem::absolute(checkpoint_path).parent_path()};
    truncate_lines(paths.trajectory(), ckpt.trajectory_lines);
    truncate_lines(paths.responses(), ckpt.response_lines);
    truncate_lines(paths.eval_cache(), ckpt.eval_cache_lines);
    for (const auto& p : {paths.final_prompt(), paths.report_json(), paths.report_text()}) std::filesystem::remove(p);

    session.eval_cache->load(paths.eval_cache(), ckpt.eval_cache_lines);
    session.eval_cache->take_pending();
    session.gateway->cache().load(paths.response_cache(), ckpt.response_cache_entries);
    if (session.gateway->cache().size() != ckpt.response_cache_entries) {
        throw CheckpointError(paths.response_cache().string() + " is shorter than the checkpoint expects");
    }
    session.gateway->log().restore(load_response_log(paths.responses(), ckpt.response_lines));

    RunState state;
    state.beam = parse_beam(ckpt.beam);
    state.bank = ckpt.bank;
    state.step = ckpt.step;
    state.sampler = ckpt.sampler;
    state.trajectory = load_trajectory(paths.trajectory(), ckpt.trajectory_lines).log;
    if (state.trajectory.steps.size() != ckpt.step) {
        throw CheckpointError("trajectory has " + std::to_string(state.trajectory.steps.size()) +
                              " steps, checkpoint is at step " + std::to_string(ckpt.step));
    }

    Driver d{session, paths, std::move(ckpt)};
    return d.drive(std::move(state), options);
}

} // namespace kppo
