#include "kppo/report.hpp"

#include "kppo/error.hpp"
#include "kppo/util.hpp"

#include <cstdio>

namespace kppo {

using nlohmann::json;

RunReport build_report(const TrajectoryLog& trajectory, const std::optional<FinalRecord>& final,
                       std::span<const ResponseRecord> responses) {
    RunReport r;
    for (const auto& s : trajectory.steps) {
        StepSummary x;
        x.step = s.step;
        x.window_size = s.window_size;
        x.window_correct = s.window_correct;
        x.window_accuracy = s.window_size ? static_cast<double>(s.window_correct) / static_cast<double>(s.window_size) : 0.0;
        x.delta_s = s.selected_delta_s;
        x.divergence = s.selected_divergence;
        x.candidates = s.candidates;
        x.skipped_slots = s.skipped_slots;
        x.local_violations = s.local_violations;
        x.global_violations = s.global_violations;
        x.prompt_chars = s.prompt_chars;
        r.steps.push_back(x);
    }
    if (!trajectory.steps.empty()) r.learning_gain = learning_gain(trajectory);
    r.tokens = token_totals(responses);
    r.calls = responses.size();
    for (const auto& rec : responses) {
        if (rec.source == ResponseSource::cache) ++r.cache_hits;
    }
    r.final = final;
    return r;
}

TrajectoryFile load_trajectory(const std::filesystem::path& path, std::optional<std::size_t> limit) {
    TrajectoryFile out;
    if (!std::filesystem::exists(path)) return out;
    std::size_t line_no = 0;
    std::size_t taken = 0;
    for (const auto& line : split_lines(read_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (limit && taken >= *limit) break;
        ++taken;
        try {
            auto j = json::parse(line);
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "step") {
                out.log.steps.push_back(j.get<TrajectoryStep>());
            } else if (kind == "final") {
                out.final = final_from_json(j);
            } else {
                throw CheckpointError("unknown record kind '" + kind + "'");
            }
        } catch (const json::exception& e) {
            throw CheckpointError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const CheckpointError& e) {
            throw CheckpointError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

RunReport report_from_run_dir(const std::filesystem::path& dir) {
    RunPaths paths{dir};
    if (!std::filesystem::exists(paths.trajectory()) && !std::filesystem::exists(paths.checkpoint())) {
        throw ConfigError(dir.string() + " does not look like a run directory");
    }
    auto traj = load_trajectory(paths.trajectory());
    auto responses = load_response_log(paths.responses());
    return build_report(traj.log, traj.final, responses);
}

json report_to_json(const RunReport& r) {
    json steps = json::array();
    for (const auto& s : r.steps) {
        steps.push_back({{"step", s.step},
                         {"window_size", s.window_size},
                         {"window_correct", s.window_correct},
                         {"window_accuracy", s.window_accuracy},
                         {"delta_s", s.delta_s},
                         {"divergence", s.divergence},
                         {"candidates", s.candidates},
                         {"skipped_slots", s.skipped_slots},
                         {"local_violations", s.local_violations},
                         {"global_violations", s.global_violations},
                         {"prompt_chars", s.prompt_chars}});
    }
    auto usage = [](const Usage& u) { return json{{"input", u.input}, {"output", u.output}, {"total", u.total()}}; };
    return {{"steps", std::move(steps)},
            {"learning_gain", r.learning_gain ? json(*r.learning_gain) : json(nullptr)},
            {"tokens", {{"optimizer", usage(r.tokens.optimizer_usage)}, {"target", usage(r.tokens.target_usage)}}},
            {"calls", r.calls},
            {"cache_hits", r.cache_hits},
            {"final", r.final ? final_to_json(*r.final) : json(nullptr)}};
}

std::string report_to_text(const RunReport& r) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%4s  %-15s %4s %4s %6s %7s %6s %6s %7s\n", "step", "window acc", "dS", "D", "cands",
                  "skipped", "local", "global", "chars");
    out += buf;
    for (const auto& s : r.steps) {
        char acc[32];
        std::snprintf(acc, sizeof acc, "%.3f (%zu/%zu)", s.window_accuracy, s.window_correct, s.window_size);
        std::snprintf(buf, sizeof buf, "%4zu  %-15s %+4d %4d %6zu %7zu %6zu %6zu %7zu\n", s.step, acc, s.delta_s,
                      s.divergence, s.candidates, s.skipped_slots, s.local_violations, s.global_violations,
                      s.prompt_chars);
        out += buf;
    }
    if (r.learning_gain) {
        std::snprintf(buf, sizeof buf, "learning gain: %.4f\n", *r.learning_gain);
    } else {
        std::snprintf(buf, sizeof buf, "learning gain: n/a (no steps)\n");
    }
    out += buf;
    const auto& o = r.tokens.optimizer_usage;
    const auto& t = r.tokens.target_usage;
    std::snprintf(buf, sizeof buf, "tokens: optimizer %zu (in %zu, out %zu), target %zu (in %zu, out %zu)\n", o.total(),
                  o.input, o.output, t.total(), t.input, t.output);
    out += buf;
    std::snprintf(buf, sizeof buf, "calls: %zu (%zu served from cache)\n", r.calls, r.cache_hits);
    out += buf;
    if (r.final) {
        std::snprintf(buf, sizeof buf, "final: val %.4f, test %.4f, beam member %zu, %zu chars\n", r.final->val_accuracy,
                      r.final->test_accuracy, r.final->selected_index, r.final->prompt_chars);
    } else {
        std::snprintf(buf, sizeof buf, "final: not reached\n");
    }
    out += buf;
    return out;
}

RunReport write_report(const RunPaths& paths) {
    auto report = report_from_run_dir(paths.dir);
    write_file_atomic(paths.report_json(), report_to_json(report).dump(2) + "\n");
    write_file_atomic(paths.report_text(), report_to_text(report));
    return report;
}

} // namespace kppo
