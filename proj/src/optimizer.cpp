#include "kppo/optimizer.hpp"

#include "kppo/error.hpp"
#include "kppo/util.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <set>

namespace kppo {

EpochSampler::EpochSampler(std::size_t pool_size, std::uint64_t seed) : pool_size_(pool_size), seed_(seed) {}

std::vector<std::size_t> EpochSampler::next(SamplerState& state, std::size_t batch_size) const {
    if (pool_size_ == 0) throw ConfigError("training split is empty");
    if (batch_size > pool_size_) {
        throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds training split of " +
                          std::to_string(pool_size_));
    }
    if (state.cursor + batch_size > pool_size_) {
        ++state.epoch;
        state.cursor = 0;
    }
    auto perm = seeded_permutation(pool_size_, derive_seed(seed_, {state.epoch}));
    std::vector<std::size_t> batch(perm.begin() + static_cast<std::ptrdiff_t>(state.cursor),
                                   perm.begin() + static_cast<std::ptrdiff_t>(state.cursor + batch_size));
    state.cursor += batch_size;
    return batch;
}

namespace {

constexpr std::array<std::string_view, 3> gradient_labels{"error explanation", "knowledge gap analysis", "modification"};

// Returns the label index and the remainder of the line after "label:".
std::optional<std::pair<std::size_t, std::string>> match_label(const std::string& line) {
    std::size_t p = 0;
    while (p < line.size() && std::string_view("#*-_>0123456789.) \t").find(line[p]) != std::string_view::npos) ++p;
    auto lower = to_lower(std::string_view(line).substr(p));
    for (std::size_t i = 0; i < gradient_labels.size(); ++i) {
        const auto label = gradient_labels[i];
        if (lower.compare(0, label.size(), label) != 0) continue;
        auto q = label.size();
        while (q < lower.size() && (lower[q] == '*' || lower[q] == ' ' || lower[q] == '_')) ++q;
        if (q >= lower.size() || lower[q] != ':') continue;
        ++q;
        while (q < lower.size() && (lower[q] == '*' || lower[q] == '_')) ++q;
        return std::make_pair(i, trim(std::string_view(line).substr(p + q)));
    }
    return std::nullopt;
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

struct SlotErrors {
    std::mutex mu;
    std::size_t slot = std::numeric_limits<std::size_t>::max();
    std::exception_ptr error;

    void record(std::size_t i, std::exception_ptr e) {
        std::lock_guard lock(mu);
        if (i < slot) {
            slot = i;
            error = std::move(e);
        }
    }
    void rethrow() const {
        if (error) std::rethrow_exception(error);
    }
};

} // namespace

std::optional<Gradient> parse_gradient(std::string_view reply) {
    std::array<std::string, 3> sections;
    std::array<bool, 3> seen{};
    std::optional<std::size_t> current;
    for (const auto& line : split_lines(reply)) {
        if (auto m = match_label(line); m && !seen[m->first]) {
            current = m->first;
            seen[m->first] = true;
            sections[m->first] = m->second;
            continue;
        }
        if (current) {
            auto& s = sections[*current];
            if (!s.empty()) s += '\n';
            s += line;
        }
    }
    for (auto& s : sections) s = trim(s);
    if (sections[0].empty() || sections[1].empty() || sections[2].empty()) return std::nullopt;
    return Gradient{sections[0], sections[1], sections[2], {}};
}

std::string extract_prompt_text(std::string_view reply) {
    auto open = reply.rfind("<prompt>");
    if (open != std::string_view::npos) {
        auto body = reply.substr(open + 8);
        auto close = body.find("</prompt>");
        if (close != std::string_view::npos) body = body.substr(0, close);
        return trim(body);
    }
    std::string out;
    for (const auto& line : split_lines(reply)) {
        if (line.rfind("```", 0) == 0) continue;
        out += line;
        out += '\n';
    }
    return trim(out);
}

std::string format_failures(const PromptTemplates& templates, std::span<const Failure> failures) {
    std::string out;
    for (std::size_t i = 0; i < failures.size(); ++i) {
        const auto& f = failures[i];
        if (i) out += "\n\n";
        out += fill_template(templates.failure_case, {{"index", std::to_string(i + 1)},
                                                      {"question", f.instance.question},
                                                      {"options", format_options(f.instance)},
                                                      {"output", trim(f.output)},
                                                      {"gold", f.instance.gold}});
    }
    return out;
}

std::string format_violations(const PromptTemplates& templates, const KnowledgeTree& tree,
                              const ViolationReport& report) {
    std::vector<std::string> lines;
    for (const auto& v : report.local) {
        lines.push_back(fill_template(templates.degree_violation, {{"path", tree.path(v.node)},
                                                                   {"outdeg", std::to_string(v.out_degree)},
                                                                   {"limit", std::to_string(v.limit)}}));
    }
    for (const auto& v : report.global) {
        lines.push_back(fill_template(templates.balance_violation, {{"path", tree.path(v.node)},
                                                                    {"outdeg", std::to_string(tree.out_degree(v.node))},
                                                                    {"bf", format_number(v.branching.to_double())},
                                                                    {"beta", format_number(v.beta.to_double())},
                                                                    {"limit", format_number(v.limit)}}));
    }
    std::string out;
    for (const auto& l : lines) {
        if (!out.empty()) out += '\n';
        out += l;
    }
    return out;
}

Optimizer::Optimizer(RunConfig config, std::vector<Instance> train, PromptTemplates templates, LlmGateway& gateway,
                     Evaluator& evaluator)
    : config_(std::move(config)),
      train_(std::move(train)),
      templates_(std::move(templates)),
      gateway_(gateway),
      evaluator_(evaluator),
      sampler_(std::make_unique<EpochSampler>(train_.size(), derive_seed(config_.seed, {0x5a3b1e}))) {
    config_.validate();
    templates_.validate();
    for (std::size_t i = 0; i < train_.size(); ++i) {
        if (!train_index_.emplace(train_[i].id, i).second) throw SchemaError("duplicate training id " + train_[i].id);
    }
}

RunState Optimizer::initial_state(PromptDocument initial) const {
    RunState s;
    s.beam.push_back(std::move(initial));
    return s;
}

const Instance& Optimizer::instance(const std::string& id) const {
    auto it = train_index_.find(id);
    if (it == train_index_.end()) throw CheckpointError("bank references unknown training instance '" + id + "'");
    return train_[it->second];
}

std::vector<Instance> Optimizer::sample_batch(RunState& state) const {
    std::vector<Instance> batch;
    for (auto i : sampler_->next(state.sampler, config_.batch_size)) {
        batch.push_back(train_[i]);
        state.bank.push_back(train_[i].id);
    }
    return batch;
}

std::vector<Instance> Optimizer::recent_window(const RunState& state) const {
    auto k = std::min(config_.window, state.bank.size());
    std::vector<Instance> window;
    for (auto i = state.bank.size() - k; i < state.bank.size(); ++i) window.push_back(instance(state.bank[i]));
    return window;
}

std::vector<Failure> Optimizer::collect_failures(const PromptDocument& doc, std::span<const Instance> batch) {
    auto outcomes = evaluator_.run_all(doc, batch);
    std::vector<Failure> failures;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (outcomes[i].bit == 0) failures.push_back({batch[i], std::move(outcomes[i].raw_output)});
    }
    return failures;
}

ChatRequest Optimizer::optimizer_request(std::string content, std::uint64_t seed) const {
    ChatRequest req;
    req.role = ModelRole::optimizer;
    req.messages.push_back({"user", std::move(content)});
    req.temperature = config_.optimizer.temperature;
    if (config_.optimizer.seed) req.seed = derive_seed(*config_.optimizer.seed, {seed});
    req.max_output = config_.optimizer.max_output;
    return req;
}

std::optional<Gradient> Optimizer::generate_gradient(const PromptDocument& doc, std::span<const Failure> failures,
                                                     std::uint64_t seed) {
    if (failures.empty()) throw ContractError("gradient generation needs at least one failure");
    auto req = optimizer_request(
        fill_template(templates_.gradient, {{"prompt", render_prompt(doc)}, {"failures", format_failures(templates_, failures)}}),
        seed);
    auto reply = gateway_.complete(req).text;
    auto gradient = parse_gradient(reply);
    if (!gradient) {
        req.messages.push_back({"assistant", reply});
        req.messages.push_back({"user", templates_.gradient_retry});
        gradient = parse_gradient(gateway_.complete(req).text);
    }
    if (!gradient) {
        log_warning("optimizer reply lacks the three gradient sections after one retry; slot skipped");
        return std::nullopt;
    }
    for (const auto& f : failures) gradient->source_failures.push_back(f.instance.id);
    return gradient;
}

std::optional<PromptDocument> Optimizer::generate_candidate(const PromptDocument& doc,
                                                            std::span<const Failure> failures,
                                                            const Gradient& gradient, const ViolationReport& issues,
                                                            std::uint64_t seed) {
    const bool with_issues = config_.pruning && !issues.empty();
    std::map<std::string, std::string> vars{
        {"prompt", render_prompt(doc)},
        {"failures", format_failures(templates_, failures)},
        {"gradient", fill_template(templates_.gradient_section, {{"explanation", gradient.explanation},
                                                                 {"gap", gradient.gap_analysis},
                                                                 {"modification", gradient.modification}})},
    };
    if (with_issues) vars["violations"] = format_violations(templates_, doc.tree, issues);
    auto req = optimizer_request(fill_template(with_issues ? templates_.candidate_pruning : templates_.candidate, vars),
                                 seed);

    auto attempt = [&](const std::string& reply) -> std::pair<std::optional<PromptDocument>, std::size_t> {
        auto cand = parse_prompt(extract_prompt_text(reply));
        if (cand.tree.empty() && cand.preamble.empty()) return {std::nullopt, 0};
        auto chars = render_prompt(cand).size();
        return {std::move(cand), chars};
    };

    auto reply = gateway_.complete(req).text;
    auto [cand, chars] = attempt(reply);
    if (!cand) {
        log_warning("candidate reply parsed to an empty prompt; slot skipped");
        return std::nullopt;
    }
    if (chars <= config_.prompt_char_budget) return cand;

    req.messages.push_back({"assistant", reply});
    req.messages.push_back({"user", fill_template(templates_.shorten, {{"chars", std::to_string(chars)},
                                                                       {"budget", std::to_string(config_.prompt_char_budget)}})});
    auto [retry, retry_chars] = attempt(gateway_.complete(req).text);
    if (!retry || retry_chars > config_.prompt_char_budget) {
        log_warning("candidate exceeds the prompt size budget after one retry; slot skipped");
        return std::nullopt;
    }
    return retry;
}

RunState Optimizer::run_step(const RunState& state) {
    if (state.beam.empty()) throw ContractError("run_step needs a nonempty beam");
    RunState next = state;
    const auto step = state.step + 1;
    const auto batch = sample_batch(next);
    const auto window = recent_window(next);

    std::vector<CandidatePair> pairs;
    std::set<std::string> seen;
    std::size_t skipped = 0;
    for (std::size_t j = 0; j < state.beam.size(); ++j) {
        const auto& parent = state.beam[j];
        const auto parent_fp = prompt_fingerprint(parent);
        pairs.push_back({parent, parent, j, {parent_fp, 0, 0, true}});
        seen.insert(parent_fp);

        auto failures = collect_failures(parent, batch);
        if (failures.empty()) continue;
        ViolationReport issues;
        if (config_.pruning) issues = detect_violations(parent.tree, config_.max_children, config_.max_balance);

        const auto slots = config_.candidates_per_parent;
        std::vector<std::optional<PromptDocument>> produced(slots);
        SlotErrors errors;
        const auto threads = static_cast<int>(std::max<std::size_t>(1, std::min(config_.parallelism, slots)));
#pragma omp parallel for schedule(dynamic) num_threads(threads)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(slots); ++i) {
            const auto slot = static_cast<std::uint64_t>(i);
            try {
                auto g = generate_gradient(parent, failures, derive_seed(config_.seed, {step, j, slot, 0}));
                if (!g) continue;
                produced[static_cast<std::size_t>(i)] =
                    generate_candidate(parent, failures, *g, issues, derive_seed(config_.seed, {step, j, slot, 1}));
            } catch (...) {
                errors.record(static_cast<std::size_t>(i), std::current_exception());
            }
        }
        errors.rethrow();

        for (auto& cand : produced) {
            if (!cand) {
                ++skipped;
                continue;
            }
            auto fp = prompt_fingerprint(*cand);
            if (!seen.insert(fp).second) continue;
            pairs.push_back({std::move(*cand), parent, j, {fp, 0, 0, false}});
        }
    }

    for (auto& pair : pairs) {
        if (pair.score.identity) continue;
        auto vec_new = evaluator_.evaluate(pair.candidate, window);
        auto vec_old = evaluator_.evaluate(pair.parent, window);
        pair.score.delta_s = delta_score(vec_new, vec_old);
        pair.score.divergence = divergence(vec_new, vec_old);
    }

    std::vector<ScoredCandidate> scored;
    for (const auto& p : pairs) scored.push_back(p.score);
    auto chosen = filter_candidates(scored, config_.beam_width);
    next.beam.clear();
    for (auto i : chosen) next.beam.push_back(pairs[i].candidate);
    next.step = step;

    const auto& previous = state.beam.front();
    const auto& selected = next.beam.front();
    const auto& top = pairs[chosen.front()];
    auto prev_batch = evaluator_.evaluate(previous, batch);
    auto sel_batch = evaluator_.evaluate(selected, batch);
    auto sel_window = evaluator_.evaluate(selected, window);
    auto violations = detect_violations(selected.tree, config_.max_children, config_.max_balance);

    TrajectoryStep record;
    record.step = step;
    record.batch_ids = prev_batch.instance_ids;
    record.previous_fingerprint = prev_batch.prompt_fingerprint;
    record.selected_fingerprint = sel_batch.prompt_fingerprint;
    record.previous_bits = prev_batch.bits;
    record.selected_bits = sel_batch.bits;
    record.window_size = sel_window.size();
    record.window_correct = sel_window.correct();
    record.selected_delta_s = top.score.delta_s;
    record.selected_divergence = top.score.divergence;
    record.candidates = pairs.size();
    record.skipped_slots = skipped;
    record.local_violations = violations.local.size();
    record.global_violations = violations.global.size();
    record.prompt_chars = render_prompt(selected).size();
    next.trajectory.steps.push_back(std::move(record));
    return next;
}

Optimizer::Selection Optimizer::final_select(std::span<const PromptDocument> beam,
                                             std::span<const Instance> validation) {
    if (beam.empty()) throw ContractError("final selection needs a nonempty beam");
    if (validation.empty()) throw ConfigError("validation split is empty");
    Selection sel;
    for (std::size_t i = 0; i < beam.size(); ++i) {
        auto acc = evaluator_.evaluate(beam[i], validation).accuracy();
        sel.accuracies.push_back(acc);
        if (i == 0 || acc > sel.accuracy) {
            sel.index = i;
            sel.accuracy = acc;
        }
    }
    return sel;
}

} // namespace kppo
