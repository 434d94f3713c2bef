#include "kppo/task_eval.hpp"

#include "kppo/error.hpp"
#include "kppo/util.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <limits>
#include <mutex>
#include <set>

namespace kppo {

using nlohmann::json;

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        case Split::unspecified: break;
    }
    return "";
}

Split split_from_string(const std::string& s) {
    if (s.empty()) return Split::unspecified;
    if (s == "train") return Split::train;
    if (s == "val" || s == "validation" || s == "dev") return Split::val;
    if (s == "test") return Split::test;
    throw SchemaError("unknown split '" + s + "'");
}

std::vector<std::string> Instance::labels() const {
    std::vector<std::string> out;
    out.reserve(options.size());
    for (const auto& o : options) out.push_back(o.label);
    return out;
}

void validate_instance(const Instance& inst) {
    if (inst.id.empty()) throw SchemaError("instance without id");
    if (inst.options.empty()) throw SchemaError("instance '" + inst.id + "' has no options");
    std::set<std::string> seen;
    bool gold_found = false;
    for (const auto& o : inst.options) {
        if (o.label.empty()) throw SchemaError("instance '" + inst.id + "' has an empty option label");
        if (!seen.insert(o.label).second) {
            throw SchemaError("instance '" + inst.id + "' repeats option label '" + o.label + "'");
        }
        gold_found |= o.label == inst.gold;
    }
    if (!gold_found) throw SchemaError("instance '" + inst.id + "': gold '" + inst.gold + "' is not an option label");
}

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

void replace_once(std::string& s, std::string_view key, std::string_view value) {
    auto pos = s.find(key);
    if (pos != std::string::npos) s.replace(pos, key.size(), value);
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Longest label matching at `pos` and ending on a word boundary.
std::optional<std::size_t> label_at(const std::string& lower_text, std::size_t pos,
                                    const std::vector<std::string>& lower_labels) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < lower_labels.size(); ++i) {
        const auto& l = lower_labels[i];
        if (l.empty() || lower_text.compare(pos, l.size(), l) != 0) continue;
        auto end = pos + l.size();
        if (end < lower_text.size() && is_word_char(lower_text[end]) && is_word_char(l.back())) continue;
        if (!best || l.size() > lower_labels[*best].size()) best = i;
    }
    return best;
}

} // namespace

void TaskInstruction::validate() const {
    if (count_occurrences(template_text, "{question}") != 1) {
        throw ConfigError("task instruction must contain {question} exactly once");
    }
    if (count_occurrences(template_text, "{options}") != 1) {
        throw ConfigError("task instruction must contain {options} exactly once");
    }
    if (trim(answer_marker).empty()) throw ConfigError("task instruction needs a nonempty answer marker");
}

TaskInstruction default_task_instruction() {
    return {"Answer the following question using the knowledge provided.\n\nQuestion: {question}\n\nOptions:\n{options}",
            "Final Answer:"};
}

std::string format_options(const Instance& inst) {
    std::string out;
    for (const auto& o : inst.options) {
        if (!out.empty()) out += '\n';
        out += o.label + ". " + o.text;
    }
    return out;
}

std::vector<ChatMessage> build_messages(std::string system_text, const Instance& inst, const TaskInstruction& instr) {
    instr.validate();
    std::string user = instr.template_text;
    // Options first so a literal "{options}" inside the question is left alone.
    replace_once(user, "{options}", format_options(inst));
    replace_once(user, "{question}", inst.question);
    std::string labels;
    for (const auto& o : inst.options) {
        if (!labels.empty()) labels += ", ";
        labels += o.label;
    }
    user += "\n\nEnd your reply with a line of the form \"" + instr.answer_marker + " <label>\" where <label> is one of: " +
            labels + ".";
    return {{"system", std::move(system_text)}, {"user", std::move(user)}};
}

std::vector<ChatMessage> build_messages(const PromptDocument& doc, const Instance& inst, const TaskInstruction& instr) {
    return build_messages(render_prompt(doc), inst, instr);
}

std::optional<std::string> extract_answer(std::string_view raw, std::span<const std::string> labels,
                                          std::string_view answer_marker) {
    const auto text = to_lower(raw);
    std::vector<std::string> lower_labels;
    lower_labels.reserve(labels.size());
    for (const auto& l : labels) lower_labels.push_back(to_lower(l));

    const auto marker = to_lower(trim(answer_marker));
    if (!marker.empty()) {
        std::vector<std::size_t> hits;
        for (auto pos = text.find(marker); pos != std::string::npos; pos = text.find(marker, pos + 1)) hits.push_back(pos);
        for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
            auto p = *it + marker.size();
            while (p < text.size() && (std::isspace(static_cast<unsigned char>(text[p])) ||
                                       std::string_view("*:()[]\"'`.").find(text[p]) != std::string_view::npos)) {
                ++p;
            }
            if (auto idx = label_at(text, p, lower_labels)) return labels[*idx];
        }
    }

    std::optional<std::size_t> last;
    for (std::size_t p = 0; p < text.size(); ++p) {
        if (p > 0 && is_word_char(text[p - 1])) continue;
        if (auto idx = label_at(text, p, lower_labels)) last = idx;
    }
    if (last) return labels[*last];
    return std::nullopt;
}

double CorrectnessVector::accuracy() const noexcept {
    return bits.empty() ? 0.0 : static_cast<double>(correct()) / static_cast<double>(bits.size());
}

std::size_t CorrectnessVector::correct() const noexcept {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
}

std::string prompt_fingerprint(std::string_view rendered) { return sha256_hex(rendered); }

std::string prompt_fingerprint(const PromptDocument& doc) { return prompt_fingerprint(render_prompt(doc)); }

std::optional<std::uint8_t> EvalCache::lookup(const std::string& fingerprint, const std::string& instance_id) const {
    std::shared_lock lock(mu_);
    auto it = bits_.find(key(fingerprint, instance_id));
    if (it == bits_.end()) return std::nullopt;
    return it->second;
}

void EvalCache::insert(EvalRecord record) {
    std::unique_lock lock(mu_);
    auto [it, inserted] = bits_.emplace(key(record.prompt_fingerprint, record.instance_id), record.bit);
    if (inserted) pending_.push_back(std::move(record));
}

std::size_t EvalCache::size() const {
    std::shared_lock lock(mu_);
    return bits_.size();
}

std::string eval_record_line(const EvalRecord& r) {
    json j = {{"prompt_fingerprint", r.prompt_fingerprint},
              {"instance_id", r.instance_id},
              {"bit", r.bit},
              {"raw_output_digest", r.raw_output_digest}};
    return j.dump();
}

void EvalCache::load(const std::filesystem::path& path, std::optional<std::size_t> limit) {
    if (!std::filesystem::exists(path)) return;
    std::size_t line_no = 0;
    std::size_t loaded = 0;
    for (const auto& line : split_lines(read_file(path))) {
        if (limit && loaded >= *limit) break;
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            std::unique_lock lock(mu_);
            bits_.emplace(key(j.at("prompt_fingerprint").get<std::string>(), j.at("instance_id").get<std::string>()),
                          static_cast<std::uint8_t>(j.at("bit").get<int>()));
            ++loaded;
        } catch (const json::exception& e) {
            throw CheckpointError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

std::vector<EvalRecord> EvalCache::take_pending() {
    std::unique_lock lock(mu_);
    return std::exchange(pending_, {});
}

Evaluator::Evaluator(LlmGateway& gateway, TaskInstruction instruction, EvalCache& cache, TargetSettings settings,
                     std::size_t parallelism)
    : gateway_(gateway),
      instruction_(std::move(instruction)),
      cache_(cache),
      settings_(settings),
      parallelism_(std::max<std::size_t>(1, parallelism)) {
    instruction_.validate();
}

InstanceOutcome Evaluator::run_one(const std::string& system_text, const std::string& fingerprint,
                                   const Instance& inst) {
    ChatRequest req;
    req.role = ModelRole::target;
    req.messages = build_messages(system_text, inst, instruction_);
    req.temperature = settings_.temperature;
    req.seed = settings_.seed;
    req.max_output = settings_.max_output;
    auto resp = gateway_.complete(req);
    InstanceOutcome out;
    auto labels = inst.labels();
    out.answer = extract_answer(resp.text, labels, instruction_.answer_marker);
    out.bit = out.answer && *out.answer == inst.gold ? 1 : 0;
    cache_.insert({fingerprint, inst.id, out.bit, sha256_hex(resp.text)});
    out.raw_output = std::move(resp.text);
    return out;
}

namespace {

struct FirstFailure {
    std::mutex mu;
    std::size_t position = std::numeric_limits<std::size_t>::max();
    std::string message;

    void record(std::size_t pos, const char* what) {
        std::lock_guard lock(mu);
        if (pos < position) {
            position = pos;
            message = what;
        }
    }
    void rethrow() const {
        if (position == std::numeric_limits<std::size_t>::max()) return;
        throw EvaluationError("evaluation failed at position " + std::to_string(position) + ": " + message, position);
    }
};

CorrectnessVector empty_vector(const std::string& fp, std::span<const Instance> instances) {
    CorrectnessVector vec;
    vec.prompt_fingerprint = fp;
    vec.instance_ids.reserve(instances.size());
    for (const auto& inst : instances) vec.instance_ids.push_back(inst.id);
    vec.bits.assign(instances.size(), 0);
    return vec;
}

} // namespace

CorrectnessVector Evaluator::evaluate(const PromptDocument& doc, std::span<const Instance> instances) {
    const auto system = render_prompt(doc);
    const auto fp = prompt_fingerprint(system);
    auto vec = empty_vector(fp, instances);
    FirstFailure failure;
    const auto n = static_cast<std::int64_t>(instances.size());

#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(parallelism_))
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& inst = instances[static_cast<std::size_t>(i)];
        if (auto hit = cache_.lookup(fp, inst.id)) {
            vec.bits[static_cast<std::size_t>(i)] = *hit;
            continue;
        }
        try {
            vec.bits[static_cast<std::size_t>(i)] = run_one(system, fp, inst).bit;
        } catch (const std::exception& e) {
            failure.record(static_cast<std::size_t>(i), e.what());
        }
    }
    failure.rethrow();
    return vec;
}

CorrectnessVector Evaluator::evaluate_serial(const PromptDocument& doc, std::span<const Instance> instances) {
    const auto system = render_prompt(doc);
    const auto fp = prompt_fingerprint(system);
    auto vec = empty_vector(fp, instances);
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (auto hit = cache_.lookup(fp, instances[i].id)) {
            vec.bits[i] = *hit;
            continue;
        }
        try {
            vec.bits[i] = run_one(system, fp, instances[i]).bit;
        } catch (const std::exception& e) {
            throw EvaluationError("evaluation failed at position " + std::to_string(i) + ": " + e.what(), i);
        }
    }
    return vec;
}

std::vector<InstanceOutcome> Evaluator::run_all(const PromptDocument& doc, std::span<const Instance> instances) {
    const auto system = render_prompt(doc);
    const auto fp = prompt_fingerprint(system);
    std::vector<InstanceOutcome> out(instances.size());
    FirstFailure failure;
    const auto n = static_cast<std::int64_t>(instances.size());

#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(parallelism_))
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = run_one(system, fp, instances[static_cast<std::size_t>(i)]);
        } catch (const std::exception& e) {
            failure.record(static_cast<std::size_t>(i), e.what());
        }
    }
    failure.rethrow();
    return out;
}

} // namespace kppo
