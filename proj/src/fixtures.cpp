#include "kppo/fixtures.hpp"

#include "kppo/dataset_store.hpp"
#include "kppo/error.hpp"
#include "kppo/knowledge_tree.hpp"
#include "kppo/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <regex>

namespace kppo::fixtures {

using nlohmann::json;

FactFixture FactFixture::load(const std::filesystem::path& path) {
    FactFixture f;
    try {
        auto j = json::parse(read_file(path));
        f.answer_marker = j.value("answer_marker", f.answer_marker);
        f.facts = j.at("facts").get<std::vector<std::string>>();
        for (const auto& r : j.at("rules")) {
            f.rules.push_back({r.at("question").get<std::string>(), r.at("fact").get<std::string>(),
                               r.at("gold").get<std::string>(), r.at("wrong").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return f;
}

void FactFixture::save(const std::filesystem::path& path) const {
    json rules = json::array();
    for (const auto& r : this->rules) {
        rules.push_back({{"question", r.question}, {"fact", r.fact}, {"gold", r.gold}, {"wrong", r.wrong}});
    }
    json j = {{"answer_marker", answer_marker}, {"facts", facts}, {"rules", std::move(rules)}};
    write_file_atomic(path, j.dump(2) + "\n");
}

namespace {

const std::string* find_message(const ChatRequest& req, const std::string& role) {
    for (const auto& m : req.messages) {
        if (m.role == role) return &m.content;
    }
    return nullptr;
}

std::string between(const std::string& text, const std::string& open, const std::string& close) {
    auto b = text.find(open);
    if (b == std::string::npos) return {};
    b += open.size();
    auto e = text.find(close, b);
    if (e == std::string::npos) return {};
    return trim(std::string_view(text).substr(b, e - b));
}

std::optional<NodeId> find_topic(const KnowledgeTree& tree, const std::string& path) {
    for (const auto& n : tree.nodes()) {
        if (n.kind == NodeKind::topic && tree.path(n.id) == path) return n.id;
    }
    return std::nullopt;
}

// Last note child of `topic` that is not one of the protected facts.
std::optional<NodeId> last_filler(const KnowledgeTree& tree, NodeId topic, const std::vector<std::string>& facts) {
    const auto& children = tree.node(topic).children;
    for (auto it = children.rbegin(); it != children.rend(); ++it) {
        const auto& c = tree.node(*it);
        if (c.kind == NodeKind::note && std::find(facts.begin(), facts.end(), c.text) == facts.end()) return c.id;
    }
    return std::nullopt;
}

KnowledgeTree drop_node(const KnowledgeTree& tree, NodeId id) {
    return tree.without([id](const Node& n) { return n.id == id; });
}

KnowledgeTree honor_violations(KnowledgeTree tree, const std::string& violations, const std::vector<std::string>& facts) {
    static const std::regex line_re(R"re((Degree|Balance) violation at topic "([^"]*)".*limit ([0-9.]+)\))re");
    for (const auto& line : split_lines(violations)) {
        std::smatch m;
        if (!std::regex_search(line, m, line_re)) continue;
        const bool degree = m[1] == "Degree";
        const std::string path = m[2];
        const double limit = std::stod(m[3]);
        for (;;) {
            auto topic = find_topic(tree, path);
            if (!topic) break;
            bool satisfied = degree ? static_cast<double>(tree.out_degree(*topic)) <= limit
                                    : !balance_ratio(tree, *topic).exceeds(limit);
            if (satisfied) break;
            auto victim = last_filler(tree, *topic, facts);
            if (!victim) break;
            tree = drop_node(tree, *victim);
        }
    }
    return tree;
}

PromptDocument add_fact(PromptDocument doc, const std::string& fact, const std::string& topic_title) {
    std::optional<NodeId> topic;
    for (auto c : doc.tree.node(doc.tree.root()).children) {
        const auto& n = doc.tree.node(c);
        if (n.kind == NodeKind::topic && n.text == topic_title) topic = c;
    }
    if (!topic) topic = doc.tree.add_topic(doc.tree.root(), topic_title);
    doc.tree.add_note(*topic, fact);
    return doc;
}

} // namespace

std::shared_ptr<ScriptedAdapter> make_fact_gated_target(FactFixture fixture) {
    auto responder = [fx = std::move(fixture)](const ChatRequest& req) -> std::optional<std::string> {
        const auto* system = find_message(req, "system");
        const auto* user = find_message(req, "user");
        if (!user) return std::nullopt;
        for (const auto& r : fx.rules) {
            if (user->find(r.question) == std::string::npos) continue;
            const bool knows = system && system->find(r.fact) != std::string::npos;
            if (knows) return "The reference notes cover this: " + r.fact + "\n" + fx.answer_marker + " " + r.gold;
            return std::string("The prompt does not settle this, so I will guess.\n") + fx.answer_marker + " " + r.wrong;
        }
        return std::nullopt;
    };
    return std::make_shared<ScriptedAdapter>(std::move(responder));
}

std::shared_ptr<ScriptedAdapter> make_fact_optimizer(FactFixture fixture, ScriptedOptimizerOptions options) {
    auto responder = [fx = std::move(fixture), opts = std::move(options)](const ChatRequest& req) -> std::optional<std::string> {
        if (req.messages.empty()) return std::nullopt;
        const auto& content = req.messages.front().content;
        const auto current = between(content, "<current_prompt>", "</current_prompt>");
        const auto failures = between(content, "<failures>", "</failures>");

        if (content.find("<analysis>") == std::string::npos) {
            // Gradient request: rank missing facts by how many shown failures need them.
            std::vector<std::pair<std::string, int>> missing;
            for (const auto& r : fx.rules) {
                if (failures.find(r.question) == std::string::npos) continue;
                if (current.find(r.fact) != std::string::npos) continue;
                auto it = std::find_if(missing.begin(), missing.end(), [&](const auto& m) { return m.first == r.fact; });
                if (it == missing.end()) {
                    missing.emplace_back(r.fact, 1);
                } else {
                    ++it->second;
                }
            }
            std::stable_sort(missing.begin(), missing.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
            std::string modification = "No new fact is needed.";
            std::string gap = "None of the failures is explained by a missing fact.";
            if (!missing.empty()) {
                const auto& fact = missing[req.seed.value_or(0) % missing.size()].first;
                gap = "The prompt is missing this fact: " + fact;
                modification = "Add note: " + fact;
            }
            return "Error Explanation: The assistant guessed because the prompt does not state the facts these "
                   "questions depend on.\nKnowledge Gap Analysis: " +
                   gap + "\nModification: " + modification;
        }

        // Candidate request.
        auto doc = parse_prompt(current);
        if (opts.honor_violations) {
            auto violations = between(content, "<violations>", "</violations>");
            if (!violations.empty()) doc.tree = honor_violations(doc.tree, violations, fx.facts);
        }
        const auto analysis = between(content, "<analysis>", "</analysis>");
        static const std::string tag = "Add note: ";
        if (auto pos = analysis.find(tag); pos != std::string::npos) {
            auto end = analysis.find('\n', pos);
            auto fact = trim(std::string_view(analysis).substr(pos + tag.size(), end == std::string::npos ? std::string::npos
                                                                                                       : end - pos - tag.size()));
            if (std::find(fx.facts.begin(), fx.facts.end(), fact) != fx.facts.end() &&
                current.find(fact) == std::string::npos) {
                doc = add_fact(std::move(doc), fact, opts.facts_topic);
            }
        }
        return "<prompt>\n" + render_prompt(doc) + "</prompt>";
    };
    return std::make_shared<ScriptedAdapter>(std::move(responder));
}

namespace {

const std::vector<std::pair<std::string, std::string>>& fact_bank() {
    // (subject, fact) pairs about invented entities.
    static const std::vector<std::pair<std::string, std::string>> bank{
        {"the Kestrel valve", "The Kestrel valve opens only under negative pressure."},
        {"Morrow's sign", "Morrow's sign indicates a fracture of the left ulna."},
        {"tarnic acid", "Tarnic acid turns litmus paper violet."},
        {"the Quillon protocol", "The Quillon protocol requires three independent signatures."},
        {"Brenner coils", "Brenner coils are rated for at most 40 amperes."},
        {"the Ostrava index", "The Ostrava index is computed over a rolling 7-day window."},
        {"Halden glass", "Halden glass softens at 410 degrees Celsius."},
        {"the Pell clause", "The Pell clause voids a contract signed under duress."},
    };
    return bank;
}

} // namespace

FixtureFiles write_fact_fixture(const std::filesystem::path& dir, const FixtureSpec& spec) {
    std::filesystem::create_directories(dir);
    static const std::vector<std::string> labels{"A", "B", "C", "D"};
    FactFixture fx;
    std::string data;
    for (std::size_t k = 0; k < spec.facts; ++k) {
        std::string subject, fact;
        if (k < fact_bank().size()) {
            std::tie(subject, fact) = fact_bank()[k];
        } else {
            subject = "reference item " + std::to_string(k + 1);
            fact = "Reference item " + std::to_string(k + 1) + " is catalogued under code R" + std::to_string(100 + k) + ".";
        }
        fx.facts.push_back(fact);
        for (std::size_t q = 0; q < spec.questions_per_fact; ++q) {
            Instance inst;
            inst.id = "f" + std::to_string(k + 1) + "-q" + std::to_string(q + 1);
            inst.question = "[case " + inst.id + "] Which statement about " + subject + " is correct in scenario " +
                            std::to_string(q + 1) + "?";
            const auto gold = (k + q) % labels.size();
            const auto wrong = (gold + 1) % labels.size();
            for (std::size_t o = 0; o < labels.size(); ++o) {
                inst.options.push_back({labels[o], o == gold ? "The documented behaviour applies."
                                                             : "Alternative reading " + std::to_string(o + 1) + "."});
            }
            inst.gold = labels[gold];
            inst.split = q < spec.train_per_fact ? Split::train : Split::val;
            fx.rules.push_back({inst.question, fact, labels[gold], labels[wrong]});
            data += instance_to_json(inst) + "\n";
        }
    }

    FixtureFiles files{dir / "config.json", dir / "task.json", dir / "data.jsonl", dir / "fixture.json",
                       dir / "initial_prompt.md"};
    write_file_atomic(files.data, data);
    fx.save(files.fixture);

    json task = {{"name", "fact-gated fixture"},
                 {"instruction_template", default_task_instruction().template_text},
                 {"answer_marker", fx.answer_marker},
                 {"data", "data.jsonl"}};
    write_file_atomic(files.task, task.dump(2) + "\n");

    std::string prompt = "You are a careful assistant for a specialised technical domain. Use the reference knowledge "
                         "below when answering.\n\n# Key Facts\n";
    if (spec.filler_children > 0) {
        prompt += "\n# Background\n";
        for (std::size_t i = 0; i < spec.filler_children; ++i) {
            prompt += "- Background note " + std::to_string(i + 1) + ": general context that does not decide any answer.\n";
        }
    }
    write_file_atomic(files.initial_prompt, prompt);

    json config = {
        {"task", "task.json"},
        {"initial_prompt", "initial_prompt.md"},
        {"fixture", "fixture.json"},
        {"run_dir", "run"},
        {"seed", spec.seed},
        {"optimization",
         {{"batch_size", spec.batch_size},
          {"window", spec.window},
          {"iterations", spec.iterations},
          {"candidates_per_parent", spec.candidates_per_parent},
          {"beam_width", spec.beam_width},
          {"parallelism", 4}}},
        {"pruning", {{"enabled", spec.pruning}, {"max_children", 16}, {"max_balance", 8.0}}},
        {"split", {{"mode", "field"}, {"val_as_test", true}}},
        {"models",
         {{"optimizer", {{"adapter", "fact_optimizer"}, {"temperature", 0.7}, {"seed", 0}}},
          {"target", {{"adapter", "fact_gated"}, {"temperature", 0.0}, {"seed", 0}}}}},
        {"retry", {{"max_attempts", 2}, {"base_delay_ms", 0}, {"max_delay_ms", 0}}},
    };
    write_file_atomic(files.config, config.dump(2) + "\n");
    return files;
}

} // namespace kppo::fixtures
