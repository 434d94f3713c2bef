#include "kppo/dataset_store.hpp"

#include "kppo/error.hpp"
#include "kppo/util.hpp"

#include <nlohmann/json.hpp>

#include <limits>
#include <random>
#include <set>

namespace kppo {

using nlohmann::json;

Instance instance_from_json(const std::string& line) {
    auto j = json::parse(line);
    if (!j.is_object()) throw SchemaError("instance line is not a JSON object");
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.question = j.at("question").get<std::string>();
    for (const auto& o : j.at("options")) {
        inst.options.push_back({o.at("label").get<std::string>(), o.at("text").get<std::string>()});
    }
    inst.gold = j.at("gold").get<std::string>();
    if (auto it = j.find("split"); it != j.end() && !it->is_null()) inst.split = split_from_string(it->get<std::string>());
    validate_instance(inst);
    return inst;
}

std::string instance_to_json(const Instance& inst) {
    json opts = json::array();
    for (const auto& o : inst.options) opts.push_back({{"label", o.label}, {"text", o.text}});
    json j = {{"id", inst.id}, {"question", inst.question}, {"options", std::move(opts)}, {"gold", inst.gold}};
    if (inst.split != Split::unspecified) j["split"] = to_string(inst.split);
    return j.dump();
}

Dataset load_jsonl(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw SchemaError("dataset file not found: " + path.string());
    Dataset data;
    data.name = path.stem().string();
    data.instruction = default_task_instruction();
    std::vector<std::string> problems;
    std::set<std::string> ids;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(read_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto inst = instance_from_json(line);
            if (!ids.insert(inst.id).second) {
                problems.push_back("line " + std::to_string(line_no) + ": duplicate id '" + inst.id + "'");
                continue;
            }
            data.instances.push_back(std::move(inst));
        } catch (const std::exception& e) {
            problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = path.string() + ": " + std::to_string(problems.size()) + " malformed line(s)";
        for (const auto& p : problems) msg += "\n  " + p;
        throw SchemaError(msg);
    }
    if (data.instances.empty()) log_warning(path.string() + " contains no instances");
    return data;
}

Dataset load_task(const std::filesystem::path& task_path) {
    json j;
    try {
        j = json::parse(read_file(task_path));
    } catch (const json::exception& e) {
        throw ConfigError(task_path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    std::filesystem::path data_path;
    TaskInstruction instr;
    std::string name;
    try {
        name = j.at("name").get<std::string>();
        instr.template_text = j.at("instruction_template").get<std::string>();
        instr.answer_marker = j.at("answer_marker").get<std::string>();
        data_path = j.at("data").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(task_path.string() + ": " + e.what());
    }
    instr.validate();
    if (data_path.is_relative()) data_path = task_path.parent_path() / data_path;
    auto data = load_jsonl(data_path);
    data.name = std::move(name);
    data.instruction = std::move(instr);
    return data;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        // Unbiased draw in [0, i) by rejection.
        const std::uint64_t bound = i;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t r;
        do {
            r = rng();
        } while (r >= limit);
        std::swap(perm[i - 1], perm[static_cast<std::size_t>(r % bound)]);
    }
    return perm;
}

Splits split(const Dataset& data, std::uint64_t seed, SplitSizes sizes, bool val_as_test) {
    const auto n = data.instances.size();
    if (sizes.train + sizes.val + sizes.test > n) {
        throw ConfigError("split sizes " + std::to_string(sizes.train) + "/" + std::to_string(sizes.val) + "/" +
                          std::to_string(sizes.test) + " exceed " + std::to_string(n) + " instances");
    }
    auto perm = seeded_permutation(n, seed);
    Splits out;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < sizes.train; ++i) out.train.push_back(data.instances[perm[pos++]]);
    for (std::size_t i = 0; i < sizes.val; ++i) out.val.push_back(data.instances[perm[pos++]]);
    for (std::size_t i = 0; i < sizes.test; ++i) out.test.push_back(data.instances[perm[pos++]]);
    if (val_as_test && out.test.empty()) out.test = out.val;
    return out;
}

Splits split_by_field(const Dataset& data, bool val_as_test) {
    Splits out;
    for (const auto& inst : data.instances) {
        switch (inst.split) {
            case Split::train: out.train.push_back(inst); break;
            case Split::val: out.val.push_back(inst); break;
            case Split::test: out.test.push_back(inst); break;
            case Split::unspecified:
                throw ConfigError("instance '" + inst.id + "' has no split field but split mode is 'field'");
        }
    }
    if (val_as_test && out.test.empty()) out.test = out.val;
    return out;
}

} // namespace kppo
