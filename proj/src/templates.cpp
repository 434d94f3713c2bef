#include "kppo/templates.hpp"

#include "kppo/error.hpp"
#include "kppo/util.hpp"
#include "templates_embedded.hpp"

#include <utility>
#include <vector>

namespace kppo {
namespace {

std::string strip_trailing_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

struct Field {
    const char* name;
    std::string PromptTemplates::*member;
    std::vector<const char*> placeholders;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> f{
        {"failure_case", &PromptTemplates::failure_case, {"index", "question", "options", "output", "gold"}},
        {"gradient", &PromptTemplates::gradient, {"prompt", "failures"}},
        {"gradient_section", &PromptTemplates::gradient_section, {"explanation", "gap", "modification"}},
        {"gradient_retry", &PromptTemplates::gradient_retry, {}},
        {"candidate", &PromptTemplates::candidate, {"prompt", "failures", "gradient"}},
        {"candidate_pruning", &PromptTemplates::candidate_pruning, {"prompt", "failures", "gradient", "violations"}},
        {"degree_violation", &PromptTemplates::degree_violation, {"path", "outdeg", "limit"}},
        {"balance_violation", &PromptTemplates::balance_violation, {"path", "outdeg", "bf", "beta", "limit"}},
        {"shorten", &PromptTemplates::shorten, {"chars", "budget"}},
    };
    return f;
}

} // namespace

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    for (const auto& f : fields()) t.*(f.member) = strip_trailing_newlines(embedded_template(f.name));
    return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
    auto t = defaults();
    if (dir.empty()) return t;
    if (!std::filesystem::is_directory(dir)) throw ConfigError("templates directory not found: " + dir.string());
    for (const auto& f : fields()) {
        auto path = dir / (std::string(f.name) + ".txt");
        if (std::filesystem::exists(path)) t.*(f.member) = strip_trailing_newlines(read_file(path));
    }
    t.validate();
    return t;
}

void PromptTemplates::validate() const {
    for (const auto& f : fields()) {
        const auto& text = this->*(f.member);
        for (const auto* p : f.placeholders) {
            if (text.find("{" + std::string(p) + "}") == std::string::npos) {
                throw ConfigError(std::string("template '") + f.name + "' is missing placeholder {" + p + "}");
            }
        }
    }
}

std::string fill_template(std::string_view tpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tpl.size());
    std::size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] == '{') {
            auto close = tpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                auto it = vars.find(std::string(tpl.substr(i + 1, close - i - 1)));
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tpl[i++];
    }
    return out;
}

} // namespace kppo
