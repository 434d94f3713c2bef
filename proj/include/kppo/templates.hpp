#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace kppo {

// Optimizer-facing prompt templates. Placeholders are `{name}`.
struct PromptTemplates {
    std::string failure_case;       // {index} {question} {options} {output} {gold}
    std::string gradient;           // {prompt} {failures}
    std::string gradient_section;   // {explanation} {gap} {modification}
    std::string gradient_retry;
    std::string candidate;          // {prompt} {failures} {gradient}
    std::string candidate_pruning;  // {prompt} {failures} {gradient} {violations}
    std::string degree_violation;   // {path} {outdeg} {limit}
    std::string balance_violation;  // {path} {outdeg} {bf} {beta} {limit}
    std::string shorten;            // {chars} {budget}

    static PromptTemplates defaults();
    // Defaults overridden by `<name>.txt` files found in `dir`.
    static PromptTemplates load(const std::filesystem::path& dir);

    // Throws ConfigError naming the template and the missing placeholder.
    void validate() const;
};

// Single left-to-right pass; substituted values are not rescanned and
// unknown `{...}` sequences are kept verbatim.
std::string fill_template(std::string_view tpl, const std::map<std::string, std::string>& vars);

} // namespace kppo
