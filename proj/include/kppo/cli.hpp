#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace kppo::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_fatal = 1;
inline constexpr int exit_config = 2;

struct RunArgs {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> run_dir;
    bool dry_run = false;
    bool json = false;
};

struct ResumeArgs {
    std::filesystem::path checkpoint;
    std::optional<std::uint64_t> seed;
    bool json = false;
};

struct ReportArgs {
    std::filesystem::path run_dir;
    bool json = false;
};

struct InspectArgs {
    std::filesystem::path prompt;
    std::optional<std::filesystem::path> config;  // supplies limits when given
    std::optional<std::size_t> max_children;
    std::optional<double> max_balance;
    bool json = false;
};

struct DemoArgs {
    std::filesystem::path dir;
    std::size_t filler = 0;
    bool pruning = false;
    std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);
int cmd_resume(const ResumeArgs& args, std::ostream& out, std::ostream& err);
int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err);
int cmd_inspect(const InspectArgs& args, std::ostream& out, std::ostream& err);
int cmd_demo(const DemoArgs& args, std::ostream& out, std::ostream& err);

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace kppo::cli
