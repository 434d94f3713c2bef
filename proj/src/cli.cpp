#include "kppo/cli.hpp"

#include "kppo/config.hpp"
#include "kppo/error.hpp"
#include "kppo/fixtures.hpp"
#include "kppo/knowledge_tree.hpp"
#include "kppo/report.hpp"
#include "kppo/run.hpp"
#include "kppo/util.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <ostream>

namespace kppo::cli {

using nlohmann::json;

namespace {

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return exit_config;
    } catch (const SchemaError& e) {
        err << "configuration error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_fatal;
    }
}

void print_outcome(const RunOutcome& outcome, bool as_json, std::ostream& out) {
    if (!outcome.finished) {
        out << "stopped after step " << outcome.step << "; checkpoint at " << outcome.paths.checkpoint().string() << "\n";
        return;
    }
    auto report = report_from_run_dir(outcome.paths.dir);
    if (as_json) {
        out << report_to_json(report).dump(2) << "\n";
    } else {
        out << report_to_text(report);
        out << "optimized prompt: " << outcome.paths.final_prompt().string() << "\n";
    }
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string fraction(const Rational& r) {
    return r.den == 1 ? std::to_string(r.num) : std::to_string(r.num) + "/" + std::to_string(r.den);
}

} // namespace

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (args.dry_run) {
            auto cfg = load_config(args.config);
            if (args.seed) cfg.seed = *args.seed;
            auto s = prepare_session(cfg);
            if (args.json) {
                out << json{{"ok", true},
                            {"train", s.splits.train.size()},
                            {"val", s.splits.val.size()},
                            {"test", s.splits.test.size()},
                            {"iterations", cfg.iterations},
                            {"config_digest", config_digest(cfg)}}
                           .dump(2)
                    << "\n";
            } else {
                out << "config ok: " << s.data.instances.size() << " instances (train " << s.splits.train.size()
                    << ", val " << s.splits.val.size() << ", test " << s.splits.test.size() << "), " << cfg.iterations
                    << " steps, beam width " << cfg.beam_width << ", pruning " << (cfg.pruning ? "on" : "off") << "\n";
            }
            return exit_ok;
        }
        print_outcome(start_run(args.config, {args.seed, args.run_dir, std::nullopt}), args.json, out);
        return exit_ok;
    });
}

int cmd_resume(const ResumeArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        print_outcome(resume_run(args.checkpoint, {args.seed, std::nullopt, std::nullopt}), args.json, out);
        return exit_ok;
    });
}

int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto report = report_from_run_dir(args.run_dir);
        if (args.json) {
            out << report_to_json(report).dump(2) << "\n";
        } else {
            out << report_to_text(report);
        }
        return exit_ok;
    });
}

int cmd_inspect(const InspectArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        std::size_t c = 16;
        double f = 8.0;
        if (args.config) {
            auto cfg = load_config(*args.config);
            c = cfg.max_children;
            f = cfg.max_balance;
        }
        if (args.max_children) c = *args.max_children;
        if (args.max_balance) f = *args.max_balance;

        auto doc = parse_prompt(read_file(args.prompt));
        const auto& tree = doc.tree;
        auto report = detect_violations(tree, c, f);

        if (args.json) {
            json nodes = json::array();
            for (auto id : tree.preorder()) {
                if (!tree.is_topic(id)) continue;
                auto bf = branching_factor(tree, id);
                auto beta = balance_ratio(tree, id);
                nodes.push_back({{"path", tree.path(id)},
                                 {"depth", tree.node(id).depth},
                                 {"out_degree", tree.out_degree(id)},
                                 {"branching_factor", bf.to_double()},
                                 {"balance_ratio", beta.to_double()}});
            }
            json local = json::array();
            for (const auto& v : report.local) {
                local.push_back({{"path", tree.path(v.node)}, {"out_degree", v.out_degree}, {"limit", v.limit}});
            }
            json global = json::array();
            for (const auto& v : report.global) {
                global.push_back({{"path", tree.path(v.node)},
                                  {"balance_ratio", v.beta.to_double()},
                                  {"branching_factor", v.branching.to_double()},
                                  {"limit", v.limit}});
            }
            out << json{{"max_children", c}, {"max_balance", f}, {"topics", nodes}, {"local", local}, {"global", global}}
                       .dump(2)
                << "\n";
            return exit_ok;
        }

        out << "topics (outdeg, bf, beta) with C=" << c << ", F=" << fmt(f) << "\n";
        for (auto id : tree.preorder()) {
            if (!tree.is_topic(id)) continue;
            const auto& n = tree.node(id);
            auto bf = branching_factor(tree, id);
            auto beta = balance_ratio(tree, id);
            std::string line(static_cast<std::size_t>(n.depth) * 2, ' ');
            line += id == tree.root() ? "(root)" : n.text;
            line += "  outdeg=" + std::to_string(tree.out_degree(id)) + " bf=" + fmt(bf.to_double()) +
                    " beta=" + fraction(beta);
            if (tree.out_degree(id) > c) line += "  [degree > " + std::to_string(c) + "]";
            if (beta.exceeds(f)) line += "  [balance > " + fmt(f) + "]";
            out << line << "\n";
        }
        if (report.empty()) {
            out << "no violations\n";
        } else {
            for (const auto& v : report.local) {
                out << "local violation: \"" << tree.path(v.node) << "\" has " << v.out_degree << " children (limit "
                    << v.limit << ")\n";
            }
            for (const auto& v : report.global) {
                out << "global violation: \"" << tree.path(v.node) << "\" beta " << fmt(v.beta.to_double()) << " (limit "
                    << fmt(v.limit) << ")\n";
            }
        }
        return exit_ok;
    });
}

int cmd_demo(const DemoArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        fixtures::FixtureSpec spec;
        spec.filler_children = args.filler;
        spec.pruning = args.pruning;
        if (args.seed) spec.seed = *args.seed;
        auto files = fixtures::write_fact_fixture(args.dir, spec);
        out << "wrote offline demo to " << args.dir.string() << "\n"
            << "run it with: kppo run --config " << files.config.string() << "\n";
        return exit_ok;
    });
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge-provision prompt optimizer"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "optimize a prompt");
    run_cmd->add_option("--config", run.config, "run config (JSON)")->required();
    run_cmd->add_option("--seed", run.seed, "override the run seed");
    run_cmd->add_option("--run-dir", run.run_dir, "override the output directory");
    run_cmd->add_flag("--dry-run", run.dry_run, "validate inputs without calling any model");
    run_cmd->add_flag("--json", run.json, "print the report as JSON");

    ResumeArgs resume;
    auto* resume_cmd = app.add_subcommand("resume", "continue a run from its checkpoint");
    resume_cmd->add_option("--checkpoint", resume.checkpoint, "checkpoint.json of the run")->required();
    resume_cmd->add_option("--seed", resume.seed, "seed override (must match the original run)");
    resume_cmd->add_flag("--json", resume.json, "print the report as JSON");

    ReportArgs report;
    std::optional<std::filesystem::path> report_ckpt;
    auto* report_cmd = app.add_subcommand("report", "rebuild a report from run logs");
    auto* dir_opt = report_cmd->add_option("run_dir", report.run_dir, "run directory");
    report_cmd->add_option("--checkpoint", report_ckpt, "checkpoint.json inside the run directory")->excludes(dir_opt);
    report_cmd->add_flag("--json", report.json, "print JSON");

    InspectArgs inspect;
    auto* inspect_cmd = app.add_subcommand("inspect", "audit the knowledge tree of a prompt file");
    inspect_cmd->add_option("prompt", inspect.prompt, "prompt file")->required();
    inspect_cmd->add_option("--config", inspect.config, "take limits from this run config");
    inspect_cmd->add_option("--max-children,-C", inspect.max_children, "local degree limit");
    inspect_cmd->add_option("--max-balance,-F", inspect.max_balance, "global balance limit");
    inspect_cmd->add_flag("--json", inspect.json, "print JSON");

    DemoArgs demo;
    auto* demo_cmd = app.add_subcommand("demo", "write a self-contained offline run with scripted models");
    demo_cmd->add_option("dir", demo.dir, "output directory")->required();
    demo_cmd->add_option("--filler", demo.filler, "add an over-branched topic with this many notes");
    demo_cmd->add_flag("--pruning", demo.pruning, "enable structural pruning in the config");
    demo_cmd->add_option("--seed", demo.seed, "run seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << app.get_name() << ": " << e.what() << "\n";
        return e.get_exit_code() == 0 ? exit_ok : exit_config;
    }

    if (*run_cmd) return cmd_run(run, out, err);
    if (*resume_cmd) return cmd_resume(resume, out, err);
    if (*report_cmd) {
        if (report_ckpt) report.run_dir = report_ckpt->parent_path();
        if (report.run_dir.empty()) {
            err << "report: give a run directory or --checkpoint\n";
            return exit_config;
        }
        return cmd_report(report, out, err);
    }
    if (*demo_cmd) return cmd_demo(demo, out, err);
    return cmd_inspect(inspect, out, err);
}

} // namespace kppo::cli
