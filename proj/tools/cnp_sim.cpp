// Command line front end: run one simulation, compare the variant/dialect
// matrix, or validate a trace file.

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cnp/cnp.hpp"

namespace fs = std::filesystem;

namespace {

struct FlagSet {
    std::string variant;
    std::string dialect;
    std::string tasks;
    std::string changes;
    std::string contractors;
    std::string grid;
    std::string seed;
    std::string latency;
    std::string out = "out";
    std::string config;
};

void add_common_flags(CLI::App* cmd, FlagSet& flags, bool with_variant_dialect) {
    if (with_variant_dialect) {
        cmd->add_option("--variant", flags.variant, "Protocol variant: conventional|updated");
        cmd->add_option("--dialect", flags.dialect, "ACL dialect: acl-f|acl-k");
    }
    cmd->add_option("--tasks", flags.tasks, "Number of tasks (preys)");
    cmd->add_option("--changes", flags.changes, "Number of in-flight task changes");
    cmd->add_option("--contractors", flags.contractors, "Number of contractor agents");
    cmd->add_option("--grid", flags.grid, "Grid size as WIDTHxHEIGHT");
    cmd->add_option("--seed", flags.seed, "Run seed");
    cmd->add_option("--latency", flags.latency, "Delivery latency BASE[:JITTER]");
    cmd->add_option("--out", flags.out, "Output directory");
    cmd->add_option("--config", flags.config, "Config file (key=value lines)");
}

/// Precedence: defaults, then the config file, then explicit flags.
cnp::RunConfig build_config(const CLI::App* cmd, const FlagSet& flags) {
    cnp::RunConfig cfg;
    if (cmd->count("--config")) cfg = cnp::load_config_file(flags.config, cfg);
    auto apply_flag = [&](const char* name, const char* key, const std::string& value) {
        if (cmd->count(name)) cfg.apply(key, value);
    };
    if (cmd->get_option_no_throw("--variant")) {
        apply_flag("--variant", "variant", flags.variant);
        apply_flag("--dialect", "dialect", flags.dialect);
    }
    apply_flag("--tasks", "tasks", flags.tasks);
    apply_flag("--changes", "changes", flags.changes);
    apply_flag("--contractors", "contractors", flags.contractors);
    apply_flag("--grid", "grid", flags.grid);
    apply_flag("--seed", "seed", flags.seed);
    apply_flag("--latency", "latency", flags.latency);
    cfg.validate();
    return cfg;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw cnp::ConfigError("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw cnp::ConfigError("failed writing '" + path.string() + "'");
}

std::string trace_file_name(const cnp::RunConfig& cfg) {
    return "trace_" + std::string(cnp::to_string(cfg.variant)) + "_" +
           std::string(cnp::Dialect::get(cfg.dialect).name()) + ".txt";
}

int cmd_run(const CLI::App* cmd, const FlagSet& flags) {
    cnp::RunConfig cfg = build_config(cmd, flags);
    cnp::RunResult result = cnp::run_experiment(cfg);

    fs::path out_dir(flags.out);
    fs::create_directories(out_dir);
    fs::path trace_path = out_dir / trace_file_name(cfg);
    write_file(trace_path, result.trace_text);

    std::string csv(cnp::kReportCsvHeader);
    csv += '\n';
    csv += cnp::csv_row(result.report);
    csv += '\n';
    fs::path csv_path = out_dir / "metrics.csv";
    write_file(csv_path, csv);

    const cnp::ExperimentReport& r = result.report;
    std::cout << "variant=" << cnp::to_string(r.variant) << " dialect=" << r.dialect
              << " tasks=" << r.tasks_total << " tasks_updated=" << r.tasks_updated
              << " task_repetitions=" << r.task_repetitions << " messages=" << r.message_count
              << " elapsed_ticks=" << r.elapsed_ticks << "\n";
    std::cout << "trace: " << trace_path.string() << "\n";
    std::cout << "metrics: " << csv_path.string() << "\n";
    return 0;
}

int cmd_compare(const CLI::App* cmd, const FlagSet& flags) {
    cnp::RunConfig base = build_config(cmd, flags);

    fs::path out_dir(flags.out);
    fs::create_directories(out_dir);

    std::string runs_csv(cnp::kReportCsvHeader);
    runs_csv += '\n';
    std::string comparison_csv(cnp::kComparisonCsvHeader);
    comparison_csv += '\n';

    for (cnp::DialectId dialect : {cnp::DialectId::AclF, cnp::DialectId::AclK}) {
        std::array<cnp::ExperimentReport, 2> pair;
        for (cnp::ProtocolVariant variant :
             {cnp::ProtocolVariant::Conventional, cnp::ProtocolVariant::Updated}) {
            cnp::RunConfig cfg = base;
            cfg.dialect = dialect;
            cfg.variant = variant;
            cnp::RunResult result = cnp::run_experiment(cfg);
            write_file(out_dir / trace_file_name(cfg), result.trace_text);
            runs_csv += cnp::csv_row(result.report);
            runs_csv += '\n';
            pair[variant == cnp::ProtocolVariant::Updated ? 1 : 0] = result.report;
        }
        cnp::ComparisonTable table = cnp::compare(pair[0], pair[1]);
        comparison_csv += cnp::comparison_csv_row(table);
        comparison_csv += '\n';
        std::cout << cnp::Dialect::get(dialect).name() << ": messages "
                  << table.conventional.message_count << " -> " << table.updated.message_count
                  << " (" << table.message_count.delta << "), ticks "
                  << table.conventional.elapsed_ticks << " -> " << table.updated.elapsed_ticks
                  << " (" << table.elapsed_ticks.delta << "), repetitions "
                  << table.conventional.task_repetitions << " -> "
                  << table.updated.task_repetitions << ", updated "
                  << table.conventional.tasks_updated << " -> " << table.updated.tasks_updated
                  << "\n";
    }

    write_file(out_dir / "runs.csv", runs_csv);
    write_file(out_dir / "comparison.csv", comparison_csv);
    std::cout << "runs: " << (out_dir / "runs.csv").string() << "\n";
    std::cout << "comparison: " << (out_dir / "comparison.csv").string() << "\n";
    return 0;
}

int cmd_validate(const std::string& trace_path, const std::string& variant_flag,
                 const std::string& dialect_flag) {
    std::ifstream in(trace_path, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot read trace file '" << trace_path << "'\n";
        return 2;
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();

    // The header names the run's variant and dialect; flags override it.
    std::optional<cnp::RunConfig> header_cfg;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.starts_with(cnp::kConfigHeaderPrefix)) {
            header_cfg = cnp::parse_header_line(line);
            break;
        }
    }

    cnp::ProtocolVariant variant;
    cnp::DialectId dialect;
    if (!variant_flag.empty()) {
        variant = cnp::parse_variant(variant_flag);
    } else if (header_cfg) {
        variant = header_cfg->variant;
    } else {
        std::cerr << "error: trace has no config header; pass --variant\n";
        return 2;
    }
    if (!dialect_flag.empty()) {
        dialect = cnp::Dialect::by_name(dialect_flag).id();
    } else if (header_cfg) {
        dialect = header_cfg->dialect;
    } else {
        std::cerr << "error: trace has no config header; pass --dialect\n";
        return 2;
    }

    cnp::ValidationReport report = cnp::validate_trace_text(text, variant, dialect);
    if (report.envelopes == 0 && report.parse_failures > 0) {
        std::cerr << "error: no envelope in '" << trace_path << "' could be decoded\n";
        return 2;
    }
    for (const cnp::Violation& v : report.violations) {
        std::cout << "line " << v.line << ": " << v.message << "\n";
    }
    std::cout << "checked " << report.lines_checked << " lines, " << report.envelopes
              << " envelopes: "
              << (report.ok() ? "ok"
                              : std::to_string(report.violations.size()) +
                                    (report.violations.size() == 1 ? " violation" : " violations"))
              << "\n";
    return report.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contract net protocol simulator (conventional and updated variants)"};
    app.require_subcommand(1);

    FlagSet run_flags;
    CLI::App* run = app.add_subcommand("run", "Execute one seeded run");
    add_common_flags(run, run_flags, true);

    FlagSet compare_flags;
    CLI::App* compare = app.add_subcommand(
        "compare", "Run the 2x2 variant/dialect matrix on one scenario");
    add_common_flags(compare, compare_flags, false);

    std::string trace_path2;
    std::string validate_variant;
    std::string validate_dialect;
    CLI::App* validate = app.add_subcommand("validate", "Check a trace for protocol conformance");
    validate->add_option("trace", trace_path2, "Trace file to validate")->required();
    validate->add_option("--variant", validate_variant,
                         "Variant to validate against (default: from trace header)");
    validate->add_option("--dialect", validate_dialect,
                         "Dialect to validate against (default: from trace header)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(run, run_flags);
        if (compare->parsed()) return cmd_compare(compare, compare_flags);
        if (validate->parsed()) return cmd_validate(trace_path2, validate_variant, validate_dialect);
    } catch (const cnp::TimeoutError& e) {
        std::cerr << "error: " << e.what() << "\n";
        for (const std::string& conversation : e.stuck_conversations) {
            std::cerr << "  stuck conversation: " << conversation << "\n";
        }
        return 3;
    } catch (const cnp::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const cnp::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const cnp::DialectError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
