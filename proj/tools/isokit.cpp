#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "isokit/cli.hpp"

namespace {

struct Args {
    std::string config;
    std::string out;
    std::uint64_t seed{0};
    int threads{1};
};

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw isokit::IoError("cannot read config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int run(const std::string& experiment, const Args& args, bool seed_given) {
    using namespace isokit;
    try {
        cli::ExperimentConfig config = cli::parse_config(read_file(args.config), experiment);
        if (seed_given) {
            config.sweep.seed = args.seed;
            std::erase_if(config.entries, [](const auto& e) { return e.first == "sweep.seed"; });
            config.entries.emplace_back("sweep.seed", std::to_string(args.seed));
        }
        const cli::RunReport report = cli::run_experiment(config, {args.out, args.threads});
        for (const auto& f : report.files) std::cout << f << '\n';
        for (const auto& [key, value] : report.summary) {
            std::cout << key << " = " << cli::format_cell(value) << '\n';
        }
        return 0;
    } catch (const cli::ConfigParseError& e) {
        for (const auto& issue : e.issues()) {
            if (issue.line > 0) {
                std::cerr << args.config << ":" << issue.line << ": " << issue.message << '\n';
            } else {
                std::cerr << args.config << ": " << issue.message << '\n';
            }
        }
        return exit_code(ErrorKind::config);
    } catch (const Error& e) {
        std::cerr << "error (" << kind_name(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"isokit: strong-coupling isothermal protocol experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", isokit::cli::toolkit_version);
    Args args;
    std::string chosen;
    bool seed_given = false;
    for (const auto& id : isokit::cli::experiment_ids()) {
        CLI::App* sub = app.add_subcommand(id, "run the " + id + " experiment");
        sub->add_option("--config", args.config, "experiment config file")->required();
        sub->add_option("--out", args.out, "output directory (overrides [output] path)");
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t s) { args.seed = s, seed_given = true; },
            "random seed (overrides the config)");
        sub->add_option("--threads", args.threads, "worker threads; results do not depend on it")
            ->check(CLI::Range(1, 1024));
        sub->callback([&chosen, id] { chosen = id; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : isokit::exit_code(isokit::ErrorKind::config);
    }
    return run(chosen, args, seed_given);
}
