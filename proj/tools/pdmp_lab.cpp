// pdmp_lab: runs one experiment from a TOML or JSON config and prints a one-line JSON summary.
//
// Exit codes: 0 ok, 2 configuration error, 3 event/attempt guard tripped, 1 anything else.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pdmp/experiments.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replicas;
    std::string out;
};

int run(const std::string& name, const Flags& f) {
    try {
        pdmp::json doc = f.config.empty() ? pdmp::json::object() : pdmp::load_config_file(f.config);
        pdmp::ExperimentConfig cfg = pdmp::make_config(doc, name);
        if (f.seed) cfg.seed = *f.seed;
        if (f.replicas) cfg.replicas = *f.replicas;
        pdmp::json summary = pdmp::run_experiment(cfg, pdmp::OutputDir{f.out});
        std::cout << summary.dump() << std::endl;
        return 0;
    } catch (const pdmp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const pdmp::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const pdmp::GuardError& e) {
        std::cerr << "guard tripped: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo experiments for one-dimensional velocity-jump processes"};
    app.require_subcommand(1);
    Flags flags;
    std::string chosen;
    for (const auto& name : pdmp::experiment_names()) {
        auto* sub = app.add_subcommand(name, "run the '" + name + "' experiment");
        sub->add_option("--config", flags.config, "TOML or JSON config file (.json selects JSON)");
        sub->add_option("--seed", flags.seed, "override the config seed");
        sub->add_option("--replicas", flags.replicas, "override the config replica count")->check(CLI::PositiveNumber);
        sub->add_option("--out", flags.out, "directory for CSV/JSON output");
        sub->callback([&chosen, name] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return run(chosen, flags);
}
