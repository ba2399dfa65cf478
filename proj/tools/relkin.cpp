#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include "CLI11.hpp"

#include "relkin/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"relkin: relativistic diffusion-process experiment driver"};
    app.set_help_all_flag("--help-all");

    std::string experiment;
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool natural_units_flag = false;
    bool list = false;

    app.add_option("experiment", experiment, "Experiment name (see --list)");
    app.add_option("--config", config_path, "Path to the JSON experiment config");
    app.add_option("--out", out_dir, "Output directory (overrides the config)");
    app.add_option("--seed", seed, "Seed override")->each([&](const std::string&) { seed_given = true; });
    app.add_flag("--natural-units", natural_units_flag, "Force natural units (m=c=h=1, q=0)");
    app.add_flag("--list", list, "List available experiments and exit");

    CLI11_PARSE(app, argc, argv);

    if (list) {
        for (const auto& [name, desc] : relkin::list_experiments()) std::printf("%-14s %s\n", name.c_str(), desc.c_str());
        return 0;
    }

    if (experiment.empty()) {
        std::fprintf(stderr, "error: an experiment name is required (use --list)\n");
        return 2;
    }
    if (config_path.empty()) {
        std::fprintf(stderr, "error: --config is required\n");
        return 2;
    }

    const std::filesystem::path cfg_file(config_path);
    std::string cfg_text;
    try {
        cfg_text = relkin::read_file(cfg_file);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }

    try {
        relkin::ExperimentConfig cfg = relkin::parse_experiment_config(cfg_text, cfg_file.parent_path());
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed_given) {
            cfg.sim_seed = seed;
            cfg.seed = seed;
        }
        if (natural_units_flag) cfg.constants = relkin::natural_units();

        const relkin::RunReport rep = relkin::run_experiment(experiment, cfg);
        for (const auto& c : rep.checks)
            std::printf("%s %-28s value=%s target=%s tol=%s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                        relkin::format_double(c.value).c_str(), relkin::format_double(c.target).c_str(),
                        relkin::format_double(c.tolerance).c_str());
        if (!rep.pass()) {
            std::fprintf(stderr, "numerical failure in:");
            for (const auto& n : rep.failing()) std::fprintf(stderr, " %s", n.c_str());
            std::fprintf(stderr, "\n");
            return 1;
        }
        return 0;
    } catch (const relkin::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
