#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "filtration/cli_runner.hpp"

int main(int argc, char** argv) {
    using namespace filtration;
    CLI::App app{"Radial experiments for the inhomogeneous filtration equation"};
    std::string subcommand, config_path, out_dir = "out";
    int workers = 1;
    std::vector<std::string> overrides;
    app.add_option("subcommand", subcommand, "classify | solve | barriers | limit-study | nonuniqueness | "
                                             "uniqueness-cross | duality | weakform")
        ->required()
        ->check(CLI::IsMember(subcommands()));
    app.add_option("--config", config_path, "flat key = value configuration file");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--override", overrides, "key=value, repeatable")->take_all();
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ExitCode::ConfigError);
    }

    RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = parse_config(config_path);
        for (const auto& o : overrides) apply_override(cfg, o);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::ConfigError);
    }
    cfg.subcommand = subcommand;
    cfg.out_dir = out_dir;
    cfg.workers = workers;

    const auto manifest = dispatch(cfg);
    if (manifest.exit_code != ExitCode::Pass) std::cerr << subcommand << ": " << manifest.diagnostics << '\n';
    for (const auto& t : manifest.tasks) std::cout << t.name << ": " << (t.pass ? "pass" : "fail") << '\n';
    return static_cast<int>(manifest.exit_code);
}
