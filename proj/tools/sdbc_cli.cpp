#include "sdbc/experiment.hpp"
#include "sdbc/parallel.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    using namespace sdbc;
    CLI::App app{"Stochastic parabolic equations with dynamic boundary conditions: solvers, controls, verification"};
    app.require_subcommand(1);

    std::optional<std::string> config_path;
    std::vector<std::string> overrides;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 1;

    for (const auto& name : subcommands()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON configuration file");
        sub->add_option("--set", overrides, "override key=value (repeatable)")->take_all();
        sub->add_option("--out", out_dir, "output directory (default $SDBC_OUT_DIR or sdbc_out)");
        sub->add_option("--seed", seed, "noise and ensemble seed");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitSchema;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    set_thread_count(threads);
    try {
        const json config = resolve_config(config_path, overrides, seed);
        const std::string dir = out_dir ? *out_dir : default_output_dir();
        const int code = run_and_write(name, config, dir, std::cerr);
        std::cout << name << ": " << (code == kExitOk ? "ok" : "failed") << " (" << dir << ")\n";
        return code;
    } catch (const SchemaError& e) {
        std::cerr << "schema violation: " << e.what() << '\n';
        return kExitSchema;
    }
}
