#pragma once

#include "sdbc/config.hpp"
#include "sdbc/forward.hpp"

#include <iosfwd>
#include <memory>

namespace sdbc {

enum ExitCode : int { kExitOk = 0, kExitSchema = 2, kExitInvariant = 3, kExitNumerical = 4 };

/// A data file produced by a subcommand; the config hash line is added on write.
struct Artifact {
    std::string name;
    std::string content;
};

struct ExperimentOutput {
    json report;  // deterministic given the resolved config
    std::vector<Artifact> files;
    std::vector<std::string> failed_checks;
    bool ok() const { return failed_checks.empty(); }
};

const std::vector<std::string>& subcommands();

Geometry geometry_from_config(const json& config);
Mesh mesh_from_config(const json& config);
CoefficientSet coefficients_from_config(const json& config, const Geometry& geometry);
TimeGrid grid_from_config(const json& config);
SolverOptions solver_from_config(const json& config);
std::unique_ptr<NoiseSource> noise_from_config(const json& config, const TimeGrid& grid);
/// initial.* as a bulk vector.
Vec initial_state(const json& config, const Mesh& mesh);
/// terminal.* on every leaf: profile times Σ_k w_poly[k] W(T)^k.
Mat terminal_data(const json& config, const Mesh& mesh, const NoiseSource& noise);

/// Runs one subcommand without touching the filesystem. Throws SchemaError,
/// NumericalError or StabilityError.
ExperimentOutput run_subcommand(const std::string& name, const json& config);

/// Runs and writes manifest.json, report.json and the data files into
/// out_dir; returns the exit code and logs one line per failure to `log`.
int run_and_write(const std::string& name, const json& config, const std::string& out_dir, std::ostream& log);

/// --out, else $SDBC_OUT_DIR, else "sdbc_out".
std::string default_output_dir();

}  // namespace sdbc
