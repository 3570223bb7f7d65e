#include "sdbc/experiment.hpp"
#include "sdbc/control.hpp"
#include "sdbc/parallel.hpp"
#include "sdbc/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

namespace sdbc {

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{
        "simulate-forward",     "simulate-backward",    "hum-control",         "aux-control",   "verify-carleman",
        "verify-observability", "verify-duality",       "verify-dissipation",  "weights-report"};
    return names;
}

namespace {

std::uint64_t seed_of(const json& c) { return c["noise"]["seed"].get<std::uint64_t>(); }

ControlRegion region(const json& v) { return ControlRegion{v[0].get<double>(), v[1].get<double>()}; }

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Comma-separated table with a header row; the hash line is added on write.
class Table {
public:
    explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
    void row(const std::vector<double>& values) { rows_.push_back(values); }
    std::string csv() const { return render(","); }
    std::string dat() const { return "# " + render(" "); }

private:
    std::string render(const char* sep) const {
        std::ostringstream os;
        for (std::size_t i = 0; i < header_.size(); ++i) os << (i ? sep : "") << header_[i];
        os << '\n';
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? sep : "") << num(r[i]);
            os << '\n';
        }
        return os.str();
    }
    std::vector<std::string> header_;
    std::vector<std::vector<double>> rows_;
};

struct Checks {
    json values = json::object();
    std::vector<std::string> failed;
    void add(const std::string& name, bool ok) {
        values[name] = ok;
        if (!ok) failed.push_back(name);
    }
};

// Setup errors from the library become schema violations.
template <typename Fn>
auto as_schema(const std::string& key, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        throw SchemaError(key, e.what());
    } catch (const std::domain_error& e) {
        throw SchemaError(key, e.what());
    }
}

json norms_json(const CoefficientNorms& n) {
    return {{"a1", n.a1}, {"a2", n.a2}, {"B", n.B}, {"b1", n.b1}, {"b2", n.b2}, {"B_gamma", n.B_gamma}};
}

bool finite_all(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void require_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) throw NumericalError(what + " is not finite");
}

const NoiseTree& require_tree(const NoiseSource& noise, const std::string& sub) {
    const auto* tree = dynamic_cast<const NoiseTree*>(&noise);
    if (!tree) throw SchemaError("noise.backend", sub + " requires the tree backend");
    return *tree;
}

Vec profile(const std::string& kind, int mode, double amplitude, const Mesh& mesh, std::uint64_t seed,
            const std::string& key) {
    const int n = mesh.n_bulk();
    if (kind == "zero") return Vec::Zero(n);
    if (kind == "constant") return Vec::Constant(n, amplitude);
    if (kind == "random") return amplitude * observability_ensemble(mesh, 1, 0, seed).front();
    if (mode >= n) throw SchemaError(key + ".mode", "exceeds the number of nodes");
    return amplitude * coupled_eigenbasis(mesh).E.col(mode);
}

struct Setup {
    Geometry geometry;
    Mesh mesh;
    CoefficientSet coeffs;
    TimeGrid grid;
    SolverOptions solver;
};

Setup setup(const json& c) {
    Setup s;
    s.geometry = geometry_from_config(c);
    s.mesh = mesh_from_config(c);
    s.coeffs = coefficients_from_config(c, s.geometry);
    s.grid = grid_from_config(c);
    s.solver = solver_from_config(c);
    as_schema("coefficients", [&] { return check_ellipticity(s.coeffs, s.mesh, s.grid); });
    return s;
}

json geometry_json(const Setup& s) {
    return {{"kind", s.geometry.name()},
            {"n_bulk", s.mesh.n_bulk()},
            {"n_surf", s.mesh.n_surf()},
            {"h", s.mesh.h},
            {"measure", s.geometry.measure()},
            {"boundary_measure", s.geometry.boundary_measure()}};
}

ExperimentOutput simulate_forward(const json& c) {
    const Setup s = setup(c);
    const Discretization disc(s.mesh, s.coeffs, s.grid, s.solver);
    const auto noise = noise_from_config(c, s.grid);
    const Vec z0 = initial_state(c, s.mesh);
    const ForwardTrajectory traj = solve_forward(disc, z0, *noise);
    const EnergyReport e = energy_estimate_check(traj, disc);
    const CoefficientNorms norms = sup_norms(s.coeffs, s.mesh, s.grid);
    const double r2 = dissipation_rate(norms);

    ExperimentOutput out;
    Checks checks;
    checks.add("finite", e.finite && finite_all(e.l2_by_level));
    if (r2 == 0.0) checks.add("non_increasing", e.non_increasing);

    Table energy({"n", "t", "mean_square"});
    for (int n = 0; n <= s.grid.n_t; ++n) energy.row({double(n), s.grid.t(n), e.l2_by_level[n]});
    Table mean({"node", "x", "y", "mean_zT"});
    const Mat& zT = traj.z[s.grid.n_t];
    for (int i = 0; i < s.mesh.n_bulk(); ++i) {
        double m = 0.0;
        for (Eigen::Index j = 0; j < zT.cols(); ++j) m += noise->probability(s.grid.n_t, int(j)) * zT(i, j);
        m = m == 0.0 ? 0.0 : m;
        mean.row({double(i), s.mesh.bulk_nodes[i](0), s.mesh.bulk_nodes[i](1), m});
    }
    out.report = {{"geometry", geometry_json(s)},
                  {"norms", norms_json(norms)},
                  {"r2", r2},
                  {"initial_l2", e.initial_l2},
                  {"sup_l2", e.sup_l2},
                  {"terminal_l2", e.l2_by_level.back()},
                  {"h1_ratio", e.h1_ratio},
                  {"l2_by_level", e.l2_by_level},
                  {"checks", checks.values}};
    out.files.push_back({"energy.csv", energy.csv()});
    out.files.push_back({"terminal_mean.csv", mean.csv()});
    if (c["output"]["binary_trajectory"].get<bool>()) {
        const auto tmp = std::filesystem::temp_directory_path() / ("sdbc_traj_" + config_hash(c) + ".bin");
        write_trajectory_binary(traj, tmp.string());
        std::ifstream in(tmp, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        std::filesystem::remove(tmp);
        out.files.push_back({"trajectory.bin", os.str()});
    }
    out.failed_checks = checks.failed;
    return out;
}

ExperimentOutput simulate_backward(const json& c) {
    const Setup s = setup(c);
    const Discretization disc(s.mesh, s.coeffs, s.grid, s.solver);
    const auto noise = noise_from_config(c, s.grid);
    const NoiseTree& tree = require_tree(*noise, "simulate-backward");
    const Mat yT = terminal_data(c, s.mesh, tree);
    const BackwardState st = solve_backward(disc, yT, tree);

    std::vector<double> ey, eY;
    Table table({"n", "t", "mean_square_y", "mean_square_Y"});
    auto ms = [&](const Mat& m, int level) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            acc += tree.probability(level, int(j)) * m.col(j).dot(disc.mass().cwiseProduct(m.col(j)));
        return acc;
    };
    for (int n = 0; n <= s.grid.n_t; ++n) {
        ey.push_back(ms(st.y[n], n));
        eY.push_back(n < s.grid.n_t ? ms(st.Y[n], n) : 0.0);
        table.row({double(n), s.grid.t(n), ey.back(), eY.back()});
    }
    ExperimentOutput out;
    Checks checks;
    checks.add("finite", finite_all(ey) && finite_all(eY));
    out.report = {{"geometry", geometry_json(s)},
                  {"y0_norm", std::sqrt(ey.front())},
                  {"yT_norm", std::sqrt(ey.back())},
                  {"mean_square_y", ey},
                  {"mean_square_Y", eY},
                  {"checks", checks.values}};
    out.files.push_back({"backward_energy.csv", table.csv()});
    out.failed_checks = checks.failed;
    return out;
}

ExperimentOutput hum(const json& c) {
    const Setup s = setup(c);
    const Discretization disc(s.mesh, s.coeffs, s.grid, s.solver);
    const auto noise = noise_from_config(c, s.grid);
    const NoiseTree& tree = require_tree(*noise, "hum-control");
    const Mat yT = terminal_data(c, s.mesh, tree);
    const json& cc = c["control"];
    HumOptions opt;
    opt.cg.tolerance = cc["cg_tolerance"];
    opt.cg.max_iterations = cc["max_iterations"];
    opt.method = cc["method"];
    const std::vector<double> Cs = cc["C"].get<std::vector<double>>();
    opt.C = Cs.empty() ? 1.0 : Cs.front();
    const auto results = hum_continuation(disc, tree, yT, cc["eps"].get<std::vector<double>>(), opt);

    const double tol = cc["optimality_tolerance"];
    ExperimentOutput out;
    Checks checks;
    json rows = json::array();
    Table table({"eps", "u_norm2", "y0_norm2_over_eps", "y0_norm", "optimality_residual", "iterations", "converged"});
    bool converged = true, optimal = true, finite = true;
    for (const auto& r : results) {
        const double q = r.y0_norm * r.y0_norm / r.eps;
        rows.push_back({{"eps", r.eps},
                        {"u_norm2", r.u_norm2},
                        {"y0_norm", r.y0_norm},
                        {"y0_norm2_over_eps", q},
                        {"optimality_residual", r.optimality_residual},
                        {"objective", r.objective},
                        {"iterations", r.iterations},
                        {"converged", r.converged}});
        table.row({r.eps, r.u_norm2, q, r.y0_norm, r.optimality_residual, double(r.iterations), double(r.converged)});
        converged = converged && r.converged;
        optimal = optimal && r.optimality_residual <= tol;
        finite = finite && std::isfinite(r.u_norm2) && std::isfinite(r.y0_norm);
    }
    if (!finite) throw NumericalError("HUM iterates are not finite");
    checks.add("converged", converged);
    checks.add("optimality_residual", optimal);

    const ControlResult& last = results.back();
    const double K = last.K;
    json bounds = json::array();
    std::optional<double> smallest;
    for (double C : Cs) {
        const NullControlReport nr = null_control_report(last, K, C, cc["threshold"]);
        bounds.push_back({{"C", C}, {"bound", nr.bound}, {"bound_ratio", nr.bound_ratio}});
        if (nr.bound_ratio <= 1.0 && (!smallest || C < *smallest)) smallest = C;
    }
    const NullControlReport nr = null_control_report(last, K, opt.C, cc["threshold"]);
    out.report = {{"geometry", geometry_json(s)},
                  {"method", opt.method},
                  {"seed", seed_of(c)},
                  {"K", K},
                  {"yT_norm", last.yT_norm},
                  {"eps_schedule", cc["eps"]},
                  {"results", rows},
                  {"null_control",
                   {{"eps", last.eps},
                    {"relative_y0", nr.relative_y0},
                    {"threshold", cc["threshold"]},
                    {"success", nr.success},
                    {"u_norm2", nr.u_norm2},
                    {"bounds", bounds},
                    {"smallest_configured_C", smallest ? json(*smallest) : json(nullptr)},
                    {"smallest_C", nr.smallest_C}}},
                  {"checks", checks.values}};
    out.files.push_back({"hum.csv", table.csv()});
    out.files.push_back({"hum.dat", table.dat()});
    out.failed_checks = checks.failed;
    return out;
}

CarlemanWeights weights_from(const json& c, const Setup& s, double lambda) {
    return as_schema("weights", [&] {
        const AuxFunction aux = make_psi(s.geometry, region(c["geometry"]["g1"]));
        return make_weights(aux, c["weights"]["mu"], lambda, s.grid.T);
    });
}

ExperimentOutput aux(const json& c) {
    const Setup s = setup(c);
    const Discretization disc(s.mesh, s.coeffs, s.grid, s.solver);
    const auto noise = noise_from_config(c, s.grid);
    const NoiseTree& tree = require_tree(*noise, "aux-control");
    const CarlemanWeights w = weights_from(c, s, c["weights"]["lambda"]);
    const ForwardTrajectory z = solve_forward(disc, initial_state(c, s.mesh), tree);
    AuxOptions opt;
    opt.cg.tolerance = c["control"]["cg_tolerance"];
    opt.cg.max_iterations = c["control"]["max_iterations"];
    opt.clamp = c["weights"]["clamp"];
    opt.max_weight_decades = c["control"]["aux_max_weight_decades"];
    const double eps = c["control"]["aux_eps"];
    const AuxResult r = aux_control(z, disc, w, eps, tree, opt);
    const AuxEstimate& e = r.estimate;
    for (double v : {e.lhs(), e.rhs, e.r0_over_eps}) require_finite(v, "auxiliary estimate");

    ExperimentOutput out;
    Checks checks;
    checks.add("converged", r.converged);
    out.report = {{"geometry", geometry_json(s)},
                  {"lambda", w.lambda},
                  {"mu", w.mu},
                  {"eps", eps},
                  {"iterations", r.iterations},
                  {"characterization_residual", r.characterization_residual},
                  {"log10_weight_range", r.log10_weight_range},
                  {"estimate",
                   {{"v_term", e.v_term},
                    {"r_bulk", e.r_bulk},
                    {"r_surf", e.r_surf},
                    {"grad_bulk", e.grad_bulk},
                    {"grad_surf", e.grad_surf},
                    {"R1_term", e.R1_term},
                    {"R2_term", e.R2_term},
                    {"lhs", e.lhs()},
                    {"rhs", e.rhs},
                    {"ratio", e.ratio()},
                    {"r0_over_eps", e.r0_over_eps}}},
                  {"checks", checks.values}};
    Table t({"v_term", "r_bulk", "r_surf", "grad_bulk", "grad_surf", "R1_term", "R2_term", "rhs", "ratio",
             "r0_over_eps"});
    t.row({e.v_term, e.r_bulk, e.r_surf, e.grad_bulk, e.grad_surf, e.R1_term, e.R2_term, e.rhs, e.ratio(),
           e.r0_over_eps});
    out.files.push_back({"aux_estimate.csv", t.csv()});
    out.failed_checks = checks.failed;
    return out;
}

SourceSet sources_from(const json& c) {
    const json& src = c["verify"]["sources"];
    auto field = [&](const char* k) -> ScalarField {
        const json& v = src[k];
        if (v.is_number() && v.get<double>() == 0.0) return nullptr;
        return scalar_field(v, std::string("verify.sources.") + k);
    };
    SourceSet s;
    s.F0 = field("F0");
    s.F1 = field("F1");
    s.F0_gamma = field("F0_gamma");
    s.F1_gamma = field("F1_gamma");
    const json& F = src["F"];
    if (!(F[0].is_number() && F[0].get<double>() == 0.0 && F[1].is_number() && F[1].get<double>() == 0.0)) {
        ScalarField fx = scalar_field(F[0], "verify.sources.F[0]");
        ScalarField fy = scalar_field(F[1], "verify.sources.F[1]");
        s.F = [fx, fy](double t, const Point& x) { return Point(fx(t, x), fy(t, x)); };
    }
    return s;
}

ExperimentOutput carleman(const json& c) {
    const Setup s = setup(c);
    const Discretization disc(s.mesh, s.coeffs, s.grid, s.solver);
    const auto noise = noise_from_config(c, s.grid);
    const AuxFunction aux_fn = as_schema("geometry.g1", [&] { return make_psi(s.geometry, region(c["geometry"]["g1"])); });
    CarlemanOptions opt;
    opt.mu = c["weights"]["mu"];
    opt.C = c["weights"]["C"];
    opt.adjoint_mode = c["verify"]["adjoint_mode"];
    if (!opt.adjoint_mode) opt.sources = sources_from(c);
    const double lambda1 = lambda_min(sup_norms(s.coeffs, s.mesh, s.grid), s.grid.T, opt.C);
    for (double m : c["weights"]["lambda_multipliers"]) opt.lambdas.push_back(m * lambda1);
    const auto ensemble = observability_ensemble(s.mesh, c["initial"]["n_random"], c["initial"]["n_eigen"], seed_of(c));
    const CarlemanReport rep = as_schema("weights", [&] { return verify_carleman(disc, aux_fn, ensemble, *noise, opt); });

    // degree-2 homogeneity: the same sweep with 5 z₀
    std::vector<Vec> scaled = ensemble;
    for (auto& z : scaled) z *= 5.0;
    double homogeneity = 0.0;
    if (opt.adjoint_mode) {
        const CarlemanReport rep5 = verify_carleman(disc, aux_fn, scaled, *noise, opt);
        for (std::size_t i = 0; i < rep.rows.size(); ++i)
            homogeneity = std::max(homogeneity, std::abs(rep5.rows[i].ratio - rep.rows[i].ratio) /
                                                    std::max(rep.rows[i].ratio, 1e-300));
    }

    ExperimentOutput out;
    Checks checks;
    checks.add("finite_nonnegative", rep.finite_nonnegative());
    if (opt.adjoint_mode) {
        checks.add("ratio_bounded", rep.spread() <= c["verify"]["carleman_spread"].get<double>());
        checks.add("homogeneity", homogeneity <= 1e-10);
    }
    json rows = json::array();
    Table t({"lambda", "lhs_bulk_z", "lhs_surf_z", "lhs_bulk_grad", "lhs_surf_grad", "rhs_control", "rhs_source",
             "ratio", "log_scale", "below_threshold"});
    for (const auto& r : rep.rows) {
        rows.push_back({{"lambda", r.lambda},
                        {"lhs_bulk_z", r.lhs_bulk_z},
                        {"lhs_surf_z", r.lhs_surf_z},
                        {"lhs_bulk_grad", r.lhs_bulk_grad},
                        {"lhs_surf_grad", r.lhs_surf_grad},
                        {"rhs_control", r.rhs_control},
                        {"rhs_source", r.rhs_source},
                        {"ratio", r.ratio},
                        {"log_scale", r.log_scale},
                        {"below_threshold", r.below_threshold}});
        t.row({r.lambda, r.lhs_bulk_z, r.lhs_surf_z, r.lhs_bulk_grad, r.lhs_surf_grad, r.rhs_control, r.rhs_source,
               r.ratio, r.log_scale, double(r.below_threshold)});
    }
    json warnings = json::array();
    for (const auto& r : rep.rows)
        if (r.below_threshold) warnings.push_back("lambda " + num(r.lambda) + " is below lambda_1 " + num(rep.lambda1));
    out.report = {{"geometry", geometry_json(s)},
                  {"mode", opt.adjoint_mode ? "adjoint" : "general"},
                  {"lambda1", rep.lambda1},
                  {"mu", opt.mu},
                  {"ensemble_size", ensemble.size()},
                  {"rows", rows},
                  {"spread", rep.spread()},
                  {"homogeneity_defect", homogeneity},
                  {"warnings", warnings},
                  {"checks", checks.values}};
    out.files.push_back({"carleman.csv", t.csv()});
    out.files.push_back({"carleman.dat", t.dat()});
    out.failed_checks = checks.failed;
    return out;
}

ExperimentOutput observability(const json& c) {
    const Setup s = setup(c);
    const json& v = c["verify"];
    ObservabilityOptions opt;
    opt.T_list = v["T_list"].get<std::vector<double>>();
    opt.dt = v["dt"];
    opt.recombining = c["noise"]["recombining"];
    opt.slice = v["slice"];
    opt.power_iterations = v["power_iterations"];
    opt.refine_modes = v["refine_modes"];
    opt.solver = s.solver;
    const auto ensemble = observability_ensemble(s.mesh, c["initial"]["n_random"], c["initial"]["n_eigen"], seed_of(c));
    const ObservabilityReport rep = as_schema("verify", [&] { return verify_observability(s.mesh, s.coeffs, ensemble, opt); });

    ExperimentOutput out;
    Checks checks;
    bool positive = true;
    json rows = json::array();
    Table t({"T", "n_t", "C_obs", "ensemble_max", "refined", "K", "excluded"});
    for (const auto& r : rep.rows) {
        positive = positive && r.C_obs > 0.0 && std::isfinite(r.C_obs);
        rows.push_back({{"T", r.T},
                        {"n_t", r.n_t},
                        {"C_obs", r.C_obs},
                        {"ensemble_max", r.ensemble_max},
                        {"refined", r.refined},
                        {"K", r.K},
                        {"excluded", r.excluded}});
        t.row({r.T, double(r.n_t), r.C_obs, r.ensemble_max, r.refined, r.K, double(r.excluded)});
    }
    checks.add("C_obs_positive", positive);
    if (rep.rows.size() >= 3)
        checks.add("fit_shape", rep.q > 0.0 && rep.r2 >= v["observability_r2"].get<double>());
    out.report = {{"geometry", geometry_json(s)},
                  {"rows", rows},
                  {"fit", {{"p", rep.p}, {"q", rep.q}, {"r2", rep.r2}}},
                  {"events", rep.events},
                  {"checks", checks.values}};
    out.files.push_back({"observability.csv", t.csv()});
    out.files.push_back({"observability.dat", t.dat()});
    out.failed_checks = checks.failed;
    return out;
}

ExperimentOutput duality(const json& c) {
    const Setup s = setup(c);
    if (c["noise"]["backend"] != "tree") throw SchemaError("noise.backend", "verify-duality requires the tree backend");
    const json& v = c["verify"];
    const DualityReport rep = as_schema("time", [&] {
        return verify_duality(s.mesh, s.coeffs, s.grid, c["noise"]["recombining"], seed_of(c), v["transpose_check"],
                              v["fault"], s.solver);
    });
    const double tol = v["duality_tolerance"];
    ExperimentOutput out;
    Checks checks;
    checks.add("duality", rep.terms.residual <= tol);
    if (rep.transpose_defect >= 0.0) checks.add("transpose", rep.transpose_defect <= tol);
    if (rep.fault_size != 0.0) checks.add("fault_detected", rep.fault_residual > v["fault_floor"].get<double>());
    out.report = {{"geometry", geometry_json(s)},
                  {"terminal", rep.terms.terminal},
                  {"initial", rep.terms.initial},
                  {"control", rep.terms.control},
                  {"residual", rep.terms.residual},
                  {"transpose_defect", rep.transpose_defect},
                  {"fault", rep.fault_size},
                  {"fault_residual", rep.fault_residual},
                  {"checks", checks.values}};
    Table t({"terminal", "initial", "control", "residual", "transpose_defect", "fault", "fault_residual"});
    t.row({rep.terms.terminal, rep.terms.initial, rep.terms.control, rep.terms.residual, rep.transpose_defect,
           rep.fault_size, rep.fault_residual});
    out.files.push_back({"duality.csv", t.csv()});
    out.failed_checks = checks.failed;
    return out;
}

ExperimentOutput dissipation(const json& c) {
    const Setup s = setup(c);
    const Discretization disc(s.mesh, s.coeffs, s.grid, s.solver);
    const auto noise = noise_from_config(c, s.grid);
    const ForwardTrajectory traj = solve_forward(disc, initial_state(c, s.mesh), *noise);
    const DissipationReport rep = verify_dissipation(traj, disc);
    ExperimentOutput out;
    Checks checks;
    checks.add("finite", rep.finite);
    if (rep.r2 == 0.0) checks.add("monotone", rep.monotone);
    Table t({"n", "t", "energy", "c_step", "c_to_T"});
    for (int n = 0; n <= s.grid.n_t; ++n)
        t.row({double(n), s.grid.t(n), rep.energy[n], n < s.grid.n_t ? rep.c_step[n] : 0.0,
               n < s.grid.n_t ? rep.c_to_T[n] : 0.0});
    out.report = {{"geometry", geometry_json(s)},
                  {"r2", rep.r2},
                  {"c_max", std::isfinite(rep.c_max) ? json(rep.c_max) : json("inf")},
                  {"monotone", rep.monotone},
                  {"energy", rep.energy},
                  {"checks", checks.values}};
    out.files.push_back({"dissipation.csv", t.csv()});
    out.files.push_back({"dissipation.dat", t.dat()});
    out.failed_checks = checks.failed;
    return out;
}

ExperimentOutput weights_report(const json& c) {
    const Setup s = setup(c);
    const CarlemanWeights w = weights_from(c, s, c["weights"]["lambda"]);
    const PsiCheck pc = check_psi(w.aux, s.mesh);
    const WeightBoundReport b = check_weight_bounds(w, s.mesh, s.grid);
    const CoefficientNorms norms = sup_norms(s.coeffs, s.mesh, s.grid);
    ExperimentOutput out;
    Checks checks;
    checks.add("psi", pc.ok());
    checks.add("bounds_finite", b.finite());
    Table t({"n", "t", "node", "x", "y", "phi", "alpha", "log_theta2"});
    for (int n = 1; n < s.grid.n_t; ++n)
        for (int i = 0; i < s.mesh.n_bulk(); ++i) {
            const Point& x = s.mesh.bulk_nodes[i];
            t.row({double(n), s.grid.t(n), double(i), x(0), x(1), w.phi(s.grid.t(n), x), w.alpha(s.grid.t(n), x),
                   w.log_theta2(s.grid.t(n), x)});
        }
    out.report = {{"geometry", geometry_json(s)},
                  {"psi",
                   {{"positive_inside", pc.positive_inside},
                    {"zero_on_boundary", pc.zero_on_boundary},
                    {"gradient_nonzero_off_g1", pc.gradient_nonzero_off_g1},
                    {"normal_derivative_bound", pc.normal_derivative_bound},
                    {"min_psi_inside", pc.min_psi_inside},
                    {"min_grad_off_g1", pc.min_grad_off_g1},
                    {"max_normal_derivative", pc.max_normal_derivative},
                    {"psi_max", w.aux.psi_max},
                    {"c", w.aux.c}}},
                  {"bounds",
                   {{"phi_lower", b.phi_lower},
                    {"phi_t", b.phi_t},
                    {"alpha_t", b.alpha_t},
                    {"theta2phi_t", b.theta2phi_t},
                    {"theta2phi_grad", b.theta2phi_grad},
                    {"boundary_alpha_spread", b.boundary_alpha_spread},
                    {"boundary_phi_spread", b.boundary_phi_spread}}},
                  {"norms", norms_json(norms)},
                  {"K", cost_constant_K(norms, s.grid.T)},
                  {"lambda1", lambda_min(norms, s.grid.T, c["weights"]["C"])},
                  {"r2", dissipation_rate(norms)},
                  {"checks", checks.values}};
    out.files.push_back({"weights.csv", t.csv()});
    out.failed_checks = checks.failed;
    return out;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

Geometry geometry_from_config(const json& c) {
    const json& g = c["geometry"];
    return as_schema("geometry", [&] {
        Geometry geo = g["kind"] == "disk" ? Geometry::disk(g["radius"], region(g["control"]))
                                           : Geometry::interval(g["a"], g["b"], region(g["control"]));
        geo.validate();
        return geo;
    });
}

Mesh mesh_from_config(const json& c) {
    const Geometry g = geometry_from_config(c);
    return as_schema("mesh", [&] { return build_mesh(g, c["mesh"]["n"], c["mesh"]["n_theta"]); });
}

CoefficientSet coefficients_from_config(const json& c, const Geometry& geometry) {
    const json& co = c["coefficients"];
    const std::string preset = co["preset"];
    if (preset == "zero") return CoefficientSet::zero();
    if (preset == "shear-convection") return CoefficientSet::shear_convection(geometry, co["shear"]);
    if (preset == "constant") {
        for (const char* k : {"a1", "a2", "b1", "b2"})
            if (!co[k].is_number()) throw SchemaError(std::string("coefficients.") + k, "preset constant needs numbers");
        if (!co["B"][0].is_number() || !co["B"][1].is_number())
            throw SchemaError("coefficients.B", "preset constant needs numbers");
        return CoefficientSet::constant(co["a1"], co["a2"], co["b1"], co["b2"], Point(co["B"][0], co["B"][1]),
                                        co["B_gamma"], co["diffusion"], co["surface_diffusion"]);
    }
    CoefficientSet cs = CoefficientSet::constant(0, 0, 0, 0, Point::Zero(), co["B_gamma"], co["diffusion"],
                                                 co["surface_diffusion"]);
    cs.name = "table";
    cs.a1 = scalar_field(co["a1"], "coefficients.a1");
    cs.a2 = scalar_field(co["a2"], "coefficients.a2");
    cs.b1 = scalar_field(co["b1"], "coefficients.b1");
    cs.b2 = scalar_field(co["b2"], "coefficients.b2");
    const ScalarField bx = scalar_field(co["B"][0], "coefficients.B[0]");
    const ScalarField by = scalar_field(co["B"][1], "coefficients.B[1]");
    cs.B = [bx, by](double t, const Point& x) { return Point(bx(t, x), by(t, x)); };
    for (const char* k : {"a1", "a2", "b1", "b2"}) cs.time_dependent = cs.time_dependent || field_is_time_dependent(co[k]);
    cs.time_dependent = cs.time_dependent || field_is_time_dependent(co["B"][0]) || field_is_time_dependent(co["B"][1]);
    return cs;
}

TimeGrid grid_from_config(const json& c) { return TimeGrid(c["time"]["T"], c["time"]["n_t"]); }

SolverOptions solver_from_config(const json& c) {
    SolverOptions o;
    o.linear_solver = c["solver"]["linear"];
    o.allow_unstable = c["solver"]["allow_unstable"];
    o.cg_tolerance = c["solver"]["cg_tolerance"];
    o.cg_max_iterations = c["solver"]["cg_max_iterations"];
    return o;
}

std::unique_ptr<NoiseSource> noise_from_config(const json& c, const TimeGrid& grid) {
    const json& n = c["noise"];
    return as_schema("noise", [&]() -> std::unique_ptr<NoiseSource> {
        if (n["backend"] == "mc") return std::make_unique<PathEnsemble>(n["paths"], grid.n_t, grid.T, seed_of(c));
        return std::make_unique<NoiseTree>(grid.n_t, grid.T, n["recombining"]);
    });
}

Vec initial_state(const json& c, const Mesh& mesh) {
    const json& i = c["initial"];
    return profile(i["kind"], i["mode"], i["amplitude"], mesh, seed_of(c), "initial");
}

Mat terminal_data(const json& c, const Mesh& mesh, const NoiseSource& noise) {
    const json& t = c["terminal"];
    const Vec p = profile(t["kind"], t["mode"], t["amplitude"], mesh, seed_of(c) + 1, "terminal");
    const std::vector<double> poly = t["w_poly"].get<std::vector<double>>();
    const int N = noise.depth();
    Mat out(p.size(), noise.level_size(N));
    for (int j = 0; j < noise.level_size(N); ++j) {
        const double w = noise.W(N, j);
        double f = 0.0;
        for (std::size_t k = poly.size(); k-- > 0;) f = f * w + poly[k];
        out.col(j) = f * p;
    }
    return out;
}

ExperimentOutput run_subcommand(const std::string& name, const json& config) {
    static const std::map<std::string, std::function<ExperimentOutput(const json&)>> table{
        {"simulate-forward", simulate_forward}, {"simulate-backward", simulate_backward},
        {"hum-control", hum},                   {"aux-control", aux},
        {"verify-carleman", carleman},          {"verify-observability", observability},
        {"verify-duality", duality},            {"verify-dissipation", dissipation},
        {"weights-report", weights_report}};
    const auto it = table.find(name);
    if (it == table.end()) throw SchemaError("", "unknown subcommand '" + name + "'");
    ExperimentOutput out = it->second(config);
    out.report["subcommand"] = name;
    out.report["config"] = config;
    out.report["config_hash"] = config_hash(config);
    out.report["ok"] = out.ok();
    return out;
}

std::string default_output_dir() {
    const char* env = std::getenv("SDBC_OUT_DIR");
    return env && *env ? env : "sdbc_out";
}

int run_and_write(const std::string& name, const json& config, const std::string& out_dir, std::ostream& log) {
    const std::string hash = config_hash(config);
    json manifest = {{"subcommand", name},
                     {"timestamp", utc_timestamp()},
                     {"config", config},
                     {"config_hash", hash},
                     {"seed", seed_of(config)},
                     {"threads", thread_count()}};
    int code = kExitOk;
    ExperimentOutput out;
    try {
        out = run_subcommand(name, config);
        if (!out.ok()) {
            code = kExitInvariant;
            for (const auto& f : out.failed_checks) log << "invariant failed: " << f << '\n';
        }
    } catch (const SchemaError&) {
        throw;
    } catch (const StabilityError& e) {
        log << "numerical failure: " << e.what() << '\n';
        code = kExitNumerical;
        manifest["error"] = e.what();
    } catch (const NumericalError& e) {
        log << "numerical failure: " << e.what() << '\n';
        code = kExitNumerical;
        manifest["error"] = e.what();
    }
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    json files = json::array();
    if (code != kExitNumerical) {
        for (const auto& f : out.files) {
            std::ofstream os(dir / f.name, std::ios::binary);
            if (f.name.size() > 4 && f.name.substr(f.name.size() - 4) == ".bin") {
                os << f.content;
            } else {
                os << "# config_hash=" << hash << '\n' << f.content;
            }
            files.push_back(f.name);
        }
        std::ofstream(dir / "report.json") << out.report.dump(2) << '\n';
        files.push_back("report.json");
    }
    manifest["files"] = files;
    manifest["exit_status"] = code;
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
    return code;
}

}  // namespace sdbc
