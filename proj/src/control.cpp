#include "sdbc/control.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <functional>
#include <limits>

namespace sdbc {

namespace {

void axpy(AdaptedField& y, double a, const AdaptedField& x) {
    for (std::size_t n = 0; n < y.size(); ++n) y[n] += a * x[n];
}

AdaptedField scaled(const AdaptedField& x, double a) {
    AdaptedField y = x;
    for (auto& m : y) m *= a;
    return y;
}

void apply_mask(AdaptedField& x, const Vec& mask) {
    for (auto& m : x) m = mask.asDiagonal() * m;
}

AdaptedField diag_apply(const std::vector<Vec>& d, const AdaptedField& x, bool invert) {
    AdaptedField y = x;
    if (d.empty()) return y;
    for (std::size_t n = 0; n < y.size(); ++n) {
        const Vec w = invert ? d[n].cwiseInverse() : d[n];
        y[n] = w.asDiagonal() * x[n];
    }
    return y;
}

struct ControlSpace {
    Vec Bu;
    Vec mask;
    const NoiseSource* noise;
    double dt;

    double dot(const AdaptedField& a, const AdaptedField& b) const { return control_inner(a, b, Bu, *noise, dt); }
    double norm(const AdaptedField& a) const { return std::sqrt(std::max(0.0, dot(a, a))); }
};

ControlSpace control_space(const LQProblem& prob) {
    const Mesh& mesh = prob.backward_disc->mesh();
    return ControlSpace{control_weights(mesh), mesh.control_mask, prob.tree, prob.backward_disc->grid().dt()};
}

double squared_mass_norm(const Mat& Y, const Vec& mass, const NoiseSource& noise, int level) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < Y.cols(); ++j)
        acc += noise.probability(level, static_cast<int>(j)) * Y.col(j).dot(mass.cwiseProduct(Y.col(j)));
    return acc;
}

}  // namespace

AdaptedField adjoint_sweep(const LQProblem& prob, const BackwardState& r) {
    const Discretization& fwd = *prob.adjoint_disc;
    const int N = fwd.grid().n_t;
    const double dt = fwd.grid().dt();
    const Vec Minv = fwd.mass().cwiseInverse();
    auto penalty_term = [&](int n, const Mat& rn) -> Mat {
        return dt * (Minv.cwiseProduct(prob.penalty[n])).asDiagonal() * rn;
    };
    Vec p0 = -r.y[0].col(0) / prob.eps;
    if (!prob.penalty.empty()) p0 -= penalty_term(0, r.y[0]).col(0);
    StepHook hook = [&](int level, Mat& states) {
        if (level >= 1 && level < N && !prob.penalty.empty()) states -= penalty_term(level, r.y[level]);
    };
    ForwardTrajectory p = solve_forward(fwd, p0, *prob.tree, {}, hook);
    return AdaptedField(p.z.begin(), p.z.begin() + N);
}

double lq_objective(const LQProblem& prob, const AdaptedField& v, const BackwardState& r) {
    const ControlSpace U = control_space(prob);
    const Discretization& disc = *prob.backward_disc;
    const int N = disc.grid().n_t;
    double J = 0.5 * U.dot(prob.kappa.empty() ? v : diag_apply(prob.kappa, v, false), v);
    J += 0.5 / prob.eps * r.y[0].col(0).dot(disc.mass().cwiseProduct(r.y[0].col(0)));
    if (!prob.penalty.empty())
        for (int n = 0; n < N; ++n) J += 0.5 * U.dt * squared_mass_norm(r.y[n], prob.penalty[n], *prob.tree, n);
    return J;
}

LQSolution solve_lq(const LQProblem& prob, const CGOptions& options, const AdaptedField* initial) {
    const Discretization& disc = *prob.backward_disc;
    const int N = disc.grid().n_t;
    const int rows = disc.size();
    const ControlSpace U = control_space(prob);
    const Mat zeroT = Mat::Zero(rows, prob.tree->level_size(N));
    const Mat& yT = prob.y_T.size() ? prob.y_T : zeroT;

    auto kappa_times = [&](const AdaptedField& x) { return diag_apply(prob.kappa, x, false); };
    auto precondition = [&](const AdaptedField& x) {
        AdaptedField y = diag_apply(prob.kappa, x, true);
        apply_mask(y, U.mask);
        return y;
    };
    // gradient at v: κv + p(r(v))
    auto gradient = [&](const AdaptedField& v, const Mat& terminal, const AdaptedField& source,
                        BackwardState* state_out) {
        BackwardState st = solve_backward(disc, terminal, *prob.tree, v, source);
        AdaptedField g = adjoint_sweep(prob, st);
        axpy(g, 1.0, kappa_times(v));
        apply_mask(g, U.mask);
        if (state_out) *state_out = std::move(st);
        return g;
    };
    auto apply = [&](const AdaptedField& v) { return gradient(v, zeroT, {}, nullptr); };
    // stopping test in the norms matched to the preconditioner: |g|_{κ⁻¹} ≤ tol |v|_κ
    auto energy_norm = [&](const AdaptedField& v) { return std::sqrt(std::max(0.0, U.dot(kappa_times(v), v))); };
    auto dual_norm = [&](const AdaptedField& g) { return std::sqrt(std::max(0.0, U.dot(g, precondition(g)))); };
    const double tiny = std::numeric_limits<double>::min();

    LQSolution sol;
    AdaptedField b = scaled(gradient(zero_field(*prob.tree, rows, N), yT, prob.source, nullptr), -1.0);
    sol.v = initial ? *initial : zero_field(*prob.tree, rows, N);
    apply_mask(sol.v, U.mask);
    const double bnorm = U.norm(b);

    if (bnorm == 0.0 && U.norm(sol.v) == 0.0) {
        sol.converged = true;
        sol.gradient = zero_field(*prob.tree, rows, N);
        sol.state = solve_backward(disc, yT, *prob.tree, sol.v, prob.source);
        sol.objective = lq_objective(prob, sol.v, sol.state);
        return sol;
    }

    // Restarted PCG: every cycle starts from the true residual; without
    // convergence the iterate with the smallest true residual is returned.
    int iterations = 0;
    double best_res = std::numeric_limits<double>::infinity();
    LQSolution best;
    while (true) {
        const int cycle_start = iterations;
        AdaptedField r = b;
        axpy(r, -1.0, apply(sol.v));
        AdaptedField z = precondition(r);
        AdaptedField p = z;
        double rz = U.dot(r, z);
        for (int k = 0; k < options.restart_interval && iterations < options.max_iterations; ++k) {
            if (std::sqrt(std::max(0.0, rz)) <= options.tolerance * std::max(energy_norm(sol.v), tiny)) break;
            const AdaptedField Ap = apply(p);
            const double pAp = U.dot(p, Ap);
            if (!(pAp > 0.0)) break;
            const double alpha = rz / pAp;
            axpy(sol.v, alpha, p);
            axpy(r, -alpha, Ap);
            ++iterations;
            z = precondition(r);
            const double rz_new = U.dot(r, z);
            p = scaled(p, rz_new / rz);
            axpy(p, 1.0, z);
            rz = rz_new;
        }
        sol.gradient = gradient(sol.v, yT, prob.source, &sol.state);
        sol.residual_norm = dual_norm(sol.gradient);
        const double vn = energy_norm(sol.v);
        if (std::isfinite(sol.residual_norm) && (sol.residual_norm < best_res || best.v.empty())) {
            best_res = sol.residual_norm;
            best = sol;
        }
        if (sol.residual_norm <= options.tolerance * vn) {
            sol.converged = true;
            break;
        }
        // a cycle that takes no step cannot improve on the true residual
        if (iterations >= options.max_iterations || iterations == cycle_start || !std::isfinite(sol.residual_norm))
            break;
    }
    if (!sol.converged && !best.v.empty()) sol = std::move(best);
    sol.iterations = iterations;
    sol.objective = lq_objective(prob, sol.v, sol.state);
    return sol;
}

namespace {

double mean_square_leaves(const Mat& Y, const Vec& mass, const NoiseTree& tree) {
    return squared_mass_norm(Y, mass, tree, tree.depth());
}

ControlResult finish_hum(const Discretization& disc, const NoiseTree& tree, const Mat& y_T, double eps,
                         const HumOptions& options, AdaptedField u, const BackwardState& y, int iterations,
                         bool converged) {
    const int N = disc.grid().n_t;
    const double dt = disc.grid().dt();
    const Vec Bu = control_weights(disc.mesh());
    ControlResult res;
    res.eps = eps;
    res.iterations = iterations;
    res.converged = converged;
    const Vec y0 = y.y[0].col(0);
    res.y0_norm = std::sqrt(y0.dot(disc.mass().cwiseProduct(y0)));
    res.yT_norm = std::sqrt(mean_square_leaves(y_T, disc.mass(), tree));
    res.u_norm2 = control_inner(u, u, Bu, tree, dt);
    res.objective = 0.5 * res.u_norm2 + 0.5 / eps * res.y0_norm * res.y0_norm;

    // fixed-point characterization u = -1_{G₀} z_ε, z_ε from -y(0)/ε
    const ForwardTrajectory z = solve_forward(disc, Vec(-y0 / eps), tree);
    AdaptedField diff(u);
    for (int n = 0; n < N; ++n) diff[n] += disc.mesh().control_mask.asDiagonal() * z.z[n];
    const double un = std::sqrt(res.u_norm2);
    const double dn = std::sqrt(control_inner(diff, diff, Bu, tree, dt));
    res.optimality_residual = un > 0.0 ? dn / un : dn;

    res.K = cost_constant_K(sup_norms(disc.coeffs(), disc.mesh(), disc.grid()), disc.grid().T);
    res.C = options.C;
    const double yT2 = res.yT_norm * res.yT_norm;
    res.bound_ratio = yT2 > 0.0 ? res.u_norm2 / (std::exp(options.C * res.K) * yT2) : 0.0;
    res.u = std::move(u);
    return res;
}

}  // namespace

ControlResult hum_control(const Discretization& disc, const NoiseTree& tree, const Mat& y_T, double eps,
                          const HumOptions& options, const AdaptedField* warm_start) {
    if (!(eps > 0.0)) throw std::invalid_argument("penalization eps must be positive");
    const int N = disc.grid().n_t;
    const int rows = disc.size();
    if (options.method == "cg") {
        LQProblem prob;
        prob.backward_disc = &disc;
        prob.adjoint_disc = &disc;
        prob.tree = &tree;
        prob.y_T = y_T;
        prob.eps = eps;
        LQSolution sol = solve_lq(prob, options.cg, warm_start);
        return finish_hum(disc, tree, y_T, eps, options, std::move(sol.v), sol.state, sol.iterations,
                          sol.converged);
    }
    if (options.method != "picard") throw std::invalid_argument("unknown control method '" + options.method + "'");

    const Vec& mask = disc.mesh().control_mask;
    const Vec Bu = control_weights(disc.mesh());
    const double dt = disc.grid().dt();
    AdaptedField u = warm_start ? *warm_start : zero_field(tree, rows, N);
    BackwardState y = solve_backward(disc, y_T, tree, u);
    bool converged = false;
    int it = 0;
    for (; it < options.picard_iterations; ++it) {
        const ForwardTrajectory z = solve_forward(disc, Vec(-y.y[0].col(0) / eps), tree);
        AdaptedField next(u);
        double change = 0.0;
        for (int n = 0; n < N; ++n) next[n] = (1.0 - options.relaxation) * u[n] - options.relaxation * (mask.asDiagonal() * z.z[n]);
        AdaptedField d(next);
        axpy(d, -1.0, u);
        change = std::sqrt(control_inner(d, d, Bu, tree, dt));
        u = std::move(next);
        y = solve_backward(disc, y_T, tree, u);
        const double un = std::sqrt(control_inner(u, u, Bu, tree, dt));
        if (!std::isfinite(change)) break;
        if (change <= options.cg.tolerance * std::max(un, std::numeric_limits<double>::min())) {
            converged = true;
            ++it;
            break;
        }
    }
    return finish_hum(disc, tree, y_T, eps, options, std::move(u), y, it, converged);
}

std::vector<ControlResult> hum_continuation(const Discretization& disc, const NoiseTree& tree, const Mat& y_T,
                                            std::vector<double> eps_schedule, const HumOptions& options) {
    std::sort(eps_schedule.begin(), eps_schedule.end(), std::greater<>());
    std::vector<ControlResult> out;
    for (double eps : eps_schedule) {
        const AdaptedField* warm = out.empty() ? nullptr : &out.back().u;
        out.push_back(hum_control(disc, tree, y_T, eps, options, warm));
    }
    return out;
}

double smallest_bound_constant(double u_norm2, double yT_norm2, double K) {
    if (u_norm2 <= 0.0 || yT_norm2 <= 0.0) return 0.0;
    return std::max(0.0, std::log(u_norm2 / yT_norm2) / K);
}

NullControlReport null_control_report(const ControlResult& r, double K, double C, double threshold) {
    NullControlReport rep;
    const double yT2 = r.yT_norm * r.yT_norm;
    rep.relative_y0 = r.yT_norm > 0.0 ? r.y0_norm / r.yT_norm : 0.0;
    rep.u_norm2 = r.u_norm2;
    rep.K = K;
    rep.bound = std::exp(C * K) * yT2;
    rep.bound_ratio = rep.bound > 0.0 ? r.u_norm2 / rep.bound : 0.0;
    rep.smallest_C = smallest_bound_constant(r.u_norm2, yT2, K);
    rep.success = rep.relative_y0 <= threshold;
    return rep;
}

AuxResult aux_control(const ForwardTrajectory& z, const Discretization& disc, const CarlemanWeights& w, double eps,
                      const NoiseTree& tree, const AuxOptions& options) {
    if (!(eps > 0.0)) throw std::invalid_argument("penalization eps must be positive");
    if (z.noise != &tree) throw std::invalid_argument("aux_control: z must live on the given tree");
    const Mesh& mesh = disc.mesh();
    const TimeGrid& grid = disc.grid();
    const int N = grid.n_t;
    const int rows = disc.size();
    const double dt = grid.dt();
    const double lam = w.lambda;
    const double clamp = options.clamp > 0.0 ? options.clamp : dt;
    auto that = [&](int n) { return std::clamp(grid.t(n), clamp, grid.T - clamp); };

    SolverOptions so = disc.options();
    so.stiffness_scale = 1.0;
    Discretization pdisc(mesh, disc.coeffs().principal_part(), grid, so);
    const Vec& M = pdisc.mass();

    // nodal weights per level
    std::vector<Vec> src_w(N), pen(N), kap(N), inv_eps2(N), phi_m2(N);
    for (int n = 0; n < N; ++n) {
        const double t = that(n);
        src_w[n].resize(rows);
        pen[n].resize(rows);
        kap[n].resize(rows);
        inv_eps2[n].resize(rows);
        phi_m2[n].resize(rows);
        for (int i = 0; i < rows; ++i) {
            const Point& x = mesh.bulk_nodes[i];
            const double lphi = std::log(w.phi(t, x));
            const double l2 = w.log_theta2(t, x);
            src_w[n](i) = std::exp(3.0 * std::log(lam) + l2 + 3.0 * lphi);
            kap[n](i) = std::exp(-3.0 * std::log(lam) - l2 - 3.0 * lphi);
            inv_eps2[n](i) = std::exp(-w.log_theta2(t, x, eps));
            phi_m2[n](i) = std::exp(-2.0 * lphi);
            pen[n](i) = n == 0 ? 0.0 : M(i) * inv_eps2[n](i);
        }
    }

    LQProblem prob;
    prob.backward_disc = &pdisc;
    prob.adjoint_disc = &pdisc;
    prob.tree = &tree;
    prob.eps = eps;
    prob.penalty = pen;
    prob.kappa = kap;
    prob.source.resize(N);
    for (int n = 0; n < N; ++n) prob.source[n] = M.cwiseProduct(src_w[n]).asDiagonal() * z.z[n];

    AuxResult res;
    {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int n = 1; n < N; ++n)
            for (int i = 0; i < rows; ++i) {
                for (double v : {std::log(inv_eps2[n](i)), std::log(kap[n](i))}) {
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            }
        res.log10_weight_range = N > 1 ? (hi - lo) / std::log(10.0) : 0.0;
    }
    // Beyond this the Krylov solve cannot resolve the weighted problem in
    // double precision; it would stall or return noise.
    if (res.log10_weight_range > options.max_weight_decades) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "auxiliary weights span %.1f decades (limit %.1f); raise the clamp or T, or lower lambda/mu",
                      res.log10_weight_range, options.max_weight_decades);
        throw NumericalError(buf);
    }
    LQSolution sol = solve_lq(prob, options.cg);
    res.iterations = sol.iterations;
    res.converged = sol.converged;

    // characterization: v = 1_{G₀} λ³θ²φ³ q with q = -p
    {
        const ControlSpace U = control_space(prob);
        AdaptedField p = adjoint_sweep(prob, sol.state);
        AdaptedField d = sol.v;
        for (int n = 0; n < N; ++n)
            d[n] += mesh.control_mask.asDiagonal() * (kap[n].cwiseInverse().asDiagonal() * p[n]);
        const double vn = U.norm(sol.v);
        res.characterization_residual = vn > 0.0 ? U.norm(d) / vn : U.norm(d);
    }

    AuxEstimate& e = res.estimate;
    const Vec Bu = control_weights(mesh);
    e.v_term = control_inner(diag_apply(kap, sol.v, false), sol.v, Bu, tree, dt);
    const BackwardState& r = sol.state;
    const double r0sq = r.y[0].col(0).dot(M.cwiseProduct(r.y[0].col(0)));
    e.r0_over_eps = r0sq / eps;
    for (int n = 1; n < N; ++n) {
        const double t = that(n);
        Vec edge_w(mesh.bulk_edges.size()), sedge_w(mesh.surface_edges.size());
        for (std::size_t k = 0; k < mesh.bulk_edges.size(); ++k) {
            const Point& x = mesh.bulk_edges[k].mid;
            const double p = w.phi(t, x);
            edge_w(static_cast<Eigen::Index>(k)) = std::exp(-w.log_theta2(t, x, eps)) / (p * p);
        }
        for (std::size_t k = 0; k < mesh.surface_edges.size(); ++k) {
            const Point& x = mesh.surface_edges[k].mid;
            const double p = w.phi(t, x);
            sedge_w(static_cast<Eigen::Index>(k)) = std::exp(-w.log_theta2(t, x, eps)) / (p * p);
        }
        for (int j = 0; j < tree.level_size(n); ++j) {
            const double pr = tree.probability(n, j) * dt;
            const Vec rn = r.y[n].col(j);
            const Vec Rn = r.Y[n].col(j);
            const Vec zn = z.z[n].col(j);
            for (int i = 0; i < rows; ++i) {
                e.r_bulk += pr * mesh.bulk_weights(i) * inv_eps2[n](i) * rn(i) * rn(i);
                e.R1_term += pr * mesh.bulk_weights(i) * inv_eps2[n](i) * phi_m2[n](i) * Rn(i) * Rn(i) / (lam * lam);
                e.rhs += pr * mesh.bulk_weights(i) * src_w[n](i) * zn(i) * zn(i);
            }
            for (int k = 0; k < mesh.n_surf(); ++k) {
                const int i = mesh.trace[k];
                e.r_surf += pr * mesh.surface_weights(k) * inv_eps2[n](i) * rn(i) * rn(i);
                e.R2_term +=
                    pr * mesh.surface_weights(k) * inv_eps2[n](i) * phi_m2[n](i) * Rn(i) * Rn(i) / (lam * lam);
                e.rhs += pr * mesh.surface_weights(k) * src_w[n](i) * zn(i) * zn(i);
            }
            e.grad_bulk += pr * weighted_gradient_energy(mesh.bulk_edges, rn, edge_w) / (lam * lam);
            if (!mesh.surface_edges.empty())
                e.grad_surf +=
                    pr * weighted_gradient_energy(mesh.surface_edges, trace_of(mesh, rn), sedge_w) / (lam * lam);
        }
    }
    res.v = std::move(sol.v);
    res.r = std::move(sol.state);
    return res;
}

}  // namespace sdbc
