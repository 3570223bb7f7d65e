#include "sdbc/verify.hpp"
#include "sdbc/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace sdbc {

bool CarlemanReport::finite_nonnegative() const {
    for (const auto& r : rows) {
        for (double v : {r.lhs_bulk_z, r.lhs_surf_z, r.lhs_bulk_grad, r.lhs_surf_grad, r.rhs_control, r.rhs_source,
                         r.ratio})
            if (!std::isfinite(v) || v < 0.0) return false;
    }
    return true;
}

double CarlemanReport::spread() const {
    if (rows.empty()) return 0.0;
    auto smallest = std::min_element(rows.begin(), rows.end(),
                                     [](const CarlemanRow& a, const CarlemanRow& b) { return a.lambda < b.lambda; });
    double mx = 0.0;
    for (const auto& r : rows) mx = std::max(mx, r.ratio);
    return smallest->ratio > 0.0 ? mx / smallest->ratio : 0.0;
}

namespace {

double sq(double x) { return x * x; }

}  // namespace

CarlemanReport verify_carleman(const Discretization& disc, const AuxFunction& aux, const std::vector<Vec>& ensemble,
                               const NoiseSource& noise, const CarlemanOptions& options) {
    const Mesh& mesh = disc.mesh();
    const TimeGrid& grid = disc.grid();
    const int N = grid.n_t;
    const double dt = grid.dt();
    const double T = grid.T;
    if (N < 2) throw std::invalid_argument("Carleman quadrature needs at least one interior time node");

    CarlemanReport rep;
    rep.adjoint_mode = options.adjoint_mode;
    rep.lambda1 = lambda_min(sup_norms(disc.coeffs(), mesh, grid), T, options.C);

    std::unique_ptr<Discretization> principal;
    const Discretization* solver = &disc;
    if (!options.adjoint_mode) {
        principal = std::make_unique<Discretization>(mesh, disc.coeffs().principal_part(), grid, disc.options());
        solver = principal.get();
    }
    std::vector<ForwardTrajectory> trajs;
    trajs.reserve(ensemble.size());
    for (const Vec& z0 : ensemble)
        trajs.push_back(solve_forward(*solver, z0, noise, options.adjoint_mode ? SourceSet{} : options.sources));

    const SourceSet& s = options.sources;
    const bool general = !options.adjoint_mode;
    const int nb = mesh.n_bulk();
    const int ns = mesh.n_surf();
    const auto ne = static_cast<Eigen::Index>(mesh.bulk_edges.size());
    const auto nse = static_cast<Eigen::Index>(mesh.surface_edges.size());

    for (double lam : options.lambdas) {
        const CarlemanWeights w = make_weights(aux, options.mu, lam, T);
        CarlemanRow row;
        row.lambda = lam;
        row.below_threshold = lam < rep.lambda1;

        // common shift: the largest 2λα on the interior grid
        double shift = -std::numeric_limits<double>::infinity();
        for (int n = 1; n < N; ++n) {
            const double t = grid.t(n);
            for (const Point& x : mesh.bulk_nodes) shift = std::max(shift, w.log_theta2(t, x));
            for (const Edge& e : mesh.bulk_edges) shift = std::max(shift, w.log_theta2(t, e.mid));
            for (const Edge& e : mesh.surface_edges) shift = std::max(shift, w.log_theta2(t, e.mid));
        }
        row.log_scale = shift;
        const double l3 = lam * lam * lam;

        for (int n = 1; n < N; ++n) {
            const double t = grid.t(n);
            Vec th2(nb), ph(nb);
            for (int i = 0; i < nb; ++i) {
                th2(i) = std::exp(w.log_theta2(t, mesh.bulk_nodes[i]) - shift);
                ph(i) = w.phi(t, mesh.bulk_nodes[i]);
            }
            Vec ew(ne), sew(nse);
            for (Eigen::Index k = 0; k < ne; ++k) {
                const Point& x = mesh.bulk_edges[k].mid;
                ew(k) = lam * std::exp(w.log_theta2(t, x) - shift) * w.phi(t, x);
            }
            for (Eigen::Index k = 0; k < nse; ++k) {
                const Point& x = mesh.surface_edges[k].mid;
                sew(k) = lam * std::exp(w.log_theta2(t, x) - shift) * w.phi(t, x);
            }
            for (const ForwardTrajectory& tr : trajs) {
                for (int j = 0; j < noise.level_size(n); ++j) {
                    const double pr = noise.probability(n, j) * dt;
                    const Vec z = tr.z[n].col(j);
                    for (int i = 0; i < nb; ++i) {
                        const double v = pr * mesh.bulk_weights(i) * l3 * th2(i) * ph(i) * ph(i) * ph(i) * z(i) * z(i);
                        row.lhs_bulk_z += v;
                        row.rhs_control += mesh.control_mask(i) * v;
                    }
                    for (int k = 0; k < ns; ++k) {
                        const int i = mesh.trace[k];
                        row.lhs_surf_z += pr * mesh.surface_weights(k) * l3 * th2(i) * ph(i) * ph(i) * ph(i) * z(i) * z(i);
                    }
                    row.lhs_bulk_grad += pr * weighted_gradient_energy(mesh.bulk_edges, z, ew);
                    if (nse > 0) row.lhs_surf_grad += pr * weighted_gradient_energy(mesh.surface_edges, trace_of(mesh, z), sew);
                }
            }
            if (general) {
                // deterministic sources: the expectation is the node value times the ensemble size
                const double pr = dt * static_cast<double>(trajs.size());
                const double l2 = lam * lam;
                for (int i = 0; i < nb; ++i) {
                    const Point& x = mesh.bulk_nodes[i];
                    double v = 0.0;
                    if (s.F0) v += sq(s.F0(t, x));
                    if (s.F1) v += l2 * ph(i) * ph(i) * sq(s.F1(t, x));
                    if (s.F) v += l2 * ph(i) * ph(i) * s.F(t, x).squaredNorm();
                    row.rhs_source += pr * mesh.bulk_weights(i) * th2(i) * v;
                }
                for (int k = 0; k < ns; ++k) {
                    const int i = mesh.trace[k];
                    const Point& x = mesh.boundary_nodes[k];
                    double v = 0.0;
                    if (s.F0_gamma) v += sq(s.F0_gamma(t, x));
                    if (s.F1_gamma) v += l2 * ph(i) * ph(i) * sq(s.F1_gamma(t, x));
                    if (s.F_gamma) v += l2 * ph(i) * ph(i) * s.F_gamma(t, x).squaredNorm();
                    row.rhs_source += pr * mesh.surface_weights(k) * th2(i) * v;
                }
            }
        }
        row.ratio = row.rhs() > 0.0 ? row.lhs() / row.rhs() : 0.0;
        rep.rows.push_back(row);
    }
    return rep;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    LinearFit f;
    const auto n = static_cast<double>(x.size());
    if (x.size() != y.size() || x.size() < 2) return f;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += sq(x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += sq(y[i] - my);
    }
    if (sxx == 0.0) return f;
    f.q = sxy / sxx;
    f.p = my - f.q * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sse += sq(y[i] - f.p - f.q * x[i]);
    f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    return f;
}

std::vector<Vec> observability_ensemble(const Mesh& mesh, int n_random, int n_eigen, std::uint64_t seed) {
    const GalerkinBasis basis = coupled_eigenbasis(mesh);
    const int modes = std::min<int>(8, static_cast<int>(basis.E.cols()));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec> out;
    for (int r = 0; r < n_random; ++r) {
        Vec z = Vec::Zero(mesh.n_bulk());
        for (int k = 0; k < modes; ++k) z += normal(rng) / (1.0 + k) * basis.E.col(k);
        out.push_back(z);
    }
    for (int k = 0; k < std::min<int>(n_eigen, static_cast<int>(basis.E.cols())); ++k) out.push_back(basis.E.col(k));
    return out;
}

namespace {

struct ObsQuotient {
    double num = 0.0;
    double den = 0.0;
};

ObsQuotient observe(const ForwardTrajectory& tr, const Discretization& disc, bool slice) {
    const TimeGrid& g = disc.grid();
    const int N = g.n_t;
    const double dt = g.dt();
    const Vec Bu = control_weights(disc.mesh());
    const NoiseSource& noise = *tr.noise;
    ObsQuotient q;
    for (int n = 0; n < N; ++n) {
        for (int j = 0; j < noise.level_size(n); ++j) {
            const auto z = tr.z[n].col(j);
            const double p = noise.probability(n, j) * dt;
            q.den += p * z.dot(Bu.cwiseProduct(z));
            const double t = g.t(n);
            if (slice && t >= 0.25 * g.T && t < 0.75 * g.T) q.num += p * z.dot(disc.mass().cwiseProduct(z));
        }
    }
    if (!slice) q.num = tr.mean_square(N, disc.mass());
    return q;
}

// Terminal (or sliced) and observation Gram matrices of the responses to the
// columns of V.
void gram_matrices(const Discretization& disc, const NoiseSource& noise, bool slice, const Mat& V, Mat& E, Mat& O) {
    const auto k = V.cols();
    const TimeGrid& g = disc.grid();
    const int N = g.n_t;
    const double dt = g.dt();
    const Vec Bu = control_weights(disc.mesh());
    const Vec& M = disc.mass();
    std::vector<ForwardTrajectory> resp;
    for (Eigen::Index i = 0; i < k; ++i) resp.push_back(solve_forward(disc, Vec(V.col(i)), noise));
    E = Mat::Zero(k, k);
    O = Mat::Zero(k, k);
    Mat Phi(V.rows(), k);
    for (int lvl = 0; lvl <= N; ++lvl) {
        for (int j = 0; j < noise.level_size(lvl); ++j) {
            for (Eigen::Index i = 0; i < k; ++i) Phi.col(i) = resp[i].z[lvl].col(j);
            const double p = noise.probability(lvl, j);
            const double t = g.t(lvl);
            if (lvl < N) O.noalias() += p * dt * Phi.transpose() * Bu.asDiagonal() * Phi;
            if (slice) {
                if (lvl < N && t >= 0.25 * g.T && t < 0.75 * g.T)
                    E.noalias() += p * dt * Phi.transpose() * M.asDiagonal() * Phi;
            } else if (lvl == N) {
                E.noalias() += p * Phi.transpose() * M.asDiagonal() * Phi;
            }
        }
    }
}

}  // namespace

ObservabilityReport verify_observability(const Mesh& mesh, const CoefficientSet& coeffs,
                                         const std::vector<Vec>& ensemble, const ObservabilityOptions& options) {
    ObservabilityReport rep;
    std::unique_ptr<GalerkinBasis> basis;
    std::vector<double> xs, ys;
    for (double T : options.T_list) {
        if (!(T > 0.0)) throw std::invalid_argument("observability horizons must be positive");
        const int n_t = std::max(2, static_cast<int>(std::lround(T / options.dt)));
        const TimeGrid grid(T, n_t);
        const Discretization disc(mesh, coeffs, grid, options.solver);
        const NoiseTree tree(n_t, T, options.recombining);
        ObservabilityRow row;
        row.T = T;
        row.n_t = n_t;
        row.K = cost_constant_K(sup_norms(coeffs, mesh, grid), T);
        Vec best;
        for (std::size_t e = 0; e < ensemble.size(); ++e) {
            const ForwardTrajectory tr = solve_forward(disc, ensemble[e], tree);
            const ObsQuotient q = observe(tr, disc, options.slice);
            if (!(q.den >= options.min_denominator)) {
                ++row.excluded;
                rep.events.push_back("T=" + std::to_string(T) + ": member " + std::to_string(e) +
                                     " has a vanishing observation and was excluded");
                continue;
            }
            const double r = q.num / q.den;
            if (r > row.ensemble_max) {
                row.ensemble_max = r;
                best = ensemble[e];
            }
        }
        row.C_obs = row.ensemble_max;
        if (options.power_iterations > 0 && options.refine_modes > 0 && best.size()) {
            if (!basis) basis = std::make_unique<GalerkinBasis>(coupled_eigenbasis(mesh));
            const Mat V = basis->E.leftCols(std::min<Eigen::Index>(options.refine_modes, basis->E.cols()));
            Mat E, O;
            gram_matrices(disc, tree, options.slice, V, E, O);
            const Eigen::LDLT<Mat> ldlt(O);
            if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
                Vec c = V.transpose() * disc.mass().cwiseProduct(best);
                if (c.norm() == 0.0) c = Vec::Unit(V.cols(), 0);
                for (int k = 0; k < options.power_iterations; ++k) {
                    const Vec y = ldlt.solve(E * c);
                    const double nrm = y.norm();  // the basis is M-orthonormal
                    if (!std::isfinite(nrm) || nrm == 0.0) break;
                    c = y / nrm;
                }
                // keep the candidate only after a direct solve
                const ForwardTrajectory tr = solve_forward(disc, Vec(V * c), tree);
                const ObsQuotient q = observe(tr, disc, options.slice);
                if (q.den >= options.min_denominator && std::isfinite(q.num)) {
                    row.refined = q.num / q.den;
                    row.C_obs = std::max(row.C_obs, row.refined);
                }
            }
        }
        if (row.C_obs > 0.0) {
            xs.push_back(1.0 / T);
            ys.push_back(std::log(row.C_obs));
        }
        rep.rows.push_back(row);
    }
    const LinearFit f = fit_line(xs, ys);
    rep.p = f.p;
    rep.q = f.q;
    rep.r2 = f.r2;
    return rep;
}

DissipationReport verify_dissipation(const ForwardTrajectory& traj, const Discretization& disc) {
    DissipationReport rep;
    const TimeGrid& g = traj.grid;
    const int N = g.n_t;
    rep.r2 = dissipation_rate(sup_norms(disc.coeffs(), disc.mesh(), g));
    for (int n = 0; n <= N; ++n) rep.energy.push_back(traj.mean_square(n, disc.mass()));
    for (double e : rep.energy) rep.finite = rep.finite && std::isfinite(e);
    auto constant = [&](double from, double to, double span) {
        if (!(to > from) || from <= 0.0) return 0.0;
        if (rep.r2 <= 0.0) return std::numeric_limits<double>::infinity();
        return std::log(to / from) / (span * rep.r2);
    };
    for (int n = 0; n < N; ++n) {
        const double a = rep.energy[n];
        const double b = rep.energy[n + 1];
        if (b > a * (1.0 + kMonotoneSlack)) rep.monotone = false;
        rep.c_step.push_back(constant(a, b, g.dt()));
        rep.c_to_T.push_back(constant(a, rep.energy[N], g.T - g.t(n)));
    }
    for (double c : rep.c_to_T) rep.c_max = std::max(rep.c_max, c);
    rep.finite = rep.finite && std::isfinite(rep.c_max);
    return rep;
}

DualityReport verify_duality(const Mesh& mesh, const CoefficientSet& coeffs, const TimeGrid& grid, bool recombining,
                             std::uint64_t seed, bool transpose_check, double fault, SolverOptions solver) {
    const NoiseTree tree(grid.n_t, grid.T, recombining);
    const Discretization disc(mesh, coeffs, grid, solver);
    const int n = disc.size();
    const int N = grid.n_t;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto random_mat = [&](int rows, int cols) {
        Mat m(rows, cols);
        for (int c = 0; c < cols; ++c)
            for (int r = 0; r < rows; ++r) m(r, c) = normal(rng);
        return m;
    };
    const Vec z0 = random_mat(n, 1).col(0);
    const Mat yT = random_mat(n, tree.level_size(N));
    AdaptedField u;
    for (int l = 0; l < N; ++l) u.push_back(mesh.control_mask.asDiagonal() * random_mat(n, tree.level_size(l)));

    DualityReport rep;
    const ForwardTrajectory fwd = solve_forward(disc, z0, tree);
    rep.terms = duality_residual(fwd, solve_backward(disc, yT, tree, u), u, disc);
    if (transpose_check)
        rep.transpose_defect = transpose_defect(forward_terminal_map(disc, tree), backward_initial_map(disc, tree),
                                                disc.mass(), tree);
    rep.fault_size = fault;
    if (fault != 0.0) {
        SolverOptions bad = solver;
        bad.stiffness_scale = 1.0 + fault;
        const Discretization faulty(mesh, coeffs, grid, bad);
        rep.fault_residual = duality_residual(fwd, solve_backward(faulty, yT, tree, u), u, disc).residual;
    }
    return rep;
}

}  // namespace sdbc
