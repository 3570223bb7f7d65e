#include "sdbc/forward.hpp"
#include "sdbc/parallel.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sdbc {

struct Discretization::Impl {
    std::vector<SpMat> step;  // M + Δt K per slot
    std::vector<std::unique_ptr<Eigen::SimplicialLDLT<SpMat>>> ldlt;
};

namespace {

SpMat diag(const Vec& d) {
    SpMat m(d.size(), d.size());
    std::vector<Eigen::Triplet<double>> t;
    for (Eigen::Index i = 0; i < d.size(); ++i) t.emplace_back(i, i, d(i));
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

}  // namespace

Discretization::Discretization(const Mesh& mesh, const CoefficientSet& coeffs, const TimeGrid& grid,
                               SolverOptions options)
    : mesh_(mesh), coeffs_(coeffs), grid_(grid), options_(std::move(options)), impl_(std::make_unique<Impl>()) {
    if (options_.linear_solver != "ldlt" && options_.linear_solver != "cg")
        throw std::invalid_argument("unknown linear solver '" + options_.linear_solver + "'");
    const int slots = coeffs_.time_dependent ? grid_.n_t + 1 : 1;
    const double dt = grid_.dt();
    for (int s = 0; s < slots; ++s) {
        const double t = grid_.t(s);
        DiscreteOperators ops = assemble_operators(mesh_, coeffs_, t);
        if (s == 0) mass_ = ops.coupled_mass();
        K_.push_back(options_.stiffness_scale * ops.coupled_stiffness());
        R_.push_back(ops.coupled_reaction());
        C_.push_back(ops.coupled_convection());
        N_.push_back(ops.coupled_noise());
        ops_.push_back(std::move(ops));

        for (const auto& x : mesh_.bulk_nodes) {
            Point b = coeffs_.B(t, x);
            if (mesh_.geometry.kind == GeometryKind::Interval) b(1) = 0.0;
            max_B_ = std::max(max_B_, b.norm());
        }
        for (int k = 0; k < mesh_.n_surf(); ++k)
            max_B_ = std::max(max_B_, std::abs(coeffs_.B_gamma(t, mesh_.boundary_nodes[k]).dot(mesh_.tangents[k])));

        SpMat S = diag(mass_) + dt * K_.back();
        S.makeCompressed();
        if (options_.linear_solver == "ldlt") {
            auto f = std::make_unique<Eigen::SimplicialLDLT<SpMat>>(S);
            if (f->info() != Eigen::Success) throw NumericalError("factorization of M + dt K failed");
            impl_->ldlt.push_back(std::move(f));
        }
        impl_->step.push_back(std::move(S));
    }
    if (max_B_ > 0.0 && dt > mesh_.h / (2.0 * max_B_) && !options_.allow_unstable)
        throw StabilityError("explicit convection unstable: dt=" + std::to_string(dt) + " > h/(2|B|)=" +
                             std::to_string(mesh_.h / (2.0 * max_B_)) + " (set allow_unstable to force)");
}

Discretization::~Discretization() = default;

int Discretization::slot(int n) const {
    if (n < 0 || n > grid_.n_t) throw std::out_of_range("time index out of range");
    return coeffs_.time_dependent ? n : 0;
}

const SpMat& Discretization::stiffness(int n) const { return K_[slot(n)]; }
const SpMat& Discretization::reaction(int n) const { return R_[slot(n)]; }
const SpMat& Discretization::convection(int n) const { return C_[slot(n)]; }
const SpMat& Discretization::noise(int n) const { return N_[slot(n)]; }
const DiscreteOperators& Discretization::operators(int n) const { return ops_[slot(n)]; }

Mat Discretization::solve_implicit(int n, const Mat& rhs) const {
    const int s = slot(n + 1);
    if (options_.linear_solver == "ldlt") {
        Mat x = impl_->ldlt[s]->solve(rhs);
        if (!x.allFinite()) throw NumericalError("non-finite implicit solve");
        return x;
    }
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(options_.cg_tolerance);
    cg.setMaxIterations(options_.cg_max_iterations);
    cg.compute(impl_->step[s]);
    Mat x(rhs.rows(), rhs.cols());
    for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
        x.col(c) = cg.solve(rhs.col(c));
        if (cg.info() != Eigen::Success) throw NumericalError("conjugate gradient did not converge");
    }
    return x;
}

double Discretization::path_factor(int n, double w) const {
    return coeffs_.path_factor ? coeffs_.path_factor(grid_.t(n), w) : 1.0;
}

Vec Discretization::drift_load(const SourceSet& s, int n) const {
    const double t = grid_.t(n);
    Vec load = Vec::Zero(size());
    if (s.F0)
        for (int i = 0; i < size(); ++i) load(i) += mesh_.bulk_weights(i) * s.F0(t, mesh_.bulk_nodes[i]);
    if (s.F0_gamma)
        for (int k = 0; k < mesh_.n_surf(); ++k)
            load(mesh_.trace[k]) += mesh_.surface_weights(k) * s.F0_gamma(t, mesh_.boundary_nodes[k]);
    if (s.F || s.F_gamma) {
        std::vector<Point> F(size(), Point::Zero()), Fg(mesh_.n_surf(), Point::Zero());
        if (s.F)
            for (int i = 0; i < size(); ++i) F[i] = s.F(t, mesh_.bulk_nodes[i]);
        if (s.F_gamma)
            for (int k = 0; k < mesh_.n_surf(); ++k) Fg[k] = s.F_gamma(t, mesh_.boundary_nodes[k]);
        load += coupled_load(mesh_, weak_divergence_load(F, Fg, mesh_));
    }
    return load;
}

Vec Discretization::noise_load(const SourceSet& s, int n) const {
    const double t = grid_.t(n);
    Vec load = Vec::Zero(size());
    if (s.F1)
        for (int i = 0; i < size(); ++i) load(i) += mesh_.bulk_weights(i) * s.F1(t, mesh_.bulk_nodes[i]);
    if (s.F1_gamma)
        for (int k = 0; k < mesh_.n_surf(); ++k)
            load(mesh_.trace[k]) += mesh_.surface_weights(k) * s.F1_gamma(t, mesh_.boundary_nodes[k]);
    return load;
}

Vec Discretization::mass_load(const Vec& f) const { return mesh_.bulk_weights.cwiseProduct(f); }

BulkSurfaceField ForwardTrajectory::field(int level, int j) const {
    BulkSurfaceField f;
    f.bulk = z.at(level).col(j);
    f.surf.resize(static_cast<Eigen::Index>(trace.size()));
    for (std::size_t k = 0; k < trace.size(); ++k) f.surf(static_cast<Eigen::Index>(k)) = f.bulk(trace[k]);
    return f;
}

double ForwardTrajectory::mean_square(int level, const Vec& mass) const {
    const Mat& Z = z.at(level);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
        acc += noise->probability(level, static_cast<int>(j)) * Z.col(j).dot(mass.cwiseProduct(Z.col(j)));
    return acc;
}

Vec step_forward(const Discretization& disc, int n, const Vec& z, double dw, double g, const Vec& drift_load,
                 const Vec& noise_load) {
    const double dt = disc.grid().dt();
    Vec rhs = disc.mass().cwiseProduct(z) - dt * (disc.convection(n) * z) - g * dt * (disc.reaction(n) * z) -
              g * dw * (disc.noise(n) * z);
    if (drift_load.size()) rhs += dt * drift_load;
    if (noise_load.size()) rhs += dw * noise_load;
    return disc.solve_implicit(n, rhs);
}

ForwardTrajectory solve_forward(const Discretization& disc, const Vec& z0, const NoiseSource& noise,
                                const SourceSet& sources, const StepHook& hook) {
    const TimeGrid& grid = disc.grid();
    if (noise.depth() != grid.n_t || std::abs(noise.horizon() - grid.T) > 1e-12 * grid.T)
        throw std::invalid_argument("noise source does not match the time grid");
    if (z0.size() != disc.size()) throw std::invalid_argument("initial state does not match the mesh");
    const double dt = grid.dt();
    const bool with_sources = !sources.empty();

    ForwardTrajectory traj;
    traj.grid = grid;
    traj.noise = &noise;
    traj.trace = disc.mesh().trace;
    traj.z.reserve(grid.n_t + 1);
    traj.z.emplace_back(z0);
    if (hook) hook(0, traj.z[0]);

    for (int n = 0; n < grid.n_t; ++n) {
        const Mat& Z = traj.z[n];
        const int m = static_cast<int>(Z.cols());
        const int next = noise.level_size(n + 1);
        Mat base(Z.rows(), m), react(Z.rows(), m), nz(Z.rows(), m);
        parallel_blocks(m, [&](int b, int e) {
            auto Zb = Z.middleCols(b, e - b);
            base.middleCols(b, e - b) = disc.mass().asDiagonal() * Zb;
            base.middleCols(b, e - b) -= dt * (disc.convection(n) * Zb);
            react.middleCols(b, e - b) = disc.reaction(n) * Zb;
            nz.middleCols(b, e - b) = disc.noise(n) * Zb;
        });
        Vec l0, l1;
        if (with_sources) {
            l0 = dt * disc.drift_load(sources, n);
            l1 = disc.noise_load(sources, n);
        }
        Mat rhs(Z.rows(), next);
        parallel_blocks(next, [&](int b, int e) {
            Transition tr[2];
            for (int j = b; j < e; ++j) {
                const int cnt = noise.parents(n + 1, j, tr);
                rhs.col(j).setZero();
                for (int c = 0; c < cnt; ++c) {
                    const int p = tr[c].parent;
                    const double g = disc.path_factor(n, noise.W(n, p));
                    auto col = base.col(p) - g * dt * react.col(p) - g * tr[c].dw * nz.col(p);
                    if (with_sources)
                        rhs.col(j) += tr[c].weight * (col + l0 + tr[c].dw * l1);
                    else
                        rhs.col(j) += tr[c].weight * col;
                }
            }
        });
        Mat Znew(Z.rows(), next);
        parallel_blocks(next, [&](int b, int e) { Znew.middleCols(b, e - b) = disc.solve_implicit(n, rhs.middleCols(b, e - b)); });
        if (hook) hook(n + 1, Znew);
        traj.z.push_back(std::move(Znew));
    }
    return traj;
}

ForwardTrajectory solve_forward(const Discretization& disc, const BulkSurfaceField& z0, const NoiseSource& noise,
                                const SourceSet& sources, const StepHook& hook) {
    if (!z0.is_trace_compatible(disc.mesh()))
        throw std::invalid_argument("initial pair is not trace-compatible with the mesh");
    return solve_forward(disc, z0.bulk, noise, sources, hook);
}

SemigroupOracle::SemigroupOracle(const Discretization& disc) {
    if (disc.coeffs().time_dependent) throw std::invalid_argument("semigroup oracle needs time-independent coefficients");
    const SpMat L = disc.stiffness(0) + disc.reaction(0) + disc.convection(0);
    G_ = -(disc.mass().cwiseInverse().asDiagonal() * Mat(L));
}

Vec SemigroupOracle::propagate(const Vec& z0, double t) const {
    const Mat E = (t * G_).exp();
    return E * z0;
}

ForwardTrajectory factorization_oracle(const Discretization& disc, const Vec& z0, const NoiseSource& noise) {
    const Mesh& mesh = disc.mesh();
    const CoefficientSet& c = disc.coeffs();
    if (c.path_factor) throw std::invalid_argument("factorization oracle does not support a path factor");
    const double a2 = c.a2(0.0, mesh.bulk_nodes[0]);
    const TimeGrid& grid = disc.grid();
    for (int n = 0; n <= (c.time_dependent ? grid.n_t : 0); ++n) {
        for (const auto& x : mesh.bulk_nodes)
            if (c.a2(grid.t(n), x) != a2) throw std::invalid_argument("factorization oracle needs constant a2");
        for (const auto& x : mesh.boundary_nodes)
            if (c.b2(grid.t(n), x) != a2) throw std::invalid_argument("factorization oracle needs b2 equal to a2");
    }
    SemigroupOracle semigroup(disc);
    const Mat step = (grid.dt() * semigroup.generator()).exp();

    ForwardTrajectory traj;
    traj.grid = grid;
    traj.noise = &noise;
    traj.trace = mesh.trace;
    Vec v = z0;
    for (int n = 0; n <= grid.n_t; ++n) {
        if (n > 0) v = step * v;
        const int m = noise.level_size(n);
        Mat Z(v.size(), m);
        const double t = grid.t(n);
        for (int j = 0; j < m; ++j) Z.col(j) = std::exp(-a2 * noise.W(n, j) - 0.5 * a2 * a2 * t) * v;
        traj.z.push_back(std::move(Z));
    }
    return traj;
}

EnergyReport energy_estimate_check(const ForwardTrajectory& traj, const Discretization& disc) {
    EnergyReport rep;
    const Mesh& mesh = disc.mesh();
    const DiscreteOperators& ops = disc.operators(0);
    const SpMat D = unit_stiffness(mesh) + SpMat(ops.P.transpose()) * unit_surface_stiffness(mesh) * ops.P;
    const Vec& M = disc.mass();
    const double dt = traj.grid.dt();

    rep.initial_l2 = traj.mean_square(0, M);
    double h1 = 0.0;
    for (int n = 0; n <= traj.grid.n_t; ++n) {
        const double l2 = traj.mean_square(n, M);
        rep.l2_by_level.push_back(l2);
        rep.sup_l2 = std::max(rep.sup_l2, l2);
        if (n > 0 && l2 > rep.l2_by_level[n - 1] * (1.0 + 1e-12)) rep.non_increasing = false;
        if (n < traj.grid.n_t) {
            const Mat& Z = traj.z[n];
            for (Eigen::Index j = 0; j < Z.cols(); ++j) {
                const double p = traj.noise->probability(n, static_cast<int>(j));
                h1 += dt * p * (Z.col(j).dot(M.cwiseProduct(Z.col(j))) + Z.col(j).dot(D * Z.col(j)));
            }
        }
    }
    rep.h1_ratio = rep.initial_l2 > 0.0 ? std::sqrt(h1) / std::sqrt(rep.initial_l2) : 0.0;
    rep.finite = std::isfinite(rep.h1_ratio) && std::isfinite(rep.sup_l2);
    return rep;
}

GalerkinBasis coupled_eigenbasis(const Mesh& mesh) {
    DiscreteOperators ops = assemble_operators(mesh, CoefficientSet::zero(), 0.0);
    const Mat D = Mat(ops.coupled_stiffness());
    const Vec s = ops.coupled_mass().cwiseSqrt().cwiseInverse();
    const Mat H = s.asDiagonal() * D * s.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.transpose()));
    if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
    return GalerkinBasis{s.asDiagonal() * es.eigenvectors(), es.eigenvalues()};
}

Vec project(const GalerkinBasis& basis, const Vec& mass, const Vec& z0, int n_modes) {
    if (n_modes < 1 || n_modes > basis.E.cols()) throw std::invalid_argument("n_modes exceeds mesh dimension");
    const auto E = basis.E.leftCols(n_modes);
    return E * (E.transpose() * mass.cwiseProduct(z0));
}

ForwardTrajectory galerkin_solve(const Discretization& disc, const GalerkinBasis& basis, const Vec& z0,
                                 const NoiseSource& noise, int n_modes) {
    if (n_modes < 1 || n_modes > basis.E.cols()) throw std::invalid_argument("n_modes exceeds mesh dimension");
    const TimeGrid& grid = disc.grid();
    if (noise.depth() != grid.n_t) throw std::invalid_argument("noise source does not match the time grid");
    const Mat E = basis.E.leftCols(n_modes);
    const Mat Et = E.transpose();
    const double dt = grid.dt();

    std::vector<Mat> coeffs;
    coeffs.emplace_back(Et * disc.mass().cwiseProduct(z0));
    for (int n = 0; n < grid.n_t; ++n) {
        const Mat Id = Et * disc.mass().asDiagonal() * E;
        const Mat Km = Et * (disc.stiffness(n + 1) * E);
        const Mat Cm = Et * (disc.convection(n) * E);
        const Mat Rm = Et * (disc.reaction(n) * E);
        const Mat Nm = Et * (disc.noise(n) * E);
        Eigen::LLT<Mat> llt(Id + dt * Km);
        const Mat& Cn = coeffs[n];
        const int next = noise.level_size(n + 1);
        Mat rhs = Mat::Zero(n_modes, next);
        Transition tr[2];
        for (int j = 0; j < next; ++j) {
            const int cnt = noise.parents(n + 1, j, tr);
            for (int c = 0; c < cnt; ++c) {
                const int p = tr[c].parent;
                const double g = disc.path_factor(n, noise.W(n, p));
                rhs.col(j) += tr[c].weight * (Id * Cn.col(p) - dt * (Cm * Cn.col(p)) - g * dt * (Rm * Cn.col(p)) -
                                              g * tr[c].dw * (Nm * Cn.col(p)));
            }
        }
        coeffs.push_back(llt.solve(rhs));
    }
    ForwardTrajectory traj;
    traj.grid = grid;
    traj.noise = &noise;
    traj.trace = disc.mesh().trace;
    for (const auto& c : coeffs) traj.z.push_back(E * c);
    return traj;
}

void write_trajectory_binary(const ForwardTrajectory& traj, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    auto put_i32 = [&](std::int32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint32_t>(v) >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    auto put_f64 = [&](double d) {
        std::uint64_t u;
        std::memcpy(&u, &d, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(b), 8);
    };
    out.write("SPDTRAJ1", 8);
    const std::int32_t rows = traj.z.empty() ? 0 : static_cast<std::int32_t>(traj.z[0].rows());
    put_i32(rows);
    put_i32(static_cast<std::int32_t>(traj.z.size()));
    for (const auto& Z : traj.z) {
        put_i32(static_cast<std::int32_t>(Z.cols()));
        for (Eigen::Index c = 0; c < Z.cols(); ++c)
            for (Eigen::Index r = 0; r < Z.rows(); ++r) put_f64(Z(r, c));
    }
}

}  // namespace sdbc
